//! Stacked flat-space state representation and quadratic cost assembly.
//!
//! The team state stacks position-level, velocity-level, and
//! acceleration-level coordinates of all vehicles, followed by a constant
//! homogeneous 1 that lets affine offset terms live inside quadratic forms:
//!
//! ```text
//! r = [ p (3N) | psi (N) | p' (3N) | psi' (N) | p'' (3N) | psi'' (N) | 1 ]
//! ```
//!
//! The control is the stacked jerk `[p''' (3N) | psi''' (N)]`. All matrix
//! assembly below is allocation-then-fill with the block index helpers in
//! [`layout`]; off-by-one block placement is the dominant bug risk here, so
//! the helpers carry their own tests.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::graph::{kron_identity, FormationSpec};

/// Index arithmetic for the stacked flat state and control vectors.
pub mod layout {
    /// Dimension of the stacked flat state: `12N + 1`.
    pub fn state_dim(n_uavs: usize) -> usize {
        12 * n_uavs + 1
    }

    /// Dimension of the stacked control: `4N`.
    pub fn control_dim(n_uavs: usize) -> usize {
        4 * n_uavs
    }

    /// First index of vehicle `i`'s position triple.
    pub fn pos(n: usize, i: usize) -> usize {
        debug_assert!(i < n);
        3 * i
    }

    /// Index of vehicle `i`'s yaw angle.
    pub fn yaw(n: usize, i: usize) -> usize {
        3 * n + i
    }

    /// First index of vehicle `i`'s velocity triple.
    pub fn vel(n: usize, i: usize) -> usize {
        4 * n + 3 * i
    }

    /// Index of vehicle `i`'s yaw rate.
    pub fn yaw_rate(n: usize, i: usize) -> usize {
        7 * n + i
    }

    /// First index of vehicle `i`'s acceleration triple.
    pub fn acc(n: usize, i: usize) -> usize {
        8 * n + 3 * i
    }

    /// Index of vehicle `i`'s yaw acceleration.
    pub fn yaw_acc(n: usize, i: usize) -> usize {
        11 * n + i
    }

    /// Index of the homogeneous trailing 1.
    pub fn hom(n: usize) -> usize {
        12 * n
    }

    /// First index of vehicle `i`'s jerk triple in control space.
    pub fn ctrl_jerk(n: usize, i: usize) -> usize {
        debug_assert!(i < n);
        3 * i
    }

    /// Index of vehicle `i`'s yaw jerk in control space.
    pub fn ctrl_yaw_jerk(n: usize, i: usize) -> usize {
        3 * n + i
    }
}

/// Stacked flat state of the whole team, with the trailing homogeneous 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatTeamState {
    n_uavs: usize,
    v: DVector<f64>,
}

impl FlatTeamState {
    /// Wrap a raw vector, checking dimension and the trailing 1.
    pub fn new(n_uavs: usize, v: DVector<f64>) -> Result<Self> {
        if v.len() != layout::state_dim(n_uavs) {
            return Err(Error::Config(format!(
                "flat state has {} entries, expected {} for {} vehicles",
                v.len(),
                layout::state_dim(n_uavs),
                n_uavs
            )));
        }
        let trailing = v[layout::hom(n_uavs)];
        if (trailing - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "trailing homogeneous coordinate is {trailing}, must be 1"
            )));
        }
        Ok(Self { n_uavs, v })
    }

    /// Team at rest: given positions and yaws, all derivatives zero.
    pub fn at_rest(positions: &[Vector3<f64>], yaws: &[f64]) -> Self {
        let n = positions.len();
        assert_eq!(yaws.len(), n);
        let mut v = DVector::zeros(layout::state_dim(n));
        for (i, p) in positions.iter().enumerate() {
            v.fixed_rows_mut::<3>(layout::pos(n, i)).copy_from(p);
            v[layout::yaw(n, i)] = yaws[i];
        }
        v[layout::hom(n)] = 1.0;
        Self { n_uavs: n, v }
    }

    /// Assemble from per-vehicle kinematic blocks.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        positions: &[Vector3<f64>],
        yaws: &[f64],
        velocities: &[Vector3<f64>],
        yaw_rates: &[f64],
        accelerations: &[Vector3<f64>],
        yaw_accels: &[f64],
    ) -> Self {
        let n = positions.len();
        let mut state = Self::at_rest(positions, yaws);
        for i in 0..n {
            state
                .v
                .fixed_rows_mut::<3>(layout::vel(n, i))
                .copy_from(&velocities[i]);
            state.v[layout::yaw_rate(n, i)] = yaw_rates[i];
            state
                .v
                .fixed_rows_mut::<3>(layout::acc(n, i))
                .copy_from(&accelerations[i]);
            state.v[layout::yaw_acc(n, i)] = yaw_accels[i];
        }
        state
    }

    pub fn n_uavs(&self) -> usize {
        self.n_uavs
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.v
    }

    pub fn position(&self, i: usize) -> Vector3<f64> {
        self.v.fixed_rows::<3>(layout::pos(self.n_uavs, i)).into()
    }

    pub fn velocity(&self, i: usize) -> Vector3<f64> {
        self.v.fixed_rows::<3>(layout::vel(self.n_uavs, i)).into()
    }

    pub fn acceleration(&self, i: usize) -> Vector3<f64> {
        self.v.fixed_rows::<3>(layout::acc(self.n_uavs, i)).into()
    }

    pub fn yaw(&self, i: usize) -> f64 {
        self.v[layout::yaw(self.n_uavs, i)]
    }

    pub fn yaw_rate(&self, i: usize) -> f64 {
        self.v[layout::yaw_rate(self.n_uavs, i)]
    }

    pub fn yaw_accel(&self, i: usize) -> f64 {
        self.v[layout::yaw_acc(self.n_uavs, i)]
    }

    /// All positions as a vector of 3-vectors.
    pub fn positions(&self) -> Vec<Vector3<f64>> {
        (0..self.n_uavs).map(|i| self.position(i)).collect()
    }

    /// All velocities as a vector of 3-vectors.
    pub fn velocities(&self) -> Vec<Vector3<f64>> {
        (0..self.n_uavs).map(|i| self.velocity(i)).collect()
    }
}

/// Stacked jerk input `[p''' (3N) | psi''' (N)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatControl {
    n_uavs: usize,
    v: DVector<f64>,
}

impl FlatControl {
    pub fn new(n_uavs: usize, v: DVector<f64>) -> Result<Self> {
        if v.len() != layout::control_dim(n_uavs) {
            return Err(Error::Config(format!(
                "flat control has {} entries, expected {} for {} vehicles",
                v.len(),
                layout::control_dim(n_uavs),
                n_uavs
            )));
        }
        Ok(Self { n_uavs, v })
    }

    pub fn zeros(n_uavs: usize) -> Self {
        Self {
            n_uavs,
            v: DVector::zeros(layout::control_dim(n_uavs)),
        }
    }

    pub fn n_uavs(&self) -> usize {
        self.n_uavs
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn jerk(&self, i: usize) -> Vector3<f64> {
        self.v
            .fixed_rows::<3>(layout::ctrl_jerk(self.n_uavs, i))
            .into()
    }

    pub fn yaw_jerk(&self, i: usize) -> f64 {
        self.v[layout::ctrl_yaw_jerk(self.n_uavs, i)]
    }
}

/// System matrices for the stacked triple-integrator flat dynamics
/// `r' = A r + B u`. The homogeneous row and column of `A` are zero so the
/// trailing 1 is preserved exactly.
pub fn build_system_matrices(n_uavs: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    assert!(n_uavs >= 1);
    let dim = layout::state_dim(n_uavs);
    let block = 4 * n_uavs;
    let mut a = DMatrix::zeros(dim, dim);
    // Position level feeds from velocity level, velocity from acceleration.
    for k in 0..block {
        a[(k, block + k)] = 1.0;
        a[(block + k, 2 * block + k)] = 1.0;
    }
    let mut b = DMatrix::zeros(dim, block);
    for k in 0..block {
        b[(2 * block + k, k)] = 1.0;
    }
    (a, b)
}

/// Running and terminal formation cost matrices.
///
/// Both have the same block pattern over the level-ordered state: the
/// position-weighted Laplacian block appears at the position and velocity
/// levels, the acceleration level is unpenalized, and the offset vector
/// enters through the homogeneous column so that
/// `r^T Q r = sum_e mu_e (|p_i - p_j - d_ij|^2 + |p_i' - p_j'|^2)`.
pub fn build_formation_costs(spec: &FormationSpec) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = spec.vertex_count();
    if spec.offsets().len() != spec.formation_graph().edge_count() {
        return Err(Error::Config(format!(
            "{} offsets for {} formation edges",
            spec.offsets().len(),
            spec.formation_graph().edge_count()
        )));
    }
    let q = assemble_formation_cost(spec, spec.mu())?;
    let q_f = assemble_formation_cost(spec, spec.omega())?;
    let _ = n;
    Ok((q, q_f))
}

fn assemble_formation_cost(spec: &FormationSpec, weights: &[f64]) -> Result<DMatrix<f64>> {
    let n = spec.vertex_count();
    let dim = layout::state_dim(n);
    let block = 4 * n;
    let graph = spec.formation_graph();
    let laplacian = graph.weighted_laplacian(weights)?;
    let lap3 = kron_identity(&laplacian, 3);

    // l_hat = [L (x) I_3, 0; 0, 0_N]: yaw coordinates are unpenalized.
    let mut q = DMatrix::zeros(dim, dim);
    q.view_mut((0, 0), (3 * n, 3 * n)).copy_from(&lap3);
    q.view_mut((block, block), (3 * n, 3 * n)).copy_from(&lap3);

    // Offset coupling through the homogeneous coordinate.
    let d_stacked = spec.stacked_offsets();
    let incidence = graph.incidence_matrix();
    let w_diag = DMatrix::from_diagonal(&DVector::from_row_slice(weights));
    let dw = &incidence * &w_diag;
    let theta = kron_identity(&dw, 3) * &d_stacked;
    let upsilon = (d_stacked.transpose() * kron_identity(&w_diag, 3) * &d_stacked)[(0, 0)];

    let hom = layout::hom(n);
    for k in 0..3 * n {
        q[(k, hom)] = -theta[k];
        q[(hom, k)] = -theta[k];
    }
    q[(hom, hom)] = upsilon;
    Ok(q)
}

/// Diagonal tracking cost matrices from per-vehicle weights.
///
/// `K` and `K_f` weight every non-homogeneous coordinate of vehicle `i`
/// uniformly by `zeta_i` and `delta_i`; the homogeneous slot stays zero.
/// `R_z` weights vehicle `i`'s jerk channels by `eta_i`.
pub fn build_tracking_costs(
    zeta: &[f64],
    delta: &[f64],
    eta: &[f64],
    n_uavs: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    for (name, list) in [("zeta", zeta), ("delta", delta), ("eta", eta)] {
        if list.len() != n_uavs {
            return Err(Error::Config(format!(
                "{name} has {} entries for {} vehicles",
                list.len(),
                n_uavs
            )));
        }
        for (i, &w) in list.iter().enumerate() {
            if !(w > 0.0) {
                return Err(Error::InvalidWeight(format!(
                    "{name}[{}] = {w} must be strictly positive",
                    i + 1
                )));
            }
        }
    }
    let k = per_uav_state_diagonal(zeta, n_uavs);
    let k_f = per_uav_state_diagonal(delta, n_uavs);

    let mut rz_diag = DVector::zeros(layout::control_dim(n_uavs));
    for i in 0..n_uavs {
        for axis in 0..3 {
            rz_diag[layout::ctrl_jerk(n_uavs, i) + axis] = eta[i];
        }
        rz_diag[layout::ctrl_yaw_jerk(n_uavs, i)] = eta[i];
    }
    Ok((k, k_f, DMatrix::from_diagonal(&rz_diag)))
}

fn per_uav_state_diagonal(weights: &[f64], n: usize) -> DMatrix<f64> {
    let mut diag = DVector::zeros(layout::state_dim(n));
    for (i, &w) in weights.iter().enumerate() {
        for axis in 0..3 {
            diag[layout::pos(n, i) + axis] = w;
            diag[layout::vel(n, i) + axis] = w;
            diag[layout::acc(n, i) + axis] = w;
        }
        diag[layout::yaw(n, i)] = w;
        diag[layout::yaw_rate(n, i)] = w;
        diag[layout::yaw_acc(n, i)] = w;
    }
    // Homogeneous slot stays zero.
    DMatrix::from_diagonal(&diag)
}

/// Planning control weight: `gamma_i` on every jerk channel of vehicle `i`.
pub fn build_control_weight(gamma: &[f64], n_uavs: usize) -> DMatrix<f64> {
    let mut diag = DVector::zeros(layout::control_dim(n_uavs));
    for (i, &g) in gamma.iter().enumerate() {
        for axis in 0..3 {
            diag[layout::ctrl_jerk(n_uavs, i) + axis] = g;
        }
        diag[layout::ctrl_yaw_jerk(n_uavs, i)] = g;
    }
    DMatrix::from_diagonal(&diag)
}

/// Every quadratic weight of the planning and tracking problems, together
/// with the shared system matrices.
#[derive(Debug, Clone)]
pub struct CostMatrices {
    pub n_uavs: usize,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub q_f: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub k_f: DMatrix<f64>,
    pub r_z: DMatrix<f64>,
}

impl CostMatrices {
    pub fn new(spec: &FormationSpec, zeta: &[f64], delta: &[f64], eta: &[f64]) -> Result<Self> {
        let n = spec.vertex_count();
        let (a, b) = build_system_matrices(n);
        let (q, q_f) = build_formation_costs(spec)?;
        let (k, k_f, r_z) = build_tracking_costs(zeta, delta, eta, n)?;
        let r = build_control_weight(spec.gamma(), n);
        Ok(Self {
            n_uavs: n,
            a,
            b,
            q,
            q_f,
            r,
            k,
            k_f,
            r_z,
        })
    }

    pub fn state_dim(&self) -> usize {
        layout::state_dim(self.n_uavs)
    }

    pub fn control_dim(&self) -> usize {
        layout::control_dim(self.n_uavs)
    }
}
