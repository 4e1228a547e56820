//! Finite-horizon Riccati tracking controller.
//!
//! The tracking gain `P(t)` solves the matrix Riccati differential
//! equation
//!
//! ```text
//! P' + P A - P B Rz^-1 B^T P + K + A^T P = 0,    P(t_f) = K_f,
//! ```
//!
//! integrated backward from the horizon with classical RK4 and
//! symmetrized after every step. The feedback law in the safety region is
//! `u = -Rz^-1 B^T P (z - r)`; when the collision penalty is active its
//! stacked gradient joins the feedback term.
//!
//! The right-hand side never forms dense products with `A` or
//! `B Rz^-1 B^T`: multiplying by `A` is a block column shift and the
//! quadratic term only touches the acceleration-level columns of `P`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flat::{CostMatrices, FlatControl, FlatTeamState};

/// Divergence guard for the backward sweep.
const DIVERGENCE_NORM: f64 = 1e12;

/// Upper bound on the number of stored gain matrices; integration steps in
/// between are subsampled for storage and bridged by linear interpolation.
const MAX_STORED_POINTS: usize = 2000;

/// Which state the feedback gain acts on in the avoidance law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawVariant {
    /// Gain acts on the tracking error `z - r`; with a zero penalty
    /// gradient this is exactly the safety-region law. Default.
    Consistent,
    /// Gain acts on the absolute state `z`, reproducing the published form
    /// of the penalty-augmented law verbatim. Kept for comparison runs.
    LiteralAbsolute,
}

/// Time grid of symmetric tracking gain matrices with entrywise linear
/// interpolation between grid points.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    t_f: f64,
    integration_step: f64,
    grid_step: f64,
    /// `matrices[j]` is `P(j * grid_step)`, ascending in time, last entry
    /// exactly `K_f`.
    matrices: Vec<DMatrix<f64>>,
}

impl RiccatiSolution {
    pub fn horizon(&self) -> f64 {
        self.t_f
    }

    /// Step actually used by the RK4 sweep.
    pub fn integration_step(&self) -> f64 {
        self.integration_step
    }

    /// Spacing of the stored grid.
    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn grid_len(&self) -> usize {
        self.matrices.len()
    }

    pub fn grid_time(&self, j: usize) -> f64 {
        self.grid_step * j as f64
    }

    pub fn grid_matrix(&self, j: usize) -> &DMatrix<f64> {
        &self.matrices[j]
    }

    fn bracket(&self, t: f64) -> (usize, usize, f64) {
        let t = t.clamp(0.0, self.t_f);
        let pos = t / self.grid_step;
        let j = (pos.floor() as usize).min(self.matrices.len() - 1);
        if j + 1 >= self.matrices.len() {
            (j, j, 0.0)
        } else {
            (j, j + 1, pos - j as f64)
        }
    }

    /// Interpolated gain matrix at `t` (clamped to the horizon).
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let (j0, j1, alpha) = self.bracket(t);
        if alpha == 0.0 {
            return self.matrices[j0].clone();
        }
        &self.matrices[j0] * (1.0 - alpha) + &self.matrices[j1] * alpha
    }

    /// `P(t) x` without materializing the interpolated matrix.
    pub fn apply(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        let (j0, j1, alpha) = self.bracket(t);
        if alpha == 0.0 {
            return &self.matrices[j0] * x;
        }
        (&self.matrices[j0] * x) * (1.0 - alpha) + (&self.matrices[j1] * x) * alpha
    }
}

/// Integrate the Riccati equation backward from `P(t_f) = K_f`.
///
/// The step count is rounded up so the grid lands exactly on `t_f`.
pub fn solve_riccati(cost: &CostMatrices, t_f: f64, h: f64) -> Result<RiccatiSolution> {
    if !(t_f > 0.0) || !(h > 0.0) {
        return Err(Error::Config(format!(
            "horizon {t_f} and step {h} must be positive"
        )));
    }
    let mut steps = (t_f / h).ceil() as usize;
    let stride = steps.div_ceil(MAX_STORED_POINTS).max(1);
    // Stored grid stays uniform: pad the step count to a stride multiple.
    steps = steps.div_ceil(stride) * stride;
    let h_eff = t_f / steps as f64;

    let n = cost.state_dim();
    let block = 4 * cost.n_uavs;
    let rz_inv: Vec<f64> = cost.r_z.diagonal().iter().map(|d| 1.0 / d).collect();

    // dP/dtau = P A + A^T P - P S P + K with tau = t_f - t.
    let rhs = |p: &DMatrix<f64>, out: &mut DMatrix<f64>| {
        out.fill(0.0);
        // P A: columns [4N, 12N) of the result are columns [0, 8N) of P.
        out.view_mut((0, block), (n, 2 * block))
            .copy_from(&p.view((0, 0), (n, 2 * block)));
        // A^T P is its transpose for symmetric P; add both.
        let pa = out.clone();
        *out += pa.transpose();
        // Quadratic term through the acceleration-level columns only.
        let mut c = p.view((0, 2 * block), (n, block)).clone_owned();
        for (k, w) in rz_inv.iter().enumerate() {
            c.column_mut(k).scale_mut(w.sqrt());
        }
        out.gemm(-1.0, &c, &c.transpose(), 1.0);
        *out += &cost.k;
    };

    let mut p = cost.k_f.clone();
    let stored_len = steps / stride + 1;
    let mut stored_rev: Vec<DMatrix<f64>> = Vec::with_capacity(stored_len);
    stored_rev.push(p.clone());

    let mut k1 = DMatrix::zeros(n, n);
    let mut k2 = DMatrix::zeros(n, n);
    let mut k3 = DMatrix::zeros(n, n);
    let mut k4 = DMatrix::zeros(n, n);
    for step in 1..=steps {
        rhs(&p, &mut k1);
        rhs(&(&p + &k1 * (h_eff / 2.0)), &mut k2);
        rhs(&(&p + &k2 * (h_eff / 2.0)), &mut k3);
        rhs(&(&p + &k3 * h_eff), &mut k4);
        p += (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h_eff / 6.0);
        // Symmetrize away the integration rounding.
        let pt = p.transpose();
        p += pt;
        p *= 0.5;
        let norm = p.norm();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::RiccatiDivergence {
                t: t_f - h_eff * step as f64,
                norm,
            });
        }
        if step % stride == 0 {
            stored_rev.push(p.clone());
        }
    }
    stored_rev.reverse();
    Ok(RiccatiSolution {
        t_f,
        integration_step: h_eff,
        grid_step: h_eff * stride as f64,
        matrices: stored_rev,
    })
}

/// Safety-region tracking law `u = -Rz^-1 B^T P (z - r)`.
pub fn feedback_control(
    p_t: &DMatrix<f64>,
    z: &FlatTeamState,
    r_ref: &FlatTeamState,
    cost: &CostMatrices,
) -> FlatControl {
    let err = z.as_vector() - r_ref.as_vector();
    let pe = p_t * err;
    control_from_state_gradient(&pe, cost)
}

/// Penalty-augmented law for the collision reaction region.
///
/// With a zero gradient the [`LawVariant::Consistent`] form reduces to
/// [`feedback_control`].
pub fn avoidance_control(
    p_t: &DMatrix<f64>,
    z: &FlatTeamState,
    r_ref: &FlatTeamState,
    cost: &CostMatrices,
    grad_v: &DVector<f64>,
    variant: LawVariant,
) -> FlatControl {
    let pe = match variant {
        LawVariant::Consistent => p_t * (z.as_vector() - r_ref.as_vector()),
        LawVariant::LiteralAbsolute => p_t * z.as_vector(),
    };
    control_from_state_gradient(&(pe + grad_v), cost)
}

/// `-Rz^-1 B^T g` for a stacked state-space gradient `g`.
pub(crate) fn control_from_state_gradient(g: &DVector<f64>, cost: &CostMatrices) -> FlatControl {
    let block = 4 * cost.n_uavs;
    let mut u = DVector::zeros(block);
    let acc = g.rows(2 * block, block);
    for k in 0..block {
        u[k] = -acc[k] / cost.r_z[(k, k)];
    }
    FlatControl::new(cost.n_uavs, u).expect("control dimension fixed by construction")
}

/// Hamiltonian of the tracking problem, used by the closed-form
/// cross-check `P(t) = G(t_f - t) H(t_f - t)^-1` built from `(K, K_f, Rz)`.
pub fn tracking_hamiltonian(cost: &CostMatrices) -> DMatrix<f64> {
    let n = cost.state_dim();
    let rz_inv = DMatrix::from_diagonal(&cost.r_z.diagonal().map(|d| 1.0 / d));
    let s = &cost.b * rz_inv * cost.b.transpose();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&cost.a);
    m.view_mut((0, n), (n, n)).copy_from(&(-&s));
    m.view_mut((n, 0), (n, n)).copy_from(&(-&cost.k));
    m.view_mut((n, n), (n, n)).copy_from(&(-cost.a.transpose()));
    m
}

/// Closed-form gain at time `t` from the tracking Hamiltonian flow.
pub fn riccati_closed_form(cost: &CostMatrices, t_f: f64, t: f64) -> Result<DMatrix<f64>> {
    let n = cost.state_dim();
    let m = tracking_hamiltonian(cost);
    let e = crate::expm::matrix_exponential(&(-&m * (t_f - t)))?;
    let h = e.view((0, 0), (n, n)) + e.view((0, n), (n, n)) * &cost.k_f;
    let g = e.view((n, 0), (n, n)) + e.view((n, n), (n, n)) * &cost.k_f;
    let h_inv_t = h
        .transpose()
        .lu()
        .solve(&g.transpose())
        .ok_or_else(|| Error::Numerical("tracking boundary matrix is singular".into()))?;
    Ok(h_inv_t.transpose())
}
