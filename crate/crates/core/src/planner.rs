//! Closed-form finite-horizon formation trajectory planner.
//!
//! The optimal planning problem reduces to a linear two-point boundary
//! value problem in the stacked state and co-state. Its solution is read
//! off the exponential of the Hamiltonian block matrix
//!
//! ```text
//! M = [ A        -B R^-1 B^T ]
//!     [ -Q       -A^T        ]
//! ```
//!
//! through the boundary maps `H(t) = [I 0] exp(-tM) [I; Q_f]` and
//! `G(t) = [0 I] exp(-tM) [I; Q_f]`. The planned state is
//! `r(t) = H(t_f - t) H(t_f)^-1 r_0` and the planned jerk input is
//! `u(t) = -R^-1 B^T G(t_f - t) H(t_f)^-1 r_0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expm::matrix_exponential;
use crate::flat::{layout, CostMatrices, FlatControl, FlatTeamState};

/// Minimum acceptable reciprocal condition number for the boundary matrix.
const MIN_RCOND: f64 = 1e-12;

/// Bulk sampling recomputes the exponential from scratch this often; in
/// between it advances the boundary-map vector by one fixed-step factor.
const BULK_REFRESH_INTERVAL: usize = 512;

/// Hamiltonian block matrix of the planning problem.
pub fn build_hamiltonian(cost: &CostMatrices) -> DMatrix<f64> {
    let n = cost.state_dim();
    let r_inv = DMatrix::from_diagonal(&cost.r.diagonal().map(|d| 1.0 / d));
    let s = &cost.b * r_inv * cost.b.transpose();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&cost.a);
    m.view_mut((0, n), (n, n)).copy_from(&(-&s));
    m.view_mut((n, 0), (n, n)).copy_from(&(-&cost.q));
    m.view_mut((n, n), (n, n)).copy_from(&(-cost.a.transpose()));
    m
}

/// Solved planning problem: boundary matrix factorization plus everything
/// needed to sample the optimal trajectory and control at any time.
#[derive(Debug, Clone)]
pub struct PlannerSolution {
    n_uavs: usize,
    t_f: f64,
    m: DMatrix<f64>,
    /// `[w; Q_f w]` with `w = H(t_f)^-1 r_0`; the boundary-map vector whose
    /// propagation by `exp(-(t_f - t) M)` yields state and co-state.
    c: DVector<f64>,
    w: DVector<f64>,
    r0: FlatTeamState,
    r_diag: DVector<f64>,
    rcond: f64,
}

impl PlannerSolution {
    /// Build the Hamiltonian, evaluate the boundary matrix at the horizon,
    /// and factor it.
    pub fn solve(cost: &CostMatrices, r0: &FlatTeamState, t_f: f64) -> Result<Self> {
        if !(t_f > 0.0) {
            return Err(Error::Config(format!("horizon t_f = {t_f} must be positive")));
        }
        if r0.n_uavs() != cost.n_uavs {
            return Err(Error::Config(format!(
                "initial state has {} vehicles, costs have {}",
                r0.n_uavs(),
                cost.n_uavs
            )));
        }
        let n = cost.state_dim();
        let m = build_hamiltonian(cost);
        let e_tf = matrix_exponential(&(-&m * t_f))?;
        // H(t_f) = E11 + E12 Q_f.
        let h_tf = e_tf.view((0, 0), (n, n)) + e_tf.view((0, n), (n, n)) * &cost.q_f;

        let h_norm = one_norm(&h_tf);
        let lu = h_tf.clone().lu();
        let lu_t = h_tf.transpose().lu();
        let inv_norm = estimate_inverse_one_norm(&lu, &lu_t, n);
        let rcond = if h_norm * inv_norm > 0.0 {
            1.0 / (h_norm * inv_norm)
        } else {
            0.0
        };
        if !(rcond >= MIN_RCOND) {
            return Err(Error::PlannerSingular {
                rcond,
                min_rcond: MIN_RCOND,
            });
        }
        let w = lu.solve(r0.as_vector()).ok_or(Error::PlannerSingular {
            rcond,
            min_rcond: MIN_RCOND,
        })?;
        let mut c = DVector::zeros(2 * n);
        c.rows_mut(0, n).copy_from(&w);
        c.rows_mut(n, n).copy_from(&(&cost.q_f * &w));
        Ok(Self {
            n_uavs: cost.n_uavs,
            t_f,
            m,
            c,
            w,
            r0: r0.clone(),
            r_diag: cost.r.diagonal(),
            rcond,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.t_f
    }

    pub fn n_uavs(&self) -> usize {
        self.n_uavs
    }

    /// Reciprocal condition number of the boundary matrix at the horizon.
    pub fn reciprocal_condition(&self) -> f64 {
        self.rcond
    }

    /// `w = H(t_f)^-1 r_0`.
    pub fn boundary_vector(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn initial_state(&self) -> &FlatTeamState {
        &self.r0
    }

    pub fn hamiltonian(&self) -> &DMatrix<f64> {
        &self.m
    }

    fn check_horizon(&self, t: f64) -> Result<()> {
        if t < -1e-12 || t > self.t_f + 1e-12 {
            return Err(Error::OutsideHorizon { t, t_f: self.t_f });
        }
        Ok(())
    }

    /// State and co-state at time `t`, computed with a fresh exponential.
    fn boundary_flow(&self, t: f64) -> Result<DVector<f64>> {
        let e = matrix_exponential(&(-&self.m * (self.t_f - t)))?;
        Ok(e * &self.c)
    }

    /// Optimal team state at `t in [0, t_f]`.
    pub fn sample_state(&self, t: f64) -> Result<FlatTeamState> {
        self.check_horizon(t)?;
        let y = self.boundary_flow(t)?;
        self.state_from_flow(&y)
    }

    /// Optimal jerk input at `t in [0, t_f]`.
    pub fn sample_control(&self, t: f64) -> Result<FlatControl> {
        self.check_horizon(t)?;
        let y = self.boundary_flow(t)?;
        Ok(self.control_from_flow(&y))
    }

    fn state_from_flow(&self, y: &DVector<f64>) -> Result<FlatTeamState> {
        let n = layout::state_dim(self.n_uavs);
        let hom = y[layout::hom(self.n_uavs)];
        if hom.abs() < 0.5 {
            return Err(Error::Numerical(format!(
                "homogeneous coordinate collapsed to {hom} while sampling"
            )));
        }
        // The trailing entry is analytically 1; renormalize the rounding away.
        let r = y.rows(0, n) / hom;
        FlatTeamState::new(self.n_uavs, r)
    }

    fn control_from_flow(&self, y: &DVector<f64>) -> FlatControl {
        let n = layout::state_dim(self.n_uavs);
        let block = 4 * self.n_uavs;
        // B^T picks the acceleration-level rows of the co-state.
        let costate_acc = y.rows(n + 2 * block, block);
        let mut u = DVector::zeros(block);
        for k in 0..block {
            u[k] = -costate_acc[k] / self.r_diag[k];
        }
        FlatControl::new(self.n_uavs, u).expect("control dimension is fixed by construction")
    }

    /// Sample states and controls on the uniform grid `t_j = j * step`,
    /// `j = 0..=count`.
    ///
    /// The boundary-map vector is advanced by a precomputed one-step
    /// exponential factor and re-anchored with a fresh exponential every
    /// 512 samples, which keeps bulk sampling within rounding of the
    /// sample-by-sample path at a small fraction of its cost.
    pub fn sample_grid(&self, step: f64, count: usize) -> Result<ReferenceTrajectory> {
        if !(step > 0.0) {
            return Err(Error::Config(format!("sample step {step} must be positive")));
        }
        let t_end = step * count as f64;
        if t_end > self.t_f + 1e-9 {
            return Err(Error::OutsideHorizon {
                t: t_end,
                t_f: self.t_f,
            });
        }
        let e_step = matrix_exponential(&(&self.m * step))?;
        let mut states = Vec::with_capacity(count + 1);
        let mut controls = Vec::with_capacity(count + 1);
        let mut y = self.boundary_flow(0.0)?;
        for j in 0..=count {
            if j > 0 {
                if j % BULK_REFRESH_INTERVAL == 0 {
                    y = self.boundary_flow(step * j as f64)?;
                } else {
                    y = &e_step * &y;
                }
            }
            states.push(self.state_from_flow(&y)?.into_vector());
            controls.push(self.control_from_flow(&y).as_vector().clone());
        }
        Ok(ReferenceTrajectory {
            n_uavs: self.n_uavs,
            step,
            states,
            controls,
        })
    }
}

/// Planned trajectory sampled on a uniform grid.
#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    n_uavs: usize,
    step: f64,
    states: Vec<DVector<f64>>,
    controls: Vec<DVector<f64>>,
}

impl ReferenceTrajectory {
    pub fn n_uavs(&self) -> usize {
        self.n_uavs
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.step * j as f64
    }

    pub fn state(&self, j: usize) -> &DVector<f64> {
        &self.states[j]
    }

    pub fn control(&self, j: usize) -> &DVector<f64> {
        &self.controls[j]
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Hager-style 1-norm estimate of the inverse from LU factorizations of
/// the matrix and its transpose. A handful of solves gives a reliable
/// lower estimate, which is all the singularity guard needs.
fn estimate_inverse_one_norm(
    lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    lu_t: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
) -> f64 {
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut best = 0.0_f64;
    for _ in 0..5 {
        let y = match lu.solve(&x) {
            Some(y) => y,
            None => return f64::INFINITY,
        };
        best = best.max(y.iter().map(|v| v.abs()).sum::<f64>());
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let z = match lu_t.solve(&xi) {
            Some(z) => z,
            None => return f64::INFINITY,
        };
        let (j_max, z_max) = z
            .iter()
            .enumerate()
            .map(|(j, v)| (j, v.abs()))
            .fold((0, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if z_max <= z.dot(&x) {
            break;
        }
        x = DVector::zeros(n);
        x[j_max] = 1.0;
    }
    best
}
