//! Discretized finite-horizon LQ oracle, independent of the closed-form
//! planner it cross-checks.
//!
//! The drift matrix of the stacked flat dynamics is nilpotent of index 3,
//! so the zero-order-hold discretization and the exact integrals of the
//! running cost over one step are finite polynomials in the step length.
//! Nothing here touches the matrix exponential or the Hamiltonian flow:
//! the oracle is a plain backward Riccati recursion with the exact cross
//! term, followed by a forward rollout.

use nalgebra::{DMatrix, DVector};

/// Exact one-step discretization of dynamics and cost.
pub struct DiscreteLq {
    pub a_d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
    pub q_d: DMatrix<f64>,
    pub r_d: DMatrix<f64>,
    /// State-control cross weight accumulated within a step.
    pub s_d: DMatrix<f64>,
}

pub fn discretize(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    dt: f64,
) -> DiscreteLq {
    let n = a.nrows();
    let a2 = a * a;
    let a3 = &a2 * a;
    assert!(
        a3.norm() <= 1e-12,
        "oracle assumes a drift matrix nilpotent of index 3"
    );
    let id = DMatrix::identity(n, n);

    // State transition and input integral of the polynomial flow.
    let a_d = &id + a * dt + &a2 * (dt * dt / 2.0);
    let b_d = (&id * dt + a * (dt * dt / 2.0) + &a2 * (dt * dt * dt / 6.0)) * b;

    // Powers over factorials appearing in Phi(s) = sum_i A^i s^i / i!.
    let pow: [DMatrix<f64>; 3] = [id.clone(), a.clone(), a2.clone()];
    let fact = [1.0, 1.0, 2.0];

    // q_d = int_0^dt Phi' Q Phi ds.
    let mut q_d = DMatrix::zeros(n, n);
    for i in 0..3 {
        for j in 0..3 {
            let c = dt.powi((i + j + 1) as i32) / (fact[i] * fact[j] * (i + j + 1) as f64);
            q_d += pow[i].transpose() * q * &pow[j] * c;
        }
    }

    // Psi(s) = sum_j A^j B s^(j+1) / (j+1)!.
    let psi_parts: Vec<DMatrix<f64>> = (0..3).map(|j| &pow[j] * b).collect();
    let psi_fact = [1.0, 2.0, 6.0];

    // s_d = int_0^dt Phi' Q Psi ds.
    let m = b.ncols();
    let mut s_d = DMatrix::zeros(n, m);
    for i in 0..3 {
        for j in 0..3 {
            let c = dt.powi((i + j + 2) as i32) / (fact[i] * psi_fact[j] * (i + j + 2) as f64);
            s_d += pow[i].transpose() * q * &psi_parts[j] * c;
        }
    }

    // r_d = R dt + int_0^dt Psi' Q Psi ds.
    let mut r_d = r * dt;
    for i in 0..3 {
        for j in 0..3 {
            let c = dt.powi((i + j + 3) as i32) / (psi_fact[i] * psi_fact[j] * (i + j + 3) as f64);
            r_d += psi_parts[i].transpose() * q * &psi_parts[j] * c;
        }
    }

    DiscreteLq {
        a_d,
        b_d,
        q_d,
        r_d,
        s_d,
    }
}

/// Backward Riccati recursion with the cross term, then a forward rollout
/// from `x0`. Returns the state at every grid point (`steps + 1` entries).
pub fn optimal_rollout(
    lq: &DiscreteLq,
    q_f: &DMatrix<f64>,
    x0: &DVector<f64>,
    steps: usize,
) -> Vec<DVector<f64>> {
    let mut p = q_f.clone();
    let mut gains: Vec<DMatrix<f64>> = Vec::with_capacity(steps);
    for _ in 0..steps {
        let pa = &p * &lq.a_d;
        let pb = &p * &lq.b_d;
        let g = &lq.r_d + lq.b_d.transpose() * &pb;
        let rhs = lq.b_d.transpose() * &pa + lq.s_d.transpose();
        let gain = g
            .clone()
            .lu()
            .solve(&rhs)
            .expect("control weight block is positive definite");
        let coupling = lq.a_d.transpose() * &pb + &lq.s_d;
        p = &lq.q_d + lq.a_d.transpose() * &pa - &coupling * &gain;
        // Symmetrize against rounding drift.
        let pt = p.transpose();
        p += pt;
        p *= 0.5;
        gains.push(gain);
    }
    gains.reverse();

    let mut x = x0.clone();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x.clone());
    for gain in &gains {
        let u = -(gain * &x);
        x = &lq.a_d * &x + &lq.b_d * &u;
        states.push(x.clone());
    }
    states
}
