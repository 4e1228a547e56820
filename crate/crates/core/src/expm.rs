//! Dense matrix exponential by scaling and squaring with diagonal Pade
//! approximants, following Higham's revisited algorithm. Order 3/5/7/9
//! approximants handle small norms; larger matrices are scaled below the
//! order-13 threshold, approximated, then squared back up.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.53939833006323e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

/// exp(m) for a square matrix with finite entries.
pub fn matrix_exponential(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = m.shape();
    assert_eq!(rows, cols, "matrix exponential needs a square matrix");
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix(
            "matrix exponential input contains NaN or infinite entries".into(),
        ));
    }
    if rows == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }

    let norm = one_norm(m);
    let (u, v, squarings) = if norm < THETA_3 {
        let (u, v) = pade3(m);
        (u, v, 0u32)
    } else if norm < THETA_5 {
        let (u, v) = pade5(m);
        (u, v, 0)
    } else if norm < THETA_7 {
        let (u, v) = pade7(m);
        (u, v, 0)
    } else if norm < THETA_9 {
        let (u, v) = pade9(m);
        (u, v, 0)
    } else {
        let squarings = (norm / THETA_13).log2().ceil().max(0.0) as u32;
        let scaled = m * 2f64.powi(-(squarings as i32));
        let (u, v) = pade13(&scaled);
        (u, v, squarings)
    };

    // The approximant is (V + U) / (V - U).
    let numer = &v + &u;
    let denom = &v - &u;
    let mut result = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| Error::Numerical("Pade denominator is singular".into()))?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// Maximum absolute column sum.
fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade3(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    const B: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
    let n = a.nrows();
    let id = DMatrix::identity(n, n);
    let a2 = a * a;
    let u = a * (B[3] * &a2 + B[1] * &id);
    let v = B[2] * a2 + B[0] * id;
    (u, v)
}

fn pade5(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    const B: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
    let n = a.nrows();
    let id = DMatrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let u = a * (B[5] * &a4 + B[3] * &a2 + B[1] * &id);
    let v = B[4] * a4 + B[2] * a2 + B[0] * id;
    (u, v)
}

fn pade7(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    const B: [f64; 8] = [
        17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
    ];
    let n = a.nrows();
    let id = DMatrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u = a * (B[7] * &a6 + B[5] * &a4 + B[3] * &a2 + B[1] * &id);
    let v = B[6] * a6 + B[4] * a4 + B[2] * a2 + B[0] * id;
    (u, v)
}

fn pade9(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    const B: [f64; 10] = [
        17643225600.0,
        8821612800.0,
        2075673600.0,
        302702400.0,
        30270240.0,
        2162160.0,
        110880.0,
        3960.0,
        90.0,
        1.0,
    ];
    let n = a.nrows();
    let id = DMatrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let a8 = &a6 * &a2;
    let u = a * (B[9] * &a8 + B[7] * &a6 + B[5] * &a4 + B[3] * &a2 + B[1] * &id);
    let v = B[8] * a8 + B[6] * a6 + B[4] * a4 + B[2] * a2 + B[0] * id;
    (u, v)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    let id = DMatrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (B[13] * &a6 + B[11] * &a4 + B[9] * &a2)
        + B[7] * &a6
        + B[5] * &a4
        + B[3] * &a2
        + B[1] * &id;
    let u = a * u_inner;
    let v = &a6 * (B[12] * &a6 + B[10] * &a4 + B[8] * &a2)
        + B[6] * a6
        + B[4] * a4
        + B[2] * a2
        + B[0] * id;
    (u, v)
}
