//! Shared oracles for the unit tests: independent solvers and random
//! SPD generators. Test-only; never used by library code.

use crate::linalg::SpdMatrix;
use rand::rngs::StdRng;
use rand::Rng;

pub fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += a[i * n + k] * b[k * n + j];
            }
            out[i * n + j] = s;
        }
    }
    out
}

pub fn transpose(a: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = a[i * n + j];
        }
    }
    out
}

/// Well-conditioned random SPD matrix: `MᵀM + (n/4)·I`.
pub fn random_spd(rng: &mut StdRng, n: usize) -> SpdMatrix {
    let m: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mt = transpose(&m, n);
    let mut a = mat_mul(&mt, &m, n);
    for i in 0..n {
        a[i * n + i] += 0.25 * n as f64;
    }
    SpdMatrix::new(n, a).unwrap()
}

/// Independent solver oracle: plain conjugate gradients on `A x = b`,
/// iterated to a relative residual of `tol`.
pub fn conjugate_gradient(a: &SpdMatrix, b: &[f64], tol: f64) -> Vec<f64> {
    let n = a.dim();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    let b_norm: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    for _ in 0..(10 * n + 50) {
        if rs.sqrt() <= tol * b_norm {
            break;
        }
        let ap = a.mat_vec(&p).unwrap();
        let pap: f64 = p.iter().zip(&ap).map(|(pi, api)| pi * api).sum();
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
