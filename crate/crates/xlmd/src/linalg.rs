//! Dense linear algebra for small symmetric positive definite systems.
//!
//! Coupling matrices in this crate are dense, symmetric and at most a few
//! hundred rows, so everything here is deliberately unblocked: row-major
//! `Vec<f64>` storage, textbook Cholesky, cyclic Jacobi for the
//! eigendecomposition. No iterative solvers live here; a conjugate-gradient
//! routine exists only as an independent oracle in the test suite.

use crate::error::{Error, Result};

/// Relative asymmetry tolerated by [`SpdMatrix::new`] before construction fails.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Dense symmetric matrix, row-major.
///
/// Symmetry is the construction invariant: inputs are averaged with their
/// transpose and rejected if the asymmetry exceeds [`SYMMETRY_TOL`] relative
/// to the largest entry. Positive definiteness is *not* checked here; it is
/// established by [`cholesky_factor`] or [`sqrt_spd`] at the point of use.
/// That split lets the same type carry symmetric-but-indefinite data such as
/// coupling-matrix derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SpdMatrix {
    /// Builds a `dim × dim` matrix from row-major entries, symmetrizing as
    /// `(M + Mᵀ)/2`.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DegenerateInput(
                "matrix dimension must be positive".into(),
            ));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                what: "matrix entries",
                expected: dim * dim,
                actual: entries.len(),
            });
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(Error::DegenerateInput(
                "matrix entries must be finite".into(),
            ));
        }
        let mut m = entries;
        let mut max_abs = 0.0_f64;
        let mut max_asym = 0.0_f64;
        for i in 0..dim {
            for j in 0..=i {
                let a = m[i * dim + j];
                let b = m[j * dim + i];
                max_abs = max_abs.max(a.abs()).max(b.abs());
                max_asym = max_asym.max((a - b).abs());
            }
        }
        if max_abs > 0.0 && max_asym > SYMMETRY_TOL * max_abs {
            return Err(Error::Asymmetric {
                asymmetry: max_asym / max_abs,
                limit: SYMMETRY_TOL,
            });
        }
        for i in 0..dim {
            for j in 0..i {
                let avg = 0.5 * (m[i * dim + j] + m[j * dim + i]);
                m[i * dim + j] = avg;
                m[j * dim + i] = avg;
            }
        }
        Ok(Self { dim, entries: m })
    }

    /// Builds from an entry generator; `f(i, j)` must be symmetric up to
    /// [`SYMMETRY_TOL`].
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                entries[i * dim + j] = f(i, j);
            }
        }
        Self::new(dim, entries)
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major entry slice of length `dim * dim`.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    /// Largest entry magnitude (max norm).
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0_f64, |m, e| m.max(e.abs()))
    }

    pub fn mat_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "mat_vec operand",
                expected: self.dim,
                actual: v.len(),
            });
        }
        let mut out = vec![0.0; self.dim];
        mat_vec_into(&self.entries, self.dim, v, &mut out);
        Ok(out)
    }
}

/// `out = M v` for a row-major `n × n` matrix slice.
pub(crate) fn mat_vec_into(m: &[f64], n: usize, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.len(), n * n);
    debug_assert_eq!(v.len(), n);
    debug_assert_eq!(out.len(), n);
    for i in 0..n {
        let row = &m[i * n..(i + 1) * n];
        let mut s = 0.0;
        for j in 0..n {
            s += row[j] * v[j];
        }
        out[i] = s;
    }
}

/// In-place lower Cholesky of the row-major `n × n` matrix `m`. On success
/// the lower triangle (diagonal included) holds `L` with `L Lᵀ = M`; the
/// strict upper triangle is left untouched. Fails on the first pivot that is
/// not strictly positive (NaN pivots fail too).
pub(crate) fn cholesky_in_place(m: &mut [f64], n: usize) -> Result<()> {
    debug_assert_eq!(m.len(), n * n);
    for j in 0..n {
        let mut d = m[j * n + j];
        for k in 0..j {
            let l = m[j * n + k];
            d -= l * l;
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { index: j });
        }
        let dj = d.sqrt();
        m[j * n + j] = dj;
        for i in (j + 1)..n {
            let mut s = m[i * n + j];
            for k in 0..j {
                s -= m[i * n + k] * m[j * n + k];
            }
            m[i * n + j] = s / dj;
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = rhs` in place given the lower factor from
/// [`cholesky_in_place`].
pub(crate) fn chol_solve_in_place(l: &[f64], n: usize, rhs: &mut [f64]) {
    debug_assert_eq!(l.len(), n * n);
    debug_assert_eq!(rhs.len(), n);
    for i in 0..n {
        let mut s = rhs[i];
        for k in 0..i {
            s -= l[i * n + k] * rhs[k];
        }
        rhs[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * rhs[k];
        }
        rhs[i] = s / l[i * n + i];
    }
}

/// Lower-triangular Cholesky factor with `L Lᵀ = A`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<f64>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major factor; strict upper triangle is zero.
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "solve right-hand side",
                expected: self.dim,
                actual: rhs.len(),
            });
        }
        let mut x = rhs.to_vec();
        chol_solve_in_place(&self.lower, self.dim, &mut x);
        Ok(x)
    }
}

/// Cholesky factorization; the definedness check for SPD inputs.
pub fn cholesky_factor(a: &SpdMatrix) -> Result<CholeskyFactor> {
    let n = a.dim;
    let mut l = a.entries.clone();
    cholesky_in_place(&mut l, n)?;
    for i in 0..n {
        for j in (i + 1)..n {
            l[i * n + j] = 0.0;
        }
    }
    Ok(CholeskyFactor { dim: n, lower: l })
}

/// Solves `A x = rhs` by Cholesky factorization.
pub fn spd_solve(a: &SpdMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    cholesky_factor(a)?.solve(rhs)
}

/// Full symmetric eigendecomposition `A = V diag(values) Vᵀ`.
///
/// `values` are ascending; `vectors` is row-major with *column* `j` holding
/// the unit eigenvector for `values[j]`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

impl SymEigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, j: usize) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| self.vectors[i * n + j]).collect()
    }
}

const JACOBI_MAX_SWEEPS: usize = 64;

/// Cyclic Jacobi eigendecomposition. Deterministic pivot order; converges
/// when the off-diagonal Frobenius mass drops below `1e-14` of the total.
pub fn sym_eigen(a: &SpdMatrix) -> SymEigen {
    let n = a.dim;
    let mut m = a.entries.clone();
    let mut v = SpdMatrix::identity(n).entries;

    let frob: f64 = m.iter().map(|e| e * e).sum::<f64>().sqrt();
    let stop = 1e-14 * frob;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off.sqrt() <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                // tan of the rotation angle; asymptotic form when theta²
                // would overflow.
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[i * n + i]
            .partial_cmp(&m[j * n + j])
            .expect("eigenvalues are finite")
    });
    let values: Vec<f64> = order.iter().map(|&j| m[j * n + j]).collect();
    let mut vectors = vec![0.0; n * n];
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            vectors[i * n + new_j] = v[i * n + old_j];
        }
    }
    SymEigen { values, vectors }
}

/// Symmetric positive definite square root: `K K = A` with `K` SPD.
///
/// Computed through the full eigendecomposition; fails if any eigenvalue is
/// not strictly positive.
pub fn sqrt_spd(a: &SpdMatrix) -> Result<SpdMatrix> {
    let n = a.dim;
    let eig = sym_eigen(a);
    for (idx, &w) in eig.values.iter().enumerate() {
        if !(w > 0.0) {
            return Err(Error::NotPositiveDefinite { index: idx });
        }
    }
    let roots: Vec<f64> = eig.values.iter().map(|w| w.sqrt()).collect();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for l in 0..n {
                s += eig.vectors[i * n + l] * roots[l] * eig.vectors[j * n + l];
            }
            k[i * n + j] = s;
        }
    }
    // The accumulation above is term-for-term symmetric, so `new` sees a
    // bitwise-symmetric matrix.
    SpdMatrix::new(n, k)
}
