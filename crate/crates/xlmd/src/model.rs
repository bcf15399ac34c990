//! The coupled-system interface and the built-in test systems.
//!
//! A model ties `d` atomic coordinates `r` to `d'` latent coordinates `x`
//! through the interaction energy
//!
//! ```text
//! Q(r, x) = ½ xᵀ A(r) x − b(r)ᵀ x
//! ```
//!
//! with `A(r)` symmetric positive definite, on top of an outer potential
//! `U(r)`. Implementations supply `U`, the force `F = −∇U`, the couplings
//! `A`, `b`, and their *analytic* derivatives `∂A/∂r_k`, `∂b/∂r_k`.
//! Derivatives are analytic by contract: differencing them numerically
//! inside force evaluations would contaminate small-parameter convergence
//! measurements with an `O(h²)` floor. [`validate_derivatives`] cross-checks
//! the supplied derivatives against central differences instead.

use crate::error::{Error, Result};
use crate::linalg::{cholesky_factor, spd_solve, SpdMatrix};

/// A coupled system. All `_into` methods write into caller-provided buffers
/// so the integrators can run allocation-free; sizes are `atomic_dim` for
/// `r`-shaped data, `latent_dim` for `x`-shaped data, and
/// `latent_dim²` (row-major) for matrices.
pub trait Model: Sync {
    /// Number of atomic coordinates `d`.
    fn atomic_dim(&self) -> usize;

    /// Number of latent coordinates `d'`.
    fn latent_dim(&self) -> usize;

    /// Outer potential `U(r)`.
    fn potential(&self, r: &[f64]) -> f64;

    /// `F(r) = −∇U(r)`.
    fn force_into(&self, r: &[f64], out: &mut [f64]);

    /// `A(r)`, row-major; must be exactly symmetric as written.
    fn coupling_matrix_into(&self, r: &[f64], out: &mut [f64]);

    /// `b(r)`.
    fn coupling_vector_into(&self, r: &[f64], out: &mut [f64]);

    /// `∂A/∂r_k (r)`, row-major symmetric.
    fn coupling_matrix_grad_into(&self, r: &[f64], k: usize, out: &mut [f64]);

    /// `∂b/∂r_k (r)`.
    fn coupling_vector_grad_into(&self, r: &[f64], k: usize, out: &mut [f64]);

    /// Reference initial position for this model's experiments.
    fn initial_position(&self) -> Vec<f64>;

    /// Reference initial velocity.
    fn initial_velocity(&self) -> Vec<f64>;

    fn force(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.atomic_dim()];
        self.force_into(r, &mut out);
        out
    }

    /// `A(r)` with the symmetry invariant enforced at construction.
    fn coupling_matrix(&self, r: &[f64]) -> Result<SpdMatrix> {
        let dp = self.latent_dim();
        let mut entries = vec![0.0; dp * dp];
        self.coupling_matrix_into(r, &mut entries);
        SpdMatrix::new(dp, entries)
    }

    fn coupling_vector(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.latent_dim()];
        self.coupling_vector_into(r, &mut out);
        out
    }

    fn coupling_matrix_grad(&self, r: &[f64], k: usize) -> Result<SpdMatrix> {
        let dp = self.latent_dim();
        let mut entries = vec![0.0; dp * dp];
        self.coupling_matrix_grad_into(r, k, &mut entries);
        SpdMatrix::new(dp, entries)
    }

    fn coupling_vector_grad(&self, r: &[f64], k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.latent_dim()];
        self.coupling_vector_grad_into(r, k, &mut out);
        out
    }
}

fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        })
    }
}

/// Interaction energy `Q(r, x) = ½ xᵀ A(r) x − b(r)ᵀ x`.
pub fn interaction_energy<M: Model + ?Sized>(model: &M, r: &[f64], x: &[f64]) -> Result<f64> {
    check_dim("position r", model.atomic_dim(), r.len())?;
    check_dim("latent x", model.latent_dim(), x.len())?;
    let dp = model.latent_dim();
    let mut a = vec![0.0; dp * dp];
    model.coupling_matrix_into(r, &mut a);
    let mut b = vec![0.0; dp];
    model.coupling_vector_into(r, &mut b);
    let mut quad = 0.0;
    let mut lin = 0.0;
    for i in 0..dp {
        let row = &a[i * dp..(i + 1) * dp];
        let mut s = 0.0;
        for j in 0..dp {
            s += row[j] * x[j];
        }
        quad += x[i] * s;
        lin += b[i] * x[i];
    }
    Ok(0.5 * quad - lin)
}

/// The constrained latent solution `x_*(r) = A(r)⁻¹ b(r)`.
pub fn constraint_solve<M: Model + ?Sized>(model: &M, r: &[f64]) -> Result<Vec<f64>> {
    check_dim("position r", model.atomic_dim(), r.len())?;
    let a = model.coupling_matrix(r)?;
    let b = model.coupling_vector(r);
    spd_solve(&a, &b)
}

/// Force on the atoms in the presence of a latent state `x`:
///
/// ```text
/// G_k(r, x) = F_k(r) − ½ xᵀ (∂A/∂r_k) x + (∂b/∂r_k)ᵀ x
/// ```
///
/// With `x = x_*(r)` this is exactly `−∇` of the reduced potential
/// `U(r) − ½ b(r)ᵀ A(r)⁻¹ b(r)`.
pub fn coupled_force<M: Model + ?Sized>(model: &M, r: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_dim("position r", model.atomic_dim(), r.len())?;
    check_dim("latent x", model.latent_dim(), x.len())?;
    let dp = model.latent_dim();
    let mut da = vec![0.0; dp * dp];
    let mut db = vec![0.0; dp];
    let mut out = vec![0.0; model.atomic_dim()];
    coupled_force_raw(model, r, x, &mut da, &mut db, &mut out);
    Ok(out)
}

/// Allocation-free kernel behind [`coupled_force`]; `da`/`db` are scratch.
pub(crate) fn coupled_force_raw<M: Model + ?Sized>(
    model: &M,
    r: &[f64],
    x: &[f64],
    da: &mut [f64],
    db: &mut [f64],
    out: &mut [f64],
) {
    let d = model.atomic_dim();
    let dp = model.latent_dim();
    debug_assert_eq!(da.len(), dp * dp);
    debug_assert_eq!(db.len(), dp);
    debug_assert_eq!(out.len(), d);
    model.force_into(r, out);
    for k in 0..d {
        model.coupling_matrix_grad_into(r, k, da);
        model.coupling_vector_grad_into(r, k, db);
        let mut quad = 0.0;
        let mut lin = 0.0;
        for i in 0..dp {
            let row = &da[i * dp..(i + 1) * dp];
            let mut s = 0.0;
            for j in 0..dp {
                s += row[j] * x[j];
            }
            quad += x[i] * s;
            lin += db[i] * x[i];
        }
        out[k] += lin - 0.5 * quad;
    }
}

/// Time derivative of the constrained solution along `ṙ = p`:
///
/// ```text
/// d/dt x_*(r) = −A⁻¹ (Σ_k p_k ∂A/∂r_k) A⁻¹ b + A⁻¹ (Σ_k p_k ∂b/∂r_k)
/// ```
///
/// Used as the latent velocity that makes an initial condition optimally
/// compatible.
pub fn optimal_velocity<M: Model + ?Sized>(model: &M, r: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    check_dim("position r", model.atomic_dim(), r.len())?;
    check_dim("velocity p", model.atomic_dim(), p.len())?;
    let d = model.atomic_dim();
    let dp = model.latent_dim();

    let a = model.coupling_matrix(r)?;
    let factor = cholesky_factor(&a)?;
    let b = model.coupling_vector(r);
    let x_star = factor.solve(&b)?;

    let mut da = vec![0.0; dp * dp];
    let mut db = vec![0.0; dp];
    // rhs = Σ_k p_k (∂b/∂r_k − (∂A/∂r_k) x_*)
    let mut rhs = vec![0.0; dp];
    for k in 0..d {
        model.coupling_matrix_grad_into(r, k, &mut da);
        model.coupling_vector_grad_into(r, k, &mut db);
        for i in 0..dp {
            let row = &da[i * dp..(i + 1) * dp];
            let mut s = 0.0;
            for j in 0..dp {
                s += row[j] * x_star[j];
            }
            rhs[i] += p[k] * (db[i] - s);
        }
    }
    factor.solve(&rhs)
}

/// Conserved energy of the exact constrained dynamics:
/// `½|p|² + U(r) − ½ b(r)ᵀ A(r)⁻¹ b(r)`.
pub fn exact_energy<M: Model + ?Sized>(model: &M, r: &[f64], p: &[f64]) -> Result<f64> {
    check_dim("position r", model.atomic_dim(), r.len())?;
    check_dim("velocity p", model.atomic_dim(), p.len())?;
    let x_star = constraint_solve(model, r)?;
    let b = model.coupling_vector(r);
    let reduced: f64 = b.iter().zip(&x_star).map(|(bi, xi)| bi * xi).sum();
    let kin: f64 = 0.5 * p.iter().map(|v| v * v).sum::<f64>();
    Ok(kin + model.potential(r) - 0.5 * reduced)
}

/// Conserved energy of the extended (XLMD) dynamics:
/// `½|p|² + ½ eps |v|² + U(r) + Q(r, x)`.
pub fn extended_energy<M: Model + ?Sized>(
    model: &M,
    eps: f64,
    r: &[f64],
    p: &[f64],
    x: &[f64],
    v: &[f64],
) -> Result<f64> {
    check_dim("velocity p", model.atomic_dim(), p.len())?;
    check_dim("latent velocity v", model.latent_dim(), v.len())?;
    let q = interaction_energy(model, r, x)?;
    let kin: f64 = 0.5 * p.iter().map(|u| u * u).sum::<f64>();
    let lat: f64 = 0.5 * eps * v.iter().map(|u| u * u).sum::<f64>();
    Ok(kin + lat + model.potential(r) + q)
}

/// Outcome of cross-checking a model's analytic derivatives against central
/// differences at a single point.
///
/// The pass threshold is `100·h²·scale + 32·ε_mach·(1 + value_scale)/h`:
/// the first term bounds the honest `O(h²)` truncation of a central
/// difference (with `scale` the largest third-derivative magnitude seen by a
/// 5-point stencil), the second absorbs floating-point roundoff so that
/// models with vanishing third derivatives are not failed on noise.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub h: f64,
    /// Max over `k` of `|F_k + ∂U/∂r_k|` with `∂U` central-differenced.
    pub max_force_discrepancy: f64,
    /// Max over `k, i, j` of `|∂A_ij/∂r_k − central difference|`.
    pub max_coupling_matrix_discrepancy: f64,
    /// Max over `k, i` of `|∂b_i/∂r_k − central difference|`.
    pub max_coupling_vector_discrepancy: f64,
    /// Largest third-derivative estimate (5-point stencil) across `U`, `A`, `b`.
    pub derivative_scale: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl ValidationReport {
    pub fn max_discrepancy(&self) -> f64 {
        self.max_force_discrepancy
            .max(self.max_coupling_matrix_discrepancy)
            .max(self.max_coupling_vector_discrepancy)
    }
}

/// Compares analytic `F`, `∂A/∂r_k`, `∂b/∂r_k` against central differences
/// of `U`, `A`, `b` at `r` with step `h`. Numerical disagreement never
/// errors; it is recorded in the report.
pub fn validate_derivatives<M: Model + ?Sized>(
    model: &M,
    r: &[f64],
    h: f64,
) -> Result<ValidationReport> {
    check_dim("position r", model.atomic_dim(), r.len())?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::DegenerateInput(format!(
            "finite difference step must be positive and finite, got {h}"
        )));
    }
    let d = model.atomic_dim();
    let dp = model.latent_dim();

    let force = model.force(r);
    let mut rp = r.to_vec();

    let mut a_buf = [
        vec![0.0; dp * dp],
        vec![0.0; dp * dp],
        vec![0.0; dp * dp],
        vec![0.0; dp * dp],
    ];
    let mut b_buf = [
        vec![0.0; dp],
        vec![0.0; dp],
        vec![0.0; dp],
        vec![0.0; dp],
    ];
    let mut da = vec![0.0; dp * dp];
    let mut db = vec![0.0; dp];

    let mut max_force = 0.0_f64;
    let mut max_da = 0.0_f64;
    let mut max_db = 0.0_f64;
    let mut scale = 0.0_f64;
    let mut value_scale = 0.0_f64;

    for k in 0..d {
        let shifts = [h, -h, 2.0 * h, -2.0 * h];
        let mut u = [0.0_f64; 4];
        for (s, shift) in shifts.iter().enumerate() {
            rp.copy_from_slice(r);
            rp[k] += shift;
            u[s] = model.potential(&rp);
            model.coupling_matrix_into(&rp, &mut a_buf[s]);
            model.coupling_vector_into(&rp, &mut b_buf[s]);
        }
        for us in u {
            value_scale = value_scale.max(us.abs());
        }
        let fd_force = -(u[0] - u[1]) / (2.0 * h);
        max_force = max_force.max((force[k] - fd_force).abs());
        scale = scale.max(((u[2] - 2.0 * u[0] + 2.0 * u[1] - u[3]) / (2.0 * h * h * h)).abs());

        model.coupling_matrix_grad_into(r, k, &mut da);
        for i in 0..dp * dp {
            let (ap, am, ap2, am2) = (a_buf[0][i], a_buf[1][i], a_buf[2][i], a_buf[3][i]);
            value_scale = value_scale.max(ap.abs()).max(am.abs());
            let fd = (ap - am) / (2.0 * h);
            max_da = max_da.max((da[i] - fd).abs());
            scale = scale.max(((ap2 - 2.0 * ap + 2.0 * am - am2) / (2.0 * h * h * h)).abs());
        }

        model.coupling_vector_grad_into(r, k, &mut db);
        for i in 0..dp {
            let (bp, bm, bp2, bm2) = (b_buf[0][i], b_buf[1][i], b_buf[2][i], b_buf[3][i]);
            value_scale = value_scale.max(bp.abs()).max(bm.abs());
            let fd = (bp - bm) / (2.0 * h);
            max_db = max_db.max((db[i] - fd).abs());
            scale = scale.max(((bp2 - 2.0 * bp + 2.0 * bm - bm2) / (2.0 * h * h * h)).abs());
        }
    }

    let threshold = 100.0 * h * h * scale + 32.0 * f64::EPSILON * (1.0 + value_scale) / h;
    let pass = max_force <= threshold && max_da <= threshold && max_db <= threshold;
    Ok(ValidationReport {
        h,
        max_force_discrepancy: max_force,
        max_coupling_matrix_discrepancy: max_da,
        max_coupling_vector_discrepancy: max_db,
        derivative_scale: scale,
        threshold,
        pass,
    })
}

/// Reference system used throughout the convergence experiments: three
/// atoms, twenty latent coordinates.
///
/// ```text
/// U(r)      = ¼|r|⁴ + cos(2(r₁+r₂+r₃))
/// F_j(r)    = −|r|² r_j + 2 sin(2(r₁+r₂+r₃))
/// A_kk      = 2 + |r|²,  A_{k,k±1} = −1,  A_{k,k±2} = (1 − |r|²)/2
/// b_k       = sin(k r₁/10 + (1 − k/20) r₂ + r₃),   k = 1..20
/// ```
///
/// so `∂A/∂r_k = 2 r_k M` with `M` carrying 1 on the diagonal and −½ on the
/// second off-diagonals, and `∂b_i/∂r = cos(arg_i)·(i/10, 1 − i/20, 1)`.
/// `A(r)` stays positive definite on the region the reference trajectory
/// visits; its smallest eigenvalue at `r = 0` is bounded below by ½.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToyModel;

const TOY_D: usize = 3;
const TOY_DP: usize = 20;

impl ToyModel {
    #[inline]
    fn arg(i: usize, r: &[f64]) -> (f64, f64, f64, f64) {
        let kk = (i + 1) as f64;
        let c0 = 0.1 * kk;
        let c1 = 1.0 - 0.05 * kk;
        (c0 * r[0] + c1 * r[1] + r[2], c0, c1, 1.0)
    }
}

impl Model for ToyModel {
    fn atomic_dim(&self) -> usize {
        TOY_D
    }

    fn latent_dim(&self) -> usize {
        TOY_DP
    }

    fn potential(&self, r: &[f64]) -> f64 {
        let s = r.iter().map(|v| v * v).sum::<f64>();
        0.25 * s * s + (2.0 * (r[0] + r[1] + r[2])).cos()
    }

    fn force_into(&self, r: &[f64], out: &mut [f64]) {
        let s = r.iter().map(|v| v * v).sum::<f64>();
        let osc = 2.0 * (2.0 * (r[0] + r[1] + r[2])).sin();
        for j in 0..TOY_D {
            out[j] = -s * r[j] + osc;
        }
    }

    fn coupling_matrix_into(&self, r: &[f64], out: &mut [f64]) {
        let s = r.iter().map(|v| v * v).sum::<f64>();
        let diag = 2.0 + s;
        let off2 = 0.5 * (1.0 - s);
        out.fill(0.0);
        for i in 0..TOY_DP {
            out[i * TOY_DP + i] = diag;
        }
        for i in 0..TOY_DP - 1 {
            out[i * TOY_DP + i + 1] = -1.0;
            out[(i + 1) * TOY_DP + i] = -1.0;
        }
        for i in 0..TOY_DP - 2 {
            out[i * TOY_DP + i + 2] = off2;
            out[(i + 2) * TOY_DP + i] = off2;
        }
    }

    fn coupling_vector_into(&self, r: &[f64], out: &mut [f64]) {
        for i in 0..TOY_DP {
            let (arg, ..) = Self::arg(i, r);
            out[i] = arg.sin();
        }
    }

    fn coupling_matrix_grad_into(&self, r: &[f64], k: usize, out: &mut [f64]) {
        let rk = r[k];
        out.fill(0.0);
        for i in 0..TOY_DP {
            out[i * TOY_DP + i] = 2.0 * rk;
        }
        for i in 0..TOY_DP - 2 {
            out[i * TOY_DP + i + 2] = -rk;
            out[(i + 2) * TOY_DP + i] = -rk;
        }
    }

    fn coupling_vector_grad_into(&self, r: &[f64], k: usize, out: &mut [f64]) {
        for i in 0..TOY_DP {
            let (arg, c0, c1, c2) = Self::arg(i, r);
            let coef = match k {
                0 => c0,
                1 => c1,
                _ => c2,
            };
            out[i] = arg.cos() * coef;
        }
    }

    fn initial_position(&self) -> Vec<f64> {
        vec![0.0, 0.5, 1.0]
    }

    fn initial_velocity(&self) -> Vec<f64> {
        vec![1.0, 0.5, -1.0]
    }
}

/// Constant couplings `A₀`, `b₀` with a harmonic outer potential
/// `U = ½|r|²`, `F = −r`. Both coupling derivatives vanish, so the atomic
/// and latent subsystems evolve independently and the latent XLMD motion has
/// the closed form `x(t) = x_* + cos(√(A₀/eps)·t)(x₀ − x_*)` from rest.
#[derive(Debug, Clone)]
pub struct ConstantCoupling {
    atomic_dim: usize,
    a0: SpdMatrix,
    b0: Vec<f64>,
    r0: Vec<f64>,
    p0: Vec<f64>,
}

impl ConstantCoupling {
    pub fn new(atomic_dim: usize, a0: SpdMatrix, b0: Vec<f64>) -> Result<Self> {
        if atomic_dim == 0 {
            return Err(Error::DegenerateInput(
                "atomic dimension must be positive".into(),
            ));
        }
        check_dim("coupling vector b0", a0.dim(), b0.len())?;
        let mut r0 = vec![0.0; atomic_dim];
        r0[0] = 1.0;
        let p0 = vec![0.0; atomic_dim];
        Ok(Self {
            atomic_dim,
            a0,
            b0,
            r0,
            p0,
        })
    }

    /// Overrides the reference initial condition.
    pub fn with_initial(mut self, r0: Vec<f64>, p0: Vec<f64>) -> Result<Self> {
        check_dim("initial position r0", self.atomic_dim, r0.len())?;
        check_dim("initial velocity p0", self.atomic_dim, p0.len())?;
        self.r0 = r0;
        self.p0 = p0;
        Ok(self)
    }

    /// The 1-atom, 1-latent fixture used by the CLI: `A₀ = [1]`, `b₀ = [½]`,
    /// starting from `r = 1` at rest. Unit frequencies in both subsystems at
    /// `eps = 1`.
    pub fn harmonic_1d() -> Self {
        Self::new(1, SpdMatrix::identity(1), vec![0.5]).expect("static dims")
    }
}

impl Model for ConstantCoupling {
    fn atomic_dim(&self) -> usize {
        self.atomic_dim
    }

    fn latent_dim(&self) -> usize {
        self.a0.dim()
    }

    fn potential(&self, r: &[f64]) -> f64 {
        0.5 * r.iter().map(|v| v * v).sum::<f64>()
    }

    fn force_into(&self, r: &[f64], out: &mut [f64]) {
        for (o, ri) in out.iter_mut().zip(r) {
            *o = -ri;
        }
    }

    fn coupling_matrix_into(&self, _r: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.a0.entries());
    }

    fn coupling_vector_into(&self, _r: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b0);
    }

    fn coupling_matrix_grad_into(&self, _r: &[f64], _k: usize, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn coupling_vector_grad_into(&self, _r: &[f64], _k: usize, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn initial_position(&self) -> Vec<f64> {
        self.r0.clone()
    }

    fn initial_velocity(&self) -> Vec<f64> {
        self.p0.clone()
    }
}

/// Minimal fully-scalar system for flow-map experiments: one atom, one
/// latent coordinate, `U = ½r²`, `A(r) = 2 + sin r ∈ [1, 3]`, `b(r) = cos r`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Scalar1d;

impl Model for Scalar1d {
    fn atomic_dim(&self) -> usize {
        1
    }

    fn latent_dim(&self) -> usize {
        1
    }

    fn potential(&self, r: &[f64]) -> f64 {
        0.5 * r[0] * r[0]
    }

    fn force_into(&self, r: &[f64], out: &mut [f64]) {
        out[0] = -r[0];
    }

    fn coupling_matrix_into(&self, r: &[f64], out: &mut [f64]) {
        out[0] = 2.0 + r[0].sin();
    }

    fn coupling_vector_into(&self, r: &[f64], out: &mut [f64]) {
        out[0] = r[0].cos();
    }

    fn coupling_matrix_grad_into(&self, r: &[f64], _k: usize, out: &mut [f64]) {
        out[0] = r[0].cos();
    }

    fn coupling_vector_grad_into(&self, r: &[f64], _k: usize, out: &mut [f64]) {
        out[0] = -r[0].sin();
    }

    fn initial_position(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn initial_velocity(&self) -> Vec<f64> {
        vec![1.0]
    }
}

/// Selector for the built-in systems, as exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinModel {
    Toy,
    ConstantCoupling,
    Scalar1d,
}

impl BuiltinModel {
    pub fn instantiate(self) -> Box<dyn Model> {
        match self {
            BuiltinModel::Toy => Box::new(ToyModel),
            BuiltinModel::ConstantCoupling => Box::new(ConstantCoupling::harmonic_1d()),
            BuiltinModel::Scalar1d => Box::new(Scalar1d),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigen;
    use crate::test_util::{conjugate_gradient, norm2};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn all_builtins() -> Vec<Box<dyn Model>> {
        vec![
            BuiltinModel::Toy.instantiate(),
            BuiltinModel::ConstantCoupling.instantiate(),
            BuiltinModel::Scalar1d.instantiate(),
        ]
    }

    #[test]
    fn toy_dimensions() {
        assert_eq!(ToyModel.atomic_dim(), 3);
        assert_eq!(ToyModel.latent_dim(), 20);
    }

    #[test]
    fn toy_coupling_vector_spot_values() {
        // r = (1, 0, 0): b_k = sin(k/10).
        let b = ToyModel.coupling_vector(&[1.0, 0.0, 0.0]);
        assert!((b[0] - 0.1_f64.sin()).abs() <= 1e-15);
        assert!((b[19] - 2.0_f64.sin()).abs() <= 1e-15);
        // r = (0, 1, 0): b_k = sin(1 - k/20).
        let b = ToyModel.coupling_vector(&[0.0, 1.0, 0.0]);
        assert!((b[9] - 0.5_f64.sin()).abs() <= 1e-15);
    }

    #[test]
    fn toy_coupling_matrix_bands() {
        let r = [0.0, 0.5, 1.0];
        let s = 1.25;
        let a = ToyModel.coupling_matrix(&r).unwrap();
        assert_eq!(a.get(4, 4), 2.0 + s);
        assert_eq!(a.get(4, 5), -1.0);
        assert_eq!(a.get(4, 6), 0.5 * (1.0 - s));
        assert_eq!(a.get(4, 7), 0.0);
        let da1 = ToyModel.coupling_matrix_grad(&r, 1).unwrap();
        assert_eq!(da1.get(3, 3), 1.0); // 2 r₂ = 1
        assert_eq!(da1.get(3, 5), -0.5); // −r₂
        assert_eq!(da1.get(3, 4), 0.0);
    }

    #[test]
    fn toy_matrix_positive_definite_at_origin() {
        let eig = sym_eigen(&ToyModel.coupling_matrix(&[0.0; 3]).unwrap());
        assert!(
            eig.values[0] >= 0.5,
            "smallest eigenvalue {} below symbol bound",
            eig.values[0]
        );
    }

    #[test]
    fn builtin_matrices_positive_definite_on_box() {
        let mut rng = StdRng::seed_from_u64(0x5eed10);
        for model in all_builtins() {
            let d = model.atomic_dim();
            for _ in 0..100 {
                let r: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let a = model.coupling_matrix(&r).unwrap();
                cholesky_factor(&a).unwrap_or_else(|e| {
                    panic!("coupling matrix not SPD at r={r:?}: {e}");
                });
            }
        }
    }

    #[test]
    fn interaction_energy_toy_basis_vector() {
        let r = [0.0, 0.5, 1.0];
        let mut x = vec![0.0; 20];
        x[0] = 1.0;
        let expected = 0.5 * (2.0 + 1.25) - (0.95 * 0.5 + 1.0_f64).sin();
        let q = interaction_energy(&ToyModel, &r, &x).unwrap();
        assert!((q - expected).abs() <= 1e-15, "{q} vs {expected}");
    }

    #[test]
    fn interaction_energy_constant_identity() {
        let model = ConstantCoupling::new(2, SpdMatrix::identity(2), vec![0.0, 0.0]).unwrap();
        let q = interaction_energy(&model, &[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert_eq!(q, 12.5);
    }

    #[test]
    fn interaction_energy_zero_latent() {
        let q = interaction_energy(&ToyModel, &[0.3, -0.2, 0.9], &[0.0; 20]).unwrap();
        assert_eq!(q, 0.0);
    }

    #[test]
    fn constraint_solve_constant_diagonal() {
        let a = SpdMatrix::new(3, vec![2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0]).unwrap();
        let model = ConstantCoupling::new(1, a, vec![1.0, 1.0, 1.0]).unwrap();
        let x = constraint_solve(&model, &[0.0]).unwrap();
        for xi in x {
            assert!((xi - 0.5).abs() <= 1e-15, "{xi}");
        }
    }

    #[test]
    fn constraint_solve_matches_cg_oracle_and_residual() {
        let mut rng = StdRng::seed_from_u64(0x5eed11);
        for _ in 0..10 {
            let r: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.2..1.2)).collect();
            let x = constraint_solve(&ToyModel, &r).unwrap();
            let a = ToyModel.coupling_matrix(&r).unwrap();
            let b = ToyModel.coupling_vector(&r);
            let x_cg = conjugate_gradient(&a, &b, 1e-13);
            for i in 0..20 {
                assert!((x[i] - x_cg[i]).abs() <= 1e-10, "solver disagrees with CG");
            }
            let ax = a.mat_vec(&x).unwrap();
            let res: Vec<f64> = ax.iter().zip(&b).map(|(l, r)| l - r).collect();
            assert!(norm2(&res) <= 1e-12 * norm2(&b).max(1.0));
        }
    }

    #[test]
    fn coupled_force_constant_model_is_plain_force() {
        let model = ConstantCoupling::harmonic_1d();
        let g = coupled_force(&model, &[0.7], &[123.0]).unwrap();
        assert_eq!(g, vec![-0.7]);
    }

    #[test]
    fn coupled_force_matches_gradient_of_total_potential() {
        // G must equal −∂/∂r [U(r) + Q(r, x)] at fixed x.
        let mut rng = StdRng::seed_from_u64(0x5eed12);
        let h = 1e-5;
        for _ in 0..10 {
            let r: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g = coupled_force(&ToyModel, &r, &x).unwrap();
            for k in 0..3 {
                let mut rp = r.clone();
                rp[k] += h;
                let wp = ToyModel.potential(&rp) + interaction_energy(&ToyModel, &rp, &x).unwrap();
                rp[k] -= 2.0 * h;
                let wm = ToyModel.potential(&rp) + interaction_energy(&ToyModel, &rp, &x).unwrap();
                let fd = -(wp - wm) / (2.0 * h);
                assert!(
                    (g[k] - fd).abs() <= 1e-6,
                    "k={k}: analytic {} vs fd {}",
                    g[k],
                    fd
                );
            }
        }
    }

    #[test]
    fn optimal_velocity_constant_model_is_zero() {
        let model = ConstantCoupling::harmonic_1d();
        let v = optimal_velocity(&model, &[0.4], &[2.0]).unwrap();
        assert_eq!(v, vec![0.0]);
    }

    #[test]
    fn optimal_velocity_matches_differenced_constraint_map() {
        let mut rng = StdRng::seed_from_u64(0x5eed13);
        let h = 1e-6;
        for _ in 0..8 {
            let r: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let xdot = optimal_velocity(&ToyModel, &r, &p).unwrap();
            let shifted = |sign: f64| -> Vec<f64> {
                let rs: Vec<f64> = r.iter().zip(&p).map(|(ri, pi)| ri + sign * h * pi).collect();
                constraint_solve(&ToyModel, &rs).unwrap()
            };
            let xp = shifted(1.0);
            let xm = shifted(-1.0);
            for i in 0..20 {
                let fd = (xp[i] - xm[i]) / (2.0 * h);
                assert!(
                    (xdot[i] - fd).abs() <= 1e-6,
                    "i={i}: analytic {} vs fd {}",
                    xdot[i],
                    fd
                );
            }
        }
    }

    #[test]
    fn exact_energy_scalar_hand_value() {
        let model =
            ConstantCoupling::new(1, SpdMatrix::new(1, vec![2.0]).unwrap(), vec![2.0]).unwrap();
        let e = exact_energy(&model, &[0.0], &[1.0]).unwrap();
        assert!((e + 0.5).abs() <= 1e-15, "expected −0.5, got {e}");
    }

    #[test]
    fn extended_energy_reduces_at_rest_on_constraint() {
        let r = [0.0, 0.5, 1.0];
        let p = [1.0, 0.5, -1.0];
        let x = constraint_solve(&ToyModel, &r).unwrap();
        let v = vec![0.0; 20];
        let e = extended_energy(&ToyModel, 1e-3, &r, &p, &x, &v).unwrap();
        let direct = 0.5 * (1.0 + 0.25 + 1.0)
            + ToyModel.potential(&r)
            + interaction_energy(&ToyModel, &r, &x).unwrap();
        assert!((e - direct).abs() <= 1e-15);
    }

    #[test]
    fn extended_energy_equals_exact_on_manifold_track() {
        // With x = x_*(r) the interaction term is −½ bᵀA⁻¹b, so at v = 0 the
        // two energies coincide.
        let r = [0.2, -0.4, 0.8];
        let p = [0.3, 0.0, -0.5];
        let x = constraint_solve(&ToyModel, &r).unwrap();
        let e_ext = extended_energy(&ToyModel, 1e-2, &r, &p, &x, &[0.0; 20]).unwrap();
        let e_exact = exact_energy(&ToyModel, &r, &p).unwrap();
        assert!((e_ext - e_exact).abs() <= 1e-13, "{e_ext} vs {e_exact}");
    }

    #[test]
    fn validate_derivatives_toy() {
        let report = validate_derivatives(&ToyModel, &[0.0, 0.5, 1.0], 1e-4).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.max_discrepancy() <= 1e-5, "{report:?}");
    }

    #[test]
    fn validate_derivatives_scalar1d() {
        let report = validate_derivatives(&Scalar1d, &[0.3], 1e-4).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.max_discrepancy() <= 1e-6, "{report:?}");
    }

    #[test]
    fn validate_derivatives_constant_model_exact() {
        let model = ConstantCoupling::harmonic_1d();
        let report = validate_derivatives(&model, &[0.7], 1e-4).unwrap();
        assert!(report.pass, "{report:?}");
        assert_eq!(report.max_coupling_matrix_discrepancy, 0.0);
        assert_eq!(report.max_coupling_vector_discrepancy, 0.0);
    }

    #[test]
    fn validate_derivatives_rejects_bad_step() {
        assert!(validate_derivatives(&Scalar1d, &[0.0], 0.0).is_err());
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        assert!(interaction_energy(&ToyModel, &[0.0; 2], &[0.0; 20]).is_err());
        assert!(interaction_energy(&ToyModel, &[0.0; 3], &[0.0; 19]).is_err());
        assert!(constraint_solve(&ToyModel, &[0.0; 4]).is_err());
        assert!(coupled_force(&ToyModel, &[0.0; 3], &[0.0; 21]).is_err());
        assert!(optimal_velocity(&ToyModel, &[0.0; 3], &[0.0; 2]).is_err());
    }

    use crate::linalg::cholesky_factor;
}
