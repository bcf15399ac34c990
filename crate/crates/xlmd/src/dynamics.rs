//! Velocity-Verlet propagation of the exact constrained dynamics and of the
//! extended (XLMD) dynamics.
//!
//! Exact dynamics integrates `ṙ = p`, `ṗ = G(r, x_*(r))` with the latent
//! solution `x_*(r) = A(r)⁻¹b(r)` refreshed by a Cholesky solve at every
//! force evaluation. XLMD integrates the combined second-order system
//!
//! ```text
//! ṙ = p            ṗ = G(r, x)
//! ẋ = v      eps · v̇ = b(r) − A(r) x
//! ```
//!
//! i.e. velocity Verlet on (r, x) with mass matrix diag(1,…,1, eps,…,eps).
//! Both steppers are kick–drift–kick with the end-of-step force reused as
//! the next step's start force, so forces are evaluated once per step.
//! The maps are time reversible: stepping `dt` then `−dt` restores the
//! state to rounding error.

use crate::error::{Error, Result};
use crate::fmt::sig17;
use crate::linalg::{chol_solve_in_place, cholesky_in_place, mat_vec_into, sym_eigen};
use crate::model::{constraint_solve, coupled_force_raw, optimal_velocity, Model};

/// Atomic phase-space point of the exact dynamics. `p` is velocity (unit
/// masses throughout).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub t: f64,
    pub r: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhaseState {
    pub fn new(r: Vec<f64>, p: Vec<f64>) -> Self {
        Self { t: 0.0, r, p }
    }
}

/// Combined phase-space point of the extended dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedPhaseState {
    pub t: f64,
    pub r: Vec<f64>,
    pub p: Vec<f64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

/// How the latent pair (x(0), ẋ(0)) relates to the constraint manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcKind {
    /// x(0) = x_*(r₀), ẋ(0) = d/dt x_*(r(t))|₀. Best latent accuracy.
    OptimallyCompatible,
    /// x(0) = x_*(r₀), ẋ(0) = 0.
    Compatible,
    /// x(0) = x_*(r₀) + offset, ẋ(0) = 0. No latent convergence.
    Incompatible,
}

/// Run parameters shared by both integrators. `eps` is the fictitious
/// latent mass and only read by the XLMD paths.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub eps: f64,
    pub dt: f64,
    pub t_final: f64,
    pub ic_kind: IcKind,
    /// Offset added to `x_*(r₀)` for incompatible starts; `None` selects
    /// the default `½(+1, −1, +1, …)`.
    pub incompatible_offset: Option<Vec<f64>>,
    /// Trajectory sinks record every `sample_stride`-th step.
    pub sample_stride: usize,
}

impl SimConfig {
    pub fn new(eps: f64, dt: f64, t_final: f64) -> Self {
        Self {
            eps,
            dt,
            t_final,
            ic_kind: IcKind::Compatible,
            incompatible_offset: None,
            sample_stride: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "eps must be positive and finite, got {}",
                self.eps
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "dt must be positive and finite, got {}",
                self.dt
            )));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "t_final must be non-negative and finite, got {}",
                self.t_final
            )));
        }
        if self.sample_stride == 0 {
            return Err(Error::InvalidConfig(
                "sample_stride must be at least 1".into(),
            ));
        }
        if let Some(off) = &self.incompatible_offset {
            if off.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(
                    "incompatible_offset must be finite".into(),
                ));
            }
        }
        Ok(())
    }

    /// Number of steps `⌈t_final/dt⌉`, with a one-part-in-10¹² slack so
    /// that quotients that are integers up to rounding are not pushed to
    /// the next integer by `ceil`.
    pub fn num_steps(&self) -> usize {
        let raw = self.t_final / self.dt;
        (raw * (1.0 - 1e-12)).ceil() as usize
    }
}

/// Position of `dt` relative to the latent stability limit
/// `√(eps/λ_max(A(r₀)))` of the Verlet scheme.
#[derive(Debug, Clone, Copy)]
pub struct StabilityReport {
    pub lambda_max: f64,
    /// The hard limit `√(eps/λ_max)`; runs at or beyond it are rejected.
    pub limit_dt: f64,
    /// `dt / limit_dt`.
    pub ratio: f64,
}

impl StabilityReport {
    /// True when `dt` eats into the 10× safety margin below the limit.
    pub fn is_marginal(&self) -> bool {
        self.ratio > 0.1
    }
}

/// Assesses `dt` against the fastest latent oscillation at `r0`.
pub fn stability_report<M: Model + ?Sized>(
    model: &M,
    r0: &[f64],
    eps: f64,
    dt: f64,
) -> Result<StabilityReport> {
    let a = model.coupling_matrix(r0)?;
    let eig = sym_eigen(&a);
    let lambda_max = *eig.values.last().expect("dim >= 1");
    if !(lambda_max > 0.0) {
        return Err(Error::NotPositiveDefinite {
            index: eig.values.len() - 1,
        });
    }
    let limit_dt = (eps / lambda_max).sqrt();
    Ok(StabilityReport {
        lambda_max,
        limit_dt,
        ratio: dt / limit_dt,
    })
}

/// Hard stability gate shared by every XLMD propagation loop: rejects `dt`
/// at or beyond `√(eps/λ_max(A(r₀)))`.
pub(crate) fn enforce_stability<M: Model + ?Sized>(
    model: &M,
    r0: &[f64],
    eps: f64,
    dt: f64,
) -> Result<()> {
    let report = stability_report(model, r0, eps, dt)?;
    if report.ratio >= 1.0 {
        return Err(Error::InvalidConfig(format!(
            "dt {} is at or beyond the latent stability limit {} (lambda_max = {})",
            dt, report.limit_dt, report.lambda_max
        )));
    }
    Ok(())
}

/// The default incompatible-start offset `½(+1, −1, +1, …)`.
pub fn default_incompatible_offset(dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| if i % 2 == 0 { 0.5 } else { -0.5 })
        .collect()
}

/// Builds the extended initial state at `t = 0` from atomic data and an
/// initial-condition kind. The latent position always starts from the
/// constrained solution; `Incompatible` then displaces it by `offset`
/// (default `½(+1, −1, …)`).
pub fn make_initial_condition<M: Model + ?Sized>(
    model: &M,
    kind: IcKind,
    r0: &[f64],
    p0: &[f64],
    offset: Option<&[f64]>,
) -> Result<ExtendedPhaseState> {
    if p0.len() != model.atomic_dim() {
        return Err(Error::DimensionMismatch {
            what: "initial velocity p0",
            expected: model.atomic_dim(),
            actual: p0.len(),
        });
    }
    let dp = model.latent_dim();
    let mut x = constraint_solve(model, r0)?;
    let v = match kind {
        IcKind::OptimallyCompatible => optimal_velocity(model, r0, p0)?,
        IcKind::Compatible => vec![0.0; dp],
        IcKind::Incompatible => {
            let owned;
            let off = match offset {
                Some(o) => o,
                None => {
                    owned = default_incompatible_offset(dp);
                    &owned
                }
            };
            if off.len() != dp {
                return Err(Error::DimensionMismatch {
                    what: "incompatible offset",
                    expected: dp,
                    actual: off.len(),
                });
            }
            for (xi, oi) in x.iter_mut().zip(off) {
                *xi += oi;
            }
            vec![0.0; dp]
        }
    };
    Ok(ExtendedPhaseState {
        t: 0.0,
        r: r0.to_vec(),
        p: p0.to_vec(),
        x,
        v,
    })
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Streaming stepper for the exact dynamics. Owns the scratch buffers and
/// the cached force so long runs stay allocation-free; the constrained
/// latent solution at the current position is exposed through [`latent`].
///
/// [`latent`]: ExactIntegrator::latent
pub struct ExactIntegrator<'m, M: Model + ?Sized> {
    model: &'m M,
    steps_taken: usize,
    a: Vec<f64>,
    latent: Vec<f64>,
    da: Vec<f64>,
    db: Vec<f64>,
    force: Vec<f64>,
}

impl<'m, M: Model + ?Sized> ExactIntegrator<'m, M> {
    pub fn new(model: &'m M, state: &PhaseState) -> Result<Self> {
        let d = model.atomic_dim();
        let dp = model.latent_dim();
        if state.r.len() != d || state.p.len() != d {
            return Err(Error::DimensionMismatch {
                what: "phase state",
                expected: d,
                actual: state.r.len().max(state.p.len()),
            });
        }
        let mut s = Self {
            model,
            steps_taken: 0,
            a: vec![0.0; dp * dp],
            latent: vec![0.0; dp],
            da: vec![0.0; dp * dp],
            db: vec![0.0; dp],
            force: vec![0.0; d],
        };
        s.refresh_force(&state.r)?;
        Ok(s)
    }

    /// Constrained solution `x_*(r)` at the position of the last force
    /// evaluation.
    pub fn latent(&self) -> &[f64] {
        &self.latent
    }

    /// Solves the constraint at `r` and rebuilds the cached force.
    fn refresh_force(&mut self, r: &[f64]) -> Result<()> {
        let dp = self.model.latent_dim();
        self.model.coupling_matrix_into(r, &mut self.a);
        self.model.coupling_vector_into(r, &mut self.latent);
        cholesky_in_place(&mut self.a, dp)?;
        chol_solve_in_place(&self.a, dp, &mut self.latent);
        coupled_force_raw(self.model, r, &self.latent, &mut self.da, &mut self.db, &mut self.force);
        Ok(())
    }

    /// One kick–drift–kick step. The cached force must correspond to
    /// `state.r`, which holds by construction for states advanced solely by
    /// this integrator. On error the state is unspecified and should be
    /// discarded.
    pub fn step(&mut self, state: &mut PhaseState, dt: f64) -> Result<()> {
        self.steps_taken += 1;
        let half = 0.5 * dt;
        for (pi, fi) in state.p.iter_mut().zip(&self.force) {
            *pi += half * fi;
        }
        for (ri, pi) in state.r.iter_mut().zip(&state.p) {
            *ri += dt * pi;
        }
        if !all_finite(&state.r) {
            return Err(Error::BlowUp {
                step: self.steps_taken,
                t: state.t + dt,
            });
        }
        self.refresh_force(&state.r)?;
        for (pi, fi) in state.p.iter_mut().zip(&self.force) {
            *pi += half * fi;
        }
        if !all_finite(&state.p) {
            return Err(Error::BlowUp {
                step: self.steps_taken,
                t: state.t + dt,
            });
        }
        state.t += dt;
        Ok(())
    }
}

/// Streaming stepper for the extended dynamics; see [`ExactIntegrator`] for
/// the caching contract.
pub struct XlmdIntegrator<'m, M: Model + ?Sized> {
    model: &'m M,
    eps: f64,
    steps_taken: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    da: Vec<f64>,
    db: Vec<f64>,
    force: Vec<f64>,
    accel_x: Vec<f64>,
}

impl<'m, M: Model + ?Sized> XlmdIntegrator<'m, M> {
    pub fn new(model: &'m M, state: &ExtendedPhaseState, eps: f64) -> Result<Self> {
        let d = model.atomic_dim();
        let dp = model.latent_dim();
        if state.r.len() != d || state.p.len() != d {
            return Err(Error::DimensionMismatch {
                what: "extended state (atomic part)",
                expected: d,
                actual: state.r.len().max(state.p.len()),
            });
        }
        if state.x.len() != dp || state.v.len() != dp {
            return Err(Error::DimensionMismatch {
                what: "extended state (latent part)",
                expected: dp,
                actual: state.x.len().max(state.v.len()),
            });
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "eps must be positive and finite, got {eps}"
            )));
        }
        let mut s = Self {
            model,
            eps,
            steps_taken: 0,
            a: vec![0.0; dp * dp],
            b: vec![0.0; dp],
            da: vec![0.0; dp * dp],
            db: vec![0.0; dp],
            force: vec![0.0; d],
            accel_x: vec![0.0; dp],
        };
        s.refresh_forces(&state.r, &state.x);
        Ok(s)
    }

    /// Rebuilds both cached accelerations at (r, x). No solve involved:
    /// the latent acceleration is `(b − A x)/eps`.
    fn refresh_forces(&mut self, r: &[f64], x: &[f64]) {
        let dp = self.model.latent_dim();
        self.model.coupling_matrix_into(r, &mut self.a);
        self.model.coupling_vector_into(r, &mut self.b);
        mat_vec_into(&self.a, dp, x, &mut self.accel_x);
        let inv_eps = 1.0 / self.eps;
        for (ai, bi) in self.accel_x.iter_mut().zip(&self.b) {
            *ai = (bi - *ai) * inv_eps;
        }
        coupled_force_raw(self.model, r, x, &mut self.da, &mut self.db, &mut self.force);
    }

    /// One kick–drift–kick step of the combined (r, x) system.
    pub fn step(&mut self, state: &mut ExtendedPhaseState, dt: f64) -> Result<()> {
        self.steps_taken += 1;
        let half = 0.5 * dt;
        for (pi, fi) in state.p.iter_mut().zip(&self.force) {
            *pi += half * fi;
        }
        for (vi, ai) in state.v.iter_mut().zip(&self.accel_x) {
            *vi += half * ai;
        }
        for (ri, pi) in state.r.iter_mut().zip(&state.p) {
            *ri += dt * pi;
        }
        for (xi, vi) in state.x.iter_mut().zip(&state.v) {
            *xi += dt * vi;
        }
        if !all_finite(&state.r) || !all_finite(&state.x) {
            return Err(Error::BlowUp {
                step: self.steps_taken,
                t: state.t + dt,
            });
        }
        self.refresh_forces(&state.r, &state.x);
        for (pi, fi) in state.p.iter_mut().zip(&self.force) {
            *pi += half * fi;
        }
        for (vi, ai) in state.v.iter_mut().zip(&self.accel_x) {
            *vi += half * ai;
        }
        if !all_finite(&state.p) || !all_finite(&state.v) {
            return Err(Error::BlowUp {
                step: self.steps_taken,
                t: state.t + dt,
            });
        }
        state.t += dt;
        Ok(())
    }
}

/// Single velocity-Verlet step of the exact dynamics. Negative `dt` is
/// legal and exactly reverses a forward step (up to rounding).
pub fn exact_md_step<M: Model + ?Sized>(
    model: &M,
    state: &PhaseState,
    dt: f64,
) -> Result<PhaseState> {
    let mut s = state.clone();
    let mut integ = ExactIntegrator::new(model, &s)?;
    integ.step(&mut s, dt)?;
    Ok(s)
}

/// Single velocity-Verlet step of the extended dynamics.
pub fn xlmd_step<M: Model + ?Sized>(
    model: &M,
    state: &ExtendedPhaseState,
    eps: f64,
    dt: f64,
) -> Result<ExtendedPhaseState> {
    let mut s = state.clone();
    let mut integ = XlmdIntegrator::new(model, &s, eps)?;
    integ.step(&mut s, dt)?;
    Ok(s)
}

/// Propagates the exact dynamics over `⌈t_final/dt⌉` steps. The observer
/// runs every step, including once for the initial state (step 0), so
/// single-pass consumers see the whole trajectory without any storage here.
/// Identical inputs produce bit-identical trajectories.
pub fn simulate_exact<M, F>(
    model: &M,
    initial: PhaseState,
    config: &SimConfig,
    mut observe: F,
) -> Result<PhaseState>
where
    M: Model + ?Sized,
    F: FnMut(usize, &PhaseState),
{
    config.validate()?;
    let n = config.num_steps();
    let mut state = initial;
    let mut integ = ExactIntegrator::new(model, &state)?;
    observe(0, &state);
    for step in 1..=n {
        integ.step(&mut state, config.dt)?;
        observe(step, &state);
    }
    Ok(state)
}

/// Propagates the extended dynamics. Rejects `dt` at or beyond the latent
/// stability limit `√(eps/λ_max(A(r₀)))`; use [`stability_report`] to also
/// surface the 10×-margin warning.
pub fn simulate_xlmd<M, F>(
    model: &M,
    initial: ExtendedPhaseState,
    config: &SimConfig,
    mut observe: F,
) -> Result<ExtendedPhaseState>
where
    M: Model + ?Sized,
    F: FnMut(usize, &ExtendedPhaseState),
{
    config.validate()?;
    enforce_stability(model, &initial.r, config.eps, config.dt)?;
    let n = config.num_steps();
    let mut state = initial;
    let mut integ = XlmdIntegrator::new(model, &state, config.eps)?;
    observe(0, &state);
    for step in 1..=n {
        integ.step(&mut state, config.dt)?;
        observe(step, &state);
    }
    Ok(state)
}

/// Header of the trajectory CSV: `t,r_1..r_d,p_1..p_d` plus
/// `x_1..x_d',v_1..v_d'` when a latent dimension is given.
pub fn trajectory_csv_header(atomic_dim: usize, latent_dim: Option<usize>) -> String {
    let mut cols = vec!["t".to_string()];
    for i in 1..=atomic_dim {
        cols.push(format!("r_{i}"));
    }
    for i in 1..=atomic_dim {
        cols.push(format!("p_{i}"));
    }
    if let Some(dp) = latent_dim {
        for i in 1..=dp {
            cols.push(format!("x_{i}"));
        }
        for i in 1..=dp {
            cols.push(format!("v_{i}"));
        }
    }
    cols.join(",")
}

/// One data row for an exact-dynamics state, 17 significant digits.
pub fn phase_csv_row(state: &PhaseState) -> String {
    let mut cols = vec![sig17(state.t)];
    cols.extend(state.r.iter().map(|v| sig17(*v)));
    cols.extend(state.p.iter().map(|v| sig17(*v)));
    cols.join(",")
}

/// One data row for an extended state, 17 significant digits.
pub fn extended_csv_row(state: &ExtendedPhaseState) -> String {
    let mut cols = vec![sig17(state.t)];
    cols.extend(state.r.iter().map(|v| sig17(*v)));
    cols.extend(state.p.iter().map(|v| sig17(*v)));
    cols.extend(state.x.iter().map(|v| sig17(*v)));
    cols.extend(state.v.iter().map(|v| sig17(*v)));
    cols.join(",")
}
