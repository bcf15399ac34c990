//! Measurement layer: sup-norm trajectory errors between the exact and
//! extended dynamics, convergence-order fitting across a grid of fictitious
//! masses, the residual variable `y = x − A(r)⁻¹b(r)` and its scaling,
//! discrete energy drift, and the leading-order WKB-style prediction for the
//! scalar homogeneous fast system `eps·ÿ = −A(r(τ))·y`.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::dynamics::{
    enforce_stability, make_initial_condition, ExactIntegrator, ExtendedPhaseState, IcKind,
    PhaseState, SimConfig, XlmdIntegrator,
};
use crate::error::{Error, Result};
use crate::fmt::sig17;
use crate::linalg::{chol_solve_in_place, cholesky_in_place};
use crate::model::{constraint_solve, exact_energy, extended_energy, optimal_velocity, Model};

/// Sup-over-time Euclidean-norm errors between co-simulated exact and
/// extended trajectories at one fictitious mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRecord {
    pub eps: f64,
    pub err_r: f64,
    pub err_p: f64,
    pub err_x: f64,
}

/// A grid point whose co-simulation left the finite range before reaching
/// the final time. Always reported, never silently dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailedRecord {
    pub eps: f64,
    /// Step at which the blow-up was detected.
    pub step: usize,
    /// Simulated time of that step.
    pub t: f64,
}

/// Outcome of a log–log order fit for one error component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderFit {
    /// Least-squares slope of log(err) against log(eps).
    Fitted(f64),
    /// Every error in the window is exactly zero; the component is
    /// identically converged and a slope is undefined-in-principle.
    ExactlyZero,
    /// Fewer than three usable points, or a zero mixed in with nonzero
    /// errors; no slope can be fitted.
    Insufficient,
}

impl OrderFit {
    /// Whether the component shrinks with eps: a fitted slope of at least
    /// 0.25, or identically zero error.
    pub fn is_convergent(&self) -> bool {
        match self {
            OrderFit::Fitted(slope) => *slope >= 0.25,
            OrderFit::ExactlyZero => true,
            OrderFit::Insufficient => false,
        }
    }

    /// Fitted slope, when one exists.
    pub fn slope(&self) -> Option<f64> {
        match self {
            OrderFit::Fitted(slope) => Some(*slope),
            _ => None,
        }
    }
}

/// Full outcome of a convergence study over an eps grid.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    /// Successful grid points, sorted by eps descending.
    pub records: Vec<ErrorRecord>,
    /// Blown-up grid points, sorted by eps descending; excluded from the
    /// fits below.
    pub failures: Vec<FailedRecord>,
    pub order_r: OrderFit,
    pub order_p: OrderFit,
    pub order_x: OrderFit,
    /// (largest, smallest) eps actually entering the fits; `None` when no
    /// fit was possible.
    pub fit_window: Option<(f64, f64)>,
}

/// Running sup of componentwise Euclidean-norm differences between two
/// trajectories sampled in lockstep. Feeding states whose times disagree by
/// more than the tolerance is an error: it means the co-simulation desynced.
#[derive(Debug, Clone)]
pub struct SupErrorAccumulator {
    time_tol: f64,
    err_r: f64,
    err_p: f64,
    err_x: f64,
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl SupErrorAccumulator {
    /// `time_tol` is typically half the shared step size.
    pub fn new(time_tol: f64) -> Self {
        Self {
            time_tol,
            err_r: 0.0,
            err_p: 0.0,
            err_x: 0.0,
        }
    }

    fn check_time(&self, t_a: f64, t_b: f64) -> Result<()> {
        if (t_a - t_b).abs() > self.time_tol {
            return Err(Error::TimeMismatch {
                t_a,
                t_b,
                tol: self.time_tol,
            });
        }
        Ok(())
    }

    /// Accumulates all three components from two extended states.
    pub fn accumulate(&mut self, a: &ExtendedPhaseState, b: &ExtendedPhaseState) -> Result<()> {
        self.check_time(a.t, b.t)?;
        self.err_r = self.err_r.max(l2_diff(&a.r, &b.r));
        self.err_p = self.err_p.max(l2_diff(&a.p, &b.p));
        self.err_x = self.err_x.max(l2_diff(&a.x, &b.x));
        Ok(())
    }

    /// Accumulates r and p only.
    pub fn accumulate_phase(&mut self, a: &PhaseState, b: &PhaseState) -> Result<()> {
        self.check_time(a.t, b.t)?;
        self.err_r = self.err_r.max(l2_diff(&a.r, &b.r));
        self.err_p = self.err_p.max(l2_diff(&a.p, &b.p));
        Ok(())
    }

    /// Accumulates against an exact-dynamics state whose latent side is the
    /// constrained solution `x_star` at `exact.r`.
    pub fn accumulate_with_latent(
        &mut self,
        exact: &PhaseState,
        x_star: &[f64],
        extended: &ExtendedPhaseState,
    ) -> Result<()> {
        self.check_time(exact.t, extended.t)?;
        self.err_r = self.err_r.max(l2_diff(&exact.r, &extended.r));
        self.err_p = self.err_p.max(l2_diff(&exact.p, &extended.p));
        self.err_x = self.err_x.max(l2_diff(x_star, &extended.x));
        Ok(())
    }

    /// Snapshot of the accumulated sup errors, tagged with the eps they
    /// belong to.
    pub fn record(&self, eps: f64) -> ErrorRecord {
        ErrorRecord {
            eps,
            err_r: self.err_r,
            err_p: self.err_p,
            err_x: self.err_x,
        }
    }
}

/// Least-squares slope of log(err) against log(eps). Exact (to rounding) on
/// power-law data `err = C·eps^q`.
pub fn estimate_order(eps: &[f64], err: &[f64]) -> Result<f64> {
    if eps.len() != err.len() {
        return Err(Error::DimensionMismatch {
            what: "order-fit samples",
            expected: eps.len(),
            actual: err.len(),
        });
    }
    if eps.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "order fit needs at least 3 points, got {}",
            eps.len()
        )));
    }
    for (&e, &f) in eps.iter().zip(err) {
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::DegenerateInput(format!(
                "eps values must be positive and finite, got {e}"
            )));
        }
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::DegenerateInput(format!(
                "errors must be positive and finite for a log fit, got {f}"
            )));
        }
    }
    let lx: Vec<f64> = eps.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 {
        return Err(Error::DegenerateInput(
            "all eps values are equal; slope is undefined".into(),
        ));
    }
    Ok(sxy / sxx)
}

/// Co-simulates the exact and extended dynamics in lockstep (shared initial
/// atomic data, shared dt) and returns the sup-over-time errors. The latent
/// error compares the extended `x` against the constrained solution at the
/// exact trajectory's position, refreshed every step.
pub fn measure_sup_errors<M: Model + ?Sized>(
    model: &M,
    eps: f64,
    ic_kind: IcKind,
    dt: f64,
    t_final: f64,
) -> Result<ErrorRecord> {
    let mut config = SimConfig::new(eps, dt, t_final);
    config.ic_kind = ic_kind;
    config.validate()?;
    let r0 = model.initial_position();
    let p0 = model.initial_velocity();
    enforce_stability(model, &r0, eps, dt)?;
    let mut extended = make_initial_condition(model, ic_kind, &r0, &p0, None)?;
    let mut exact = PhaseState::new(r0, p0);
    let mut exact_integ = ExactIntegrator::new(model, &exact)?;
    let mut xlmd_integ = XlmdIntegrator::new(model, &extended, eps)?;
    let mut acc = SupErrorAccumulator::new(0.5 * dt);
    acc.accumulate_with_latent(&exact, exact_integ.latent(), &extended)?;
    for _ in 1..=config.num_steps() {
        exact_integ.step(&mut exact, dt)?;
        xlmd_integ.step(&mut extended, dt)?;
        acc.accumulate_with_latent(&exact, exact_integ.latent(), &extended)?;
    }
    Ok(acc.record(eps))
}

/// The default study grid: nine fictitious masses, geometric from 1e-2 down
/// to 1e-4 (quarter-decade spacing).
pub fn default_eps_grid() -> Vec<f64> {
    (0..9).map(|i| 10f64.powf(-2.0 - 0.25 * i as f64)).collect()
}

fn fit_component(records: &[ErrorRecord], pick: fn(&ErrorRecord) -> f64) -> OrderFit {
    if records.len() < 3 {
        return OrderFit::Insufficient;
    }
    let errs: Vec<f64> = records.iter().map(pick).collect();
    if errs.iter().all(|&e| e == 0.0) {
        return OrderFit::ExactlyZero;
    }
    if errs.iter().any(|&e| e <= 0.0) {
        return OrderFit::Insufficient;
    }
    let eps: Vec<f64> = records.iter().map(|r| r.eps).collect();
    match estimate_order(&eps, &errs) {
        Ok(slope) => OrderFit::Fitted(slope),
        Err(_) => OrderFit::Insufficient,
    }
}

/// Runs [`measure_sup_errors`] over an eps grid (distinct points may run
/// concurrently on up to `workers` threads) and fits per-component orders
/// over all successful points. Blow-ups become [`FailedRecord`]s; any other
/// failure aborts the study. Results are assembled in eps order, so the
/// report is independent of scheduling; `workers` is clamped to at least 1
/// and never affects any numerical value.
pub fn convergence_study<M: Model + ?Sized>(
    model: &M,
    eps_grid: &[f64],
    ic_kind: IcKind,
    dt: f64,
    t_final: f64,
    workers: usize,
) -> Result<ConvergenceReport> {
    let mut distinct: Vec<u64> = eps_grid.iter().map(|e| e.to_bits()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "eps grid needs at least 3 distinct values, got {}",
            distinct.len()
        )));
    }
    if eps_grid.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidConfig(
            "eps grid values must be positive and finite".into(),
        ));
    }
    let workers = workers.max(1).min(eps_grid.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("could not build worker pool: {e}")))?;
    let outcomes: Vec<Result<ErrorRecord>> = pool.install(|| {
        eps_grid
            .par_iter()
            .map(|&eps| measure_sup_errors(model, eps, ic_kind, dt, t_final))
            .collect()
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (&eps, outcome) in eps_grid.iter().zip(outcomes) {
        match outcome {
            Ok(rec) => records.push(rec),
            Err(Error::BlowUp { step, t }) => failures.push(FailedRecord { eps, step, t }),
            Err(other) => return Err(other),
        }
    }
    records.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    failures.sort_by(|a, b| b.eps.total_cmp(&a.eps));

    let order_r = fit_component(&records, |r| r.err_r);
    let order_p = fit_component(&records, |r| r.err_p);
    let order_x = fit_component(&records, |r| r.err_x);
    let fit_window = if records.len() >= 3 {
        Some((records[0].eps, records[records.len() - 1].eps))
    } else {
        None
    };
    Ok(ConvergenceReport {
        records,
        failures,
        order_r,
        order_p,
        order_x,
        fit_window,
    })
}

/// Deviation of an extended state from the constraint manifold: returns
/// `(y, ẏ)` with `y = x − A(r)⁻¹b(r)` and `ẏ = v − d/dt[A(r)⁻¹b(r)]`, the
/// latter evaluated analytically from the model derivatives and `p` (no
/// trajectory differencing).
pub fn residual_at<M: Model + ?Sized>(
    model: &M,
    state: &ExtendedPhaseState,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let x_star = constraint_solve(model, &state.r)?;
    let v_star = optimal_velocity(model, &state.r, &state.p)?;
    let y = state
        .x
        .iter()
        .zip(&x_star)
        .map(|(a, b)| a - b)
        .collect();
    let y_dot = state
        .v
        .iter()
        .zip(&v_star)
        .map(|(a, b)| a - b)
        .collect();
    Ok((y, y_dot))
}

/// Propagates the extended dynamics from the model's reference initial data
/// and returns `sup_t ‖x(t) − A(r(t))⁻¹b(r(t))‖₂` over the discrete
/// trajectory.
pub fn residual_sup<M: Model + ?Sized>(
    model: &M,
    eps: f64,
    ic_kind: IcKind,
    dt: f64,
    t_final: f64,
) -> Result<f64> {
    let mut config = SimConfig::new(eps, dt, t_final);
    config.ic_kind = ic_kind;
    config.validate()?;
    let r0 = model.initial_position();
    let p0 = model.initial_velocity();
    enforce_stability(model, &r0, eps, dt)?;
    let mut state = make_initial_condition(model, ic_kind, &r0, &p0, None)?;
    let mut integ = XlmdIntegrator::new(model, &state, eps)?;

    let dp = model.latent_dim();
    let mut a = vec![0.0; dp * dp];
    let mut x_star = vec![0.0; dp];
    let mut sup = 0.0_f64;
    let measure = |state: &ExtendedPhaseState,
                       a: &mut Vec<f64>,
                       x_star: &mut Vec<f64>|
     -> Result<f64> {
        model.coupling_matrix_into(&state.r, a);
        model.coupling_vector_into(&state.r, x_star);
        cholesky_in_place(a, dp)?;
        chol_solve_in_place(a, dp, x_star);
        Ok(l2_diff(&state.x, x_star))
    };
    sup = sup.max(measure(&state, &mut a, &mut x_star)?);
    for _ in 1..=config.num_steps() {
        integ.step(&mut state, dt)?;
        sup = sup.max(measure(&state, &mut a, &mut x_star)?);
    }
    Ok(sup)
}

/// Which dynamics an energy-drift measurement propagates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegratorKind {
    Exact,
    Xlmd,
}

/// Propagates from the model's reference initial data and returns
/// `max_t |E(t) − E(0)|` over the discrete trajectory, using the conserved
/// energy matching the integrator: the reduced energy for the exact
/// dynamics and the extended energy for XLMD.
pub fn energy_drift<M: Model + ?Sized>(
    model: &M,
    config: &SimConfig,
    kind: IntegratorKind,
) -> Result<f64> {
    config.validate()?;
    let r0 = model.initial_position();
    let p0 = model.initial_velocity();
    let mut drift = 0.0_f64;
    match kind {
        IntegratorKind::Exact => {
            let mut state = PhaseState::new(r0, p0);
            let mut integ = ExactIntegrator::new(model, &state)?;
            let e0 = exact_energy(model, &state.r, &state.p)?;
            for _ in 1..=config.num_steps() {
                integ.step(&mut state, config.dt)?;
                let e = exact_energy(model, &state.r, &state.p)?;
                drift = drift.max((e - e0).abs());
            }
        }
        IntegratorKind::Xlmd => {
            enforce_stability(model, &r0, config.eps, config.dt)?;
            let mut state =
                make_initial_condition(model, config.ic_kind, &r0, &p0, config.incompatible_offset.as_deref())?;
            let mut integ = XlmdIntegrator::new(model, &state, config.eps)?;
            let e0 = extended_energy(model, config.eps, &state.r, &state.p, &state.x, &state.v)?;
            for _ in 1..=config.num_steps() {
                integ.step(&mut state, config.dt)?;
                let e =
                    extended_energy(model, config.eps, &state.r, &state.p, &state.x, &state.v)?;
                drift = drift.max((e - e0).abs());
            }
        }
    }
    Ok(drift)
}

/// Dense per-step record of atomic positions, the substrate for evaluating
/// time-dependent coupling coefficients along a trajectory.
#[derive(Debug, Clone)]
pub struct PositionTrajectory {
    dt: f64,
    dim: usize,
    samples: Vec<f64>,
}

impl PositionTrajectory {
    /// Wraps an existing flattened sample array (one `dim`-sized block per
    /// step, step spacing `dt`).
    pub fn from_samples(dt: f64, dim: usize, samples: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "trajectory dt must be positive and finite, got {dt}"
            )));
        }
        if dim == 0 || samples.is_empty() || !samples.len().is_multiple_of(dim) {
            return Err(Error::DegenerateInput(format!(
                "trajectory samples ({}) must be a positive multiple of dim ({dim})",
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(
                "trajectory samples must be finite".into(),
            ));
        }
        Ok(Self { dt, dim, samples })
    }

    /// Propagates the extended dynamics and records `r` at every step
    /// (including the initial one).
    pub fn record_xlmd<M: Model + ?Sized>(
        model: &M,
        initial: ExtendedPhaseState,
        config: &SimConfig,
    ) -> Result<Self> {
        let mut samples = Vec::with_capacity((config.num_steps() + 1) * model.atomic_dim());
        crate::dynamics::simulate_xlmd(model, initial, config, |_, s| {
            samples.extend_from_slice(&s.r);
        })?;
        Self::from_samples(config.dt, model.atomic_dim(), samples)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored samples (steps + 1).
    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time of the last sample.
    pub fn t_end(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }
}

/// Numeric solution of the scalar homogeneous fast system against its
/// leading-order oscillatory prediction.
#[derive(Debug, Clone, Copy)]
pub struct FlowMapResult {
    /// Start and end times, snapped to the trajectory's sample grid.
    pub s: f64,
    pub t: f64,
    pub xi0: f64,
    /// `(y(t), ẏ(t))` from direct velocity-Verlet integration.
    pub numeric: (f64, f64),
    /// `(√eps·k(t)^{-1/2}k(s)^{-1/2}·sin(Δκ/√eps)·ξ₀,
    ///   k(t)^{1/2}k(s)^{-1/2}·cos(Δκ/√eps)·ξ₀)` with `k = √A(r(τ))` and
    /// `Δκ = ∫ₛᵗ k` by the trapezoid rule on the sample grid. Valid for a
    /// zero initial displacement (η₀ = 0).
    pub predicted: (f64, f64),
    /// `numeric − predicted`, componentwise.
    pub residual: (f64, f64),
}

/// Integrates the scalar fast system `eps·ÿ = −A(r(τ))·y` from
/// `(y(s), ẏ(s)) = (η₀, ξ₀)` along a stored position trajectory, with the
/// coupling coefficient evaluated at the trajectory's own samples and step
/// size. `s` and `t` snap to the nearest sample; the leading-order
/// prediction (and hence the residual) is meaningful for `η₀ = 0`.
pub fn homogeneous_flow_map<M: Model + ?Sized>(
    model: &M,
    trajectory: &PositionTrajectory,
    eps: f64,
    s: f64,
    t: f64,
    eta0: f64,
    xi0: f64,
) -> Result<FlowMapResult> {
    if model.latent_dim() != 1 {
        return Err(Error::DimensionMismatch {
            what: "flow-map latent dimension",
            expected: 1,
            actual: model.latent_dim(),
        });
    }
    if model.atomic_dim() != trajectory.dim() {
        return Err(Error::DimensionMismatch {
            what: "flow-map trajectory dimension",
            expected: model.atomic_dim(),
            actual: trajectory.dim(),
        });
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "eps must be positive and finite, got {eps}"
        )));
    }
    let dt = trajectory.dt();
    let t_end = trajectory.t_end();
    if !s.is_finite() || !t.is_finite() || s < -0.5 * dt || t > t_end + 0.5 * dt || s > t {
        return Err(Error::OutOfRange { s, t, t_end });
    }
    let last = trajectory.len() - 1;
    let i_s = ((s / dt).round() as usize).min(last);
    let i_t = ((t / dt).round() as usize).min(last).max(i_s);

    // Coupling coefficient along the window; a single positive entry per
    // sample since the latent side is scalar.
    let mut coeff = Vec::with_capacity(i_t - i_s + 1);
    let mut buf = [0.0_f64];
    for i in i_s..=i_t {
        model.coupling_matrix_into(trajectory.position(i), &mut buf);
        if !(buf[0] > 0.0) || !buf[0].is_finite() {
            return Err(Error::NotPositiveDefinite { index: 0 });
        }
        coeff.push(buf[0]);
    }

    // Kick–drift–kick on y with the coefficient refreshed at each new time.
    let inv_eps = 1.0 / eps;
    let mut y = eta0;
    let mut v = xi0;
    let mut acc = -coeff[0] * y * inv_eps;
    for w in coeff.windows(2) {
        v += 0.5 * dt * acc;
        y += dt * v;
        acc = -w[1] * y * inv_eps;
        v += 0.5 * dt * acc;
    }
    if !y.is_finite() || !v.is_finite() {
        return Err(Error::BlowUp {
            step: i_t - i_s,
            t: i_t as f64 * dt,
        });
    }

    let k_s = coeff[0].sqrt();
    let k_t = coeff[coeff.len() - 1].sqrt();
    let mut kappa = 0.0;
    for w in coeff.windows(2) {
        kappa += 0.5 * dt * (w[0].sqrt() + w[1].sqrt());
    }
    let phase = kappa / eps.sqrt();
    let predicted = (
        eps.sqrt() / (k_t.sqrt() * k_s.sqrt()) * phase.sin() * xi0,
        (k_t.sqrt() / k_s.sqrt()) * phase.cos() * xi0,
    );
    let numeric = (y, v);
    Ok(FlowMapResult {
        s: i_s as f64 * dt,
        t: i_t as f64 * dt,
        xi0,
        numeric,
        predicted,
        residual: (numeric.0 - predicted.0, numeric.1 - predicted.1),
    })
}

fn order_fit_label(fit: OrderFit) -> String {
    match fit {
        OrderFit::Fitted(slope) => sig17(slope),
        OrderFit::ExactlyZero => "exactly-zero".to_string(),
        OrderFit::Insufficient => "insufficient".to_string(),
    }
}

/// Writes the study CSV: `epsilon,err_r,err_p,err_x,status` rows sorted by
/// eps descending (failures carry `nan` errors and status `failed`),
/// followed by `# order_*=` and `# fit_window=` footer comments.
pub fn write_convergence_csv<W: Write>(out: &mut W, report: &ConvergenceReport) -> io::Result<()> {
    writeln!(out, "epsilon,err_r,err_p,err_x,status")?;
    let mut ri = 0;
    let mut fi = 0;
    while ri < report.records.len() || fi < report.failures.len() {
        let take_record = match (report.records.get(ri), report.failures.get(fi)) {
            (Some(r), Some(f)) => r.eps >= f.eps,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if take_record {
            let r = &report.records[ri];
            writeln!(
                out,
                "{},{},{},{},ok",
                sig17(r.eps),
                sig17(r.err_r),
                sig17(r.err_p),
                sig17(r.err_x)
            )?;
            ri += 1;
        } else {
            let f = &report.failures[fi];
            writeln!(out, "{},nan,nan,nan,failed", sig17(f.eps))?;
            fi += 1;
        }
    }
    writeln!(out, "# order_r={}", order_fit_label(report.order_r))?;
    writeln!(out, "# order_p={}", order_fit_label(report.order_p))?;
    writeln!(out, "# order_x={}", order_fit_label(report.order_x))?;
    match report.fit_window {
        Some((hi, lo)) => writeln!(out, "# fit_window={}..{}", sig17(hi), sig17(lo))?,
        None => writeln!(out, "# fit_window=none")?,
    }
    Ok(())
}

/// Writes the plot-ready companion file: `epsilon,err_r,err_p,err_x` for
/// successful points only, in ascending eps.
pub fn write_plot_data<W: Write>(out: &mut W, report: &ConvergenceReport) -> io::Result<()> {
    writeln!(out, "epsilon,err_r,err_p,err_x")?;
    for r in report.records.iter().rev() {
        writeln!(
            out,
            "{},{},{},{}",
            sig17(r.eps),
            sig17(r.err_r),
            sig17(r.err_p),
            sig17(r.err_x)
        )?;
    }
    Ok(())
}
