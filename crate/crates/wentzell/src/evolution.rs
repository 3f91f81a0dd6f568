//! Time evolution of the coupled bulk/boundary flow
//!
//! ```text
//!     dX/dt = κ A(t) X + F(t, X),      X = (u, v) ∈ U,
//! ```
//!
//! by midpoint-frozen Crank–Nicolson steps
//!
//! ```text
//!     (W + κ(dt/2)K) X⁺ = (W − κ(dt/2)K) X + dt·W·F̄,
//! ```
//!
//! with K and W assembled at t + dt/2 and F̄ the trapezoid average of the
//! forcing samples. The reaction term enters the flow unscaled (κ multiplies
//! only the generator). The homogeneous step is a U-norm contraction for
//! κ = 1 and a U-norm isometry (up to solver residual) for κ = i, which is
//! what makes the certified fixed-point machinery below work:
//!
//! * [`existence_time`] returns the window length τ = min{T, 1/(2 m₀ L)}
//!   from a Lipschitz bound L of the reaction term on the invariant ball;
//! * [`picard_solve`] iterates X^{k+1} = (linear flow) + (discrete Duhamel
//!   of F(·, X^k)) on one window, certifying that successive differences
//!   contract and erroring out if they expand;
//! * [`maximal_solve`] chains windows until the horizon, a blow-up
//!   threshold crossing (reported as a bracket [t_lower, t_upper]), or
//!   window collapse;
//! * [`PropagatorOracle`] is an independent dense spectral solver
//!   U(t, s) = W^{-1/2} Q e^{κΛ(t−s)} Qᵀ W^{1/2} used to cross-check the
//!   stepper on small grids.

use crate::elliptic::{ShiftedSolver, SolveError, SolveStats, DENSE_LIMIT};
use crate::geometry::{weights_at, GeometryError, Grid, Metric, QuadratureWeights};
use crate::nonlinearity::{Nonlinearity, NonlinearityError};
use crate::operators::{assemble_wentzell_operator, OperatorError, WentzellOperator};
use crate::state::{Kappa, StateVector};
use crate::tolerances;
use crate::C64;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Hard cap on the number of unknowns the dense spectral oracle accepts.
pub const ORACLE_MAX_UNKNOWNS: usize = 2048;

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Nonlinear(#[from] NonlinearityError),
    #[error("invalid time step {0}")]
    InvalidStep(f64),
    #[error("invalid evolution configuration: {0}")]
    InvalidConfig(String),
    #[error("fixed-point iteration hit the cap of {max_iter} sweeps on [{t0:.6}, {t1:.6}]: difference {diff:.3e}, target {target:.3e}")]
    IterationCap { max_iter: usize, t0: f64, t1: f64, diff: f64, target: f64 },
    #[error("fixed-point iteration expanded on [{t0:.6}, {t1:.6}]: ratio {ratio:.3} at difference {diff:.3e}")]
    NoContraction { ratio: f64, diff: f64, t0: f64, t1: f64 },
    #[error("spectral oracle supports at most {limit} unknowns, got {got}")]
    OracleTooLarge { limit: usize, got: usize },
    #[error("time grids do not align: {0}")]
    Misaligned(String),
    #[error("trajectories cannot be compared on [0, {t_star}]: {reason}")]
    IncomparableInterval { t_star: f64, reason: String },
}

/// Parameters of the nonlinear evolution loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    /// Target step size; windows shorter than this take a single step.
    pub dt: f64,
    /// Time horizon of the run.
    #[serde(alias = "T")]
    pub t_final: f64,
    /// Absolute fixed-point stopping tolerance on the sup-difference of
    /// successive iterates (a small multiple of machine epsilon times the
    /// iterate scale acts as a roundoff floor).
    pub picard_tol: f64,
    /// Sweep cap per window before the iteration reports failure.
    pub picard_max_iter: usize,
    /// Radius of the initial-data ball the first certificate is issued for;
    /// 0 (the default) derives the radius from the initial norm. The initial
    /// norm must not exceed a positive `rho`.
    pub rho: f64,
    /// Bound on the linear evolution family norm; the Crank–Nicolson flow is
    /// contractive/unitary so 1 is exact, larger values only shorten windows.
    #[serde(alias = "M0")]
    pub m0: f64,
    /// Instantaneous U-norm at which the run is declared blown up. Must
    /// exceed the initial norm.
    pub blowup_threshold: f64,
    /// Declare stagnation when the certified window shrinks below this.
    pub dt_min: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            dt: 1e-2,
            t_final: 1.0,
            picard_tol: tolerances::PICARD_TOL_DEFAULT,
            picard_max_iter: 60,
            rho: 0.0,
            m0: 1.0,
            blowup_threshold: 1e6,
            dt_min: 1e-12,
        }
    }
}

impl EvolveConfig {
    /// Range and finiteness checks on every field; the solve entry points
    /// run this themselves, it is public so configuration loading can fail
    /// fast before any assembly work.
    pub fn validate(&self) -> Result<(), EvolutionError> {
        validate_config(self)
    }
}

fn validate_config(cfg: &EvolveConfig) -> Result<(), EvolutionError> {
    let bad = |what: &str, v: f64| {
        Err(EvolutionError::InvalidConfig(format!("{what} must be positive and finite, got {v}")))
    };
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return bad("dt", cfg.dt);
    }
    if !(cfg.dt_min > 0.0 && cfg.dt_min.is_finite()) {
        return bad("dt_min", cfg.dt_min);
    }
    if !(cfg.picard_tol > 0.0 && cfg.picard_tol.is_finite()) {
        return bad("picard_tol", cfg.picard_tol);
    }
    if !(cfg.blowup_threshold > 0.0) {
        return bad("blowup_threshold", cfg.blowup_threshold);
    }
    if cfg.picard_max_iter == 0 {
        return Err(EvolutionError::InvalidConfig("picard_max_iter must be at least 1".into()));
    }
    if !(cfg.rho >= 0.0 && cfg.rho.is_finite()) {
        return Err(EvolutionError::InvalidConfig(format!(
            "rho must be a finite radius >= 0 (0 derives it from the data), got {}",
            cfg.rho
        )));
    }
    if !(cfg.m0 >= 1.0 && cfg.m0.is_finite()) {
        return Err(EvolutionError::InvalidConfig(format!(
            "m0 must be a finite bound >= 1 on the evolution family, got {}",
            cfg.m0
        )));
    }
    if !(cfg.t_final >= 0.0 && cfg.t_final.is_finite()) {
        return bad("t_final", cfg.t_final);
    }
    Ok(())
}

/// Terminal state of a computed trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum TrajectoryStatus {
    /// Reached the requested horizon.
    Completed,
    /// The instantaneous norm crossed the blow-up threshold inside
    /// [t_lower, t_upper] (window start and first crossing sample).
    BlewUp { t_lower: f64, t_upper: f64 },
    /// The run stopped early for the stated reason (e.g. the certified
    /// window length collapsed below dt_min without a threshold crossing).
    Failed { reason: String },
}

/// Per-window fixed-point bookkeeping, kept for certification.
#[derive(Clone, Debug, Serialize)]
pub struct WindowStats {
    pub t_start: f64,
    pub t_end: f64,
    pub steps: usize,
    /// Sweeps needed to converge on this window.
    pub iterations: usize,
    /// Observed successive sup-difference ratios above the noise floor.
    pub rates: Vec<f64>,
    /// A-priori contraction bound τ·m₀·L the rates are certified against.
    pub contraction_bound: f64,
    /// Radius ρ(m₀+1) + 2τm₀‖F(·,0)‖ of the invariant ball (window-start
    /// U-norm; the forcing term vanishes for the built-in reactions).
    pub ball_radius: f64,
    /// Largest sup_t U-norm over every iterate of the sweep.
    pub observed_max: f64,
    /// Lipschitz bound of the reaction term used for this window.
    pub lipschitz: f64,
}

/// A sampled solution path with the norms the file formats and certificates
/// consume. All vectors share one length; entry 0 is the initial state.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    /// U-norms in the fixed reference metric (weights at the initial time).
    pub norms_ref: Vec<f64>,
    /// U-norms in the instantaneous metric of each sample time.
    pub norms_inst: Vec<f64>,
    /// Graph seminorm ‖A(t)X‖_U at each sample.
    pub graph_norms: Vec<f64>,
    /// Fixed-point sweeps of the window that produced each sample (0 when
    /// the sample came from plain linear stepping).
    pub picard_iters: Vec<usize>,
    pub windows: Vec<WindowStats>,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    fn empty() -> Self {
        Trajectory {
            times: Vec::new(),
            states: Vec::new(),
            norms_ref: Vec::new(),
            norms_inst: Vec::new(),
            graph_norms: Vec::new(),
            picard_iters: Vec::new(),
            windows: Vec::new(),
            status: TrajectoryStatus::Completed,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&StateVector> {
        self.states.last()
    }

    pub fn final_time(&self) -> Option<f64> {
        self.times.last().copied()
    }
}

/// Crank–Nicolson stepper with cached midpoint factorizations. Static
/// metrics collapse all time keys, so a constant-step run factors exactly
/// once per step size.
pub struct Stepper {
    pub grid: Grid,
    pub metric: Metric,
    pub kappa: Kappa,
    dense_limit: usize,
    ops: HashMap<u64, WentzellOperator>,
    solvers: HashMap<(u64, u64), ShiftedSolver>,
}

impl Stepper {
    pub fn new(grid: &Grid, metric: &Metric, kappa: Kappa) -> Self {
        Self::with_dense_limit(grid, metric, kappa, DENSE_LIMIT)
    }

    /// As [`Stepper::new`] with an explicit dense/iterative crossover for
    /// the inner solvers.
    pub fn with_dense_limit(grid: &Grid, metric: &Metric, kappa: Kappa, dense_limit: usize) -> Self {
        Stepper {
            grid: *grid,
            metric: metric.clone(),
            kappa,
            dense_limit,
            ops: HashMap::new(),
            solvers: HashMap::new(),
        }
    }

    fn time_key(&self, t: f64) -> u64 {
        if self.metric.is_static() {
            0
        } else {
            t.to_bits()
        }
    }

    /// The generator assembled at time `t` (cached).
    pub fn op_at(&mut self, t: f64) -> Result<&WentzellOperator, EvolutionError> {
        let key = self.time_key(t);
        if !self.ops.contains_key(&key) {
            if self.ops.len() >= 8192 {
                self.ops.clear();
            }
            let op = assemble_wentzell_operator(t, &self.grid, &self.metric)?;
            self.ops.insert(key, op);
        }
        Ok(&self.ops[&key])
    }

    fn solver_at(&mut self, t_mid: f64, sigma: f64) -> Result<&ShiftedSolver, EvolutionError> {
        let key = (self.time_key(t_mid), sigma.to_bits());
        if !self.solvers.contains_key(&key) {
            if self.solvers.len() >= 4096 {
                self.solvers.clear();
            }
            let op = self.op_at(t_mid)?.clone();
            let solver = ShiftedSolver::with_dense_limit(&op, self.kappa, sigma, self.dense_limit)?;
            self.solvers.insert(key, solver);
        }
        Ok(&self.solvers[&key])
    }

    /// One Crank–Nicolson step from `t` to `t + dt`. `forcing`, when given,
    /// is the already-averaged inhomogeneity F̄ of the step (the trapezoid
    /// mean of the endpoint samples of F).
    pub fn step(
        &mut self,
        t: f64,
        dt: f64,
        x: &StateVector,
        forcing: Option<&StateVector>,
    ) -> Result<(StateVector, SolveStats), EvolutionError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(EvolutionError::InvalidStep(dt));
        }
        let sigma = 0.5 * dt;
        let kappa = self.kappa.as_complex();
        let grid = self.grid;
        let solver = self.solver_at(t + 0.5 * dt, sigma)?;
        let op = solver.operator();
        let n = op.n();
        let mut kx = vec![C64::ZERO; n];
        op.stiffness.matvec_complex(&x.data, &mut kx);
        let mut rhs = vec![C64::ZERO; n];
        for i in 0..n {
            let w = op.weights.combined[i];
            rhs[i] = w * x.data[i] - kappa * sigma * kx[i];
            if let Some(f) = forcing {
                rhs[i] += dt * w * f.data[i];
            }
        }
        let (sol, stats) = solver.solve(&rhs)?;
        Ok((StateVector { grid, data: sol }, stats))
    }
}

fn push_sample(
    traj: &mut Trajectory,
    stepper: &mut Stepper,
    t: f64,
    x: StateVector,
    w_ref: &QuadratureWeights,
    picard_iters: usize,
) -> Result<(), EvolutionError> {
    let op = stepper.op_at(t)?;
    let norm_inst = x.norm_u(&op.weights);
    let graph = op.graph_norm(&x);
    traj.times.push(t);
    traj.norms_ref.push(x.norm_u(w_ref));
    traj.norms_inst.push(norm_inst);
    traj.graph_norms.push(graph);
    traj.picard_iters.push(picard_iters);
    traj.states.push(x);
    Ok(())
}

fn evolve_linear_impl<F>(
    grid: &Grid,
    metric: &Metric,
    kappa: Kappa,
    x0: &StateVector,
    t_span: (f64, f64),
    dt_target: f64,
    mut forcing: Option<F>,
) -> Result<Trajectory, EvolutionError>
where
    F: FnMut(f64) -> StateVector,
{
    let (t0, t1) = t_span;
    if !(dt_target > 0.0 && dt_target.is_finite() && t1 > t0) {
        return Err(EvolutionError::InvalidStep(dt_target));
    }
    let span = t1 - t0;
    let steps = ((span / dt_target - 1e-9).ceil() as usize).max(1);
    let dt = span / steps as f64;
    let mut stepper = Stepper::new(grid, metric, kappa);
    let w_ref = weights_at(t0, grid, metric)?;
    let mut traj = Trajectory::empty();
    push_sample(&mut traj, &mut stepper, t0, x0.clone(), &w_ref, 0)?;
    let mut x = x0.clone();
    let mut f_prev = match forcing.as_mut() {
        Some(f) => Some(f(t0)),
        None => None,
    };
    for j in 0..steps {
        let tj = t0 + j as f64 * dt;
        let t_next = if j + 1 == steps { t1 } else { t0 + (j + 1) as f64 * dt };
        let favg = match (forcing.as_mut(), f_prev.take()) {
            (Some(f), Some(prev)) => {
                let f_next = f(t_next);
                let mut avg = prev;
                avg.axpy(C64::new(1.0, 0.0), &f_next);
                avg.scale(C64::new(0.5, 0.0));
                f_prev = Some(f_next);
                Some(avg)
            }
            _ => None,
        };
        match stepper.step(tj, t_next - tj, &x, favg.as_ref()) {
            Ok((next, _)) => x = next,
            Err(e) => {
                traj.status = TrajectoryStatus::Failed {
                    reason: format!("step at t = {tj:.6} failed: {e}"),
                };
                return Ok(traj);
            }
        }
        if !x.is_finite() {
            traj.status = TrajectoryStatus::Failed {
                reason: format!("state became non-finite at t = {t_next:.6}"),
            };
            return Ok(traj);
        }
        push_sample(&mut traj, &mut stepper, t_next, x.clone(), &w_ref, 0)?;
    }
    Ok(traj)
}

/// Homogeneous linear evolution dX/dt = κA(t)X on [t0, t1].
pub fn linear_evolve(
    grid: &Grid,
    metric: &Metric,
    kappa: Kappa,
    x0: &StateVector,
    t_span: (f64, f64),
    dt_target: f64,
) -> Result<Trajectory, EvolutionError> {
    evolve_linear_impl(grid, metric, kappa, x0, t_span, dt_target, None::<fn(f64) -> StateVector>)
}

/// Linear evolution with a prescribed state-independent forcing,
/// dX/dt = κA(t)X + G(t); used by forced-solution convergence studies.
pub fn forced_evolve(
    grid: &Grid,
    metric: &Metric,
    kappa: Kappa,
    x0: &StateVector,
    t_span: (f64, f64),
    dt_target: f64,
    forcing: impl FnMut(f64) -> StateVector,
) -> Result<Trajectory, EvolutionError> {
    evolve_linear_impl(grid, metric, kappa, x0, t_span, dt_target, Some(forcing))
}

/// The window formula τ = min{horizon, 1/(2 m₀ L)}. Guarantees the
/// fixed-point map has contraction factor τ·m₀·L ≤ 1/2; a vanishing
/// Lipschitz constant (linear flow) gets the full horizon.
pub fn contraction_window(lipschitz: f64, horizon: f64, m0: f64) -> f64 {
    if lipschitz * m0 <= 0.0 {
        horizon
    } else {
        horizon.min(1.0 / (2.0 * m0 * lipschitz))
    }
}

/// Certified local existence data for one fixed-point window.
#[derive(Clone, Copy, Debug)]
pub struct ExistenceWindow {
    /// Window length τ = min{horizon, 1/(2 m₀ L)}.
    pub tau: f64,
    /// Lipschitz bound of the reaction term on the invariant ball.
    pub lipschitz: f64,
    /// ‖F(t₀, 0)‖_U. Nonzero values act as a forcing term and enlarge the
    /// invariant ball by 2τm₀·‖F(·,0)‖ (all built-in terms vanish at 0).
    pub forcing_at_zero: f64,
}

/// Certified local existence window for the semilinear flow started from a
/// state of U-norm `rho` at time `t0`: τ = min{horizon, 1/(2 m₀ L)}, where L
/// bounds the Lipschitz constant of the reaction term on the sup-norm ball
/// enclosing the U-ball of radius ρ(m₀+1) (nodewise radius divided by
/// √(min weight)). When the term does not vanish at zero the ball is
/// inflated by the forcing contribution and L is recomputed once on the
/// larger ball (conservative: the final τ never exceeds the first pass).
pub fn existence_time(
    term: &Nonlinearity,
    grid: &Grid,
    weights: &QuadratureWeights,
    t0: f64,
    rho: f64,
    m0: f64,
    horizon: f64,
) -> Result<ExistenceWindow, EvolutionError> {
    let min_w_sqrt = weights.min_combined().sqrt();
    let node_radius = rho * (m0 + 1.0) / min_w_sqrt;
    let lip0 = term.lipschitz(node_radius).value;
    let tau0 = contraction_window(lip0, horizon, m0);
    let f0 = term.evaluate(t0, grid, &StateVector::zeros(grid))?.norm_u(weights);
    if f0 == 0.0 {
        return Ok(ExistenceWindow { tau: tau0, lipschitz: lip0, forcing_at_zero: 0.0 });
    }
    let inflated = node_radius + 2.0 * tau0 * m0 * f0 / min_w_sqrt;
    let lip = term.lipschitz(inflated).value.max(lip0);
    let tau = tau0.min(contraction_window(lip, horizon, m0));
    Ok(ExistenceWindow { tau, lipschitz: lip, forcing_at_zero: f0 })
}

/// Geometry of one fixed-point window, produced by the continuation loop
/// (or directly by tests) and consumed by [`picard_solve`].
#[derive(Clone, Copy, Debug)]
pub struct WindowPlan {
    pub t0: f64,
    pub tau: f64,
    pub steps: usize,
    /// τ·m₀·L for the certificate trail.
    pub contraction_bound: f64,
    /// ρ(m₀+1) in the window-start U-norm.
    pub ball_radius: f64,
    pub lipschitz: f64,
}

impl WindowPlan {
    /// Plans a window of length `tau` split into ceil(τ/dt_target) equal
    /// steps.
    pub fn new(
        t0: f64,
        tau: f64,
        dt_target: f64,
        contraction_bound: f64,
        ball_radius: f64,
        lipschitz: f64,
    ) -> Self {
        let steps = ((tau / dt_target).ceil() as usize).max(1);
        WindowPlan { t0, tau, steps, contraction_bound, ball_radius, lipschitz }
    }
}

/// Solves the semilinear flow on one window by the fixed-point iteration
///
/// ```text
///     X⁰ = linear flow of x0,
///     X^{k+1}_{j+1} = CN step of X^{k+1}_j with forcing (N_j + N_{j+1})/2,
///     N_j = N(t_j, X^k_j),
/// ```
///
/// i.e. iterate k+1 re-runs the inhomogeneous scheme with the reaction term
/// frozen along iterate k (the trapezoid average realizes the Duhamel
/// integral). Successive sup-differences must shrink; the iteration errors
/// out on expansion above the noise floor and converges when the difference
/// falls below the absolute tolerance (or the roundoff floor
/// 256·ε·(iterate scale), whichever is larger).
///
/// Returns the sample times, the converged states, and the window
/// statistics (observed contraction rates, ball radius and observed
/// maximum for the invariance certificate).
pub fn picard_solve(
    stepper: &mut Stepper,
    term: &Nonlinearity,
    x0: &StateVector,
    plan: &WindowPlan,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, Vec<StateVector>, WindowStats), EvolutionError> {
    if !(plan.tau > 0.0 && plan.tau.is_finite()) || plan.steps == 0 {
        return Err(EvolutionError::InvalidStep(plan.tau));
    }
    let grid = stepper.grid;
    let dt = plan.tau / plan.steps as f64;
    let t1 = plan.t0 + plan.tau;
    let mut times: Vec<f64> = (0..=plan.steps).map(|j| plan.t0 + j as f64 * dt).collect();
    times[plan.steps] = t1;
    let w0 = stepper.op_at(plan.t0)?.weights.clone();

    // Iterate 0: the homogeneous linear flow.
    let mut y = Vec::with_capacity(plan.steps + 1);
    y.push(x0.clone());
    for j in 0..plan.steps {
        let dt_j = times[j + 1] - times[j];
        let (next, _) = stepper.step(times[j], dt_j, &y[j], None)?;
        y.push(next);
    }
    let mut observed_max = y.iter().map(|s| s.norm_u(&w0)).fold(0.0f64, f64::max);

    let mut x_cur = y.clone();
    let mut rates = Vec::new();
    let mut last_diff: Option<f64> = None;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut final_target = tol;

    for k in 1..=max_iter {
        // Reaction samples along the current iterate.
        let mut f = Vec::with_capacity(plan.steps + 1);
        for (tj, xj) in times.iter().zip(&x_cur) {
            f.push(term.evaluate(*tj, &grid, xj)?);
        }
        // Inhomogeneous re-run: X_{j+1} = U X_j + (discrete Duhamel of F̄_j).
        let mut x_new = Vec::with_capacity(plan.steps + 1);
        x_new.push(x0.clone());
        let mut z = StateVector::zeros(&grid);
        let mut diff = 0.0f64;
        for j in 0..plan.steps {
            let dt_j = times[j + 1] - times[j];
            let mut favg = f[j].clone();
            favg.axpy(C64::new(1.0, 0.0), &f[j + 1]);
            favg.scale(C64::new(0.5, 0.0));
            let (znext, _) = stepper.step(times[j], dt_j, &z, Some(&favg))?;
            z = znext;
            let mut xj = y[j + 1].clone();
            xj.axpy(C64::new(1.0, 0.0), &z);
            diff = diff.max(xj.sub(&x_cur[j + 1]).norm_u(&w0));
            x_new.push(xj);
        }
        let sup_now = x_new.iter().map(|s| s.norm_u(&w0)).fold(0.0f64, f64::max);
        observed_max = observed_max.max(sup_now);
        let target = tol.max(tolerances::PICARD_ROUNDOFF_FACTOR * f64::EPSILON * sup_now);
        let floor = tolerances::PICARD_RATE_FLOOR_FACTOR * target;
        if let Some(prev) = last_diff {
            if prev > floor {
                let ratio = diff / prev;
                rates.push(ratio);
                if ratio > 1.0 && diff > floor {
                    return Err(EvolutionError::NoContraction {
                        ratio,
                        diff,
                        t0: plan.t0,
                        t1,
                    });
                }
            }
        }
        x_cur = x_new;
        iterations = k;
        final_target = target;
        if diff <= target {
            converged = true;
            break;
        }
        last_diff = Some(diff);
    }
    if !converged {
        return Err(EvolutionError::IterationCap {
            max_iter,
            t0: plan.t0,
            t1,
            diff: last_diff.unwrap_or(f64::NAN),
            target: final_target,
        });
    }
    let stats = WindowStats {
        t_start: plan.t0,
        t_end: t1,
        steps: plan.steps,
        iterations,
        rates,
        contraction_bound: plan.contraction_bound,
        ball_radius: plan.ball_radius,
        observed_max,
        lipschitz: plan.lipschitz,
    };
    Ok((times, x_cur, stats))
}

/// Continues the semilinear flow window by window until the horizon, a
/// blow-up threshold crossing, or window collapse. Each window's length is
/// the certified existence time at the current state; the trajectory
/// records the per-window fixed-point statistics for later certification.
pub fn maximal_solve(
    grid: &Grid,
    metric: &Metric,
    kappa: Kappa,
    term: &Nonlinearity,
    x0: &StateVector,
    cfg: &EvolveConfig,
) -> Result<Trajectory, EvolutionError> {
    validate_config(cfg)?;
    let mut stepper = Stepper::new(grid, metric, kappa);
    let w_ref = weights_at(0.0, grid, metric)?;
    let mut traj = Trajectory::empty();
    push_sample(&mut traj, &mut stepper, 0.0, x0.clone(), &w_ref, 0)?;
    let n0 = traj.norms_inst[0];
    if n0 >= cfg.blowup_threshold {
        return Err(EvolutionError::InvalidConfig(format!(
            "blowup_threshold ({:.3e}) must exceed the initial norm ({n0:.3e})",
            cfg.blowup_threshold
        )));
    }
    if cfg.rho > 0.0 && n0 > cfg.rho * (1.0 + 1e-12) {
        return Err(EvolutionError::InvalidConfig(format!(
            "initial norm {n0:.6e} exceeds the configured data-ball radius rho = {:.6e}",
            cfg.rho
        )));
    }
    let mut t = 0.0f64;
    let mut x = x0.clone();
    let t_end = cfg.t_final;
    while t < t_end - 1e-12 * t_end.max(1.0) {
        let remaining = t_end - t;
        let w_t = weights_at(t, grid, metric)?;
        // Current data-ball radius: the configured rho keeps certificates
        // comparable across seeds; the running norm takes over when it
        // grows past it.
        let rho_c = x.norm_u(&w_t).max(cfg.rho);
        let ew = existence_time(term, grid, &w_t, t, rho_c, cfg.m0, remaining)?;
        let (tau, lip) = (ew.tau, ew.lipschitz);
        if tau < cfg.dt_min && tau < remaining {
            traj.status = TrajectoryStatus::Failed {
                reason: format!(
                    "stagnation: certified window length {tau:.3e} fell below dt_min {:.3e} \
                     at t = {t:.6} (norm {rho_c:.3e}) without crossing the blow-up threshold",
                    cfg.dt_min
                ),
            };
            return Ok(traj);
        }
        let plan = WindowPlan::new(
            t,
            tau,
            cfg.dt,
            tau * cfg.m0 * lip,
            rho_c * (cfg.m0 + 1.0) + 2.0 * tau * cfg.m0 * ew.forcing_at_zero,
            lip,
        );
        let (times, states, stats) =
            picard_solve(&mut stepper, term, &x, &plan, cfg.picard_tol, cfg.picard_max_iter)?;
        let iters = stats.iterations;
        traj.windows.push(stats);
        for (tj, xj) in times.iter().zip(&states).skip(1) {
            if !xj.is_finite() {
                traj.status = TrajectoryStatus::Failed {
                    reason: format!("state became non-finite at t = {tj:.6}"),
                };
                return Ok(traj);
            }
            push_sample(&mut traj, &mut stepper, *tj, xj.clone(), &w_ref, iters)?;
            if *traj.norms_inst.last().unwrap() >= cfg.blowup_threshold {
                traj.status = TrajectoryStatus::BlewUp { t_lower: t, t_upper: *tj };
                return Ok(traj);
            }
        }
        x = states.last().unwrap().clone();
        t = *times.last().unwrap();
    }
    traj.status = TrajectoryStatus::Completed;
    Ok(traj)
}

struct EigenFactor {
    /// Orthogonal eigenvectors of B = −W^{-1/2} K W^{-1/2}.
    q: DMatrix<f64>,
    /// Eigenvalues of B (nonpositive up to roundoff).
    lambda: DVector<f64>,
    w_sqrt: Vec<f64>,
}

/// Dense spectral propagator: U(t, s) = W^{-1/2} Q e^{κΛ(t−s)} Qᵀ W^{1/2}
/// with (Q, Λ) the eigendecomposition of the symmetrized generator. On
/// moving metrics the flow is approximated by midpoint-frozen exponentials
/// over substeps aligned to the lattice s + k·substep, so that composed
/// applications reuse bit-identical factors. Independent of the
/// Crank–Nicolson path everywhere past operator assembly.
pub struct PropagatorOracle {
    pub grid: Grid,
    pub metric: Metric,
    pub kappa: Kappa,
    substep: f64,
    factors: HashMap<u64, EigenFactor>,
}

impl PropagatorOracle {
    pub fn new(
        grid: &Grid,
        metric: &Metric,
        kappa: Kappa,
        substep: f64,
    ) -> Result<Self, EvolutionError> {
        if grid.n_nodes() > ORACLE_MAX_UNKNOWNS {
            return Err(EvolutionError::OracleTooLarge {
                limit: ORACLE_MAX_UNKNOWNS,
                got: grid.n_nodes(),
            });
        }
        if !(substep > 0.0 && substep.is_finite()) {
            return Err(EvolutionError::InvalidStep(substep));
        }
        Ok(PropagatorOracle {
            grid: *grid,
            metric: metric.clone(),
            kappa,
            substep,
            factors: HashMap::new(),
        })
    }

    fn factor_at(&mut self, t: f64) -> Result<&EigenFactor, EvolutionError> {
        let key = if self.metric.is_static() { 0 } else { t.to_bits() };
        if !self.factors.contains_key(&key) {
            let op = assemble_wentzell_operator(t, &self.grid, &self.metric)?;
            let n = op.n();
            let w_sqrt: Vec<f64> = op.weights.combined.iter().map(|w| w.sqrt()).collect();
            let dense = op.stiffness.to_dense();
            let mut b = DMatrix::<f64>::zeros(n, n);
            for r in 0..n {
                for c in 0..=r {
                    // Symmetrize exactly so the eigensolver sees no roundoff skew.
                    let m = -0.5 * (dense[(r, c)] + dense[(c, r)]) / (w_sqrt[r] * w_sqrt[c]);
                    b[(r, c)] = m;
                    b[(c, r)] = m;
                }
            }
            let eig = nalgebra::SymmetricEigen::new(b);
            self.factors
                .insert(key, EigenFactor { q: eig.eigenvectors, lambda: eig.eigenvalues, w_sqrt });
        }
        Ok(&self.factors[&key])
    }

    fn exp_apply(
        &mut self,
        t_freeze: f64,
        delta: f64,
        x: &StateVector,
    ) -> Result<StateVector, EvolutionError> {
        let kappa = self.kappa.as_complex();
        let grid = self.grid;
        let f = self.factor_at(t_freeze)?;
        let n = x.len();
        let mut zr = DVector::<f64>::zeros(n);
        let mut zi = DVector::<f64>::zeros(n);
        for i in 0..n {
            zr[i] = f.w_sqrt[i] * x.data[i].re;
            zi[i] = f.w_sqrt[i] * x.data[i].im;
        }
        let mut mr = f.q.tr_mul(&zr);
        let mut mi = f.q.tr_mul(&zi);
        for i in 0..n {
            let phase = (kappa * f.lambda[i] * delta).exp();
            let (a, b) = (mr[i], mi[i]);
            mr[i] = phase.re * a - phase.im * b;
            mi[i] = phase.re * b + phase.im * a;
        }
        let yr = &f.q * &mr;
        let yi = &f.q * &mi;
        let mut out = StateVector::zeros(&grid);
        for i in 0..n {
            out.data[i] = C64::new(yr[i], yi[i]) / f.w_sqrt[i];
        }
        Ok(out)
    }

    /// Applies U(t, s) to a state. On moving metrics (t − s) must be a
    /// multiple of the oracle substep so that compositions share factors.
    pub fn apply(
        &mut self,
        t: f64,
        s: f64,
        x: &StateVector,
    ) -> Result<StateVector, EvolutionError> {
        let span = t - s;
        if span.abs() < 1e-15 {
            return Ok(x.clone());
        }
        if span < 0.0 {
            return Err(EvolutionError::InvalidStep(span));
        }
        if self.metric.is_static() {
            return self.exp_apply(0.0, span, x);
        }
        let n_sub = ((span / self.substep).round() as usize).max(1);
        if (span - n_sub as f64 * self.substep).abs() > 1e-9 * span.max(1.0) {
            return Err(EvolutionError::Misaligned(format!(
                "span {span} is not a multiple of the oracle substep {}",
                self.substep
            )));
        }
        let mut yv = x.clone();
        for k in 0..n_sub {
            let a = s + k as f64 * self.substep;
            yv = self.exp_apply(a + 0.5 * self.substep, self.substep, &yv)?;
        }
        Ok(yv)
    }

    /// Projects onto the spectral modes with |λ| ≤ cutoff at frozen time
    /// `t`; used to prepare initial data whose time-stepping error is well
    /// inside a comparison tolerance.
    pub fn low_pass(
        &mut self,
        t: f64,
        x: &StateVector,
        cutoff: f64,
    ) -> Result<StateVector, EvolutionError> {
        let grid = self.grid;
        let f = self.factor_at(t)?;
        let n = x.len();
        let mut zr = DVector::<f64>::zeros(n);
        let mut zi = DVector::<f64>::zeros(n);
        for i in 0..n {
            zr[i] = f.w_sqrt[i] * x.data[i].re;
            zi[i] = f.w_sqrt[i] * x.data[i].im;
        }
        let mut mr = f.q.tr_mul(&zr);
        let mut mi = f.q.tr_mul(&zi);
        for i in 0..n {
            if f.lambda[i].abs() > cutoff {
                mr[i] = 0.0;
                mi[i] = 0.0;
            }
        }
        let yr = &f.q * &mr;
        let yi = &f.q * &mi;
        let mut out = StateVector::zeros(&grid);
        for i in 0..n {
            out.data[i] = C64::new(yr[i], yi[i]) / f.w_sqrt[i];
        }
        Ok(out)
    }

    /// Generator spectrum at frozen time `t`, sorted descending
    /// (λ₁ = 0 ≥ λ₂ ≥ …).
    pub fn eigenvalues(&mut self, t: f64) -> Result<Vec<f64>, EvolutionError> {
        let f = self.factor_at(t)?;
        let mut ev: Vec<f64> = f.lambda.iter().copied().collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Ok(ev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::Nonlinearity;
    use crate::state::seeded_rng;
    use crate::tolerances::{
        HEAT_MONOTONE_STEP, ORACLE_COMPOSITION, ORACLE_EQUIVALENCE_REL, ORACLE_LOWPASS_CUTOFF,
        PICARD_RATIO_MARGIN, UNITARY_DRIFT,
    };

    fn flat_state(n_x: usize, n_theta: usize, seed: u64) -> (Grid, StateVector) {
        let g = Grid::build(n_x, n_theta).unwrap();
        let mut rng = seeded_rng(seed);
        (g, StateVector::random(&g, &mut rng))
    }

    #[test]
    fn heat_flow_contracts_and_schrodinger_flow_conserves_the_norm() {
        let (g, x0) = flat_state(6, 8, 11);
        let metric = Metric::StaticFlat;
        let heat = linear_evolve(&g, &metric, Kappa::Heat, &x0, (0.0, 1.0), 5e-3).unwrap();
        assert_eq!(heat.status, TrajectoryStatus::Completed);
        assert_eq!(heat.len(), 201);
        for k in 1..heat.len() {
            assert!(
                heat.norms_inst[k] <= heat.norms_inst[k - 1] * (1.0 + HEAT_MONOTONE_STEP),
                "heat norm grew at step {k}: {} -> {}",
                heat.norms_inst[k - 1],
                heat.norms_inst[k]
            );
        }
        let schr = linear_evolve(&g, &metric, Kappa::Schrodinger, &x0, (0.0, 1.0), 5e-3).unwrap();
        let n0 = schr.norms_inst[0];
        for (k, nk) in schr.norms_inst.iter().enumerate() {
            assert!(
                (nk - n0).abs() <= UNITARY_DRIFT * n0,
                "norm drifted at step {k}: |{nk} - {n0}| > {:.1e} rel",
                UNITARY_DRIFT
            );
        }
        assert!(schr.picard_iters.iter().all(|&i| i == 0));
        assert!(schr.graph_norms.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn crank_nicolson_matches_the_spectral_propagator() {
        let g = Grid::build(4, 8).unwrap();
        let metric = Metric::StaticFlat;
        for kappa in [Kappa::Heat, Kappa::Schrodinger] {
            let mut oracle = PropagatorOracle::new(&g, &metric, kappa, 0.5).unwrap();
            let mut rng = seeded_rng(23);
            let raw = StateVector::random(&g, &mut rng);
            let mut x0 = oracle.low_pass(0.0, &raw, ORACLE_LOWPASS_CUTOFF).unwrap();
            let w = weights_at(0.0, &g, &metric).unwrap();
            let n0 = x0.norm_u(&w);
            assert!(n0 > 1e-3, "low-pass projection left no usable state");
            x0.scale(C64::new(1.0 / n0, 0.0));
            let t_final = 0.5;
            let traj = linear_evolve(&g, &metric, kappa, &x0, (0.0, t_final), 1e-3).unwrap();
            let reference = oracle.apply(t_final, 0.0, &x0).unwrap();
            let err = traj.last_state().unwrap().sub(&reference).norm_u(&w);
            assert!(
                err <= ORACLE_EQUIVALENCE_REL,
                "{kappa:?}: stepper disagrees with the spectral oracle by {err:.3e}"
            );
        }
    }

    #[test]
    fn propagator_composition_is_exact_on_aligned_grids() {
        let g = Grid::build(5, 6).unwrap();
        for metric in [Metric::StaticFlat, Metric::Breathing { amplitude: 0.3, omega: 2.0 }] {
            let mut oracle = PropagatorOracle::new(&g, &metric, Kappa::Schrodinger, 0.125).unwrap();
            let mut rng = seeded_rng(5);
            let x = StateVector::random(&g, &mut rng);
            let w = weights_at(0.0, &g, &metric).unwrap();
            let through = oracle.apply(1.0, 0.0, &x).unwrap();
            let half = oracle.apply(0.5, 0.0, &x).unwrap();
            let composed = oracle.apply(1.0, 0.5, &half).unwrap();
            let err = composed.sub(&through).norm_u(&w);
            assert!(
                err <= ORACLE_COMPOSITION * x.norm_u(&w),
                "composition mismatch {err:.3e} on {metric:?}"
            );
        }
        let mut oracle = PropagatorOracle::new(
            &g,
            &Metric::Breathing { amplitude: 0.3, omega: 2.0 },
            Kappa::Heat,
            0.125,
        )
        .unwrap();
        let x = StateVector::constant(&g, C64::new(1.0, 0.0));
        assert!(matches!(
            oracle.apply(0.07, 0.0, &x),
            Err(EvolutionError::Misaligned(_))
        ));
    }

    #[test]
    fn low_pass_is_an_orthogonal_projection() {
        let g = Grid::build(4, 8).unwrap();
        let metric = Metric::StaticFlat;
        let mut oracle = PropagatorOracle::new(&g, &metric, Kappa::Heat, 1.0).unwrap();
        let mut rng = seeded_rng(77);
        let x = StateVector::random(&g, &mut rng);
        let w = weights_at(0.0, &g, &metric).unwrap();
        let once = oracle.low_pass(0.0, &x, ORACLE_LOWPASS_CUTOFF).unwrap();
        let twice = oracle.low_pass(0.0, &once, ORACLE_LOWPASS_CUTOFF).unwrap();
        assert!(twice.sub(&once).norm_u(&w) <= 1e-10 * x.norm_u(&w), "projection not idempotent");
        assert!(once.norm_u(&w) <= x.norm_u(&w) * (1.0 + 1e-12), "projection expanded the norm");
        let ev = oracle.eigenvalues(0.0).unwrap();
        assert!(ev[0].abs() <= 1e-9, "leading eigenvalue should be the constant mode at 0");
        assert!(ev.windows(2).all(|p| p[0] >= p[1]), "spectrum not sorted descending");
    }

    #[test]
    fn window_formula_matches_direct_substitution() {
        assert_eq!(contraction_window(2.0, 10.0, 1.0), 0.25);
        assert_eq!(contraction_window(1.0, 10.0, 1.0), 0.5);
        assert_eq!(contraction_window(0.0, 1.0, 1.0), 1.0, "vanishing L must clamp at the horizon");
        assert_eq!(contraction_window(1.0, 0.3, 1.0), 0.3, "short horizons win over 1/(2 m0 L)");
        assert_eq!(contraction_window(1.0, 10.0, 2.0), 0.25, "m0 shortens the window");
    }

    #[test]
    fn linear_reaction_window_is_half_and_the_iteration_contracts() {
        let g = Grid::build(4, 6).unwrap();
        let metric = Metric::StaticFlat;
        let term = Nonlinearity::Power { alpha: 1.0, beta: 1.0, p: 1.0, p_b: 1.0 };
        let w = weights_at(0.0, &g, &metric).unwrap();
        let ew = existence_time(&term, &g, &w, 0.0, 3.7, 1.0, 100.0).unwrap();
        let (tau, lip) = (ew.tau, ew.lipschitz);
        assert_eq!(lip, 1.0);
        assert_eq!(tau, 0.5, "linear reaction: window must be exactly 1/(2 m0 L)");
        assert_eq!(ew.forcing_at_zero, 0.0, "power laws vanish at the origin");
        let none = existence_time(&Nonlinearity::None, &g, &w, 0.0, 3.7, 1.0, 100.0).unwrap();
        assert_eq!((none.tau, none.lipschitz), (100.0, 0.0));

        for kappa in [Kappa::Heat, Kappa::Schrodinger] {
            let mut stepper = Stepper::new(&g, &metric, kappa);
            let mut oracle = PropagatorOracle::new(&g, &metric, kappa, tau).unwrap();
            let mut rng = seeded_rng(3);
            let raw = StateVector::random(&g, &mut rng);
            let mut x0 = oracle.low_pass(0.0, &raw, ORACLE_LOWPASS_CUTOFF).unwrap();
            let n0 = x0.norm_u(&w);
            x0.scale(C64::new(1.0 / n0, 0.0));
            let plan = WindowPlan::new(0.0, tau, 1.0 / 256.0, tau * lip, 2.0, lip);
            let (times, states, stats) =
                picard_solve(&mut stepper, &term, &x0, &plan, 1e-10, 60).unwrap();
            assert_eq!(times.len(), states.len());
            assert!(
                stats.iterations <= 40,
                "{kappa:?}: took {} sweeps to converge",
                stats.iterations
            );
            assert!(
                stats.rates.iter().all(|&r| r <= plan.contraction_bound + PICARD_RATIO_MARGIN),
                "{kappa:?}: contraction rates {:?} exceed {} + margin",
                stats.rates,
                plan.contraction_bound
            );
            // N(X) = X makes the flow e^{τ}·U(τ, 0) (the reaction is not
            // scaled by κ): check against the spectral oracle with the
            // scalar factor applied by hand.
            let mut reference = oracle.apply(tau, 0.0, &x0).unwrap();
            reference.scale(C64::new(tau.exp(), 0.0));
            let err = states.last().unwrap().sub(&reference).norm_u(&w);
            assert!(
                err <= 1e-5,
                "{kappa:?}: fixed point is {err:.3e} from the closed-form solution"
            );
        }
    }

    #[test]
    fn constant_focusing_states_blow_up_at_the_ode_time() {
        let g = Grid::build(3, 4).unwrap();
        let metric = Metric::StaticFlat;
        let term = Nonlinearity::Power { alpha: 2.0, beta: 2.0, p: 1.0, p_b: 1.0 };
        let x0 = StateVector::constant(&g, C64::new(10.0, 0.0));
        let cfg = EvolveConfig {
            dt: 5e-3,
            t_final: 0.2,
            picard_max_iter: 200,
            ..EvolveConfig::default()
        };
        let traj = maximal_solve(&g, &metric, Kappa::Heat, &term, &x0, &cfg).unwrap();
        match traj.status {
            TrajectoryStatus::BlewUp { t_lower, t_upper } => {
                // Spatially constant data reduce the flow to y' = y², which
                // blows up at 1/y(0) = 0.1 and crosses 1e6 just before.
                assert!(
                    (0.09..=0.11).contains(&t_upper),
                    "threshold crossing at {t_upper} is not within 10% of 0.1"
                );
                assert!(t_lower <= t_upper && t_upper - t_lower <= 0.01);
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
        assert!(*traj.norms_inst.last().unwrap() >= cfg.blowup_threshold);
        assert!(!traj.windows.is_empty());
        for wstat in &traj.windows {
            assert!(
                wstat.observed_max <= wstat.ball_radius * (1.0 + 1e-8),
                "iterates left the invariant ball: {} > {}",
                wstat.observed_max,
                wstat.ball_radius
            );
        }
    }

    #[test]
    fn defocusing_flow_completes_and_dissipates() {
        let g = Grid::build(4, 6).unwrap();
        let metric = Metric::StaticFlat;
        let term = Nonlinearity::Power { alpha: 3.0, beta: 3.0, p: -1.0, p_b: -1.0 };
        let x0 = StateVector::constant(&g, C64::new(1.0, 0.0));
        let cfg = EvolveConfig { dt: 5e-3, t_final: 0.1, ..EvolveConfig::default() };
        let traj = maximal_solve(&g, &metric, Kappa::Heat, &term, &x0, &cfg).unwrap();
        assert_eq!(traj.status, TrajectoryStatus::Completed);
        let first = traj.norms_inst[0];
        let last = *traj.norms_inst.last().unwrap();
        assert!(last < first, "defocusing heat flow should dissipate: {first} -> {last}");
    }

    #[test]
    fn collapsing_windows_are_reported_as_stagnation() {
        let g = Grid::build(3, 4).unwrap();
        let metric = Metric::StaticFlat;
        // Enormous Lipschitz constant at the initial radius makes the
        // certified window shorter than dt_min immediately.
        let term = Nonlinearity::Power { alpha: 4.0, beta: 4.0, p: 100.0, p_b: 100.0 };
        let x0 = StateVector::constant(&g, C64::new(50.0, 0.0));
        let cfg = EvolveConfig { dt_min: 1e-3, t_final: 1.0, ..EvolveConfig::default() };
        let traj = maximal_solve(&g, &metric, Kappa::Heat, &term, &x0, &cfg).unwrap();
        match traj.status {
            TrajectoryStatus::Failed { reason } => {
                assert!(
                    reason.contains("stagnation") && reason.contains("dt_min"),
                    "unexpected reason: {reason}"
                )
            }
            other => panic!("expected stagnation failure, got {other:?}"),
        }
    }

    #[test]
    fn inadmissible_thresholds_and_radii_are_config_errors() {
        let g = Grid::build(3, 4).unwrap();
        let metric = Metric::StaticFlat;
        let term = Nonlinearity::Power { alpha: 2.0, beta: 2.0, p: 1.0, p_b: 1.0 };
        let x0 = StateVector::constant(&g, C64::new(1.0, 0.0));
        // The threshold must sit strictly above the initial norm...
        let low = EvolveConfig { blowup_threshold: 1.0, ..EvolveConfig::default() };
        assert!(matches!(
            maximal_solve(&g, &metric, Kappa::Heat, &term, &x0, &low),
            Err(EvolutionError::InvalidConfig(_))
        ));
        // ...and a positive data-ball radius must contain the data.
        let tight = EvolveConfig { rho: 1e-3, ..EvolveConfig::default() };
        assert!(matches!(
            maximal_solve(&g, &metric, Kappa::Heat, &term, &x0, &tight),
            Err(EvolutionError::InvalidConfig(_))
        ));
    }

    #[test]
    fn solver_config_accepts_canonical_field_aliases() {
        let cfg: EvolveConfig =
            serde_json::from_str(r#"{"dt": 0.005, "T": 2.0, "M0": 1.5, "rho": 0.25}"#).unwrap();
        assert_eq!(cfg.dt, 0.005);
        assert_eq!(cfg.t_final, 2.0);
        assert_eq!(cfg.m0, 1.5);
        assert_eq!(cfg.rho, 0.25);
        assert_eq!(cfg.picard_max_iter, EvolveConfig::default().picard_max_iter);
        assert!(serde_json::from_str::<EvolveConfig>(r#"{"no_such_knob": 1}"#).is_err());
    }

    #[test]
    fn zero_reaction_converges_in_one_sweep_to_the_linear_flow() {
        let g = Grid::build(4, 6).unwrap();
        let metric = Metric::Breathing { amplitude: 0.2, omega: 1.5 };
        let mut rng = seeded_rng(9);
        let x0 = StateVector::random(&g, &mut rng);
        let cfg = EvolveConfig { dt: 2e-2, t_final: 0.4, ..EvolveConfig::default() };
        let windowed =
            maximal_solve(&g, &metric, Kappa::Schrodinger, &Nonlinearity::None, &x0, &cfg)
                .unwrap();
        assert_eq!(windowed.status, TrajectoryStatus::Completed);
        assert_eq!(windowed.windows.len(), 1, "a linear flow needs exactly one window");
        assert_eq!(windowed.windows[0].iterations, 1, "the fixed-point map is constant");
        let plain =
            linear_evolve(&g, &metric, Kappa::Schrodinger, &x0, (0.0, 0.4), 2e-2).unwrap();
        assert_eq!(windowed.len(), plain.len());
        for (a, b) in windowed.states.iter().zip(&plain.states) {
            assert_eq!(a.data, b.data, "zero-reaction windows must reproduce linear stepping");
        }
    }

    #[test]
    fn non_finite_states_abort_with_a_failed_status() {
        let g = Grid::build(3, 4).unwrap();
        let mut x0 = StateVector::constant(&g, C64::new(1.0, 0.0));
        x0.data[0] = C64::new(f64::NAN, 0.0);
        let traj =
            linear_evolve(&g, &Metric::StaticFlat, Kappa::Heat, &x0, (0.0, 0.1), 1e-2).unwrap();
        assert!(
            matches!(&traj.status, TrajectoryStatus::Failed { reason } if reason.contains("non-finite")),
            "expected a failed status from poisoned data, got {:?}",
            traj.status
        );
        assert!(traj.len() <= 2, "the run should abort at the first poisoned step");
    }

    #[test]
    fn forced_runs_respect_the_duhamel_norm_budget() {
        let g = Grid::build(6, 8).unwrap();
        let metric = Metric::StaticFlat;
        let w = weights_at(0.0, &g, &metric).unwrap();
        let forcing = |t: f64| {
            StateVector::from_fn(&g, |x, theta| {
                C64::new(
                    (2.3 * t).sin() * (std::f64::consts::PI * x).cos(),
                    (1.7 * t).cos() * theta.sin(),
                )
            })
        };
        for kappa in [Kappa::Heat, Kappa::Schrodinger] {
            let mut rng = seeded_rng(31);
            let x0 = StateVector::random(&g, &mut rng);
            let traj =
                forced_evolve(&g, &metric, kappa, &x0, (0.0, 0.5), 2.5e-3, forcing).unwrap();
            assert_eq!(traj.status, TrajectoryStatus::Completed);
            // Nonexpansive stepping gives ‖X_k‖ ≤ ‖X₀‖ + Σ dt·‖F̄_j‖ exactly
            // (up to solver residual): the discrete inhomogeneous bound.
            let mut budget = traj.norms_inst[0];
            for k in 1..traj.len() {
                let dt = traj.times[k] - traj.times[k - 1];
                let mut favg = forcing(traj.times[k - 1]);
                favg.axpy(C64::new(1.0, 0.0), &forcing(traj.times[k]));
                favg.scale(C64::new(0.5, 0.0));
                budget += dt * favg.norm_u(&w);
                assert!(
                    traj.norms_inst[k] <= budget * (1.0 + 1e-9) + 1e-12,
                    "{kappa:?}: norm {} exceeded the Duhamel budget {} at step {k}",
                    traj.norms_inst[k],
                    budget
                );
            }
        }
    }

    #[test]
    fn picard_limit_matches_a_fine_explicit_oracle() {
        let g = Grid::build(3, 4).unwrap();
        let metric = Metric::StaticFlat;
        let term = Nonlinearity::Power { alpha: 2.0, beta: 2.0, p: 1.0, p_b: 1.0 };
        let x0 = StateVector::from_fn(&g, |x, theta| {
            C64::new(0.1 + 0.02 * (std::f64::consts::PI * x).cos(), 0.01 * theta.cos())
        });
        let w = weights_at(0.0, &g, &metric).unwrap();
        let mut stepper = Stepper::new(&g, &metric, Kappa::Heat);
        let rho = x0.norm_u(&w);
        let ew = existence_time(&term, &g, &w, 0.0, rho, 1.0, 10.0).unwrap();
        let plan =
            WindowPlan::new(0.0, ew.tau, 1.0 / 512.0, ew.tau * ew.lipschitz, 2.0 * rho, ew.lipschitz);
        let (times, states, _) =
            picard_solve(&mut stepper, &term, &x0, &plan, 1e-12, 80).unwrap();

        // Independent oracle: Heun (explicit trapezoid) treatment of the
        // reaction over the same linear stepper at 1/100 of the step size.
        let mut fine = Stepper::new(&g, &metric, Kappa::Heat);
        let mut y = x0.clone();
        let mut worst = 0.0f64;
        for j in 0..plan.steps {
            let sub = 100usize;
            let dt_f = (times[j + 1] - times[j]) / sub as f64;
            for m in 0..sub {
                let tm = times[j] + m as f64 * dt_f;
                let f0 = term.evaluate(tm, &g, &y).unwrap();
                let (pred, _) = fine.step(tm, dt_f, &y, Some(&f0)).unwrap();
                let f1 = term.evaluate(tm + dt_f, &g, &pred).unwrap();
                let mut favg = f0.clone();
                favg.axpy(C64::new(1.0, 0.0), &f1);
                favg.scale(C64::new(0.5, 0.0));
                let (next, _) = fine.step(tm, dt_f, &y, Some(&favg)).unwrap();
                y = next;
            }
            worst = worst.max(states[j + 1].sub(&y).norm_u(&w));
        }
        assert!(
            worst <= 1e-5,
            "fixed-point limit is {worst:.3e} from the fine explicit-reaction oracle"
        );
    }

    /// The smallest eigenvalues of −A computed through the variational
    /// solver (inverse subspace iteration with Rayleigh–Ritz extraction,
    /// which resolves the exactly-degenerate angular pairs) must match the
    /// dense symmetric eigendecomposition the oracle uses.
    #[test]
    fn variational_subspace_iteration_matches_the_dense_spectrum() {
        let g = Grid::build(8, 8).unwrap();
        let metric = Metric::StaticFlat;
        let op = assemble_wentzell_operator(0.0, &g, &metric).unwrap();
        let solver = ShiftedSolver::new(&op, Kappa::Heat, 1.0).unwrap();
        let n = op.n();
        let w = op.weights.combined.clone();
        let block = 8usize;
        let want = 6usize;
        let dot_w =
            |a: &[f64], b: &[f64]| a.iter().zip(b).zip(&w).map(|((x, y), wi)| wi * x * y).sum::<f64>();

        let mut rng = seeded_rng(4242);
        let mut basis: Vec<Vec<f64>> = (0..block)
            .map(|_| StateVector::random(&g, &mut rng).data.iter().map(|z| z.re).collect())
            .collect();
        let mut ritz = vec![f64::INFINITY; want];
        let mut stable = 0usize;
        for _sweep in 0..300 {
            // Inverse step v ← (W + K)⁻¹ W v enlarges the low modes of −A.
            for v in basis.iter_mut() {
                let rhs: Vec<C64> =
                    v.iter().zip(&w).map(|(x, wi)| C64::new(wi * x, 0.0)).collect();
                let (sol, _) = solver.solve(&rhs).unwrap();
                *v = sol.iter().map(|z| z.re).collect();
            }
            // W-orthonormalize (modified Gram–Schmidt).
            for i in 0..block {
                for j in 0..i {
                    let vj = basis[j].clone();
                    let c = dot_w(&vj, &basis[i]);
                    for (t, s) in basis[i].iter_mut().zip(&vj) {
                        *t -= c * s;
                    }
                }
                let norm = dot_w(&basis[i], &basis[i]).sqrt();
                assert!(norm > 1e-12, "iteration subspace collapsed");
                for t in basis[i].iter_mut() {
                    *t /= norm;
                }
            }
            // Rayleigh–Ritz on the W-orthonormal block: H_ij = ⟨v_i, −A v_j⟩_U.
            let kv: Vec<Vec<f64>> = basis
                .iter()
                .map(|v| {
                    let mut y = vec![0.0; n];
                    op.stiffness.matvec(v, &mut y);
                    y
                })
                .collect();
            let mut h = DMatrix::<f64>::zeros(block, block);
            for i in 0..block {
                for j in 0..=i {
                    let hij = basis[i].iter().zip(&kv[j]).map(|(a, b)| a * b).sum::<f64>();
                    h[(i, j)] = hij;
                    h[(j, i)] = hij;
                }
            }
            let eig = nalgebra::SymmetricEigen::new(h);
            let mut idx: Vec<usize> = (0..block).collect();
            idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
            basis = idx
                .iter()
                .map(|&m| {
                    let mut out = vec![0.0; n];
                    for (j, vj) in basis.iter().enumerate() {
                        let c = eig.eigenvectors[(j, m)];
                        for (o, s) in out.iter_mut().zip(vj) {
                            *o += c * s;
                        }
                    }
                    out
                })
                .collect();
            let theta: Vec<f64> = idx.iter().map(|&m| eig.eigenvalues[m]).collect();
            let drift = (0..want)
                .map(|k| (theta[k] - ritz[k]).abs() / (1.0 + theta[k].abs()))
                .fold(0.0f64, f64::max);
            ritz.copy_from_slice(&theta[..want]);
            if drift <= 1e-14 {
                stable += 1;
                if stable >= 3 {
                    break;
                }
            } else {
                stable = 0;
            }
        }
        assert!(stable >= 3, "Ritz values did not settle: {ritz:?}");

        let mut oracle = PropagatorOracle::new(&g, &metric, Kappa::Heat, 1.0).unwrap();
        let lam = oracle.eigenvalues(0.0).unwrap();
        for k in 0..want {
            let reference = -lam[k];
            assert!(
                (ritz[k] - reference).abs() <= 1e-10 * (1.0 + reference.abs()),
                "eigenvalue {k}: subspace iteration {} vs dense {}",
                ritz[k],
                reference
            );
        }
    }
}
