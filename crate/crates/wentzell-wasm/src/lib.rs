//! Browser bindings: an incremental simulator the demo page drives frame by
//! frame, plus one-shot structural certification of the configured operator.
//!
//! The same JSON configuration schema as the command-line tool applies; the
//! page feeds frames through [`Simulator::advance`], reads the field
//! magnitudes for the heatmap, and polls norms for the time-series plot.

use wasm_bindgen::prelude::*;
use wentzell::diagnostics::operator_certificates;
use wentzell::evolution::{existence_time, picard_solve, Stepper, WindowPlan};
use wentzell::geometry::weights_at;
use wentzell::nonlinearity::Nonlinearity;
use wentzell::operators::assemble_wentzell_operator;
use wentzell::{Grid, Metric, RunConfig, StateVector};

fn err_js(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Incremental flow driver owning the numerical state between frames.
#[wasm_bindgen]
pub struct Simulator {
    grid: Grid,
    metric: Metric,
    term: Nonlinearity,
    cfg: wentzell::evolution::EvolveConfig,
    stepper: Stepper,
    state: StateVector,
    t: f64,
    picard_iterations: usize,
    blown_up: bool,
    seed: u64,
}

#[wasm_bindgen]
impl Simulator {
    /// Builds a simulator from the JSON configuration schema shared with
    /// the command-line tool.
    #[wasm_bindgen(constructor)]
    pub fn new(config_json: &str) -> Result<Simulator, JsValue> {
        let cfg = RunConfig::from_json(config_json).map_err(err_js)?;
        let grid = cfg.build_grid().map_err(err_js)?;
        let term = cfg.build_nonlinearity().map_err(err_js)?;
        let state = cfg.build_initial(&grid).map_err(err_js)?;
        let stepper = Stepper::new(&grid, &cfg.metric, cfg.equation);
        Ok(Simulator {
            grid,
            metric: cfg.metric.clone(),
            term,
            cfg: cfg.solver.clone(),
            stepper,
            state,
            t: 0.0,
            picard_iterations: 0,
            blown_up: false,
            seed: cfg.seed,
        })
    }

    /// Advances the flow by `span` time units (one animation frame) and
    /// returns a JSON summary `{t, norm, graph_norm, picard_iterations,
    /// status}`. Linear runs step directly; semilinear runs advance through
    /// certified fixed-point windows.
    pub fn advance(&mut self, span: f64) -> Result<String, JsValue> {
        if !(span > 0.0 && span.is_finite()) {
            return Err(err_js(format!("frame span must be positive, got {span}")));
        }
        let mut remaining = span;
        self.picard_iterations = 0;
        while remaining > 1e-14 * span && !self.blown_up {
            let w = weights_at(self.t, &self.grid, &self.metric).map_err(err_js)?;
            let norm = self.state.norm_u(&w);
            if norm >= self.cfg.blowup_threshold || !self.state.is_finite() {
                self.blown_up = true;
                break;
            }
            if self.term.is_none() {
                let dt = self.cfg.dt.min(remaining);
                let (next, _) = self.stepper.step(self.t, dt, &self.state, None).map_err(err_js)?;
                self.state = next;
                self.t += dt;
                remaining -= dt;
            } else {
                let ew = existence_time(
                    &self.term,
                    &self.grid,
                    &w,
                    self.t,
                    norm.max(self.cfg.rho),
                    self.cfg.m0,
                    remaining,
                )
                .map_err(err_js)?;
                let tau = ew.tau.min(remaining);
                if tau < self.cfg.dt_min {
                    self.blown_up = true;
                    break;
                }
                let plan = WindowPlan::new(
                    self.t,
                    tau,
                    self.cfg.dt,
                    tau * self.cfg.m0 * ew.lipschitz,
                    norm.max(self.cfg.rho) * (self.cfg.m0 + 1.0)
                        + 2.0 * tau * self.cfg.m0 * ew.forcing_at_zero,
                    ew.lipschitz,
                );
                let (times, states, stats) = picard_solve(
                    &mut self.stepper,
                    &self.term,
                    &self.state,
                    &plan,
                    self.cfg.picard_tol,
                    self.cfg.picard_max_iter,
                )
                .map_err(err_js)?;
                self.state = states.last().unwrap().clone();
                self.t = *times.last().unwrap();
                remaining -= tau;
                self.picard_iterations += stats.iterations;
            }
        }
        self.summary()
    }

    fn summary(&mut self) -> Result<String, JsValue> {
        let w = weights_at(self.t, &self.grid, &self.metric).map_err(err_js)?;
        let norm = self.state.norm_u(&w);
        let graph = self
            .stepper
            .op_at(self.t)
            .map(|op| op.graph_norm(&self.state))
            .unwrap_or(f64::NAN);
        let status = if self.blown_up || norm >= self.cfg.blowup_threshold {
            "blew-up"
        } else {
            "running"
        };
        Ok(format!(
            r#"{{"t":{},"norm":{},"graph_norm":{},"picard_iterations":{},"status":"{}"}}"#,
            self.t, norm, graph, self.picard_iterations, status
        ))
    }

    /// |X| at every node in row-major (x, θ) order, for the heatmap.
    pub fn field_magnitude(&self) -> Vec<f32> {
        self.state.data.iter().map(|z| z.norm() as f32).collect()
    }

    /// Real part of the field in the same layout, for phase-sensitive views.
    pub fn field_re(&self) -> Vec<f32> {
        self.state.data.iter().map(|z| z.re as f32).collect()
    }

    pub fn n_x(&self) -> usize {
        self.grid.n_x
    }

    pub fn n_theta(&self) -> usize {
        self.grid.n_theta
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Warping radius r(t, x) sampled at the axial nodes, for the cylinder
    /// silhouette.
    pub fn radius_profile(&self) -> Vec<f32> {
        (0..self.grid.n_x)
            .map(|i| self.metric.r(self.t, self.grid.x(i)) as f32)
            .collect()
    }

    /// Runs the structural operator certificates (symmetry, dissipativity,
    /// Green identity, resolvent bounds, …) at the current time and returns
    /// the JSON report.
    pub fn certificates(&self) -> Result<String, JsValue> {
        let report = operator_certificates(&self.grid, &self.metric, &[self.t], 10, self.seed)
            .map_err(err_js)?;
        Ok(report.to_json())
    }

    /// Largest stiffness-matrix asymmetry at the current time, a quick
    /// self-adjointness indicator for the page footer.
    pub fn symmetry_residual(&self) -> Result<f64, JsValue> {
        let op = assemble_wentzell_operator(self.t, &self.grid, &self.metric).map_err(err_js)?;
        Ok(op.stiffness.max_asymmetry() / op.stiffness.max_abs().max(1.0))
    }
}

/// The example configuration the page preloads into its editor.
#[wasm_bindgen]
pub fn example_config() -> String {
    RunConfig::example().to_json()
}
