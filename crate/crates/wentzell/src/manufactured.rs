//! Manufactured exact solutions and the convergence-order studies built on
//! them.
//!
//! A fixed smooth separable field
//!
//! ```text
//!     u*(t, x, θ) = φ(x) ψ(θ) g(t),
//!     φ(x) = 1 + 0.5 cos(πx) + 0.3x,
//!     ψ(θ) = 1 + 0.4 cos(2θ) + 0.3 sin θ,
//!     g(t) = 1 + 0.5 sin(1.3t),
//! ```
//!
//! is declared to be the solution; the forcing that makes it exact,
//!
//! ```text
//!     G   = ∂_t u* − κ Δ_g u*                         (bulk),
//!     G_b = ∂_t v* − κ (Δ_b v* − ∇_ν u*)              (boundary),
//! ```
//!
//! is injected through the same weight-lumped merge the discrete boundary
//! rows use. φ has nonzero normal derivative on both boundary circles, so
//! the Neumann coupling term is genuinely exercised. Running the stepper
//! with this forcing and comparing against u* measures the real
//! convergence order of the full bulk/boundary scheme.

use crate::evolution::{forced_evolve, EvolutionError, Trajectory, TrajectoryStatus};
use crate::geometry::{weights_at, GeometryError, Grid, Metric};
use crate::state::{Kappa, StateVector};
use crate::C64;
use serde::Serialize;
use std::f64::consts::PI;

fn phi(x: f64) -> f64 {
    1.0 + 0.5 * (PI * x).cos() + 0.3 * x
}

fn phi_p(x: f64) -> f64 {
    -0.5 * PI * (PI * x).sin() + 0.3
}

fn phi_pp(x: f64) -> f64 {
    -0.5 * PI * PI * (PI * x).cos()
}

fn psi(th: f64) -> f64 {
    1.0 + 0.4 * (2.0 * th).cos() + 0.3 * th.sin()
}

fn psi_pp(th: f64) -> f64 {
    -1.6 * (2.0 * th).cos() - 0.3 * th.sin()
}

fn g(t: f64) -> f64 {
    1.0 + 0.5 * (1.3 * t).sin()
}

fn g_p(t: f64) -> f64 {
    0.65 * (1.3 * t).cos()
}

/// The manufactured field together with the metric and equation it is
/// declared to solve.
pub struct ManufacturedSolution {
    pub metric: Metric,
    pub kappa: Kappa,
}

impl ManufacturedSolution {
    pub fn new(metric: &Metric, kappa: Kappa) -> Self {
        ManufacturedSolution { metric: metric.clone(), kappa }
    }

    /// u*(t, x, θ).
    pub fn field(&self, t: f64, x: f64, th: f64) -> f64 {
        phi(x) * psi(th) * g(t)
    }

    /// Pointwise sample of u*(t, ·) on a grid.
    pub fn state(&self, grid: &Grid, t: f64) -> StateVector {
        StateVector::from_fn(grid, |x, th| C64::new(self.field(t, x, th), 0.0))
    }

    /// Bulk forcing G = ∂_t u* − κ Δ_g u*, with
    /// Δ_g = ∂²_x + (r_x/r) ∂_x + r^{-2} ∂²_θ.
    pub fn bulk_forcing(&self, t: f64, x: f64, th: f64) -> C64 {
        let k = self.kappa.as_complex();
        let r = self.metric.r(t, x);
        let rx = self.metric.dr_dx(t, x);
        let lap = (phi_pp(x) + rx / r * phi_p(x)) * psi(th) * g(t)
            + phi(x) * psi_pp(th) * g(t) / (r * r);
        C64::new(phi(x) * psi(th) * g_p(t), 0.0) - k * lap
    }

    /// Boundary forcing G_b = ∂_t v* − κ (Δ_b v* − ρ*), where ρ* is the
    /// outward normal derivative of u* on the circle at `x` ∈ {0, 1}.
    pub fn boundary_forcing(&self, t: f64, x: f64, th: f64) -> C64 {
        let k = self.kappa.as_complex();
        let r_b = self.metric.r(t, x);
        let nu = if x < 0.5 { -1.0 } else { 1.0 };
        let rho = nu * phi_p(x) * psi(th) * g(t);
        let lap_b = phi(x) * psi_pp(th) * g(t) / (r_b * r_b);
        C64::new(phi(x) * psi(th) * g_p(t), 0.0) - k * (lap_b - rho)
    }

    /// The merged forcing state at time `t` (bulk and boundary fields
    /// lumped on the boundary layers with the discrete row weights).
    pub fn forcing_state(&self, grid: &Grid, t: f64) -> Result<StateVector, GeometryError> {
        let w = weights_at(t, grid, &self.metric)?;
        Ok(StateVector::from_fields(
            grid,
            &w,
            |x, th| self.bulk_forcing(t, x, th),
            |x, th| self.boundary_forcing(t, x, th),
        ))
    }
}

/// Result of a convergence study: resolutions (step sizes or mesh widths),
/// the error proxy at each, the orders of adjacent pairs, and the
/// least-squares order over all points.
#[derive(Clone, Debug, Serialize)]
pub struct OrderStudy {
    pub resolutions: Vec<f64>,
    pub errors: Vec<f64>,
    pub pair_orders: Vec<f64>,
    pub order: f64,
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

impl OrderStudy {
    /// Fits the observed order to externally measured (resolution, error)
    /// pairs; both lists must be the same length with at least two entries
    /// of positive values.
    pub fn from_measurements(resolutions: Vec<f64>, errors: Vec<f64>) -> OrderStudy {
        assert!(
            resolutions.len() == errors.len() && resolutions.len() >= 2,
            "an order fit needs matching lists of at least two measurements"
        );
        let pair_orders: Vec<f64> = errors
            .windows(2)
            .zip(resolutions.windows(2))
            .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
            .collect();
        let xs: Vec<f64> = resolutions.iter().map(|h| h.ln()).collect();
        let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
        let order = least_squares_slope(&xs, &ys);
        OrderStudy { resolutions, errors, pair_orders, order }
    }
}

/// Requires a study run to have reached its horizon; a partial trajectory
/// would silently corrupt the fitted order.
fn require_completed(traj: Trajectory, what: &str) -> Result<Trajectory, EvolutionError> {
    match &traj.status {
        TrajectoryStatus::Completed => Ok(traj),
        other => Err(EvolutionError::InvalidConfig(format!(
            "{what} did not reach the horizon: {other:?}"
        ))),
    }
}

/// Temporal order by successive differences: the forced run is repeated at
/// each step size (largest first) on one grid, and the U-norm differences
/// of consecutive final states decay like the scheme's order in dt.
pub fn temporal_order(
    grid: &Grid,
    metric: &Metric,
    kappa: Kappa,
    dts: &[f64],
    t_final: f64,
) -> Result<OrderStudy, EvolutionError> {
    if dts.len() < 3 || dts.windows(2).any(|p| p[1] >= p[0]) {
        return Err(EvolutionError::InvalidConfig(
            "temporal study needs at least three strictly decreasing step sizes".into(),
        ));
    }
    let ms = ManufacturedSolution::new(metric, kappa);
    let x0 = ms.state(grid, 0.0);
    let w_final = weights_at(t_final, grid, metric)?;
    let mut finals = Vec::with_capacity(dts.len());
    for &dt in dts {
        let traj = forced_evolve(grid, metric, kappa, &x0, (0.0, t_final), dt, |t| {
            ms.forcing_state(grid, t).expect("validated metric stays positive")
        })?;
        let traj = require_completed(traj, &format!("temporal study run at dt = {dt}"))?;
        finals.push(traj.last_state().unwrap().clone());
    }
    let diffs: Vec<f64> =
        finals.windows(2).map(|p| p[0].sub(&p[1]).norm_u(&w_final)).collect();
    Ok(OrderStudy::from_measurements(dts[..dts.len() - 1].to_vec(), diffs))
}

/// Spatial order against the exact field: the forced run is repeated on
/// each grid (coarsest first) with a step size small enough that the
/// temporal error is negligible, and the final-state error against u* is
/// measured in the instantaneous U-norm.
pub fn spatial_order(
    grids: &[Grid],
    metric: &Metric,
    kappa: Kappa,
    dt: f64,
    t_final: f64,
) -> Result<OrderStudy, EvolutionError> {
    if grids.len() < 2 || grids.windows(2).any(|p| p[1].dx() >= p[0].dx()) {
        return Err(EvolutionError::InvalidConfig(
            "spatial study needs at least two grids of strictly decreasing mesh width".into(),
        ));
    }
    let ms = ManufacturedSolution::new(metric, kappa);
    let mut hs = Vec::with_capacity(grids.len());
    let mut errors = Vec::with_capacity(grids.len());
    for grid in grids {
        let x0 = ms.state(grid, 0.0);
        let traj = forced_evolve(grid, metric, kappa, &x0, (0.0, t_final), dt, |t| {
            ms.forcing_state(grid, t).expect("validated metric stays positive")
        })?;
        let traj = require_completed(
            traj,
            &format!("spatial study run on the {}×{} grid", grid.n_x, grid.n_theta),
        )?;
        let exact = ms.state(grid, t_final);
        let w = weights_at(t_final, grid, metric)?;
        let err = traj.last_state().unwrap().sub(&exact).norm_u(&w) / exact.norm_u(&w);
        hs.push(grid.dx());
        errors.push(err);
    }
    Ok(OrderStudy::from_measurements(hs, errors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tolerances::{CONVERGENCE_ORDER, CONVERGENCE_ORDER_TOL};

    #[test]
    fn normal_derivative_of_the_field_is_nonzero_on_both_circles() {
        // Degenerate manufactured data would silently stop testing the
        // Neumann coupling; pin the values.
        assert!(phi_p(0.0).abs() > 0.25);
        assert!(phi_p(1.0).abs() > 0.25);
    }

    #[test]
    fn forced_run_tracks_the_exact_field() {
        let grid = Grid::build(16, 16).unwrap();
        let metric = Metric::StaticFlat;
        let ms = ManufacturedSolution::new(&metric, Kappa::Heat);
        let x0 = ms.state(&grid, 0.0);
        let traj = forced_evolve(&grid, &metric, Kappa::Heat, &x0, (0.0, 0.1), 1e-3, |t| {
            ms.forcing_state(&grid, t).unwrap()
        })
        .unwrap();
        let exact = ms.state(&grid, 0.1);
        let w = weights_at(0.1, &grid, &metric).unwrap();
        let rel = traj.last_state().unwrap().sub(&exact).norm_u(&w) / exact.norm_u(&w);
        assert!(rel <= 1e-2, "forced run drifted {rel:.3e} from the manufactured field");
    }

    #[test]
    fn temporal_convergence_is_second_order() {
        let grid = Grid::build(8, 8).unwrap();
        let metric = Metric::Breathing { amplitude: 0.4, omega: 3.0 };
        // The ladder starts at 2e-3: the unitary flow keeps the scheme's
        // dispersive phase errors (≈ (μ dt)³ per mode per step) undamped, so
        // coarser steps sit outside the asymptotic regime for κ = i.
        for kappa in [Kappa::Heat, Kappa::Schrodinger] {
            let study = temporal_order(&grid, &metric, kappa, &[2e-3, 1e-3, 5e-4], 0.5).unwrap();
            assert!(
                (study.order - CONVERGENCE_ORDER).abs() <= CONVERGENCE_ORDER_TOL,
                "{kappa:?}: temporal order {:.3} (differences {:?})",
                study.order,
                study.errors
            );
        }
    }

    #[test]
    fn spatial_convergence_is_second_order() {
        let grids: Vec<Grid> =
            [(8, 8), (16, 16), (32, 32)].iter().map(|&(a, b)| Grid::build(a, b).unwrap()).collect();
        let study = spatial_order(&grids, &Metric::StaticFlat, Kappa::Heat, 1e-3, 0.25).unwrap();
        assert!(
            (study.order - CONVERGENCE_ORDER).abs() <= CONVERGENCE_ORDER_TOL,
            "spatial order {:.3} (errors {:?})",
            study.order,
            study.errors
        );
    }
}
