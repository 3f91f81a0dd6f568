//! Cylinder grid and time-dependent metric families.
//!
//! The computational domain is M = [0,1] × S¹ with metric
//! g_t = dx² + r(t,x)² dθ². The warping radius r is strictly positive and
//! smooth in (t, x); the boundary circles {0}×S¹ and {1}×S¹ carry the induced
//! metric h_t = r(t, x_b)² dθ². Volume densities are dμ_g = r dx dθ on M and
//! dμ_h = r_b dθ on each boundary circle, so the flat cylinder (r ≡ 1) has
//! bulk measure 2π and total boundary measure 4π.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("grid too small: need n_x >= 3 and n_theta >= 4, got {n_x} x {n_theta}")]
    GridTooSmall { n_x: usize, n_theta: usize },
    #[error("metric radius must be positive: r({t}, {x}) = {r}")]
    NonpositiveRadius { t: f64, x: f64, r: f64 },
    #[error("metric table invalid: {0}")]
    InvalidTable(String),
}

/// Uniform tensor grid on [0,1] × S¹.
///
/// Axial nodes x_i = i·dx for i = 0..n_x−1 with dx = 1/(n_x−1); the first and
/// last axial layers coincide with the boundary circles and carry both bulk
/// (half-cell) and boundary quadrature weight. Angular nodes θ_j = j·dθ for
/// j = 0..n_theta−1 with dθ = 2π/n_theta, periodic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n_x: usize,
    pub n_theta: usize,
}

impl Grid {
    /// Builds a grid, enforcing the minimum sizes needed for the stencils
    /// (three axial layers so the boundary rows have an interior neighbour,
    /// four angular nodes so the periodic second difference is nontrivial).
    pub fn build(n_x: usize, n_theta: usize) -> Result<Self, GeometryError> {
        if n_x < 3 || n_theta < 4 {
            return Err(GeometryError::GridTooSmall { n_x, n_theta });
        }
        Ok(Grid { n_x, n_theta })
    }

    pub fn dx(&self) -> f64 {
        1.0 / (self.n_x - 1) as f64
    }

    pub fn dtheta(&self) -> f64 {
        std::f64::consts::TAU / self.n_theta as f64
    }

    pub fn n_nodes(&self) -> usize {
        self.n_x * self.n_theta
    }

    /// Flat node index of (axial layer i, angular position j).
    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.n_theta + j
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.dtheta()
    }

    /// Whether axial layer i lies on a boundary circle.
    pub fn is_boundary_layer(&self, i: usize) -> bool {
        i == 0 || i == self.n_x - 1
    }

    /// The two boundary layers as axial indices (inner circle x=0 first).
    pub fn boundary_layers(&self) -> [usize; 2] {
        [0, self.n_x - 1]
    }
}

/// Time-dependent warping radius r(t, x).
///
/// Built-ins: `static-flat` is r ≡ 1; `breathing` is r = 1 + a·sin(ωt)·x.
/// `table` interpolates sampled values cubically in both t and x (Catmull-Rom
/// tangents, clamped outside the sample range).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Metric {
    StaticFlat,
    Breathing {
        amplitude: f64,
        omega: f64,
    },
    Table {
        t_samples: Vec<f64>,
        x_samples: Vec<f64>,
        /// Row i holds r(t_samples[i], x_samples[..]).
        r_values: Vec<Vec<f64>>,
    },
}

impl Metric {
    /// Validates structural requirements (table shapes, positivity of the
    /// tabulated values, strictly increasing sample coordinates).
    pub fn validate(&self) -> Result<(), GeometryError> {
        if let Metric::Table { t_samples, x_samples, r_values } = self {
            if t_samples.is_empty() || x_samples.is_empty() {
                return Err(GeometryError::InvalidTable("empty sample axes".into()));
            }
            if r_values.len() != t_samples.len() {
                return Err(GeometryError::InvalidTable(format!(
                    "{} rows of values for {} time samples",
                    r_values.len(),
                    t_samples.len()
                )));
            }
            for (i, row) in r_values.iter().enumerate() {
                if row.len() != x_samples.len() {
                    return Err(GeometryError::InvalidTable(format!(
                        "row {i} has {} values for {} x samples",
                        row.len(),
                        x_samples.len()
                    )));
                }
                for (&x, &r) in x_samples.iter().zip(row) {
                    if !(r.is_finite() && r > 0.0) {
                        return Err(GeometryError::NonpositiveRadius { t: t_samples[i], x, r });
                    }
                }
            }
            for axis in [t_samples, x_samples] {
                if axis.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(GeometryError::InvalidTable(
                        "sample coordinates must be strictly increasing".into(),
                    ));
                }
            }
        }
        if let Metric::Breathing { amplitude, omega } = self {
            if !(amplitude.is_finite() && omega.is_finite()) {
                return Err(GeometryError::InvalidTable("non-finite breathing parameters".into()));
            }
            if amplitude.abs() >= 1.0 {
                // r = 1 + a sin(ωt) x reaches 1 − |a| at (x, sin) = (1, ∓1).
                return Err(GeometryError::NonpositiveRadius {
                    t: 0.0,
                    x: 1.0,
                    r: 1.0 - amplitude.abs(),
                });
            }
        }
        Ok(())
    }

    /// Warping radius r(t, x).
    pub fn r(&self, t: f64, x: f64) -> f64 {
        match self {
            Metric::StaticFlat => 1.0,
            Metric::Breathing { amplitude, omega } => 1.0 + amplitude * (omega * t).sin() * x,
            Metric::Table { t_samples, x_samples, r_values } => {
                interp_2d(t_samples, x_samples, r_values, t, x)
            }
        }
    }

    /// ∂r/∂x, analytic for the built-ins and finite-differenced for tables.
    pub fn dr_dx(&self, t: f64, x: f64) -> f64 {
        match self {
            Metric::StaticFlat => 0.0,
            Metric::Breathing { amplitude, omega } => amplitude * (omega * t).sin(),
            Metric::Table { .. } => {
                let h = 1e-6;
                (self.r(t, x + h) - self.r(t, x - h)) / (2.0 * h)
            }
        }
    }

    /// Whether the metric is independent of time (enables factor caching and
    /// the exact conservation/monotonicity certificates).
    pub fn is_static(&self) -> bool {
        match self {
            Metric::StaticFlat => true,
            Metric::Breathing { amplitude, omega } => *amplitude == 0.0 || *omega == 0.0,
            Metric::Table { t_samples, r_values, .. } => {
                t_samples.len() == 1 || r_values.windows(2).all(|w| w[0] == w[1])
            }
        }
    }
}

/// Cubic Hermite interpolation with Catmull-Rom-style finite-difference
/// tangents; degrades gracefully to linear for two samples and constant for
/// one. Evaluation outside the sample range clamps to the end values.
fn interp_1d(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    match n {
        0 => f64::NAN,
        1 => ys[0],
        _ => {
            if x <= xs[0] {
                return ys[0];
            }
            if x >= xs[n - 1] {
                return ys[n - 1];
            }
            let k = xs.partition_point(|&s| s <= x).min(n - 1) - 1;
            let (x0, x1) = (xs[k], xs[k + 1]);
            let (y0, y1) = (ys[k], ys[k + 1]);
            let h = x1 - x0;
            // One-sided slopes at the ends, centred elsewhere.
            let m0 = if k == 0 {
                (y1 - y0) / h
            } else {
                (y1 - ys[k - 1]) / (x1 - xs[k - 1])
            };
            let m1 = if k + 2 == n {
                (y1 - y0) / h
            } else {
                (ys[k + 2] - y0) / (xs[k + 2] - x0)
            };
            let s = (x - x0) / h;
            let (s2, s3) = (s * s, s * s * s);
            y0 * (2.0 * s3 - 3.0 * s2 + 1.0)
                + m0 * h * (s3 - 2.0 * s2 + s)
                + y1 * (-2.0 * s3 + 3.0 * s2)
                + m1 * h * (s3 - s2)
        }
    }
}

/// Tensor-product cubic interpolation: first along x within each time row,
/// then along t through the row values.
fn interp_2d(ts: &[f64], xs: &[f64], values: &[Vec<f64>], t: f64, x: f64) -> f64 {
    if ts.len() == 1 {
        return interp_1d(xs, &values[0], x);
    }
    let row_vals: Vec<f64> = values.iter().map(|row| interp_1d(xs, row, x)).collect();
    interp_1d(ts, &row_vals, t)
}

/// Lumped quadrature weights of the product measure at a fixed time.
///
/// `bulk[node]` approximates the dμ_g cell volume (half cells on the boundary
/// layers); `boundary[node]` is the dμ_h circle weight (zero at interior
/// nodes); `combined = bulk + boundary` is the diagonal of the mass operator
/// W defining the discrete U inner product.
#[derive(Clone, Debug)]
pub struct QuadratureWeights {
    pub t: f64,
    pub bulk: Vec<f64>,
    pub boundary: Vec<f64>,
    pub combined: Vec<f64>,
    /// r(t, x_i) per axial layer, kept for operator assembly and reporting.
    pub r_axial: Vec<f64>,
}

impl QuadratureWeights {
    pub fn total_bulk(&self) -> f64 {
        self.bulk.iter().sum()
    }

    pub fn total_boundary(&self) -> f64 {
        self.boundary.iter().sum()
    }

    /// Smallest combined weight; converts U-norm balls into sup-norm balls
    /// (|X_p| ≤ ‖X‖_U / √min_combined at any node p).
    pub fn min_combined(&self) -> f64 {
        self.combined.iter().fold(f64::INFINITY, |a, &b| a.min(b))
    }
}

/// Evaluates the lumped quadrature weights of g_t on `grid`, checking radius
/// positivity at every node and axial half-node (the face positions used by
/// the stiffness assembly).
pub fn weights_at(t: f64, grid: &Grid, metric: &Metric) -> Result<QuadratureWeights, GeometryError> {
    let (dx, dth) = (grid.dx(), grid.dtheta());
    let mut r_axial = Vec::with_capacity(grid.n_x);
    for i in 0..grid.n_x {
        let x = grid.x(i);
        let r = metric.r(t, x);
        if !(r.is_finite() && r > 0.0) {
            return Err(GeometryError::NonpositiveRadius { t, x, r });
        }
        if i + 1 < grid.n_x {
            let xh = x + 0.5 * dx;
            let rh = metric.r(t, xh);
            if !(rh.is_finite() && rh > 0.0) {
                return Err(GeometryError::NonpositiveRadius { t, x: xh, r: rh });
            }
        }
        r_axial.push(r);
    }

    let n = grid.n_nodes();
    let mut bulk = vec![0.0; n];
    let mut boundary = vec![0.0; n];
    for i in 0..grid.n_x {
        let cell = if grid.is_boundary_layer(i) { 0.5 } else { 1.0 };
        let wb = cell * r_axial[i] * dx * dth;
        let wd = if grid.is_boundary_layer(i) { r_axial[i] * dth } else { 0.0 };
        for j in 0..grid.n_theta {
            let p = grid.node(i, j);
            bulk[p] = wb;
            boundary[p] = wd;
        }
    }
    let combined = bulk.iter().zip(&boundary).map(|(b, d)| b + d).collect();
    Ok(QuadratureWeights { t, bulk, boundary, combined, r_axial })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn grid_minimum_sizes_are_enforced() {
        assert!(Grid::build(2, 8).is_err());
        assert!(Grid::build(8, 3).is_err());
        let g = Grid::build(3, 4).unwrap();
        assert_eq!(g.n_nodes(), 12);
        assert_relative_eq!(g.dx(), 0.5);
        assert_relative_eq!(g.dtheta(), TAU / 4.0);
    }

    #[test]
    fn flat_cylinder_measures_are_exact() {
        let g = Grid::build(8, 16).unwrap();
        let w = weights_at(0.0, &g, &Metric::StaticFlat).unwrap();
        // Bulk volume 2π, boundary length 2 circles × 2π, combined 6π.
        assert_relative_eq!(w.total_bulk(), TAU, max_relative = 1e-14);
        assert_relative_eq!(w.total_boundary(), 2.0 * TAU, max_relative = 1e-14);
        let total: f64 = w.combined.iter().sum();
        assert_relative_eq!(total, 6.0 * PI, max_relative = 1e-14);
    }

    #[test]
    fn breathing_radius_matches_closed_form_and_rejects_pinching() {
        let m = Metric::Breathing { amplitude: 0.3, omega: 2.0 };
        m.validate().unwrap();
        let (t, x) = (0.7, 0.4);
        assert_relative_eq!(m.r(t, x), 1.0 + 0.3 * (2.0 * t).sin() * 0.4);
        assert_relative_eq!(m.dr_dx(t, x), 0.3 * (2.0 * t).sin());
        assert!(!m.is_static());
        assert!(Metric::Breathing { amplitude: 1.0, omega: 1.0 }.validate().is_err());
    }

    #[test]
    fn nonpositive_radius_is_reported_with_location() {
        let m = Metric::Table {
            t_samples: vec![0.0],
            x_samples: vec![0.0, 1.0],
            r_values: vec![vec![1.0, -0.5]],
        };
        match m.validate() {
            Err(GeometryError::NonpositiveRadius { x, r, .. }) => {
                assert_eq!(x, 1.0);
                assert_eq!(r, -0.5);
            }
            other => panic!("expected NonpositiveRadius, got {other:?}"),
        }
    }

    #[test]
    fn table_interpolation_reproduces_cubics_in_x() {
        // Catmull-Rom with centred tangents is exact on quadratics away from
        // the one-sided end intervals.
        let xs: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
        let poly = |x: f64| 0.3 + 0.5 * x + 0.2 * x * x;
        let ys: Vec<f64> = xs.iter().map(|&x| poly(x)).collect();
        let m = Metric::Table {
            t_samples: vec![0.0],
            x_samples: xs,
            r_values: vec![ys],
        };
        m.validate().unwrap();
        for &x in &[0.2, 0.35, 0.5, 0.62, 0.8] {
            assert_relative_eq!(m.r(5.0, x), poly(x), max_relative = 1e-12);
        }
        assert!(m.is_static());
    }

    #[test]
    fn table_interpolation_is_smooth_in_time() {
        let m = Metric::Table {
            t_samples: vec![0.0, 0.5, 1.0, 1.5],
            x_samples: vec![0.0, 0.5, 1.0],
            r_values: vec![
                vec![1.0, 1.0, 1.0],
                vec![1.1, 1.2, 1.3],
                vec![1.0, 1.1, 1.2],
                vec![0.9, 1.0, 1.1],
            ],
        };
        m.validate().unwrap();
        assert!(!m.is_static());
        // Interpolant hits the samples exactly.
        assert_relative_eq!(m.r(0.5, 0.5), 1.2, max_relative = 1e-14);
        assert_relative_eq!(m.r(1.0, 1.0), 1.2, max_relative = 1e-14);
        // And clamps outside the sampled range.
        assert_relative_eq!(m.r(-3.0, 0.0), 1.0);
        assert_relative_eq!(m.r(9.0, 1.0), 1.1);
    }

    #[test]
    fn weights_scale_with_the_radius() {
        let g = Grid::build(6, 8).unwrap();
        let m = Metric::Breathing { amplitude: 0.5, omega: 1.0 };
        let t = 0.9;
        let w = weights_at(t, &g, &m).unwrap();
        // Bulk mass approximates ∫ r dx dθ = 2π (1 + a sin(ωt)/2) at second
        // order; the trapezoid-in-x rule is exact for the linear-in-x radius.
        let exact = TAU * (1.0 + 0.5 * (t).sin() * 0.5);
        assert_relative_eq!(w.total_bulk(), exact, max_relative = 1e-13);
        // Boundary weight of the outer circle uses r(t, 1).
        let p = g.node(g.n_x - 1, 0);
        assert_relative_eq!(w.boundary[p], m.r(t, 1.0) * g.dtheta(), max_relative = 1e-14);
    }
}
