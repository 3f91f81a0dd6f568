//! State vectors on the cylinder grid and the weighted inner products.
//!
//! A state X = (u, v) stores one complex value per grid node; the boundary
//! trace v is not duplicated — it *is* the value on the boundary layers
//! (structural enforcement of v = u|_∂M). The discrete U = L²(M) × L²(∂M)
//! inner product weights every node with the combined quadrature weight,
//! so boundary nodes carry bulk half-cell plus circle measure.

use crate::geometry::{Grid, QuadratureWeights};
use crate::C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Time-direction constant of the evolution: κ = 1 (heat) or κ = i
/// (Schrödinger).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kappa {
    Heat,
    Schrodinger,
}

impl Kappa {
    pub fn as_complex(self) -> C64 {
        match self {
            Kappa::Heat => C64::new(1.0, 0.0),
            Kappa::Schrodinger => C64::new(0.0, 1.0),
        }
    }
}

/// Deterministic RNG used everywhere randomness appears; a recorded seed
/// reproduces every certificate and trajectory bit-for-bit.
pub fn seeded_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// A complex field sampled on the grid nodes (boundary layers included).
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub grid: Grid,
    pub data: Vec<C64>,
}

impl StateVector {
    pub fn zeros(grid: &Grid) -> Self {
        StateVector { grid: *grid, data: vec![C64::ZERO; grid.n_nodes()] }
    }

    pub fn constant(grid: &Grid, value: C64) -> Self {
        StateVector { grid: *grid, data: vec![value; grid.n_nodes()] }
    }

    /// Samples a bulk field pointwise: data[node(i,j)] = f(x_i, θ_j). The
    /// boundary trace is the sampled value on the boundary layers.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64) -> C64) -> Self {
        let mut data = Vec::with_capacity(grid.n_nodes());
        for i in 0..grid.n_x {
            for j in 0..grid.n_theta {
                data.push(f(grid.x(i), grid.theta(j)));
            }
        }
        StateVector { grid: *grid, data }
    }

    /// Builds a forcing-type state from separate bulk and boundary fields,
    /// merging them on the boundary layers with the quadrature-weight lumping
    /// that matches the discrete operator's boundary rows:
    /// value = (w_bulk·f_bulk + w_bnd·f_bnd)/(w_bulk + w_bnd).
    ///
    /// Injecting interior/boundary forcing through this map keeps the scheme
    /// second-order accurate in space; plain pointwise injection of either
    /// field alone degrades the boundary layers to first order.
    pub fn from_fields(
        grid: &Grid,
        weights: &QuadratureWeights,
        mut f_bulk: impl FnMut(f64, f64) -> C64,
        mut f_bnd: impl FnMut(f64, f64) -> C64,
    ) -> Self {
        let mut state = Self::from_fn(grid, &mut f_bulk);
        for i in grid.boundary_layers() {
            let x = grid.x(i);
            for j in 0..grid.n_theta {
                let p = grid.node(i, j);
                let (wb, wd) = (weights.bulk[p], weights.boundary[p]);
                state.data[p] =
                    (wb * f_bulk(x, grid.theta(j)) + wd * f_bnd(x, grid.theta(j))) / (wb + wd);
            }
        }
        state
    }

    /// Seeded random state with independent real and imaginary parts uniform
    /// in [−1, 1] at every node.
    pub fn random(grid: &Grid, rng: &mut impl Rng) -> Self {
        let data = (0..grid.n_nodes())
            .map(|_| C64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)))
            .collect();
        StateVector { grid: *grid, data }
    }

    /// Seeded random state rescaled to a prescribed U-norm.
    pub fn random_with_norm(
        grid: &Grid,
        rng: &mut impl Rng,
        weights: &QuadratureWeights,
        norm: f64,
    ) -> Self {
        let mut s = Self::random(grid, rng);
        let current = s.norm_u(weights);
        if current > 0.0 {
            s.scale(C64::new(norm / current, 0.0));
        }
        s
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Largest nodal modulus (sup norm).
    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, z| a.max(z.norm()))
    }

    /// Weighted U-norm √Σ W_p |X_p|².
    pub fn norm_u(&self, weights: &QuadratureWeights) -> f64 {
        inner_u(self, self, weights).re.max(0.0).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&mut self, c: C64) {
        for z in &mut self.data {
            *z *= c;
        }
    }

    /// self += c · other.
    pub fn axpy(&mut self, c: C64, other: &StateVector) {
        debug_assert_eq!(self.len(), other.len());
        for (z, w) in self.data.iter_mut().zip(&other.data) {
            *z += c * w;
        }
    }

    pub fn sub(&self, other: &StateVector) -> StateVector {
        let mut out = self.clone();
        out.axpy(C64::new(-1.0, 0.0), other);
        out
    }
}

/// Compensated (Kahan) summation accumulator for one real component.
#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

fn weighted_inner(a: &StateVector, b: &StateVector, w: &[f64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    debug_assert_eq!(a.len(), w.len());
    let (mut re, mut im) = (Kahan::default(), Kahan::default());
    for ((x, y), &wi) in a.data.iter().zip(&b.data).zip(w) {
        let prod = x.conj() * y;
        re.add(wi * prod.re);
        im.add(wi * prod.im);
    }
    C64::new(re.sum, im.sum)
}

/// Full U inner product ⟨X, Y⟩ = Σ (w_bulk + w_bnd) X̄ Y (conjugate-linear in
/// the first argument).
pub fn inner_u(a: &StateVector, b: &StateVector, weights: &QuadratureWeights) -> C64 {
    weighted_inner(a, b, &weights.combined)
}

/// Bulk-only inner product ⟨u_X, u_Y⟩_{L²(M)} (boundary layers contribute
/// their half-cell bulk weight only).
pub fn inner_bulk(a: &StateVector, b: &StateVector, weights: &QuadratureWeights) -> C64 {
    weighted_inner(a, b, &weights.bulk)
}

/// Boundary-only inner product ⟨v_X, v_Y⟩_{L²(∂M)}.
pub fn inner_boundary(a: &StateVector, b: &StateVector, weights: &QuadratureWeights) -> C64 {
    weighted_inner(a, b, &weights.boundary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{weights_at, Metric};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn flat_setup() -> (Grid, QuadratureWeights) {
        let g = Grid::build(8, 16).unwrap();
        let w = weights_at(0.0, &g, &Metric::StaticFlat).unwrap();
        (g, w)
    }

    #[test]
    fn constant_state_has_inner_product_six_pi() {
        let (g, w) = flat_setup();
        let one = StateVector::constant(&g, C64::new(1.0, 0.0));
        assert_relative_eq!(inner_u(&one, &one, &w).re, 6.0 * PI, max_relative = 1e-13);
        assert_relative_eq!(inner_bulk(&one, &one, &w).re, 2.0 * PI, max_relative = 1e-13);
        assert_relative_eq!(inner_boundary(&one, &one, &w).re, 4.0 * PI, max_relative = 1e-13);
    }

    #[test]
    fn inner_product_is_conjugate_symmetric_and_positive() {
        let (g, w) = flat_setup();
        let mut rng = seeded_rng(7);
        let a = StateVector::random(&g, &mut rng);
        let b = StateVector::random(&g, &mut rng);
        let ab = inner_u(&a, &b, &w);
        let ba = inner_u(&b, &a, &w);
        assert_relative_eq!(ab.re, ba.re, max_relative = 1e-14);
        assert_relative_eq!(ab.im, -ba.im, max_relative = 1e-14);
        assert!(inner_u(&a, &a, &w).re > 0.0);
        assert!(inner_u(&a, &a, &w).im.abs() <= 1e-15 * inner_u(&a, &a, &w).re);
    }

    #[test]
    fn random_states_are_reproducible_from_the_seed() {
        let (g, w) = flat_setup();
        let a = StateVector::random_with_norm(&g, &mut seeded_rng(42), &w, 0.5);
        let b = StateVector::random_with_norm(&g, &mut seeded_rng(42), &w, 0.5);
        assert_eq!(a, b);
        assert_relative_eq!(a.norm_u(&w), 0.5, max_relative = 1e-13);
    }

    #[test]
    fn lumped_field_injection_averages_on_the_boundary() {
        let (g, w) = flat_setup();
        let s = StateVector::from_fields(
            &g,
            &w,
            |_, _| C64::new(2.0, 0.0),
            |_, _| C64::new(10.0, 0.0),
        );
        // Interior nodes keep the bulk value.
        assert_eq!(s.data[g.node(3, 2)], C64::new(2.0, 0.0));
        // Boundary nodes blend with weights w_bulk : w_bnd = dx/2 : 1 (flat).
        let p = g.node(0, 0);
        let expect = (w.bulk[p] * 2.0 + w.boundary[p] * 10.0) / (w.bulk[p] + w.boundary[p]);
        assert_relative_eq!(s.data[p].re, expect, max_relative = 1e-15);
    }

    #[test]
    fn sup_norm_bounded_by_weighted_norm_over_min_weight() {
        let (g, w) = flat_setup();
        let mut rng = seeded_rng(3);
        let s = StateVector::random(&g, &mut rng);
        assert!(s.sup_norm() <= s.norm_u(&w) / w.min_combined().sqrt() + 1e-12);
    }
}
