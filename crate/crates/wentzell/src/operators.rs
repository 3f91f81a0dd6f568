//! Discrete operators: stiffness form, Wentzell generator, trace maps.
//!
//! The generator A(t) = (Δ, 0; −ρ, Δ_b) is discretized as a lumped Galerkin
//! operator A = −W⁻¹K, where W is the diagonal of combined quadrature weights
//! and K is the stiffness matrix of the metric energy form
//!
//! ```text
//!   E_t(u, v) = ∫_M ⟨∇u, ∇v⟩_g dμ_g + ∫_∂M ⟨∇_b u, ∇_b v⟩_h dμ_h ,
//! ```
//!
//! assembled face-by-face (axial faces with midpoint radius, angular faces
//! with nodal radius, boundary circles with the induced metric). K is
//! symmetric positive semidefinite with constants in its kernel by
//! construction, so A is self-adjoint and dissipative in the weighted inner
//! product *to machine precision*, not merely to discretization order.
//!
//! Interior rows of A reduce to the flux-form finite-volume Laplacian
//! (second-order consistent); each boundary row is the quadrature-weighted
//! lumping of the bulk equation on the half cell with the boundary equation
//! Δ_b v − ρ(u), first-order consistent against the boundary equation alone
//! but second-order against the lumped pair, which is what governs solution
//! convergence when forcing is injected through the same lumping.

use crate::geometry::{weights_at, GeometryError, Grid, Metric, QuadratureWeights};
use crate::state::{inner_boundary, inner_bulk, StateVector};
use crate::tolerances;
use crate::C64;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("assembly inconsistency: {0}")]
    AssemblyInconsistency(String),
    #[error("shape mismatch: operator on {expected} nodes applied to {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Compressed sparse row matrix with real entries.
#[derive(Clone, Debug)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Builds from unordered (row, col, value) triplets; duplicates are
    /// summed, explicit zeros kept (pattern symmetry checks rely on them).
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut t: Vec<(usize, usize, f64)>) -> Csr {
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last = None;
        for (r, c, v) in t {
            debug_assert!(r < n_rows && c < n_cols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        // Prefix-sum the per-row counts accumulated above.
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        Csr { n_rows, n_cols, indptr, indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
    }

    pub fn matvec_complex(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let mut acc = C64::ZERO;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows.min(self.n_cols)];
        for r in 0..d.len() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if c == r {
                    d[r] += v;
                }
            }
        }
        d
    }

    /// Largest absolute asymmetry max |K_ij − K_ji| (square matrices).
    pub fn max_asymmetry(&self) -> f64 {
        assert_eq!(self.n_rows, self.n_cols);
        let mut map = std::collections::HashMap::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                map.insert((r, c), v);
            }
        }
        let mut worst = 0.0f64;
        for (&(r, c), &v) in &map {
            let vt = map.get(&(c, r)).copied().unwrap_or(0.0);
            worst = worst.max((v - vt).abs());
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// Writes the matrix in coordinate format: one `row col value` line per
    /// stored entry, rows ascending.
    pub fn write_coordinates(&self, out: &mut impl Write) -> std::io::Result<()> {
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(out, "{} {} {}", r, c, v)?;
            }
        }
        Ok(())
    }
}

/// The discrete Wentzell generator A(t) = −W⁻¹K at a fixed time.
#[derive(Clone, Debug)]
pub struct WentzellOperator {
    pub grid: Grid,
    pub t: f64,
    /// Stiffness matrix of the energy form (symmetric PSD).
    pub stiffness: Csr,
    pub weights: QuadratureWeights,
}

/// Assembles the stiffness matrix K of the energy form at time `t`.
fn assemble_stiffness(t: f64, grid: &Grid, metric: &Metric, w: &QuadratureWeights) -> Csr {
    let n = grid.n_nodes();
    let (dx, dth) = (grid.dx(), grid.dtheta());
    let mut trip = Vec::with_capacity(8 * n);
    let mut face = |p: usize, q: usize, c: f64| {
        trip.push((p, p, c));
        trip.push((q, q, c));
        trip.push((p, q, -c));
        trip.push((q, p, -c));
    };
    // Axial faces: ∫ r |∂_x u|² dx dθ ≈ Σ r(x_{i+1/2}) dθ/dx · |u_{i+1}−u_i|².
    for i in 0..grid.n_x - 1 {
        let rh = metric.r(t, grid.x(i) + 0.5 * dx);
        let c = rh * dth / dx;
        for j in 0..grid.n_theta {
            face(grid.node(i, j), grid.node(i + 1, j), c);
        }
    }
    // Angular faces: bulk ∫ |∂_θ u|²/r dx dθ with half cells on the boundary
    // layers, plus the induced boundary form ∫ |∂_θ v|²/r_b dθ there.
    for i in 0..grid.n_x {
        let cell = if grid.is_boundary_layer(i) { 0.5 } else { 1.0 };
        let r = w.r_axial[i];
        let mut c = cell * dx / (r * dth);
        if grid.is_boundary_layer(i) {
            c += 1.0 / (r * dth);
        }
        for j in 0..grid.n_theta {
            face(grid.node(i, j), grid.node(i, (j + 1) % grid.n_theta), c);
        }
    }
    Csr::from_triplets(n, n, trip)
}

/// Assembles the Wentzell generator at time `t`, verifying stiffness
/// symmetry and weight positivity before returning.
pub fn assemble_wentzell_operator(
    t: f64,
    grid: &Grid,
    metric: &Metric,
) -> Result<WentzellOperator, OperatorError> {
    let weights = weights_at(t, grid, metric)?;
    let stiffness = assemble_stiffness(t, grid, metric, &weights);
    let asym = stiffness.max_asymmetry();
    let scale = stiffness.max_abs().max(1.0);
    if asym > tolerances::ASSEMBLY_CONSISTENCY * scale {
        return Err(OperatorError::AssemblyInconsistency(format!(
            "stiffness asymmetry {asym:.3e} exceeds {:.1e} x scale {scale:.3e}",
            tolerances::ASSEMBLY_CONSISTENCY
        )));
    }
    if weights.combined.iter().any(|&w| !(w > 0.0)) {
        return Err(OperatorError::AssemblyInconsistency(
            "nonpositive combined quadrature weight".into(),
        ));
    }
    Ok(WentzellOperator { grid: *grid, t, stiffness, weights })
}

impl WentzellOperator {
    pub fn n(&self) -> usize {
        self.grid.n_nodes()
    }

    fn check_shape(&self, x: &StateVector) -> Result<(), OperatorError> {
        if x.len() != self.n() {
            return Err(OperatorError::ShapeMismatch { expected: self.n(), got: x.len() });
        }
        Ok(())
    }

    /// y = A x = −W⁻¹ K x.
    pub fn apply(&self, x: &StateVector) -> StateVector {
        let mut y = StateVector::zeros(&self.grid);
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &StateVector, y: &mut StateVector) {
        self.stiffness.matvec_complex(&x.data, &mut y.data);
        for (z, &w) in y.data.iter_mut().zip(&self.weights.combined) {
            *z = -*z / w;
        }
    }

    /// Energy form E(X, Y) = X*KY (conjugate-linear in the first argument);
    /// equals −⟨X, AY⟩_U exactly.
    pub fn energy(&self, x: &StateVector, y: &StateVector) -> C64 {
        let mut ky = vec![C64::ZERO; self.n()];
        self.stiffness.matvec_complex(&y.data, &mut ky);
        let mut acc = C64::ZERO;
        for (xi, kyi) in x.data.iter().zip(&ky) {
            acc += xi.conj() * kyi;
        }
        acc
    }

    /// ‖A X‖_U (graph seminorm of the generator).
    pub fn graph_norm(&self, x: &StateVector) -> f64 {
        self.apply(x).norm_u(&self.weights)
    }

    /// Re⟨X, AX⟩ computed through the public apply/inner path (≤ 0 up to
    /// rounding).
    pub fn dissipation(&self, x: &StateVector) -> Result<f64, OperatorError> {
        self.check_shape(x)?;
        Ok(crate::state::inner_u(x, &self.apply(x), &self.weights).re)
    }
}

/// Values of a field on the two boundary circles (inner circle x = 0 first).
#[derive(Clone, Debug)]
pub struct BoundaryField {
    pub inner: Vec<C64>,
    pub outer: Vec<C64>,
}

impl BoundaryField {
    /// Embeds the field into a full state (zero at interior nodes), which
    /// lets the boundary-weighted inner products act on it directly.
    pub fn into_state(self, grid: &Grid) -> StateVector {
        let mut s = StateVector::zeros(grid);
        let [i0, i1] = grid.boundary_layers();
        for j in 0..grid.n_theta {
            s.data[grid.node(i0, j)] = self.inner[j];
            s.data[grid.node(i1, j)] = self.outer[j];
        }
        s
    }
}

/// Dirichlet trace γ: restriction of the state to the boundary circles.
pub fn dirichlet_trace(grid: &Grid, x: &StateVector) -> BoundaryField {
    let [i0, i1] = grid.boundary_layers();
    BoundaryField {
        inner: (0..grid.n_theta).map(|j| x.data[grid.node(i0, j)]).collect(),
        outer: (0..grid.n_theta).map(|j| x.data[grid.node(i1, j)]).collect(),
    }
}

/// Neumann trace ρ: outward normal derivative, one-sided first-order stencil
/// ρ = −(u₁ − u₀)/dx at x = 0 and ρ = +(u_{N} − u_{N−1})/dx at x = 1. Exact
/// on fields linear in x; the same stencil is the boundary flux of the bulk
/// Laplacian, which is what makes the discrete Green identity exact.
pub fn neumann_trace(grid: &Grid, x: &StateVector) -> BoundaryField {
    let dx = grid.dx();
    let n = grid.n_x;
    let inner = (0..grid.n_theta)
        .map(|j| -(x.data[grid.node(1, j)] - x.data[grid.node(0, j)]) / dx)
        .collect();
    let outer = (0..grid.n_theta)
        .map(|j| (x.data[grid.node(n - 1, j)] - x.data[grid.node(n - 2, j)]) / dx)
        .collect();
    BoundaryField { inner, outer }
}

/// Bulk Laplace–Beltrami operator Δ on all nodes, flux form with half cells
/// on the boundary layers and the Neumann-trace stencil as outer flux. Its
/// weighted skew part telescopes exactly against the trace maps (discrete
/// Green identity); interior rows are second-order consistent with Δ.
pub fn assemble_bulk_laplacian(t: f64, grid: &Grid, metric: &Metric) -> Result<Csr, OperatorError> {
    let w = weights_at(t, grid, metric)?;
    let n = grid.n_nodes();
    let (dx, dth) = (grid.dx(), grid.dtheta());
    let nx = grid.n_x;
    let mut trip = Vec::with_capacity(8 * n);
    for i in 0..nx {
        let r = w.r_axial[i];
        let cell = if grid.is_boundary_layer(i) { 0.5 } else { 1.0 };
        let vol = cell * r * dx; // per-column 1D cell volume (dθ cancels)
        for j in 0..grid.n_theta {
            let p = grid.node(i, j);
            // Axial flux divergence [F_outer − F_inner]/vol with face fluxes
            // F = r_face (u_hi − u_lo)/dx; on the boundary layers the outer
            // face flux is r_b times the one-sided Neumann-trace stencil.
            let (lo_hi, lo_lo, lo_r) = if i > 0 {
                (grid.node(i, j), grid.node(i - 1, j), metric.r(t, grid.x(i) - 0.5 * dx))
            } else {
                (grid.node(1, j), grid.node(0, j), r)
            };
            let c_lo = lo_r / (dx * vol);
            trip.push((p, lo_hi, -c_lo));
            trip.push((p, lo_lo, c_lo));
            let (hi_hi, hi_lo, hi_r) = if i + 1 < nx {
                (grid.node(i + 1, j), grid.node(i, j), metric.r(t, grid.x(i) + 0.5 * dx))
            } else {
                (grid.node(nx - 1, j), grid.node(nx - 2, j), r)
            };
            let c_hi = hi_r / (dx * vol);
            trip.push((p, hi_hi, c_hi));
            trip.push((p, hi_lo, -c_hi));
            // Angular part (1/r²) ∂²_θ, periodic second difference.
            let ca = 1.0 / (r * r * dth * dth);
            let (jm, jp) = ((j + grid.n_theta - 1) % grid.n_theta, (j + 1) % grid.n_theta);
            trip.push((p, grid.node(i, jm), ca));
            trip.push((p, p, -2.0 * ca));
            trip.push((p, grid.node(i, jp), ca));
        }
    }
    Ok(Csr::from_triplets(n, n, trip))
}

/// Boundary Laplace–Beltrami operators Δ_b = (1/r_b²) ∂²_θ, one periodic
/// tridiagonal matrix per circle.
pub struct BoundaryLaplacian {
    /// Operators for the circles x = 0 and x = 1.
    pub circles: [Csr; 2],
    pub r_b: [f64; 2],
}

pub fn assemble_boundary_laplacian(
    t: f64,
    grid: &Grid,
    metric: &Metric,
) -> Result<BoundaryLaplacian, OperatorError> {
    let w = weights_at(t, grid, metric)?;
    let m = grid.n_theta;
    let dth = grid.dtheta();
    let r_b = [w.r_axial[0], w.r_axial[grid.n_x - 1]];
    let make = |r: f64| {
        let c = 1.0 / (r * r * dth * dth);
        let mut trip = Vec::with_capacity(3 * m);
        for j in 0..m {
            trip.push((j, (j + m - 1) % m, c));
            trip.push((j, j, -2.0 * c));
            trip.push((j, (j + 1) % m, c));
        }
        Csr::from_triplets(m, m, trip)
    };
    Ok(BoundaryLaplacian { circles: [make(r_b[0]), make(r_b[1])], r_b })
}

impl BoundaryLaplacian {
    pub fn apply(&self, f: &BoundaryField) -> BoundaryField {
        let mut inner = vec![C64::ZERO; f.inner.len()];
        let mut outer = vec![C64::ZERO; f.outer.len()];
        self.circles[0].matvec_complex(&f.inner, &mut inner);
        self.circles[1].matvec_complex(&f.outer, &mut outer);
        BoundaryField { inner, outer }
    }
}

/// Absolute residual of the discrete Green identity
///
/// ```text
///   ⟨Δu, y⟩_{L²(M)} − ⟨u, Δy⟩_{L²(M)} = ⟨ρ(u), y⟩_{L²(∂M)} − ⟨u, ρ(y)⟩_{L²(∂M)}
/// ```
///
/// evaluated with the bulk Laplacian and trace maps above (all inner products
/// conjugate-linear in the second slot here, i.e. ∫ a·b̄). Zero up to rounding
/// by the summation-by-parts construction; callers compare against
/// [`tolerances::GREEN_IDENTITY_REL`]·‖X‖·‖Y‖.
pub fn green_identity_residual(
    t: f64,
    grid: &Grid,
    metric: &Metric,
    x: &StateVector,
    y: &StateVector,
) -> Result<f64, OperatorError> {
    let w = weights_at(t, grid, metric)?;
    let lap = assemble_bulk_laplacian(t, grid, metric)?;
    let mut lx = StateVector::zeros(grid);
    let mut ly = StateVector::zeros(grid);
    lap.matvec_complex(&x.data, &mut lx.data);
    lap.matvec_complex(&y.data, &mut ly.data);
    // inner_bulk(a, b) = Σ w ā b, so ⟨Δu, y⟩ = Σ w (Δu) ȳ = inner_bulk(Y, ΔX).
    let lhs = inner_bulk(y, &lx, &w) - inner_bulk(x, &ly, &w).conj();
    let rho_x = neumann_trace(grid, x).into_state(grid);
    let rho_y = neumann_trace(grid, y).into_state(grid);
    let rhs = inner_boundary(y, &rho_x, &w) - inner_boundary(x, &rho_y, &w).conj();
    Ok((lhs - rhs).norm())
}
