//! Shifted elliptic solves: resolvent equations and Crank–Nicolson systems.
//!
//! Everything the evolution needs reduces to one family of linear systems,
//!
//! ```text
//!   (W + κ σ K) X = b,          σ > 0,
//! ```
//!
//! where K is the stiffness matrix and W the lumped mass diagonal. For κ = 1
//! the matrix is real symmetric positive definite (Cholesky below the dense
//! limit, Jacobi-preconditioned CG above). For κ = i it is complex symmetric;
//! splitting X = p + iq, b = g + ih gives the real symmetric-indefinite block
//! system
//!
//! ```text
//!   [  W   −σK ] [p]   [ g ]
//!   [ −σK  −W  ] [q] = [−h ]
//! ```
//!
//! solved densely by LU of the complex matrix below the limit and by
//! diagonally preconditioned MINRES above. The resolvent (κA − λ)X = F is the
//! case σ = 1/λ with right-hand side −W F/λ.

use crate::operators::WentzellOperator;
use crate::state::{inner_u, seeded_rng, Kappa, StateVector};
use crate::tolerances;
use crate::C64;
use nalgebra::{DMatrix, DVector, Dyn};
use thiserror::Error;

/// Problems at or above this many unknowns switch from dense factorization to
/// the preconditioned iterative solvers.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("resolvent shift must be positive and finite, got {0}")]
    InvalidShift(f64),
    #[error("linear solver did not converge: residual {residual:.3e} (target {target:.3e}) after {iterations} iterations")]
    NonConvergence { residual: f64, target: f64, iterations: usize },
    #[error("dense factorization failed on a {n} x {n} system")]
    FactorizationFailed { n: usize },
    #[error("shape mismatch: solver on {expected} unknowns got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

enum Backend {
    /// Real Cholesky of W + σK (κ = 1, dense path).
    Cholesky(nalgebra::Cholesky<f64, Dyn>),
    /// Complex LU of W + iσK (κ = i, dense path).
    Lu(nalgebra::LU<C64, Dyn, Dyn>),
    Iterative,
}

/// A (possibly factored) solver for (W + κσK) X = b, reusable across many
/// right-hand sides — Crank–Nicolson stepping with a frozen matrix and Picard
/// sweeps re-solve with the same factor.
pub struct ShiftedSolver {
    pub kappa: Kappa,
    pub sigma: f64,
    op: WentzellOperator,
    /// Diagonal of W + σ·diag(K): Jacobi preconditioner for both κ.
    precond: Vec<f64>,
    backend: Backend,
}

impl ShiftedSolver {
    pub fn new(op: &WentzellOperator, kappa: Kappa, sigma: f64) -> Result<Self, SolveError> {
        Self::with_dense_limit(op, kappa, sigma, DENSE_LIMIT)
    }

    /// As [`ShiftedSolver::new`] with an explicit dense/iterative crossover
    /// (tests force the iterative path on small systems this way).
    pub fn with_dense_limit(
        op: &WentzellOperator,
        kappa: Kappa,
        sigma: f64,
        dense_limit: usize,
    ) -> Result<Self, SolveError> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(SolveError::InvalidShift(sigma));
        }
        let n = op.n();
        let kdiag = op.stiffness.diagonal();
        let precond: Vec<f64> = op
            .weights
            .combined
            .iter()
            .zip(&kdiag)
            .map(|(&w, &k)| w + sigma * k.abs())
            .collect();
        let backend = if n < dense_limit {
            match kappa {
                Kappa::Heat => {
                    let mut m = op.stiffness.to_dense();
                    m.scale_mut(sigma);
                    for i in 0..n {
                        m[(i, i)] += op.weights.combined[i];
                    }
                    let chol = nalgebra::Cholesky::new(m)
                        .ok_or(SolveError::FactorizationFailed { n })?;
                    Backend::Cholesky(chol)
                }
                Kappa::Schrodinger => {
                    let dense = op.stiffness.to_dense();
                    let mut m = DMatrix::<C64>::zeros(n, n);
                    for r in 0..n {
                        for c in 0..n {
                            m[(r, c)] = C64::new(0.0, sigma * dense[(r, c)]);
                        }
                        m[(r, r)] += C64::new(op.weights.combined[r], 0.0);
                    }
                    let lu = m.lu();
                    Backend::Lu(lu)
                }
            }
        } else {
            Backend::Iterative
        };
        Ok(ShiftedSolver { kappa, sigma, op: op.clone(), precond, backend })
    }

    pub fn n(&self) -> usize {
        self.op.n()
    }

    pub fn operator(&self) -> &WentzellOperator {
        &self.op
    }

    /// Applies the shifted matrix: y = (W + κσK) x.
    pub fn apply_shifted(&self, x: &[C64], y: &mut [C64]) {
        self.op.stiffness.matvec_complex(x, y);
        let ks = self.kappa.as_complex() * self.sigma;
        for (i, v) in y.iter_mut().enumerate() {
            *v = self.op.weights.combined[i] * x[i] + ks * *v;
        }
    }

    fn residual_norm(&self, x: &[C64], b: &[C64]) -> f64 {
        let mut ax = vec![C64::ZERO; b.len()];
        self.apply_shifted(x, &mut ax);
        let mut num = 0.0f64;
        for (axi, bi) in ax.iter().zip(b) {
            num += (axi - bi).norm_sqr();
        }
        num.sqrt()
    }

    /// Solves (W + κσK) X = b, certifying the relative residual.
    pub fn solve(&self, b: &[C64]) -> Result<(Vec<C64>, SolveStats), SolveError> {
        if b.len() != self.n() {
            return Err(SolveError::ShapeMismatch { expected: self.n(), got: b.len() });
        }
        let b_norm = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if b_norm == 0.0 {
            return Ok((vec![C64::ZERO; b.len()], SolveStats::default()));
        }
        let (mut x, mut stats) = self.solve_once(b)?;
        let mut residual = self.residual_norm(&x, b);
        if residual > tolerances::ITERATIVE_SOLVER_REL * b_norm {
            // One step of iterative refinement mops up factorization rounding.
            let mut r = vec![C64::ZERO; b.len()];
            self.apply_shifted(&x, &mut r);
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri = bi - *ri;
            }
            let (dx, s2) = self.solve_once(&r)?;
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            stats.iterations += s2.iterations;
            residual = self.residual_norm(&x, b);
        }
        stats.residual = residual / b_norm;
        if stats.residual > 10.0 * tolerances::ITERATIVE_SOLVER_REL {
            return Err(SolveError::NonConvergence {
                residual: stats.residual,
                target: tolerances::ITERATIVE_SOLVER_REL,
                iterations: stats.iterations,
            });
        }
        Ok((x, stats))
    }

    fn solve_once(&self, b: &[C64]) -> Result<(Vec<C64>, SolveStats), SolveError> {
        let n = self.n();
        match &self.backend {
            Backend::Cholesky(chol) => {
                let re = DVector::from_iterator(n, b.iter().map(|z| z.re));
                let im = DVector::from_iterator(n, b.iter().map(|z| z.im));
                let xr = chol.solve(&re);
                let xi = chol.solve(&im);
                let x = (0..n).map(|i| C64::new(xr[i], xi[i])).collect();
                Ok((x, SolveStats { iterations: 1, residual: 0.0 }))
            }
            Backend::Lu(lu) => {
                let bv = DVector::from_iterator(n, b.iter().copied());
                let x = lu.solve(&bv).ok_or(SolveError::FactorizationFailed { n })?;
                Ok((x.iter().copied().collect(), SolveStats { iterations: 1, residual: 0.0 }))
            }
            Backend::Iterative => match self.kappa {
                Kappa::Heat => {
                    let apply = |x: &[f64], y: &mut [f64]| {
                        self.op.stiffness.matvec(x, y);
                        for i in 0..n {
                            y[i] = self.op.weights.combined[i] * x[i] + self.sigma * y[i];
                        }
                    };
                    let re: Vec<f64> = b.iter().map(|z| z.re).collect();
                    let im: Vec<f64> = b.iter().map(|z| z.im).collect();
                    let (xr, it1) = pcg(&apply, &self.precond, &re)?;
                    let (xi, it2) = pcg(&apply, &self.precond, &im)?;
                    let x = (0..n).map(|i| C64::new(xr[i], xi[i])).collect();
                    Ok((x, SolveStats { iterations: it1 + it2, residual: 0.0 }))
                }
                Kappa::Schrodinger => {
                    // Real symmetric-indefinite block form; see module docs.
                    let apply = |v: &[f64], out: &mut [f64]| {
                        let (p, q) = v.split_at(n);
                        let (top, bot) = out.split_at_mut(n);
                        self.op.stiffness.matvec(q, top);
                        self.op.stiffness.matvec(p, bot);
                        for i in 0..n {
                            let kp = bot[i];
                            let kq = top[i];
                            top[i] = self.op.weights.combined[i] * p[i] - self.sigma * kq;
                            bot[i] = -self.sigma * kp - self.op.weights.combined[i] * q[i];
                        }
                    };
                    let mut rhs = vec![0.0; 2 * n];
                    for i in 0..n {
                        rhs[i] = b[i].re;
                        rhs[n + i] = -b[i].im;
                    }
                    let mut precond2 = Vec::with_capacity(2 * n);
                    precond2.extend_from_slice(&self.precond);
                    precond2.extend_from_slice(&self.precond);
                    let (sol, iters) = minres(&apply, &precond2, &rhs)?;
                    let x = (0..n).map(|i| C64::new(sol[i], sol[n + i])).collect();
                    Ok((x, SolveStats { iterations: iters, residual: 0.0 }))
                }
            },
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients for SPD systems.
fn pcg(
    apply: &impl Fn(&[f64], &mut [f64]),
    precond: &[f64],
    b: &[f64],
) -> Result<(Vec<f64>, usize), SolveError> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let tol = tolerances::ITERATIVE_SOLVER_REL * b_norm;
    let max_iter = 20 * n + 200;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(precond).map(|(ri, mi)| ri / mi).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= tol {
            return Ok((x, it));
        }
        for i in 0..n {
            z[i] = r[i] / precond[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let residual = dot(&r, &r).sqrt() / b_norm;
    Err(SolveError::NonConvergence {
        residual,
        target: tolerances::ITERATIVE_SOLVER_REL,
        iterations: max_iter,
    })
}

/// Preconditioned MINRES for symmetric (possibly indefinite) systems with an
/// SPD diagonal preconditioner. Standard Lanczos/Givens recurrence; the
/// preconditioned residual norm is tracked as `phibar`.
fn minres(
    apply: &impl Fn(&[f64], &mut [f64]),
    precond: &[f64],
    b: &[f64],
) -> Result<(Vec<f64>, usize), SolveError> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let max_iter = 20 * n + 200;
    let mut x = vec![0.0; n];
    let mut r1 = b.to_vec();
    let mut y: Vec<f64> = r1.iter().zip(precond).map(|(ri, mi)| ri / mi).collect();
    let beta1_sq = dot(&r1, &y);
    if beta1_sq <= 0.0 {
        return Err(SolveError::FactorizationFailed { n });
    }
    let beta1 = beta1_sq.sqrt();
    let tol = tolerances::ITERATIVE_SOLVER_REL;

    let mut r2 = r1.clone();
    let mut beta = beta1;
    let mut oldb = 0.0;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0f64;
    let mut sn = 0.0f64;
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut work = vec![0.0; n];

    for itn in 1..=max_iter {
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = s * y[i];
        }
        apply(&v, &mut work);
        if itn >= 2 {
            let c = beta / oldb;
            for i in 0..n {
                work[i] -= c * r1[i];
            }
        }
        let alfa = dot(&v, &work);
        let c = alfa / beta;
        for i in 0..n {
            work[i] -= c * r2[i];
        }
        r1.copy_from_slice(&r2);
        r2.copy_from_slice(&work);
        for i in 0..n {
            y[i] = r2[i] / precond[i];
        }
        oldb = beta;
        let beta_sq = dot(&r2, &y);
        if beta_sq < 0.0 {
            return Err(SolveError::FactorizationFailed { n });
        }
        beta = beta_sq.sqrt();

        // Rotate the last column of the tridiagonal and update the solution.
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        for i in 0..n {
            let w1i = w2[i];
            w2[i] = w[i];
            w[i] = (v[i] - oldeps * w1i - delta * w2[i]) / gamma;
            x[i] += phi * w[i];
        }

        if phibar <= tol * beta1 {
            return Ok((x, itn));
        }
    }
    Err(SolveError::NonConvergence {
        residual: phibar / beta1,
        target: tol,
        iterations: max_iter,
    })
}

/// Solves the resolvent equation (κA − λ)X = F for λ > 0, certifying
/// ‖(κA − λ)X − F‖ ≤ [`tolerances::RESOLVENT_RESIDUAL_REL`]·‖F‖ in the
/// weighted norm before returning.
pub fn resolvent_solve(
    op: &WentzellOperator,
    kappa: Kappa,
    lambda: f64,
    f: &StateVector,
) -> Result<StateVector, SolveError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(SolveError::InvalidShift(lambda));
    }
    let solver = ShiftedSolver::new(op, kappa, 1.0 / lambda)?;
    let n = op.n();
    if f.len() != n {
        return Err(SolveError::ShapeMismatch { expected: n, got: f.len() });
    }
    let rhs: Vec<C64> = (0..n)
        .map(|i| -op.weights.combined[i] * f.data[i] / lambda)
        .collect();
    let (xd, stats) = solver.solve(&rhs)?;
    let x = StateVector { grid: op.grid, data: xd };
    // Certify the true resolvent residual in the U norm.
    let mut res = op.apply(&x);
    let k = kappa.as_complex();
    for (i, z) in res.data.iter_mut().enumerate() {
        *z = k * *z - lambda * x.data[i] - f.data[i];
    }
    let f_norm = f.norm_u(&op.weights);
    let r_norm = res.norm_u(&op.weights);
    if r_norm > tolerances::RESOLVENT_RESIDUAL_REL * f_norm {
        return Err(SolveError::NonConvergence {
            residual: r_norm / f_norm.max(f64::MIN_POSITIVE),
            target: tolerances::RESOLVENT_RESIDUAL_REL,
            iterations: stats.iterations,
        });
    }
    Ok(x)
}

/// Sampled lower bound of the coercivity quotient
/// B(X,X)/‖X‖_V² = (E(X,X) + λ‖X‖_U²)/(E(X,X) + ‖X‖_U²)
/// over seeded random states; the analytic bound is min{1, λ}.
pub fn coercivity_estimate(
    op: &WentzellOperator,
    lambda: f64,
    n_samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = seeded_rng(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..n_samples {
        let x = StateVector::random(&op.grid, &mut rng);
        let e = op.energy(&x, &x).re;
        let u = inner_u(&x, &x, &op.weights).re;
        worst = worst.min((e + lambda * u) / (e + u));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Grid, Metric};
    use crate::operators::assemble_wentzell_operator;
    use crate::state::seeded_rng;
    use approx::assert_relative_eq;

    fn setup(n_x: usize, n_theta: usize) -> WentzellOperator {
        let g = Grid::build(n_x, n_theta).unwrap();
        let m = Metric::Breathing { amplitude: 0.25, omega: 1.3 };
        assemble_wentzell_operator(0.45, &g, &m).unwrap()
    }

    #[test]
    fn resolvent_rejects_nonpositive_shifts() {
        let op = setup(6, 8);
        let f = StateVector::constant(&op.grid, C64::new(1.0, 0.0));
        assert!(matches!(
            resolvent_solve(&op, Kappa::Heat, 0.0, &f),
            Err(SolveError::InvalidShift(_))
        ));
        assert!(matches!(
            resolvent_solve(&op, Kappa::Schrodinger, -2.0, &f),
            Err(SolveError::InvalidShift(_))
        ));
    }

    #[test]
    fn resolvent_satisfies_the_contraction_bound() {
        let op = setup(8, 12);
        let mut rng = seeded_rng(5);
        for kappa in [Kappa::Heat, Kappa::Schrodinger] {
            for lambda in [0.3, 1.0, 50.0] {
                let f = StateVector::random(&op.grid, &mut rng);
                let x = resolvent_solve(&op, kappa, lambda, &f).unwrap();
                let bound = f.norm_u(&op.weights) / lambda;
                assert!(
                    x.norm_u(&op.weights) <= bound * (1.0 + 1e-10),
                    "kappa {kappa:?} lambda {lambda}: |X| = {} > |F|/lambda = {}",
                    x.norm_u(&op.weights),
                    bound
                );
            }
        }
    }

    #[test]
    fn dense_and_iterative_paths_agree() {
        let op = setup(9, 14);
        let mut rng = seeded_rng(17);
        let f = StateVector::random(&op.grid, &mut rng);
        for kappa in [Kappa::Heat, Kappa::Schrodinger] {
            let sigma = 0.8;
            let rhs: Vec<C64> = f.data.clone();
            let dense = ShiftedSolver::with_dense_limit(&op, kappa, sigma, usize::MAX >> 1)
                .unwrap_or_else(|e| panic!("dense: {e}"));
            let iter = ShiftedSolver::with_dense_limit(&op, kappa, sigma, 0).unwrap();
            let (xd, _) = dense.solve(&rhs).unwrap();
            let (xi, stats) = iter.solve(&rhs).unwrap();
            let diff: f64 = xd.iter().zip(&xi).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            let size: f64 = xd.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!(diff <= 1e-10 * size, "kappa {kappa:?}: paths differ by {diff:.3e}");
            assert!(stats.iterations > 0);
        }
    }

    #[test]
    fn solver_reports_certified_residuals() {
        let op = setup(7, 10);
        let mut rng = seeded_rng(23);
        let f = StateVector::random(&op.grid, &mut rng);
        let solver = ShiftedSolver::new(&op, Kappa::Schrodinger, 0.05).unwrap();
        let (_, stats) = solver.solve(&f.data).unwrap();
        assert!(stats.residual <= 10.0 * tolerances::ITERATIVE_SOLVER_REL);
    }

    #[test]
    fn coercivity_quotient_respects_the_analytic_bound() {
        let op = setup(8, 10);
        for lambda in [0.25, 1.0, 4.0] {
            let est = coercivity_estimate(&op, lambda, 200, 91);
            let bound = lambda.min(1.0);
            assert!(
                est >= bound - tolerances::COERCIVITY_SLACK,
                "coercivity estimate {est} below min(1,lambda) = {bound}"
            );
            // The estimate is a genuine quotient: for λ ≥ 1 it also sits
            // below max(1, λ).
            assert!(est <= lambda.max(1.0) + tolerances::COERCIVITY_SLACK);
        }
    }

    #[test]
    fn heat_resolvent_is_self_adjoint_in_the_weighted_inner_product() {
        let op = setup(8, 10);
        let mut rng = seeded_rng(41);
        let f = StateVector::random(&op.grid, &mut rng);
        let g = StateVector::random(&op.grid, &mut rng);
        let scale = f.norm_u(&op.weights) * g.norm_u(&op.weights);
        for lambda in [0.7, 3.0] {
            let rf = resolvent_solve(&op, Kappa::Heat, lambda, &f).unwrap();
            let rg = resolvent_solve(&op, Kappa::Heat, lambda, &g).unwrap();
            let lhs = inner_u(&rf, &g, &op.weights);
            let rhs = inner_u(&f, &rg, &op.weights);
            assert!(
                (lhs - rhs).norm() <= tolerances::SELF_ADJOINT_RESOLVENT_REL * scale,
                "lambda {lambda}: <RF,G> = {lhs}, <F,RG> = {rhs}"
            );
        }
    }

    #[test]
    fn coercivity_quotient_is_exactly_lambda_on_the_kernel() {
        // Constants carry no energy, so the quotient (E + λU)/(E + U)
        // degenerates to λ exactly; this pins the quotient normalization.
        let op = setup(6, 8);
        let x = StateVector::constant(&op.grid, C64::new(0.7, 0.0));
        let e = op.energy(&x, &x).re;
        let u = inner_u(&x, &x, &op.weights).re;
        assert!(e.abs() <= 1e-12 * u, "constants must be energy-free, got E = {e}");
        for lambda in [0.25, 1.0, 4.0] {
            assert_relative_eq!((e + lambda * u) / (e + u), lambda, max_relative = 1e-12);
        }
    }

    #[test]
    fn resolvent_maps_scaled_constants_back_to_constants() {
        // κA annihilates constants, so (κA − λ)c = −λc and feeding
        // F = −λ·c must return the constant c for either κ.
        let op = setup(5, 6);
        let lambda = 1.7;
        let c = C64::new(0.8, -0.3);
        let f = StateVector::constant(&op.grid, -lambda * c);
        for kappa in [Kappa::Heat, Kappa::Schrodinger] {
            let x = resolvent_solve(&op, kappa, lambda, &f).unwrap();
            for z in &x.data {
                assert_relative_eq!(z.re, c.re, epsilon = 1e-10);
                assert_relative_eq!(z.im, c.im, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn resolvent_solution_solves_the_equation_pointwise() {
        let op = setup(6, 8);
        let mut rng = seeded_rng(3);
        let f = StateVector::random(&op.grid, &mut rng);
        let lambda = 2.0;
        let x = resolvent_solve(&op, Kappa::Schrodinger, lambda, &f).unwrap();
        let mut lhs = op.apply(&x);
        for (i, z) in lhs.data.iter_mut().enumerate() {
            *z = C64::new(0.0, 1.0) * *z - lambda * x.data[i];
        }
        for (a, b) in lhs.data.iter().zip(&f.data) {
            assert_relative_eq!(a.re, b.re, epsilon = 1e-9 * f.sup_norm().max(1.0));
            assert_relative_eq!(a.im, b.im, epsilon = 1e-9 * f.sup_norm().max(1.0));
        }
    }
}
