//! Strictly convex QPs over the nonnegative orthant.
//!
//! Solves `min 1/2 s'Rs + r's  s.t. s >= 0` with `R` symmetric positive
//! definite. This is the force-allocation problem of the transport
//! controller; [`assemble_qp`] builds it from the direction set and the
//! velocity-tracking error.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{DirectionSet, VecN};

/// Symmetry tolerance on `R`, max-norm of `R - R'`.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Largest problem accepted by the enumeration oracle.
pub const ORACLE_MAX_VARS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("hessian is {rows}x{cols} but the linear term has length {len}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("hessian is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("active-set iteration cap of {0} reached")]
    MaxIterations(usize),
    #[error("no active set satisfies the KKT conditions")]
    NoKktPoint,
    #[error("several distinct KKT points found; the problem is not strictly convex")]
    Ambiguous,
    #[error("enumeration oracle supports at most {ORACLE_MAX_VARS} variables, got {0}")]
    TooLarge(usize),
}

/// `min 1/2 s'Rs + r's` over `s >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
}

impl QpProblem {
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>) -> Result<Self, QpError> {
        let (rows, cols) = hessian.shape();
        if rows != cols || rows != linear.len() {
            return Err(QpError::DimensionMismatch {
                rows,
                cols,
                len: linear.len(),
            });
        }
        let asym = (&hessian - hessian.transpose()).amax();
        if asym >= SYMMETRY_TOL {
            return Err(QpError::NotSymmetric(asym));
        }
        Ok(Self { hessian, linear })
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn len(&self) -> usize {
        self.linear.len()
    }

    pub fn is_empty(&self) -> bool {
        self.linear.is_empty()
    }

    pub fn objective(&self, s: &DVector<f64>) -> f64 {
        0.5 * s.dot(&(&self.hessian * s)) + self.linear.dot(s)
    }

    /// `R s + r`.
    pub fn gradient(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.hessian * s + &self.linear
    }

    fn dual_tol(&self) -> f64 {
        1e-11 * (1.0 + self.linear.amax() + self.hessian.amax())
    }
}

/// Minimizer of a [`QpProblem`] together with its KKT certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub s_star: DVector<f64>,
    /// Multipliers of `s >= 0`; zero off the active set.
    pub multipliers: DVector<f64>,
    /// Indices held at zero, ascending.
    pub active_set: Vec<usize>,
    pub objective_value: f64,
    pub iterations: usize,
}

impl QpSolution {
    fn from_active(
        prob: &QpProblem,
        mut s: DVector<f64>,
        active: &[bool],
        iterations: usize,
    ) -> Self {
        for (i, x) in s.iter_mut().enumerate() {
            if active[i] || (*x < 0.0 && *x >= -1e-12) {
                *x = 0.0;
            }
        }
        let grad = prob.gradient(&s);
        let multipliers = DVector::from_fn(s.len(), |i, _| if active[i] { grad[i] } else { 0.0 });
        Self {
            objective_value: prob.objective(&s),
            active_set: (0..s.len()).filter(|&i| active[i]).collect(),
            s_star: s,
            multipliers,
            iterations,
        }
    }
}

/// Minimizer of the subproblem with the `active` variables fixed at zero.
fn solve_free(prob: &QpProblem, active: &[bool]) -> Result<DVector<f64>, QpError> {
    let n = prob.len();
    let free = (0..n).filter(|&i| !active[i]).collect::<Vec<_>>();
    let mut s = DVector::zeros(n);
    if free.is_empty() {
        return Ok(s);
    }
    let sub = prob.hessian.select_rows(&free).select_columns(&free);
    let rhs = -prob.linear.select_rows(&free);
    let chol = Cholesky::<f64, Dyn>::new(sub).ok_or(QpError::NotPositiveDefinite)?;
    let x = chol.solve(&rhs);
    for (k, &i) in free.iter().enumerate() {
        s[i] = x[k];
    }
    Ok(s)
}

/// Primal active-set method started at `s = 0` with every bound active.
///
/// Each iteration minimizes over the free variables, stepping back to the
/// first bound that would be crossed; at a subspace minimizer the bound with
/// the most negative multiplier is released. Terminates finitely for
/// positive-definite `R`.
pub fn solve_qp(prob: &QpProblem) -> Result<QpSolution, QpError> {
    let n = prob.len();
    if Cholesky::new(prob.hessian.clone()).is_none() {
        return Err(QpError::NotPositiveDefinite);
    }
    let cap = 100 * n.max(1);
    let tol = prob.dual_tol();
    let mut active = vec![true; n];
    let mut s = DVector::zeros(n);

    for iter in 1..=cap {
        let cand = solve_free(prob, &active)?;

        let mut alpha = 1.0;
        let mut blocking = None;
        for i in (0..n).filter(|&i| !active[i]) {
            if cand[i] < 0.0 {
                let a = s[i] / (s[i] - cand[i]);
                if a < alpha {
                    alpha = a;
                    blocking = Some(i);
                }
            }
        }
        s += alpha * (&cand - &s);

        if let Some(b) = blocking {
            s[b] = 0.0;
            active[b] = true;
            continue;
        }

        let grad = prob.gradient(&s);
        let release = (0..n)
            .filter(|&i| active[i] && grad[i] < -tol)
            .min_by(|&a, &b| grad[a].total_cmp(&grad[b]));
        match release {
            Some(i) => active[i] = false,
            None => return Ok(QpSolution::from_active(prob, s, &active, iter)),
        }
    }
    Err(QpError::MaxIterations(cap))
}

/// Reference solver: tries all `2^N` active sets and keeps the KKT point.
///
/// Candidates that coincide within `1e-8` (degenerate bounds with zero
/// multiplier) are merged, preferring the larger active set.
pub fn solve_qp_oracle(prob: &QpProblem) -> Result<QpSolution, QpError> {
    let n = prob.len();
    if n > ORACLE_MAX_VARS {
        return Err(QpError::TooLarge(n));
    }
    let dual_tol = 1e-9 * (1.0 + prob.linear.amax() + prob.hessian.amax());
    let mut best: Option<(DVector<f64>, Vec<bool>)> = None;

    for mask in 0u32..(1u32 << n) {
        let active = (0..n).map(|i| mask & (1 << i) != 0).collect::<Vec<_>>();
        let Ok(s) = solve_free(prob, &active) else {
            continue;
        };
        let primal_tol = 1e-10 * (1.0 + s.amax());
        if (0..n).any(|i| !active[i] && s[i] < -primal_tol) {
            continue;
        }
        let grad = prob.gradient(&s);
        if (0..n).any(|i| active[i] && grad[i] < -dual_tol) {
            continue;
        }
        match &best {
            None => best = Some((s, active)),
            Some((prev, prev_active)) => {
                if (&s - prev).amax() > 1e-8 {
                    return Err(QpError::Ambiguous);
                }
                let count = |a: &[bool]| a.iter().filter(|&&x| x).count();
                if count(&active) > count(prev_active) {
                    best = Some((s, active));
                }
            }
        }
    }
    let (s, active) = best.ok_or(QpError::NoKktPoint)?;
    Ok(QpSolution::from_active(prob, s, &active, 1 << n))
}

/// Builds the force-allocation QP.
///
/// `R = 2 eps I + 2 k_f^2 L'L` and `r = 2 k_f L' (-k_v e + a_c)` where `L`
/// stacks the directions as columns, `e` is the object velocity error and
/// `a_c` the commanded acceleration.
pub fn assemble_qp(
    dirs: &DirectionSet,
    k_f: f64,
    eps: f64,
    k_v: f64,
    vel_error: &VecN,
    cmd_accel: &VecN,
) -> QpProblem {
    let l = dirs.matrix();
    let lt = l.transpose();
    let n = dirs.len();
    let mut hessian = 2.0 * k_f * k_f * (&lt * &l);
    for i in 0..n {
        hessian[(i, i)] += 2.0 * eps;
    }
    // L'L is symmetric in exact arithmetic; remove rounding asymmetry.
    let hessian = 0.5 * (&hessian + hessian.transpose());
    let linear = 2.0 * k_f * (&lt * (cmd_accel - k_v * vel_error));
    QpProblem { hessian, linear }
}

/// `u = k_v e - a_c`, the force per unit stiffness the QP tries to reproduce.
pub fn force_demand(k_v: f64, vel_error: &VecN, cmd_accel: &VecN) -> VecN {
    k_v * vel_error - cmd_accel
}

/// `|k_f L s - u|`.
pub fn allocation_residual(dirs: &DirectionSet, k_f: f64, s: &DVector<f64>, demand: &VecN) -> f64 {
    (k_f * (dirs.matrix() * s) - demand).norm()
}

/// Settings shared by the sampling estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSampling {
    /// Inputs `(e, a_c)` are drawn from `[-sample_box, sample_box]^(2n)`.
    pub sample_box: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Empirical Lipschitz constant of the map `(e, a_c) -> s*`.
///
/// Half the pairs are independent draws; the other half are local
/// perturbations of size `1e-3 * sample_box`, which probe the steepest
/// linear pieces of the solution map. The result is a lower estimate of the
/// true constant.
pub fn estimate_solution_lipschitz(
    dirs: &DirectionSet,
    k_f: f64,
    eps: f64,
    k_v: f64,
    sampling: QpSampling,
) -> Result<f64, QpError> {
    let n = dirs.dim();
    let b = sampling.sample_box;
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let solve = |x: &DVector<f64>| -> Result<DVector<f64>, QpError> {
        let e = x.rows(0, n).into_owned();
        let a = x.rows(n, n).into_owned();
        Ok(solve_qp(&assemble_qp(dirs, k_f, eps, k_v, &e, &a))?.s_star)
    };

    let mut best: f64 = 0.0;
    for k in 0..sampling.samples {
        let x = DVector::from_fn(2 * n, |_, _| rng.random_range(-b..=b));
        let y = if k % 2 == 0 {
            DVector::from_fn(2 * n, |_, _| rng.random_range(-b..=b))
        } else {
            let h = 1e-3 * b;
            &x + DVector::from_fn(2 * n, |_, _| rng.random_range(-h..=h))
        };
        let dist = (&x - &y).norm();
        if dist == 0.0 {
            continue;
        }
        let ratio = (solve(&x)? - solve(&y)?).norm() / dist;
        best = best.max(ratio);
    }
    Ok(best)
}

/// Largest sampled ratio `|k_f L s* - u| / |u|` over inputs with `|u| > 1e-6`.
pub fn estimate_residual_ratio(
    dirs: &DirectionSet,
    k_f: f64,
    eps: f64,
    k_v: f64,
    sampling: QpSampling,
) -> Result<f64, QpError> {
    let n = dirs.dim();
    let b = sampling.sample_box;
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let mut best: f64 = 0.0;
    for _ in 0..sampling.samples {
        let e = VecN::from_fn(n, |_, _| rng.random_range(-b..=b));
        let a = VecN::from_fn(n, |_, _| rng.random_range(-b..=b));
        let u = force_demand(k_v, &e, &a);
        if u.norm() <= 1e-6 {
            continue;
        }
        let s = solve_qp(&assemble_qp(dirs, k_f, eps, k_v, &e, &a))?.s_star;
        best = best.max(allocation_residual(dirs, k_f, &s, &u) / u.norm());
    }
    Ok(best)
}
