//! Minimum of `I(X^T; X̂^T)` over jointly Gaussian reproductions under per-frame
//! MSE constraints and Markov-chain constraints.
//!
//! Chain constraints are imposed as vanishing conditional cross-covariance,
//! which for jointly Gaussian variables is the same as conditional
//! independence. The problem is solved by an augmented Lagrangian method with
//! an L-BFGS inner solver; the returned point is always feasible to within the
//! stated tolerances when `converged` is set, so its rate is an upper bound on
//! the true minimum.

mod objective;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_forms;
use crate::info::gaussian_mi;
use crate::linalg;
use crate::model::{self, build_covariance, in_region_jc, markov_constraints, FlatConstraint};
use crate::{ChainConstraint, CovMatrix, DistortionTuple, Error, Result, SourceSpec, SystemKind};

use objective::{correlation, Multipliers, Problem, Residuals};

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptOptions {
    pub initial_penalty: f64,
    /// Factor applied to the penalty when a round fails to reduce the
    /// constraint violation by at least a factor of four.
    pub penalty_growth: f64,
    pub max_penalty: f64,
    pub outer_rounds: usize,
    /// Inner iterations per round.
    pub max_iterations: usize,
    /// Absolute tolerance on conditional cross-correlations.
    pub chain_tol: f64,
    /// Absolute MSE tolerance relative to each frame's variance.
    pub mse_tol: f64,
    pub starts: usize,
    pub seed: u64,
    /// Standard deviation of the parameter perturbation for starts beyond the second.
    pub perturbation: f64,
}

impl Default for OptOptions {
    fn default() -> Self {
        Self {
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e9,
            outer_rounds: 40,
            max_iterations: 4000,
            chain_tol: 1e-6,
            mse_tol: 1e-8,
            starts: 2,
            seed: 0,
            perturbation: 0.1,
        }
    }
}

/// A constrained Gaussian rate-distortion problem.
#[derive(Debug, Clone)]
pub struct OptProblem {
    pub sigma: CovMatrix,
    pub distortion: DistortionTuple,
    pub constraints: Vec<ChainConstraint>,
    pub options: OptOptions,
    /// Joint covariance of `(X, X̂)` used as the first start instead of [`feasible_init`].
    pub warm_start: Option<CovMatrix>,
}

impl OptProblem {
    pub fn new(sigma: CovMatrix, distortion: DistortionTuple, constraints: Vec<ChainConstraint>) -> Self {
        Self { sigma, distortion, constraints, options: OptOptions::default(), warm_start: None }
    }

    /// Problem for the sum-rate of architecture `kind` on a Gaussian source.
    pub fn for_system(spec: &SourceSpec, d: &DistortionTuple, kind: SystemKind) -> Result<Self> {
        let sigma = build_covariance(spec)?;
        let constraints = markov_constraints(kind, spec.frames())?;
        Ok(Self::new(sigma, d.clone(), constraints))
    }

    pub fn with_options(mut self, options: OptOptions) -> Self {
        self.options = options;
        self
    }

    pub fn frames(&self) -> usize {
        self.sigma.dim()
    }
}

/// Solver output.
#[derive(Debug, Clone, Serialize)]
pub struct RDResult {
    /// `I(X; X̂)` of `joint`, in bits.
    pub rate: f64,
    /// Covariance of `(X_1..X_T, X̂_1..X̂_T)`.
    #[serde(serialize_with = "serialize_cov")]
    pub joint: CovMatrix,
    pub mse_achieved: DistortionTuple,
    /// Largest absolute conditional cross-correlation per constraint.
    pub chain_residuals: Vec<f64>,
    pub iterations: usize,
    pub outer_rounds: usize,
    pub start: usize,
    pub converged: bool,
}

fn serialize_cov<S: serde::Serializer>(c: &CovMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    c.row_major().serialize(s)
}

impl RDResult {
    pub fn max_chain_residual(&self) -> f64 {
        self.chain_residuals.iter().fold(0.0, |m, r| m.max(*r))
    }

    /// Line-oriented text record: one `key value...` pair per line, with the
    /// joint covariance entries row-major.
    pub fn to_record(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.12e}")).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        out.push_str(&format!("rate_bits {:.12}\n", self.rate));
        out.push_str(&format!("converged {}\n", self.converged));
        out.push_str(&format!("iterations {}\n", self.iterations));
        out.push_str(&format!("outer_rounds {}\n", self.outer_rounds));
        out.push_str(&format!("start {}\n", self.start));
        out.push_str(&format!("mse {}\n", join(self.mse_achieved.values())));
        out.push_str(&format!("chain_residuals {}\n", join(&self.chain_residuals)));
        out.push_str(&format!("joint_dim {}\n", self.joint.dim()));
        out.push_str(&format!("joint {}\n", join(&self.joint.row_major())));
        out
    }
}

/// A feasible starting covariance for `(X, X̂)`.
///
/// Inside the JC region this is the test channel `X = X̂ + Z` with
/// `Cov(X̂) = Σ - diag(D)`. Elsewhere each frame is coded on its own:
/// `X̂_j = a_j X_j + V_j` with `a_j = 1 - D_j/σ_j²` and `Var V_j = a_j D_j`,
/// and `X̂_j = 0` when `D_j ≥ σ_j²`.
pub fn feasible_init(sigma: &CovMatrix, d: &DistortionTuple) -> Result<CovMatrix> {
    if in_region_jc(sigma, d)? {
        let s = sigma.matrix();
        let t = s.nrows();
        let mut shat = s.clone();
        for j in 0..t {
            shat[(j, j)] -= d[j];
        }
        // Clip the tolerance-level negative eigenvalues of boundary tuples.
        let f = linalg::psd_factor(&shat);
        let mut shat = &f * f.transpose();
        linalg::symmetrize(&mut shat);
        return CovMatrix::new(stack(s, &shat, &shat));
    }
    Ok(independent_init(sigma, d))
}

fn independent_init(sigma: &CovMatrix, d: &DistortionTuple) -> CovMatrix {
    let s = sigma.matrix();
    let t = s.nrows();
    let a: Vec<f64> = (0..t)
        .map(|j| if s[(j, j)] > 0.0 { (1.0 - d[j] / s[(j, j)]).max(0.0) } else { 0.0 })
        .collect();
    let cross = DMatrix::from_fn(t, t, |i, j| s[(i, j)] * a[j]);
    let mut shat = DMatrix::from_fn(t, t, |i, j| a[i] * a[j] * s[(i, j)]);
    for j in 0..t {
        shat[(j, j)] += a[j] * d[j].min(s[(j, j)]);
    }
    CovMatrix::new(stack(s, &cross, &shat)).expect("independent test channels give a valid covariance")
}

/// Predictive sequential coding: `X̂_j = P_j + α_j (X_j − P_j) + V_j` with
/// `P_j = E[X_j | X̂^{j-1}]`, `α_j = 1 − D_j / Var(X_j | X̂^{j-1})` (zero when
/// negative) and `Var V_j = α_j D_j`. Each `X̂_j` depends on the source only
/// through `X_j` and earlier reproductions, so every chain constraint of every
/// architecture holds.
fn sequential_init(sigma: &CovMatrix, d: &DistortionTuple) -> CovMatrix {
    let s = sigma.matrix();
    let t = s.nrows();
    // X̂ = B X + C V with V ~ N(0, I).
    let mut b = DMatrix::<f64>::zeros(t, t);
    let mut c = DMatrix::<f64>::zeros(t, t);
    for j in 0..t {
        let (mut pb, mut pc) = (nalgebra::RowDVector::zeros(t), nalgebra::RowDVector::zeros(t));
        let mut var_w = s[(j, j)];
        if j > 0 {
            let bp = b.rows(0, j).into_owned();
            let cp = c.rows(0, j).into_owned();
            let cov_hat = &bp * s * bp.transpose() + &cp * cp.transpose();
            let cross = s.row(j) * bp.transpose();
            let coef = &cross * cov_hat.pseudo_inverse(1e-12).expect("non-negative tolerance");
            pb = &coef * &bp;
            pc = &coef * &cp;
            var_w = (s[(j, j)] - (&coef * cross.transpose())[(0, 0)]).max(0.0);
        }
        let alpha = if var_w > 0.0 { (1.0 - d[j] / var_w).max(0.0) } else { 0.0 };
        for k in 0..t {
            let e = if k == j { 1.0 } else { 0.0 };
            b[(j, k)] = (1.0 - alpha) * pb[k] + alpha * e;
            c[(j, k)] = (1.0 - alpha) * pc[k] + e * (alpha * d[j]).sqrt();
        }
    }
    let cross = s * b.transpose();
    let mut shat = &b * &cross + &c * c.transpose();
    linalg::symmetrize(&mut shat);
    CovMatrix::new(stack(s, &cross, &shat)).expect("linear reproduction gives a valid covariance")
}

/// Least-squares estimate of the multipliers at `x`: the Lagrangian gradient
/// is made as small as possible using equality constraints and the MSE
/// constraints that are active.
fn estimate_multipliers(problem: &Problem, x: &[f64], eq_scale: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (ne, ni) = (problem.n_eq(), problem.targets.len());
    let fallback = (vec![0.0; ne], vec![0.0; ni]);
    let Some((grad, jac)) = problem.jacobian(x, eq_scale) else {
        return fallback;
    };
    let r = problem.residuals(x);
    let rows: Vec<usize> = (0..ne).chain((0..ni).filter(|&i| r.ineq[i] > -1e-6).map(|i| ne + i)).collect();
    if rows.is_empty() {
        return fallback;
    }
    let jt = DMatrix::from_fn(jac.ncols(), rows.len(), |p, k| jac[(rows[k], p)]);
    let rhs = -nalgebra::DVector::from_column_slice(&grad);
    let Ok(lambda) = jt.svd(true, true).solve(&rhs, 1e-10) else {
        return fallback;
    };
    let (mut eq, mut ineq) = fallback;
    for (k, &row) in rows.iter().enumerate() {
        if row < ne {
            eq[row] = lambda[k];
        } else {
            ineq[row - ne] = lambda[k].max(0.0);
        }
    }
    (eq, ineq)
}

fn stack(s: &DMatrix<f64>, cross: &DMatrix<f64>, shat: &DMatrix<f64>) -> DMatrix<f64> {
    let t = s.nrows();
    let mut out = DMatrix::zeros(2 * t, 2 * t);
    out.view_mut((0, 0), (t, t)).copy_from(s);
    out.view_mut((0, t), (t, t)).copy_from(cross);
    out.view_mut((t, 0), (t, t)).copy_from(&cross.transpose());
    out.view_mut((t, t), (t, t)).copy_from(shat);
    out
}

/// Minimizes `I(X; X̂)` subject to `E(X_j - X̂_j)² ≤ D_j` and the chain constraints.
pub fn min_sum_rate(p: &OptProblem) -> Result<RDResult> {
    let t = p.frames();
    if p.distortion.len() != t {
        return Err(Error::DimensionMismatch { expected: t, found: p.distortion.len() });
    }
    for c in &p.constraints {
        c.validate(t)?;
    }
    let s = p.sigma.matrix();
    if linalg::min_eigenvalue(s) <= linalg::PSD_REL_TOL * linalg::max_eigenvalue(s) {
        return Err(Error::Singular("source covariance must be nonsingular".into()));
    }
    if let Some(j) = p.distortion.values().iter().position(|&d| d == 0.0) {
        return Err(Error::Infeasible(format!(
            "D_{} = 0 requires an exact reproduction, which has infinite rate",
            j + 1
        )));
    }
    if p.options.starts == 0 {
        return Err(Error::OutOfRange("at least one start is required".into()));
    }

    let sd: Vec<f64> = (0..t).map(|j| s[(j, j)].sqrt()).collect();
    let sigma_n = DMatrix::from_fn(t, t, |i, j| s[(i, j)] / (sd[i] * sd[j]));
    let d_n: Vec<f64> = (0..t).map(|j| p.distortion[j] / s[(j, j)]).collect();
    let problem = Problem {
        t,
        sigma: sigma_n.clone(),
        targets: d_n.iter().enumerate().filter(|(_, d)| **d < 1.0).map(|(j, d)| (j, *d)).collect(),
        constraints: p.constraints.iter().map(|c| c.flat(t)).collect(),
    };

    let cov_n = CovMatrix::new(sigma_n).map_err(|e| Error::Singular(e.to_string()))?;
    let d_clip = DistortionTuple::new(d_n.iter().map(|d| d.min(1.0)).collect())?;
    let primary = match &p.warm_start {
        Some(w) => {
            if w.dim() != 2 * t {
                return Err(Error::DimensionMismatch { expected: 2 * t, found: w.dim() });
            }
            let m = w.matrix();
            let sn = DMatrix::from_fn(2 * t, 2 * t, |i, k| m[(i, k)] / (sd[i % t] * sd[k % t]));
            problem.params_from_joint(&sn)
        }
        None => problem.params_from_joint(feasible_init(&cov_n, &d_clip)?.matrix()),
    };
    let secondary = problem.params_from_joint(sequential_init(&cov_n, &d_clip).matrix());
    let starts: Vec<Vec<f64>> = (0..p.options.starts)
        .map(|i| match i {
            0 => primary.clone(),
            1 => secondary.clone(),
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(p.options.seed);
                rng.set_stream(i as u64);
                let noise = Normal::new(0.0, p.options.perturbation).expect("finite perturbation");
                primary.iter().map(|v| v + noise.sample(&mut rng)).collect()
            }
        })
        .collect();

    let outcomes: Vec<StartOutcome> =
        starts.into_par_iter().map(|x0| run_start(&problem, x0, &p.options)).collect();
    let finished: Vec<(usize, Finished)> = outcomes
        .into_iter()
        .enumerate()
        .map(|(i, o)| finish(&problem, p, &sd, o).map(|f| (i, f)))
        .collect::<Result<_>>()?;

    let best = finished
        .iter()
        .filter(|(_, f)| f.result.converged)
        .min_by(|a, b| a.1.result.rate.total_cmp(&b.1.result.rate).then(a.0.cmp(&b.0)))
        .or_else(|| {
            finished.iter().min_by(|a, b| a.1.violation.total_cmp(&b.1.violation).then(a.0.cmp(&b.0)))
        })
        .expect("at least one start");
    let mut result = best.1.result.clone();
    result.start = best.0;
    Ok(result)
}

struct StartOutcome {
    x: Vec<f64>,
    iterations: usize,
    rounds: usize,
    settled: bool,
}

struct Finished {
    result: RDResult,
    violation: f64,
}

fn violations(problem: &Problem, r: &Residuals) -> (f64, f64) {
    let eq = r.eq.iter().fold(0.0_f64, |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v.abs()) });
    let ineq = problem
        .targets
        .iter()
        .zip(&r.ineq)
        .fold(0.0_f64, |m, ((_, d), g)| m.max(g * d));
    (eq, ineq)
}

fn run_start(problem: &Problem, mut x: Vec<f64>, opts: &OptOptions) -> StartOutcome {
    let eq_scale = problem.partial_scales(&x);
    let (eq, ineq) = estimate_multipliers(problem, &x, &eq_scale);
    let mut mult = Multipliers { eq, eq_scale, ineq, penalty: opts.initial_penalty };
    let settings = crate::lbfgs::Settings { memory: 12, max_iterations: opts.max_iterations, gradient_tol: 1e-9 };
    let mut iterations = 0;
    let mut previous_violation = f64::INFINITY;
    let mut previous_rate = f64::INFINITY;
    let mut idle = 0;
    for round in 1..=opts.outer_rounds {
        let inner = crate::lbfgs::minimize(|x, g| problem.merit(x, &mult, g), &mut x, &settings);
        iterations += inner;
        let mut r = problem.residuals(&x);
        let (raw_eq, ineq) = violations(problem, &r);
        for (e, sc) in r.eq.iter_mut().zip(&mult.eq_scale) {
            *e *= sc;
        }
        let (eq, _) = violations(problem, &r);
        let violation = eq.max(ineq);
        let feasible = raw_eq <= 0.1 * opts.chain_tol && ineq <= 1e3 * opts.mse_tol;
        let settled = (r.rate_bits - previous_rate).abs() <= 1e-8;
        if feasible && settled {
            return StartOutcome { x, iterations, rounds: round, settled: true };
        }
        idle = if inner <= 1 { idle + 1 } else { 0 };
        if idle >= 3 {
            return StartOutcome { x, iterations, rounds: round, settled: feasible };
        }
        previous_rate = r.rate_bits;
        for (l, c) in mult.eq.iter_mut().zip(&r.eq) {
            *l += mult.penalty * c;
        }
        for (l, g) in mult.ineq.iter_mut().zip(&r.ineq) {
            *l = (*l + mult.penalty * g).max(0.0);
        }
        let scales = problem.partial_scales(&x);
        for ((l, old), new) in mult.eq.iter_mut().zip(&mut mult.eq_scale).zip(scales) {
            *l *= *old / new;
            *old = new;
        }
        if !feasible && violation > 0.25 * previous_violation {
            mult.penalty = (mult.penalty * opts.penalty_growth).min(opts.max_penalty);
        }
        previous_violation = violation;
    }
    StartOutcome { x, iterations, rounds: opts.outer_rounds, settled: false }
}

/// Frame `j` of the reproduction may absorb a multiple of `X_j` without
/// disturbing any constraint when `X_j` is conditioned on, or sits on the same
/// side as `X̂_j`, in every constraint mentioning `X̂_j`.
fn mixing_allowed(constraints: &[FlatConstraint], t: usize, j: usize) -> bool {
    let (x, xh) = (j, t + j);
    constraints.iter().all(|c| {
        let sides = [&c.left, &c.right, &c.given];
        match sides.iter().position(|s| s.contains(&xh)) {
            None => true,
            Some(2) => c.given.contains(&x),
            Some(side) => c.given.contains(&x) || sides[side].contains(&x),
        }
    })
}

/// Adds `ε X_j` to `X̂_j` in the normalized joint covariance.
fn mix_source(s: &DMatrix<f64>, t: usize, j: usize, eps: f64) -> DMatrix<f64> {
    let mut out = s.clone();
    let h = t + j;
    for k in 0..2 * t {
        if k != h {
            let v = s[(h, k)] + eps * s[(j, k)];
            out[(h, k)] = v;
            out[(k, h)] = v;
        }
    }
    out[(h, h)] = s[(h, h)] + 2.0 * eps * s[(j, h)] + eps * eps * s[(j, j)];
    out
}

fn scaled_mse(s: &DMatrix<f64>, t: usize, j: usize) -> f64 {
    let c = s[(j, t + j)];
    s[(j, j)] - c * c / s[(t + j, t + j)]
}

fn finish(problem: &Problem, p: &OptProblem, sd: &[f64], o: StartOutcome) -> Result<Finished> {
    let t = problem.t;
    let (w, l) = problem.unpack(&o.x);
    let mut s = problem.joint(&w, &l);

    // Push frames that sit just outside their MSE target onto the boundary.
    for &(j, d) in &problem.targets {
        if scaled_mse(&s, t, j) <= d || s[(j, t + j)] < 0.0 || !mixing_allowed(&problem.constraints, t, j) {
            continue;
        }
        let (mut lo, mut hi) = (0.0, 1e-3);
        while scaled_mse(&mix_source(&s, t, j, hi), t, j) > d && hi < 1e6 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if scaled_mse(&mix_source(&s, t, j, mid), t, j) > d {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        s = mix_source(&s, t, j, hi);
    }

    let r = correlation(&s);
    let chain_residuals: Vec<f64> = problem
        .constraints
        .iter()
        .map(|c| {
            linalg::conditional_cross_cov(&r, &c.left, &c.right, &c.given)
                .map(|e| e.amax())
                .unwrap_or(f64::INFINITY)
        })
        .collect();

    // Best per-frame scaling, then back to source units.
    let scale: Vec<f64> = (0..t).map(|j| s[(j, t + j)] / s[(t + j, t + j)]).collect();
    let unit = |k: usize| if k < t { sd[k] } else { sd[k - t] * scale[k - t] };
    let mut joint = DMatrix::from_fn(2 * t, 2 * t, |i, k| s[(i, k)] * unit(i) * unit(k));
    joint.view_mut((0, 0), (t, t)).copy_from(p.sigma.matrix());
    linalg::symmetrize(&mut joint);
    let joint = CovMatrix::new(joint)?;

    let m = joint.matrix();
    let mse: Vec<f64> = (0..t)
        .map(|j| (m[(j, j)] - 2.0 * m[(j, t + j)] + m[(t + j, t + j)]).max(0.0))
        .collect();
    let xs: Vec<usize> = (0..t).collect();
    let xhs: Vec<usize> = (t..2 * t).collect();
    let rate = gaussian_mi(&joint, &xs, &xhs)?;

    let mse_excess = (0..t)
        .map(|j| (mse[j] - p.distortion[j]) / m[(j, j)])
        .fold(0.0_f64, f64::max);
    let chain_max = chain_residuals.iter().fold(0.0_f64, |a, b| a.max(*b));
    let converged = o.settled && chain_max <= p.options.chain_tol && mse_excess <= p.options.mse_tol;
    Ok(Finished {
        violation: chain_max.max(mse_excess),
        result: RDResult {
            rate,
            joint,
            mse_achieved: DistortionTuple::new(mse)?,
            chain_residuals,
            iterations: o.iterations,
            outer_rounds: o.rounds,
            start: 0,
            converged,
        },
    })
}

/// Outcome of comparing an architecture's sum-rate with the joint-coding rate.
#[derive(Debug, Clone, Serialize)]
pub struct CorollaryReport {
    pub kind: SystemKind,
    /// Numerical sum-rate with the architecture's chain constraints.
    pub constrained: f64,
    /// Numerical rate without chain constraints.
    pub unconstrained: f64,
    pub gap: f64,
    pub in_region_cc: Option<bool>,
    pub in_region_jc: bool,
    /// Closed-form joint-coding rate when `D` lies in its region.
    pub jc_closed_form: Option<f64>,
    pub converged: bool,
}

/// Solves the sum-rate problem for `kind` with and without its constraints.
pub fn verify_corollary(
    spec: &SourceSpec,
    d: &DistortionTuple,
    kind: SystemKind,
    options: &OptOptions,
) -> Result<CorollaryReport> {
    if !spec.is_gaussian() {
        return Err(Error::InvalidSpec("a Gaussian source is required".into()));
    }
    let sigma = build_covariance(spec)?;
    let with = min_sum_rate(&OptProblem::for_system(spec, d, kind)?.with_options(options.clone()))?;
    let without = min_sum_rate(&OptProblem::new(sigma.clone(), d.clone(), Vec::new()).with_options(options.clone()))?;
    let in_jc = in_region_jc(&sigma, d)?;
    let in_cc = match spec.first_order() {
        Some(_) => Some(model::in_region_cc(spec, d)?),
        None => None,
    };
    Ok(CorollaryReport {
        kind,
        constrained: with.rate,
        unconstrained: without.rate,
        gap: with.rate - without.rate,
        in_region_cc: in_cc,
        in_region_jc: in_jc,
        jc_closed_form: if in_jc { closed_forms::jc_rate_gm(&sigma, d).ok() } else { None },
        converged: with.converged && without.converged,
    })
}
