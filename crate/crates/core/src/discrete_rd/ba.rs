//! Alternating minimization with exact per-step distortion constraints.
//!
//! For a fixed output marginal `r` the channel step minimizes
//! `Σ p(x) q(x̂|x) log(q(x̂|x)/r(x̂))` over channels meeting the lookahead
//! structure and the distortion targets. Its dual in the multipliers `s` is a
//! smooth concave function of at most `T` variables whose value and gradient
//! come from one backward pass, so it is maximized by a projected Newton
//! method. The output step sets `r` to the induced marginal.

use nalgebra::{DMatrix, DVector};

use super::{Channel, DiscreteProblem, DiscreteResult, Layout, LN2};

const NEWTON_STEPS: usize = 200;
const KKT_TOL: f64 = 1e-13;
const LOG_FLOOR: f64 = -700.0;

pub(super) struct Solver<'a> {
    problem: &'a DiscreteProblem,
    layout: Layout,
    lookahead: &'a [usize],
    /// `D_j = 0` frames are enforced by masking instead of a multiplier.
    hard: Vec<bool>,
}

/// Output of one backward pass.
struct Pass {
    log_q: Vec<f64>,
    /// Dual objective, nats.
    dual: f64,
    /// `E[d_j] - D_j`.
    excess: Vec<f64>,
    feasible: bool,
}

impl<'a> Solver<'a> {
    pub fn new(problem: &'a DiscreteProblem, lookahead: &'a [usize]) -> Self {
        let hard = problem.targets.values().iter().map(|d| *d == 0.0).collect();
        Self { problem, layout: Layout::new(problem), lookahead, hard }
    }

    fn log_weight(&self, s: &[f64], x: usize, y: usize) -> f64 {
        let l = &self.layout;
        let mut total = 0.0;
        for (j, sj) in s.iter().enumerate() {
            let d = self.problem.distortions[j][l.x_digit(x, j)][l.y_digit(y, j)];
            if self.hard[j] {
                if d > 0.0 {
                    return f64::NEG_INFINITY;
                }
            } else {
                total -= sj * d;
            }
        }
        total
    }

    fn pass(&self, log_r: &[f64], s: &[f64]) -> Pass {
        let l = &self.layout;
        let (nx, ny, t) = (l.nx, l.ny, l.t);
        let px = self.problem.source.probs();
        let mut feasible = true;
        let mut h: Vec<f64> = (0..nx * ny).map(|k| log_r[k % ny] + self.log_weight(s, k / ny, k % ny)).collect();
        let mut log_cond: Vec<Vec<f64>> = vec![Vec::new(); t];
        for j in (0..t).rev() {
            let ny_j = ny / l.y_suffix_count(j + 1);
            let ny_prev = ny / l.y_suffix_count(j);
            let n_yj = ny_j / ny_prev;
            let group = l.x_suffix_count(self.lookahead[j]);
            let mut a = vec![0.0; nx * ny_j];
            for g in (0..nx).step_by(group) {
                let xs = g..g + group;
                let mass: f64 = px[xs.clone()].iter().sum();
                for yp in 0..ny_j {
                    let mut acc = 0.0;
                    for x in xs.clone() {
                        let w = if mass > 0.0 { px[x] / mass } else { 1.0 / group as f64 };
                        if w == 0.0 {
                            continue;
                        }
                        let v = h[x * ny_j + yp];
                        if v == f64::NEG_INFINITY {
                            acc = v;
                            break;
                        }
                        acc += w * v;
                    }
                    for x in xs.clone() {
                        a[x * ny_j + yp] = acc;
                    }
                }
            }
            let mut next = vec![0.0; nx * ny_prev];
            let mut cond = vec![0.0; nx * ny_j];
            for x in 0..nx {
                for yp in 0..ny_prev {
                    let row = &a[x * ny_j + yp * n_yj..x * ny_j + (yp + 1) * n_yj];
                    let lse = log_sum_exp(row);
                    let out = &mut cond[x * ny_j + yp * n_yj..x * ny_j + (yp + 1) * n_yj];
                    if lse == f64::NEG_INFINITY {
                        out.fill(-(n_yj as f64).ln());
                    } else {
                        for (o, v) in out.iter_mut().zip(row) {
                            *o = v - lse;
                        }
                    }
                    next[x * ny_prev + yp] = lse;
                }
            }
            log_cond[j] = cond;
            h = next;
        }

        let mut log_q = vec![0.0; nx * ny];
        for x in 0..nx {
            for y in 0..ny {
                log_q[x * ny + y] = (0..t)
                    .map(|j| {
                        let ny_j = ny / l.y_suffix_count(j + 1);
                        log_cond[j][x * ny_j + y / l.y_suffix_count(j + 1)]
                    })
                    .sum();
            }
        }

        let targets = self.problem.targets.values();
        let mut dual = 0.0;
        for x in 0..nx {
            if px[x] > 0.0 {
                feasible &= h[x] > f64::NEG_INFINITY;
                dual -= px[x] * h[x];
            }
        }
        for j in 0..t {
            if !self.hard[j] {
                dual -= s[j] * targets[j];
            }
        }
        let q: Vec<f64> = log_q.iter().map(|v| v.exp()).collect();
        let excess = super::expected_distortions(self.problem, &q)
            .iter()
            .zip(targets)
            .map(|(e, d)| e - d)
            .collect();
        Pass { log_q, dual, excess, feasible }
    }

    fn kkt(&self, s: &[f64], excess: &[f64]) -> f64 {
        (0..s.len())
            .filter(|&j| !self.hard[j])
            .map(|j| if s[j] > 0.0 { excess[j].abs() } else { excess[j].max(0.0) })
            .fold(0.0, f64::max)
    }

    /// Maximizes the channel-step dual over `s ≥ 0`, starting from `s`.
    fn channel_step(&self, log_r: &[f64], s: &mut [f64]) -> Pass {
        let mut cur = self.pass(log_r, s);
        if !cur.feasible {
            return cur;
        }
        for _ in 0..NEWTON_STEPS {
            let kkt = self.kkt(s, &cur.excess);
            if kkt <= KKT_TOL {
                break;
            }
            let work: Vec<usize> =
                (0..s.len()).filter(|&j| !self.hard[j] && (s[j] > 0.0 || cur.excess[j] > 0.0)).collect();
            let n = work.len();
            let grad = DVector::from_iterator(n, work.iter().map(|&j| cur.excess[j]));
            let mut neg_hess = DMatrix::zeros(n, n);
            for (b, &j) in work.iter().enumerate() {
                let eps = 1e-7 * s[j].max(1.0);
                let mut shifted = s.to_vec();
                shifted[j] += eps;
                let p = self.pass(log_r, &shifted);
                for (a, &i) in work.iter().enumerate() {
                    neg_hess[(a, b)] = -(p.excess[i] - cur.excess[i]) / eps;
                }
            }
            let neg_hess = (&neg_hess + neg_hess.transpose()) * 0.5;
            let scale = neg_hess.diagonal().amax().max(1e-300);
            let dir = (&neg_hess + DMatrix::identity(n, n) * (1e-12 * scale))
                .cholesky()
                .map(|c| c.solve(&grad))
                .filter(|d| d.iter().all(|v| v.is_finite()) && d.dot(&grad) > 0.0)
                .unwrap_or_else(|| &grad / scale);

            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..80 {
                let mut trial = s.to_vec();
                for (a, &j) in work.iter().enumerate() {
                    trial[j] = (s[j] + step * dir[a]).max(0.0);
                }
                let p = self.pass(log_r, &trial);
                let improved = p.dual >= cur.dual - 1e-15 * cur.dual.abs() || self.kkt(&trial, &p.excess) < kkt;
                if p.feasible && p.dual.is_finite() && improved {
                    accepted = Some((trial, p));
                    break;
                }
                step *= 0.5;
            }
            // No progress left at working precision.
            let Some((trial, p)) = accepted else {
                break;
            };
            s.copy_from_slice(&trial);
            cur = p;
        }
        cur
    }

    /// Channel step at `log_r` followed by the output step.
    fn map(&self, log_r: &[f64], s: &mut [f64]) -> Step {
        let l = &self.layout;
        let px = self.problem.source.probs();
        let pass = self.channel_step(log_r, s);
        let q = normalized_rows(&pass.log_q, l.ny);
        let mut r = vec![0.0; l.ny];
        for x in 0..l.nx {
            for y in 0..l.ny {
                r[y] += px[x] * q[x * l.ny + y];
            }
        }
        let next = normalized_log(r.iter().map(|v| v.ln()).collect());
        Step { pass, q, next }
    }

    /// Upper minus lower bound on the minimum rate, bits. The channel-step
    /// optimum `Φ(r)` is convex in `r`, so its tangent plane at `r` bounds it
    /// below on the simplex.
    fn gap(&self, step: &Step, log_r: &[f64]) -> f64 {
        let l = &self.layout;
        let px = self.problem.source.probs();
        // `q/r` from logs: both sides underflow together for vanishing outputs.
        let mut c = vec![0.0; l.ny];
        for (x, &w) in px.iter().enumerate() {
            for y in 0..l.ny {
                c[y] += w * (step.pass.log_q[x * l.ny + y] - log_r[y]).exp();
            }
        }
        let cmax = c.iter().cloned().fold(0.0, f64::max);
        let lower = (step.pass.dual + 1.0 - cmax) / LN2;
        super::mutual_information_bits(self.problem, &step.q) - lower
    }

    /// Runs the alternating minimization from the output marginal `r0`,
    /// accelerated by squared extrapolation on `log r`.
    pub fn run(&self, r0: &[f64]) -> DiscreteResult {
        let opts = &self.problem.options;
        let mut s: Vec<f64> = self.hard.iter().map(|h| if *h { f64::INFINITY } else { 0.0 }).collect();
        let mut log_r = normalized_log(r0.iter().map(|v| v.ln()).collect());
        let mut cur = self.map(&log_r, &mut s);
        let mut evaluations = 1;
        let (gap, residual) = loop {
            let mut s_next = s.clone();
            let second = self.map(&cur.next, &mut s_next);
            evaluations += 1;
            let residual = second.q.iter().zip(&cur.q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let gap = self.gap(&cur, &log_r);
            let done = gap <= opts.gap_tol && residual <= opts.residual_tol;
            if !cur.pass.feasible || done || evaluations >= opts.max_iterations {
                break (gap, residual);
            }

            // Squared extrapolation in probability space, where vanishing
            // outputs contribute nothing to the step length.
            let exp = |v: &[f64]| v.iter().map(|e| e.exp()).collect::<Vec<_>>();
            let (r0, r1, r2) = (exp(&log_r), exp(&cur.next), exp(&second.next));
            let u: Vec<f64> = r1.iter().zip(&r0).map(|(a, b)| a - b).collect();
            let v: Vec<f64> = r2.iter().zip(&r1).zip(&r0).map(|((c, b), a)| c - 2.0 * b + a).collect();
            let norm = |w: &[f64]| w.iter().map(|e| e * e).sum::<f64>().sqrt();
            let mut alpha = if opts.accelerate && norm(&v) > 0.0 { -(norm(&u) / norm(&v)) } else { -1.0 };
            let mut accepted = None;
            while alpha < -1.0 - 1e-9 {
                let trial = normalized_log(
                    r0.iter()
                        .zip(&u)
                        .zip(&v)
                        .map(|((r, u), v)| (r - 2.0 * alpha * u + alpha * alpha * v).max(1e-3 * r).ln())
                        .collect(),
                );
                let mut s_trial = s_next.clone();
                let step = self.map(&trial, &mut s_trial);
                evaluations += 1;
                if step.pass.feasible && step.pass.dual < second.pass.dual {
                    accepted = Some((trial, step, s_trial));
                    break;
                }
                alpha = 0.5 * (alpha - 1.0);
            }
            match accepted {
                Some((trial, step, s_trial)) => {
                    log_r = trial;
                    cur = step;
                    s = s_trial;
                }
                None => {
                    log_r = cur.next.clone();
                    cur = second;
                    s = s_next;
                }
            }
        };

        let q = cur.q;
        let achieved = super::expected_distortions(self.problem, &q);
        let meets = achieved
            .iter()
            .zip(self.problem.targets.values())
            .all(|(a, d)| *a <= d + opts.distortion_tol);
        let converged = cur.pass.feasible && meets && gap <= opts.gap_tol && residual <= opts.residual_tol;
        DiscreteResult {
            rate: super::mutual_information_bits(self.problem, &q),
            channel: Channel {
                source_sizes: self.problem.source.sizes().to_vec(),
                reproduction_sizes: self.problem.reproduction_sizes.clone(),
                probs: q,
            },
            distortion_achieved: achieved,
            active: s.iter().map(|v| *v > 0.0).collect(),
            multipliers: s,
            iterations: evaluations,
            converged,
            certificate: gap.max(0.0),
            residual,
        }
    }
}

struct Step {
    pass: Pass,
    q: Vec<f64>,
    /// `log r` induced by `q`.
    next: Vec<f64>,
}

/// Normalizes log-weights, keeping them above the smallest normal exponent.
fn normalized_log(mut v: Vec<f64>) -> Vec<f64> {
    v.iter_mut().for_each(|e| *e = e.max(LOG_FLOOR));
    let lse = log_sum_exp(&v);
    v.iter_mut().for_each(|e| *e -= lse);
    v
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(super) fn normalized_rows(log_q: &[f64], ny: usize) -> Vec<f64> {
    let mut q: Vec<f64> = log_q.iter().map(|v| v.exp()).collect();
    for row in q.chunks_mut(ny) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    q
}

/// Solves from a uniform output marginal.
pub(super) fn solve(p: &DiscreteProblem, lookahead: &[usize]) -> DiscreteResult {
    let ny: usize = p.reproduction_sizes.iter().product();
    Solver::new(p, lookahead).run(&vec![1.0 / ny as f64; ny])
}
