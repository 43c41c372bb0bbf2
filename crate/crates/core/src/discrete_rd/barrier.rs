//! Log-barrier Newton method on the channel. Independent of the alternating
//! solver; used to cross-check it and as its fallback.
//!
//! The structural constraints and row sums are affine, so iterates move in
//! `q0 + N z` with `N` a basis of their null space. Nonnegativity and the
//! distortion targets enter through the barrier.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Channel, DiscreteProblem, DiscreteResult, Layout, LN2};
use crate::{Error, Result};

/// Settings of the barrier solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierOptions {
    /// Random strictly feasible initial channels.
    pub starts: usize,
    pub seed: u64,
    /// Factor applied to the barrier weight after each centering.
    pub growth: f64,
    /// Target bound on the optimality gap, bits.
    pub gap_tol: f64,
    /// Newton steps per centering.
    pub max_newton: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self { starts: 5, seed: 0, growth: 10.0, gap_tol: 1e-11, max_newton: 200 }
    }
}

struct Barrier<'a> {
    problem: &'a DiscreteProblem,
    layout: Layout,
    /// Null-space basis of the affine constraints.
    basis: DMatrix<f64>,
    /// Gradient of each frame's expected distortion.
    dist_grad: Vec<DVector<f64>>,
}

impl<'a> Barrier<'a> {
    fn new(problem: &'a DiscreteProblem, lookahead: &[usize]) -> Self {
        let layout = Layout::new(problem);
        let (nx, ny) = (layout.nx, layout.ny);
        let n = nx * ny;
        let mut rows: Vec<DVector<f64>> = Vec::new();
        for x in 0..nx {
            let mut a = DVector::zeros(n);
            a.rows_mut(x * ny, ny).fill(1.0);
            rows.push(a);
        }
        for (j, &m) in lookahead.iter().enumerate() {
            if m == layout.t {
                continue;
            }
            let group = layout.x_suffix_count(m);
            let width = layout.y_suffix_count(j + 1);
            for g in (0..nx).step_by(group) {
                for start in (0..ny).step_by(width) {
                    for x in g + 1..g + group {
                        let mut a = DVector::zeros(n);
                        a.rows_mut(x * ny + start, width).fill(1.0);
                        a.rows_mut(g * ny + start, width).fill(-1.0);
                        rows.push(a);
                    }
                }
            }
        }
        let a = DMatrix::from_columns(&rows);
        let eig = SymmetricEigen::new(&a * a.transpose());
        let top = eig.eigenvalues.amax();
        let null: Vec<DVector<f64>> = eig
            .eigenvalues
            .iter()
            .zip(eig.eigenvectors.column_iter())
            .filter(|(v, _)| **v <= 1e-10 * top)
            .map(|(_, c)| c.into_owned())
            .collect();
        let basis = if null.is_empty() { DMatrix::zeros(n, 0) } else { DMatrix::from_columns(&null) };

        let px = problem.source.probs();
        let dist_grad = (0..layout.t)
            .map(|j| {
                DVector::from_fn(n, |k, _| {
                    let (x, y) = (k / ny, k % ny);
                    px[x] * problem.distortions[j][layout.x_digit(x, j)][layout.y_digit(y, j)]
                })
            })
            .collect();
        Self { problem, layout, basis, dist_grad }
    }

    fn slacks(&self, q: &DVector<f64>) -> Vec<f64> {
        self.problem.targets.values().iter().zip(&self.dist_grad).map(|(d, g)| d - g.dot(q)).collect()
    }

    fn information(&self, q: &DVector<f64>) -> f64 {
        super::mutual_information_bits(self.problem, q.as_slice()) * LN2
    }

    /// `t·I(q) - Σ log q - Σ log(slack)`, or infinity outside the domain.
    fn value(&self, q: &DVector<f64>, t: f64) -> f64 {
        if q.iter().any(|v| *v <= 0.0) {
            return f64::INFINITY;
        }
        let slacks = self.slacks(q);
        if slacks.iter().any(|s| *s <= 0.0) {
            return f64::INFINITY;
        }
        t * self.information(q) - q.iter().map(|v| v.ln()).sum::<f64>() - slacks.iter().map(|s| s.ln()).sum::<f64>()
    }

    fn gradient_hessian(&self, q: &DVector<f64>, t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let (nx, ny) = (self.layout.nx, self.layout.ny);
        let n = nx * ny;
        let px = self.problem.source.probs();
        let mut r = vec![0.0; ny];
        for x in 0..nx {
            for y in 0..ny {
                r[y] += px[x] * q[x * ny + y];
            }
        }
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for x in 0..nx {
            for y in 0..ny {
                let k = x * ny + y;
                g[k] = t * px[x] * (q[k] / r[y]).ln() - 1.0 / q[k];
                h[(k, k)] += t * px[x] / q[k] + 1.0 / (q[k] * q[k]);
                for x2 in 0..nx {
                    h[(k, x2 * ny + y)] -= t * px[x] * px[x2] / r[y];
                }
            }
        }
        for (s, dg) in self.slacks(q).iter().zip(&self.dist_grad) {
            g += dg / *s;
            h += dg * dg.transpose() / (s * s);
        }
        (g, h)
    }

    /// Minimizes the barrier objective for weight `t`. Returns the step count
    /// and the final Newton decrement.
    fn center(&self, q: &mut DVector<f64>, t: f64, max_newton: usize) -> (usize, f64) {
        let nb = &self.basis;
        let mut decrement = f64::INFINITY;
        for it in 0..max_newton {
            let (g, h) = self.gradient_hessian(q, t);
            let gz = nb.transpose() * &g;
            let hz = nb.transpose() * &h * nb;
            let ridge = 1e-13 * hz.diagonal().amax();
            let Some(chol) = hz.clone().cholesky().or_else(|| {
                (&hz + DMatrix::identity(hz.nrows(), hz.nrows()) * ridge).cholesky()
            }) else {
                return (it, decrement);
            };
            let dz = -chol.solve(&gz);
            decrement = -gz.dot(&dz);
            if decrement <= 1e-14 {
                return (it, decrement);
            }
            let dq = nb * dz;
            let f0 = self.value(q, t);
            let mut step = 1.0;
            loop {
                let trial = &*q + &dq * step;
                let f = self.value(&trial, t);
                if f <= f0 - 0.25 * step * decrement {
                    *q = trial;
                    break;
                }
                step *= 0.5;
                if step < 1e-12 {
                    return (it, decrement);
                }
            }
        }
        (max_newton, decrement)
    }

    /// Structured channel with independent random conditionals.
    fn random_channel(&self, lookahead: &[usize], rng: &mut ChaCha8Rng) -> DVector<f64> {
        let l = &self.layout;
        let mut q = DVector::from_element(l.nx * l.ny, 1.0);
        for j in 0..l.t {
            let group = l.x_suffix_count(lookahead[j]);
            let prefixes = l.ny / l.y_suffix_count(j);
            let size = self.problem.reproduction_sizes[j];
            let table: Vec<f64> = (0..l.nx / group * prefixes)
                .flat_map(|_| {
                    let w: Vec<f64> = (0..size).map(|_| Exp1.sample(rng)).collect();
                    let s: f64 = w.iter().sum();
                    w.into_iter().map(move |v| v / s)
                })
                .collect();
            for x in 0..l.nx {
                for y in 0..l.ny {
                    let row = (x / group) * prefixes + y / l.y_suffix_count(j);
                    q[x * l.ny + y] *= table[row * size + l.y_digit(y, j)];
                }
            }
        }
        q
    }

    /// Channel reproducing each frame with a least-distortion symbol.
    fn nearest_channel(&self) -> DVector<f64> {
        let l = &self.layout;
        DVector::from_fn(l.nx * l.ny, |k, _| {
            let (x, y) = (k / l.ny, k % l.ny);
            let hit = (0..l.t).all(|j| {
                let row = &self.problem.distortions[j][l.x_digit(x, j)];
                let best = (0..row.len()).min_by(|a, b| row[*a].total_cmp(&row[*b])).unwrap_or(0);
                l.y_digit(y, j) == best
            });
            if hit {
                1.0
            } else {
                0.0
            }
        })
    }
}

fn run_start(
    b: &Barrier,
    lookahead: &[usize],
    opts: &BarrierOptions,
    start: usize,
) -> Result<DiscreteResult> {
    let p = b.problem;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(start as u64);
    let nearest = b.nearest_channel();
    let random = b.random_channel(lookahead, &mut rng);
    let (s_near, s_rand) = (b.slacks(&nearest), b.slacks(&random));
    if s_near.iter().any(|s| *s <= 0.0) {
        return Err(Error::Infeasible("the barrier solver needs targets above the least achievable distortion".into()));
    }
    // Largest mixing weight keeping half of each slack.
    let eps = s_near
        .iter()
        .zip(&s_rand)
        .filter(|(n, r)| r < n)
        .map(|(n, r)| 0.5 * n / (n - r))
        .fold(0.5, f64::min);
    let mut q = nearest * (1.0 - eps) + random * eps;

    let m = (q.len() + p.frames()) as f64;
    let mut t = 1.0;
    let mut iterations = 0;
    let mut centered;
    let mut residual;
    loop {
        let (steps, decrement) = b.center(&mut q, t, opts.max_newton);
        iterations += steps;
        // Suboptimality left by inexact centering, in bits.
        residual = decrement / (2.0 * t) / LN2;
        centered = residual <= opts.gap_tol;
        if m / t / LN2 <= opts.gap_tol {
            break;
        }
        t *= opts.growth;
    }

    let slacks = b.slacks(&q);
    let probs = q.iter().map(|v| v.max(0.0)).collect::<Vec<_>>();
    let multipliers: Vec<f64> = slacks.iter().map(|s| 1.0 / (t * s)).collect();
    let achieved = super::expected_distortions(p, &probs);
    let ny = b.layout.ny;
    let probs = {
        let mut v = probs;
        for row in v.chunks_mut(ny) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|e| *e /= s);
        }
        v
    };
    Ok(DiscreteResult {
        rate: super::mutual_information_bits(p, &probs),
        channel: Channel {
            source_sizes: p.source.sizes().to_vec(),
            reproduction_sizes: p.reproduction_sizes.clone(),
            probs,
        },
        distortion_achieved: achieved,
        active: multipliers.iter().map(|v| *v > 1e-6).collect(),
        multipliers,
        iterations,
        converged: centered,
        certificate: m / t / LN2 + residual,
        residual,
    })
}

/// Solves from every random start; results are in start order.
pub fn barrier_solve_starts(p: &DiscreteProblem, opts: &BarrierOptions) -> Result<Vec<DiscreteResult>> {
    p.validate()?;
    let lookahead = p.lookahead()?;
    if opts.starts == 0 {
        return Err(Error::OutOfRange("at least one start is required".into()));
    }
    if opts.growth.is_nan() || opts.growth <= 1.0 {
        return Err(Error::OutOfRange(format!("barrier growth {} must exceed 1", opts.growth)));
    }
    let b = Barrier::new(p, &lookahead);
    (0..opts.starts).into_par_iter().map(|i| run_start(&b, &lookahead, opts, i)).collect()
}

/// Lowest-rate converged start, or the lowest-rate start when none converged.
pub fn barrier_solve(p: &DiscreteProblem, opts: &BarrierOptions) -> Result<DiscreteResult> {
    let runs = barrier_solve_starts(p, opts)?;
    let any_converged = runs.iter().any(|r| r.converged);
    Ok(runs
        .into_iter()
        .filter(|r| r.converged || !any_converged)
        .min_by(|a, b| a.rate.total_cmp(&b.rate))
        .expect("at least one start"))
}
