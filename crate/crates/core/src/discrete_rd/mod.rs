//! Rate-distortion computation for small-alphabet sources.
//!
//! The sum-rate of a delayed-decoder system is `min I(X; X̂)` over channels
//! `q(x̂ | x)` meeting per-frame expected distortion targets, subject to the
//! architecture's Markov chains. For C–NC(k), and C–C as `k = 0`, those chains
//! say exactly that the marginal `q(x̂_1..x̂_j | x)` depends on `x` only through
//! `x_1..x_{j+k}`. The constraints are therefore linear in `q`, the problem is
//! convex, and an alternating minimization in the style of Blahut and Arimoto
//! reaches the global minimum. Each alternating step is solved in closed form
//! by a backward recursion over the frames.
//!
//! An independent interior-point solver is provided for cross-checking and as a
//! fallback.

mod ba;
mod barrier;

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::info::JointPmf;
use crate::model::{markov_constraints, Var};
use crate::{ChainConstraint, DistortionTuple, Error, Result, SystemKind};

pub use barrier::{barrier_solve, barrier_solve_starts, BarrierOptions};

const LN2: f64 = std::f64::consts::LN_2;

/// Pmf of the binary symmetric Markov source `X_{j+1} = X_j ⊕ N_j` with
/// `X_1 ~ Ber(½)` and independent `N_j ~ Ber(p_j)`.
pub fn binary_markov_pmf(crossovers: &[f64]) -> Result<JointPmf> {
    if let Some(p) = crossovers.iter().find(|p| !(0.0..=0.5).contains(*p)) {
        return Err(Error::OutOfRange(format!("crossover {p} outside [0, 1/2]")));
    }
    let t = crossovers.len() + 1;
    let probs = (0..1usize << t)
        .map(|x| {
            let bit = |j: usize| (x >> (t - 1 - j)) & 1;
            (0..t - 1).fold(0.5, |acc, j| {
                let p = crossovers[j];
                acc * if bit(j) == bit(j + 1) { 1.0 - p } else { p }
            })
        })
        .collect();
    JointPmf::new(vec![2; t], probs)
}

/// Three-frame binary Markov source with crossovers `p1`, `p2`.
pub fn build_binary_markov(p1: f64, p2: f64) -> Result<JointPmf> {
    binary_markov_pmf(&[p1, p2])
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscreteOptions {
    /// Cap on alternating steps.
    pub max_iterations: usize,
    /// Stop once upper and lower bounds on the rate agree to this many bits...
    pub gap_tol: f64,
    /// ...and one more step moves the channel by at most this much.
    pub residual_tol: f64,
    /// Allowed distortion excess over each target.
    pub distortion_tol: f64,
    /// Extrapolate the output marginal between steps.
    pub accelerate: bool,
}

impl Default for DiscreteOptions {
    fn default() -> Self {
        Self { max_iterations: 200_000, gap_tol: 1e-10, residual_tol: 1e-9, distortion_tol: 1e-9, accelerate: true }
    }
}

/// A rate-distortion problem for a discrete source.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    pub source: JointPmf,
    /// Reproduction alphabet size per frame.
    pub reproduction_sizes: Vec<usize>,
    /// Per-frame distortion matrices `d_j[x_j][x̂_j]`.
    pub distortions: Vec<Vec<Vec<f64>>>,
    pub targets: DistortionTuple,
    pub constraints: Vec<ChainConstraint>,
    pub options: DiscreteOptions,
}

impl DiscreteProblem {
    /// Hamming distortion and reproduction alphabets equal to the source's.
    pub fn hamming(source: JointPmf, targets: DistortionTuple) -> Result<Self> {
        let sizes = source.sizes().to_vec();
        if targets.len() != sizes.len() {
            return Err(Error::DimensionMismatch { expected: sizes.len(), found: targets.len() });
        }
        if let Some(d) = targets.values().iter().find(|d| **d > 1.0) {
            return Err(Error::OutOfRange(format!("Hamming distortion target {d} exceeds 1")));
        }
        let distortions = sizes
            .iter()
            .map(|&n| (0..n).map(|a| (0..n).map(|b| if a == b { 0.0 } else { 1.0 }).collect()).collect())
            .collect();
        Ok(Self {
            source,
            reproduction_sizes: sizes,
            distortions,
            targets,
            constraints: Vec::new(),
            options: DiscreteOptions::default(),
        })
    }

    pub fn with_constraints(mut self, constraints: Vec<ChainConstraint>) -> Self {
        self.constraints = constraints;
        self
    }

    /// Adds the chain constraints of `kind`.
    pub fn for_system(mut self, kind: SystemKind) -> Result<Self> {
        self.constraints = markov_constraints(kind, self.frames())?;
        Ok(self)
    }

    pub fn frames(&self) -> usize {
        self.source.arity()
    }

    fn validate(&self) -> Result<()> {
        let t = self.frames();
        let sizes = self.source.sizes();
        if self.targets.len() != t {
            return Err(Error::DimensionMismatch { expected: t, found: self.targets.len() });
        }
        if self.reproduction_sizes.len() != t || self.reproduction_sizes.contains(&0) {
            return Err(Error::InvalidSpec("one positive reproduction size per frame is required".into()));
        }
        if self.distortions.len() != t {
            return Err(Error::DimensionMismatch { expected: t, found: self.distortions.len() });
        }
        for (j, d) in self.distortions.iter().enumerate() {
            let shape_ok = d.len() == sizes[j] && d.iter().all(|row| row.len() == self.reproduction_sizes[j]);
            if !shape_ok || d.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidSpec(format!(
                    "distortion matrix of frame {} must be {}x{} with finite nonnegative entries",
                    j + 1,
                    sizes[j],
                    self.reproduction_sizes[j]
                )));
            }
        }
        for c in &self.constraints {
            c.validate(t)?;
        }
        Ok(())
    }

    /// Per-frame lookahead: `q(x̂_1..x̂_j | x)` may depend on `x_1..x_{m_j}`.
    /// Only constraints of the form
    /// `X̂_j ⟂ X_{m+1..T} | X_1..X_m, X̂_1..X̂_{j-1}` are accepted, with `m`
    /// non-decreasing in `j`.
    fn lookahead(&self) -> Result<Vec<usize>> {
        let t = self.frames();
        let mut m = vec![t; t];
        for c in &self.constraints {
            let unsupported = || Error::UnsupportedConstraint(c.to_string());
            let [Var::XHat(j)] = c.left[..] else {
                return Err(unsupported());
            };
            let mut right: Vec<usize> = c
                .right
                .iter()
                .map(|v| match v {
                    Var::X(i) => Ok(*i),
                    Var::XHat(_) => Err(unsupported()),
                })
                .collect::<Result<_>>()?;
            right.sort_unstable();
            let first = *right.first().ok_or_else(unsupported)?;
            if right != (first..t).collect::<Vec<_>>() || first <= j {
                return Err(unsupported());
            }
            let mut given = c.given.clone();
            given.sort_by_key(|v| v.flat(t));
            let expected: Vec<Var> = (0..first).map(Var::X).chain((0..j).map(Var::XHat)).collect();
            let without_hat: Vec<Var> = (0..first).map(Var::X).collect();
            // The earlier reproductions may be left out of the conditioning set
            // only when there are none.
            if given != expected && !(j == 0 && given == without_hat) {
                return Err(unsupported());
            }
            m[j] = m[j].min(first);
        }
        if m.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::UnsupportedConstraint(
                "lookahead must not decrease from one frame to the next".into(),
            ));
        }
        Ok(m)
    }
}

/// Conditional pmf `q(x̂ | x)`, row-major over `x` then `x̂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Channel {
    source_sizes: Vec<usize>,
    reproduction_sizes: Vec<usize>,
    probs: Vec<f64>,
}

impl Channel {
    pub fn new(source_sizes: Vec<usize>, reproduction_sizes: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let nx: usize = source_sizes.iter().product();
        let ny: usize = reproduction_sizes.iter().product();
        if probs.len() != nx * ny {
            return Err(Error::LengthMismatch(probs.len(), nx * ny));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidPmf("channel entries must be finite and nonnegative".into()));
        }
        for (x, row) in probs.chunks(ny).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidPmf(format!("channel row {x} sums to {s}")));
            }
        }
        Ok(Self { source_sizes, reproduction_sizes, probs })
    }

    /// Identity channel on matching alphabets.
    pub fn identity(sizes: &[usize]) -> Self {
        let n: usize = sizes.iter().product();
        let probs = (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect();
        Self { source_sizes: sizes.to_vec(), reproduction_sizes: sizes.to_vec(), probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let ny = self.probs.len() / self.source_sizes.iter().product::<usize>();
        &self.probs[x * ny..(x + 1) * ny]
    }

    /// Joint pmf over `(X_1..X_T, X̂_1..X̂_T)`.
    pub fn joint_pmf(&self, source: &JointPmf) -> Result<JointPmf> {
        if source.sizes() != self.source_sizes.as_slice() {
            return Err(Error::InvalidPmf("channel and source alphabets differ".into()));
        }
        let ny: usize = self.reproduction_sizes.iter().product();
        let probs = source
            .probs()
            .iter()
            .enumerate()
            .flat_map(|(x, px)| self.probs[x * ny..(x + 1) * ny].iter().map(move |q| px * q))
            .collect();
        let sizes = self.source_sizes.iter().chain(&self.reproduction_sizes).copied().collect();
        JointPmf::new(sizes, probs)
    }
}

/// Solver output.
#[derive(Debug, Clone, Serialize)]
pub struct DiscreteResult {
    /// `I(X; X̂)` in bits.
    pub rate: f64,
    pub channel: Channel,
    pub distortion_achieved: Vec<f64>,
    /// Lagrange multiplier of each distortion constraint (nats per unit
    /// distortion); infinite when the target is zero.
    pub multipliers: Vec<f64>,
    /// Whether each distortion constraint is binding.
    pub active: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
    /// Upper minus lower bound on the minimum, bits.
    pub certificate: f64,
    /// Largest channel change over one further alternating step.
    pub residual: f64,
}

/// Minimum of `I(X; X̂)` under the distortion targets and the problem's chain
/// constraints.
pub fn min_rate_discrete(p: &DiscreteProblem) -> Result<DiscreteResult> {
    p.validate()?;
    let lookahead = p.lookahead()?;
    let result = ba::solve(p, &lookahead);
    if result.converged || p.targets.values().contains(&0.0) {
        return Ok(result);
    }
    let fallback = barrier_solve(p, &BarrierOptions::default())?;
    Ok(if fallback.converged { fallback } else { result })
}

/// As [`min_rate_discrete`], starting from the output marginal induced by
/// `initial`. The optimum does not depend on the start.
pub fn min_rate_discrete_from(p: &DiscreteProblem, initial: &Channel) -> Result<DiscreteResult> {
    p.validate()?;
    let lookahead = p.lookahead()?;
    if initial.source_sizes != p.source.sizes() || initial.reproduction_sizes != p.reproduction_sizes {
        return Err(Error::InvalidPmf("initial channel alphabets do not match the problem".into()));
    }
    let ny: usize = p.reproduction_sizes.iter().product();
    let mut r = vec![0.0; ny];
    for (x, px) in p.source.probs().iter().enumerate() {
        for (ry, q) in r.iter_mut().zip(initial.row(x)) {
            *ry += px * q;
        }
    }
    // Outputs the start never uses would stay unused forever.
    let floor = 1e-12;
    r.iter_mut().for_each(|v| *v = v.max(floor));
    Ok(ba::Solver::new(p, &lookahead).run(&r))
}

/// Channel with independent random rows, reproducible from `seed`.
pub fn random_channel(p: &DiscreteProblem, seed: u64) -> Channel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx: usize = p.source.sizes().iter().product();
    let ny: usize = p.reproduction_sizes.iter().product();
    let mut probs: Vec<f64> = (0..nx * ny).map(|_| Exp1.sample(&mut rng)).collect();
    for row in probs.chunks_mut(ny) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    Channel { source_sizes: p.source.sizes().to_vec(), reproduction_sizes: p.reproduction_sizes.clone(), probs }
}

/// Joint-coding rate-distortion function.
pub fn jc_rd_discrete(p: &DiscreteProblem) -> Result<DiscreteResult> {
    if !p.constraints.is_empty() {
        return Err(Error::UnsupportedConstraint("joint coding takes no chain constraints".into()));
    }
    min_rate_discrete(p)
}

/// Sum-rate of the three-frame C–NC system with one frame of decoding delay,
/// i.e. the minimum under `X̂_1 ⟂ X_3 | X_1, X_2`.
pub fn cnc_sum_rate_discrete(p: &DiscreteProblem) -> Result<DiscreteResult> {
    if p.frames() != 3 {
        return Err(Error::InvalidSpec(format!("three frames required, found {}", p.frames())));
    }
    min_rate_discrete(&p.clone().for_system(SystemKind::CNC(1))?)
}

/// One row of an equivalence scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub distortion: Vec<f64>,
    pub jc_rate: f64,
    pub cnc_rate: f64,
    pub gap: f64,
    pub equal: bool,
    pub jc_iterations: usize,
    pub cnc_iterations: usize,
}

/// Gap at or below which the two rates are reported equal.
pub const EQUAL_GAP: f64 = 1e-3;

/// Compares the joint-coding and C–NC(1) rates of the three-frame binary Markov
/// source at every grid point.
pub fn equivalence_scan(p1: f64, p2: f64, grid: &[DistortionTuple]) -> Result<Vec<ScanRow>> {
    let source = build_binary_markov(p1, p2)?;
    grid.par_iter()
        .map(|d| {
            let problem = DiscreteProblem::hamming(source.clone(), d.clone())?;
            let jc = jc_rd_discrete(&problem)?;
            let cnc = cnc_sum_rate_discrete(&problem)?;
            let gap = cnc.rate - jc.rate;
            Ok(ScanRow {
                distortion: d.values().to_vec(),
                jc_rate: jc.rate,
                cnc_rate: cnc.rate,
                gap,
                equal: gap <= EQUAL_GAP,
                jc_iterations: jc.iterations,
                cnc_iterations: cnc.iterations,
            })
        })
        .collect()
}

/// Uniform grid with `points` values per axis over `[lo, hi]^T`.
pub fn uniform_grid(frames: usize, lo: f64, hi: f64, points: usize) -> Result<Vec<DistortionTuple>> {
    let axis: Vec<f64> = match points {
        0 => return Err(Error::OutOfRange("a grid needs at least one point per axis".into())),
        1 => vec![lo],
        n => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    };
    let total = points.pow(frames as u32);
    (0..total)
        .map(|mut k| {
            let mut v = vec![0.0; frames];
            for j in (0..frames).rev() {
                v[j] = axis[k % points];
                k /= points;
            }
            DistortionTuple::new(v)
        })
        .collect()
}

/// Version tag written on the first line of scan CSV output.
pub const SCAN_SCHEMA: &str = "# schema: seqcode.equivalence_scan v1";

/// CSV text of a scan: a schema line, a header, then one line per grid point.
pub fn scan_csv(rows: &[ScanRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{SCAN_SCHEMA}");
    let frames = rows.first().map_or(3, |r| r.distortion.len());
    let mut header: Vec<String> = (1..=frames).map(|j| format!("D{j}")).collect();
    header.extend(
        ["R_jc_bits", "R_cnc_bits", "gap_bits", "equal_flag", "iters_jc", "iters_cnc"].map(String::from),
    );
    let _ = writeln!(out, "{}", header.join(","));
    for r in rows {
        let mut cols: Vec<String> = r.distortion.iter().map(|d| format!("{d}")).collect();
        cols.push(format!("{:.9}", r.jc_rate));
        cols.push(format!("{:.9}", r.cnc_rate));
        cols.push(format!("{:.9}", r.gap));
        cols.push(u8::from(r.equal).to_string());
        cols.push(r.jc_iterations.to_string());
        cols.push(r.cnc_iterations.to_string());
        let _ = writeln!(out, "{}", cols.join(","));
    }
    out
}

/// Expected distortion of each frame under `channel`.
pub(crate) fn expected_distortions(p: &DiscreteProblem, q: &[f64]) -> Vec<f64> {
    let layout = Layout::new(p);
    let mut out = vec![0.0; layout.t];
    for (x, px) in p.source.probs().iter().enumerate() {
        if *px == 0.0 {
            continue;
        }
        for y in 0..layout.ny {
            let w = px * q[x * layout.ny + y];
            if w == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += w * p.distortions[j][layout.x_digit(x, j)][layout.y_digit(y, j)];
            }
        }
    }
    out
}

/// `I(X; X̂)` in bits for a channel.
pub(crate) fn mutual_information_bits(p: &DiscreteProblem, q: &[f64]) -> f64 {
    let ny = q.len() / p.source.probs().len();
    let mut r = vec![0.0; ny];
    for (x, px) in p.source.probs().iter().enumerate() {
        for y in 0..ny {
            r[y] += px * q[x * ny + y];
        }
    }
    let mut total = 0.0;
    for (x, px) in p.source.probs().iter().enumerate() {
        for y in 0..ny {
            let v = q[x * ny + y];
            if *px > 0.0 && v > 0.0 {
                total += px * v * (v / r[y]).ln();
            }
        }
    }
    (total / LN2).max(0.0)
}

/// Index arithmetic over the source and reproduction product alphabets.
pub(crate) struct Layout {
    pub t: usize,
    pub nx: usize,
    pub ny: usize,
    x_strides: Vec<usize>,
    x_sizes: Vec<usize>,
    y_strides: Vec<usize>,
    y_sizes: Vec<usize>,
}

impl Layout {
    pub fn new(p: &DiscreteProblem) -> Self {
        let strides = |sizes: &[usize]| {
            let mut s = vec![1; sizes.len()];
            for j in (0..sizes.len().saturating_sub(1)).rev() {
                s[j] = s[j + 1] * sizes[j + 1];
            }
            s
        };
        let x_sizes = p.source.sizes().to_vec();
        let y_sizes = p.reproduction_sizes.clone();
        Self {
            t: x_sizes.len(),
            nx: x_sizes.iter().product(),
            ny: y_sizes.iter().product(),
            x_strides: strides(&x_sizes),
            y_strides: strides(&y_sizes),
            x_sizes,
            y_sizes,
        }
    }

    pub fn x_digit(&self, x: usize, j: usize) -> usize {
        (x / self.x_strides[j]) % self.x_sizes[j]
    }

    pub fn y_digit(&self, y: usize, j: usize) -> usize {
        (y / self.y_strides[j]) % self.y_sizes[j]
    }

    /// Number of source outcomes sharing a prefix of length `m`.
    pub fn x_suffix_count(&self, m: usize) -> usize {
        if m == 0 {
            self.nx
        } else {
            self.x_strides[m - 1]
        }
    }

    /// Number of reproduction outcomes sharing a prefix of length `j`.
    pub fn y_suffix_count(&self, j: usize) -> usize {
        if j == 0 {
            self.ny
        } else {
            self.y_strides[j - 1]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::{conditional_mi, entropy, kdirect_identity_residual};

    fn binary(p: f64) -> JointPmf {
        build_binary_markov(p, p).unwrap()
    }

    fn problem(d: [f64; 3]) -> DiscreteProblem {
        DiscreteProblem::hamming(binary(0.1), DistortionTuple::new(d.to_vec()).unwrap()).unwrap()
    }

    fn h2(p: f64) -> f64 {
        -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
    }

    #[test]
    fn binary_markov_pmf_values() {
        let zero = binary(0.0);
        let half = binary(0.5);
        for x in 0..8 {
            let expected = if x == 0 || x == 7 { 0.5 } else { 0.0 };
            assert_eq!(zero.probs()[x], expected);
            assert!((half.probs()[x] - 0.125).abs() < 1e-15);
        }
        let p = binary(0.1);
        assert!((p.prob(&[0, 0, 0]) - 0.405).abs() < 1e-15);
        assert!(build_binary_markov(0.6, 0.1).is_err());
        assert!(build_binary_markov(0.1, -0.1).is_err());
    }

    #[test]
    fn binary_markov_structure() {
        let p = build_binary_markov(0.1, 0.3).unwrap();
        for j in 0..3 {
            assert!((p.marginal(&[j]).unwrap().probs()[0] - 0.5).abs() < 1e-15);
        }
        let flip = |a: usize, b: usize| {
            p.outcomes().filter(|(x, _)| x[a] != x[b]).map(|(_, w)| w).sum::<f64>()
        };
        assert!((flip(0, 1) - 0.1).abs() < 1e-15);
        assert!((flip(1, 2) - 0.3).abs() < 1e-15);
        assert!(conditional_mi(&p, &[0], &[2], &[1]).unwrap().abs() < 1e-14);
    }

    #[test]
    fn zero_distortion_gives_source_entropy() {
        let p = problem([0.0; 3]);
        let h = entropy(&p.source);
        assert!((h - (1.0 + 2.0 * h2(0.1))).abs() < 1e-12);
        let jc = jc_rd_discrete(&p).unwrap();
        let cnc = cnc_sum_rate_discrete(&p).unwrap();
        assert!(jc.converged && cnc.converged);
        assert!((jc.rate - h).abs() < 1e-9);
        assert!((cnc.rate - h).abs() < 1e-9);
        assert!(jc.multipliers.iter().all(|s| s.is_infinite()));
    }

    #[test]
    fn half_distortion_needs_no_rate() {
        let jc = jc_rd_discrete(&problem([0.5; 3])).unwrap();
        assert!(jc.converged);
        assert!(jc.rate < 1e-9);
        assert!(jc.distortion_achieved.iter().all(|d| *d <= 0.5 + 1e-9));
    }

    #[test]
    fn small_distortion_rates_meet_the_shannon_bound() {
        // Each frame sees an independent Ber(D) error in this range.
        let d = 0.005;
        let p = problem([d; 3]);
        let jc = jc_rd_discrete(&p).unwrap();
        let cnc = cnc_sum_rate_discrete(&p).unwrap();
        let bound = 1.0 + 2.0 * h2(0.1) - 3.0 * h2(d);
        assert!((jc.rate - bound).abs() < 1e-8, "{} vs {bound}", jc.rate);
        assert!((cnc.rate - jc.rate).abs() < 1e-8);
        assert!(jc.active.iter().all(|a| *a));
    }

    #[test]
    fn barrier_solver_agrees_from_random_starts() {
        let p = problem([0.02; 3]);
        let jc = jc_rd_discrete(&p).unwrap();
        assert!(jc.converged);
        assert!(jc.certificate <= 1e-6);
        let runs = barrier_solve_starts(&p, &BarrierOptions::default()).unwrap();
        assert_eq!(runs.len(), 5);
        for r in &runs {
            assert!(r.converged);
            assert!((r.rate - jc.rate).abs() < 1e-5, "{} vs {}", r.rate, jc.rate);
        }
    }

    #[test]
    fn constrained_barrier_agrees() {
        let p = problem([0.05, 0.03, 0.04]).for_system(SystemKind::CNC(1)).unwrap();
        let ba = min_rate_discrete(&p).unwrap();
        let barrier = barrier_solve(&p, &BarrierOptions { starts: 2, ..Default::default() }).unwrap();
        assert!(ba.converged && barrier.converged);
        assert!((ba.rate - barrier.rate).abs() < 1e-7);
    }

    #[test]
    fn constraints_never_lower_the_rate() {
        let base = problem([0.5, 0.5, 0.01]);
        let jc = jc_rd_discrete(&base).unwrap();
        let cnc = cnc_sum_rate_discrete(&base).unwrap();
        let cc = min_rate_discrete(&base.clone().for_system(SystemKind::CC).unwrap()).unwrap();
        assert!(cnc.rate >= jc.rate - 1e-9);
        assert!(cc.rate >= cnc.rate - 1e-9);

        let p = problem([0.1, 0.1, 0.05]);
        let jc = jc_rd_discrete(&p).unwrap();
        let cnc = cnc_sum_rate_discrete(&p).unwrap();
        let cc = min_rate_discrete(&p.clone().for_system(SystemKind::CC).unwrap()).unwrap();
        assert!(cnc.rate > jc.rate + 1e-3);
        assert!(cc.rate >= cnc.rate - 1e-9);
    }

    #[test]
    fn restarts_agree() {
        let p = problem([0.03, 0.05, 0.02]).for_system(SystemKind::CNC(1)).unwrap();
        let base = min_rate_discrete(&p).unwrap();
        assert!(base.residual <= 1e-8);
        for seed in 0..5 {
            let r = min_rate_discrete_from(&p, &random_channel(&p, seed)).unwrap();
            assert!(r.converged);
            assert!((r.rate - base.rate).abs() <= 1e-5);
        }
    }

    #[test]
    fn solver_output_satisfies_the_kdirect_identity() {
        let p = problem([0.02; 3]);
        let cnc = cnc_sum_rate_discrete(&p).unwrap();
        let joint = cnc.channel.joint_pmf(&p.source).unwrap();
        assert!(kdirect_identity_residual(&joint, 1).unwrap() <= 1e-10);
        // The returned channel obeys the chain.
        assert!(conditional_mi(&joint, &[3], &[2], &[0, 1]).unwrap() < 1e-9);
    }

    #[test]
    fn jc_rate_is_monotone_along_axes() {
        let axis = [0.0, 0.025, 0.05, 0.075, 0.1];
        for j in 0..3 {
            let mut last = f64::INFINITY;
            for &v in &axis {
                let mut d = [0.03; 3];
                d[j] = v;
                let r = jc_rd_discrete(&problem(d)).unwrap().rate;
                assert!(r <= last + 1e-9);
                last = r;
            }
        }
    }

    #[test]
    fn scan_flags_and_csv() {
        let grid = vec![
            DistortionTuple::new(vec![0.0; 3]).unwrap(),
            DistortionTuple::new(vec![0.1, 0.1, 0.0]).unwrap(),
        ];
        let rows = equivalence_scan(0.1, 0.1, &grid).unwrap();
        assert!(rows[0].equal);
        assert!(!rows[1].equal);
        assert!(rows[1].gap > 0.05);
        let csv = scan_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], SCAN_SCHEMA);
        assert_eq!(lines[1], "D1,D2,D3,R_jc_bits,R_cnc_bits,gap_bits,equal_flag,iters_jc,iters_cnc");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("0,0,0,1.937991187,1.937991187,"));
        assert_eq!(lines[3].split(',').nth(6), Some("0"));
    }

    #[test]
    fn uniform_grid_layout() {
        let g = uniform_grid(3, 0.0, 0.1, 5).unwrap();
        assert_eq!(g.len(), 125);
        assert_eq!(g[1].values(), &[0.0, 0.0, 0.025]);
        assert_eq!(g[124].values(), &[0.1, 0.1, 0.1]);
        assert!(uniform_grid(3, 0.0, 0.1, 0).is_err());
    }

    #[test]
    fn lookahead_from_constraints() {
        let src = binary_markov_pmf(&[0.1, 0.2, 0.3]).unwrap();
        let p = DiscreteProblem::hamming(src, DistortionTuple::uniform(4, 0.05).unwrap()).unwrap();
        assert_eq!(p.clone().for_system(SystemKind::CC).unwrap().lookahead().unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(p.clone().for_system(SystemKind::CNC(1)).unwrap().lookahead().unwrap(), vec![2, 3, 4, 4]);
        assert_eq!(p.clone().for_system(SystemKind::CNC(2)).unwrap().lookahead().unwrap(), vec![3, 4, 4, 4]);
        assert_eq!(p.lookahead().unwrap(), vec![4; 4]);

        let odd = ChainConstraint::new(vec![Var::XHat(1)], vec![Var::XHat(0)], vec![Var::X(0)]);
        assert!(matches!(
            p.clone().with_constraints(vec![odd]).lookahead(),
            Err(Error::UnsupportedConstraint(_))
        ));
        let gap = ChainConstraint::new(vec![Var::XHat(0)], vec![Var::X(3)], vec![Var::X(0)]);
        assert!(p.clone().with_constraints(vec![gap]).lookahead().is_err());
    }

    #[test]
    fn input_validation() {
        let src = binary(0.1);
        assert!(DiscreteProblem::hamming(src.clone(), DistortionTuple::uniform(2, 0.1).unwrap()).is_err());
        assert!(DiscreteProblem::hamming(src.clone(), DistortionTuple::uniform(3, 1.5).unwrap()).is_err());
        let mut p = problem([0.1; 3]);
        p.distortions[0][0] = vec![0.0];
        assert!(jc_rd_discrete(&p).is_err());
        let cnc = problem([0.1; 3]).for_system(SystemKind::CNC(1)).unwrap();
        assert!(jc_rd_discrete(&cnc).is_err());
        let four = DiscreteProblem::hamming(
            binary_markov_pmf(&[0.1, 0.1, 0.1]).unwrap(),
            DistortionTuple::uniform(4, 0.1).unwrap(),
        )
        .unwrap();
        assert!(cnc_sum_rate_discrete(&four).is_err());
        assert!(Channel::new(vec![2], vec![2], vec![0.5, 0.5, 1.0, 0.1]).is_err());
    }

    #[test]
    fn larger_reproduction_alphabet() {
        // A ternary reproduction with a useless third symbol changes nothing.
        let mut p = problem([0.05; 3]);
        p.reproduction_sizes = vec![3; 3];
        p.distortions = vec![vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0]]; 3];
        let wide = jc_rd_discrete(&p).unwrap();
        let narrow = jc_rd_discrete(&problem([0.05; 3])).unwrap();
        assert!(wide.converged);
        assert!((wide.rate - narrow.rate).abs() < 1e-8);
    }
}
