//! Monte Carlo validation at finite blocklength: idealized DPCM and the
//! joint-coding test channel.
//!
//! Each replication draws `n` spatially independent copies of the `T`-frame
//! source. The ideal DPCM backend replaces the per-stage quantizer by the
//! forward Gaussian test channel `Ŵ = αW + √(αD)·N`, `α = 1 - D/σ_W²`, which
//! gives `E(W - Ŵ)² = D` and `Ŵ = E[W | Ŵ]`. The quantizer backend uses a
//! midrise uniform scalar quantizer instead and reports the plug-in entropy of
//! its indices.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{build_covariance, in_region_jc};
use crate::{closed_forms, linalg, CovMatrix, DistortionTuple, Error, Result, SourceSpec};

pub const SIM_SCHEMA: &str = "# schema: seqcode.sim_report v1";

const BISECTION_STEPS: usize = 20;
const PINV_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    IdealTestChannel,
    UniformScalarQuantizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    IdealDpcm,
    QuantizedDpcm,
    JcTestChannel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub spec: SourceSpec,
    pub distortion: DistortionTuple,
    pub blocklength: usize,
    pub seed: u64,
    pub backend: Backend,
    pub replications: usize,
}

impl SimConfig {
    pub fn new(spec: SourceSpec, distortion: DistortionTuple, blocklength: usize, seed: u64) -> Self {
        Self { spec, distortion, blocklength, seed, backend: Backend::IdealTestChannel, replications: 1 }
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.blocklength == 0 {
            return Err(Error::OutOfRange("blocklength must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::OutOfRange("replication count must be at least 1".into()));
        }
        if self.spec.frames() != self.distortion.len() {
            return Err(Error::DimensionMismatch { expected: self.spec.frames(), found: self.distortion.len() });
        }
        Ok(())
    }
}

/// Conditional cross-covariance `cov(X̂_j, X_{after} | given)`, largest
/// absolute entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCovDiagnostic {
    pub label: String,
    pub empirical: f64,
    pub population: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationStats {
    pub replication: usize,
    pub mse: Vec<f64>,
    pub rates: Vec<f64>,
    pub innovation_variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scheme: Scheme,
    pub blocklength: usize,
    pub seed: u64,
    pub replications: usize,
    pub target: Vec<f64>,
    /// Mean over replications.
    pub mse: Vec<f64>,
    /// Nominal stage rates for the ideal backend, index entropies for the
    /// quantizer backend, empty for the joint test channel.
    pub rates: Vec<f64>,
    pub nominal_rates: Vec<f64>,
    pub sum_rate: f64,
    pub innovation_variance: Vec<f64>,
    pub innovation_variance_nominal: Vec<f64>,
    pub prediction_gain_db: Vec<f64>,
    pub diagnostics: Vec<CrossCovDiagnostic>,
    pub per_replication: Vec<ReplicationStats>,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per frame per replication.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SIM_SCHEMA}\nreplication,frame,target_D,mse,rate,innovation_var\n");
        for rep in &self.per_replication {
            for j in 0..self.target.len() {
                let opt = |v: &[f64]| v.get(j).map(|x| format!("{x:.9}")).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{:.9},{},{}",
                    rep.replication,
                    j + 1,
                    self.target[j],
                    rep.mse[j],
                    opt(&rep.rates),
                    opt(&rep.innovation_variance),
                );
            }
        }
        out
    }
}

/// Generator for replication `stream_id` under `seed`.
pub fn seeded_rng_stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// `n` draws of `N(0, F Fᵀ)`, stored frame-major.
fn sample_gaussian(factor: &DMatrix<f64>, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let t = factor.nrows();
    let mut out = vec![vec![0.0; n]; t];
    let mut g = vec![0.0; factor.ncols()];
    for s in 0..n {
        for v in g.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        for (i, col) in out.iter_mut().enumerate() {
            col[s] = (0..g.len()).map(|k| factor[(i, k)] * g[k]).sum();
        }
    }
    out
}

fn mean_square(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>() / a.len() as f64
}

fn mean_square_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

fn sample_covariance(cols: &[&[f64]]) -> DMatrix<f64> {
    let m = cols.len();
    let n = cols.first().map_or(0, |c| c.len());
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let mut s = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let v = cols[a].iter().zip(cols[b]).map(|(x, y)| (x - means[a]) * (y - means[b])).sum::<f64>()
                / n as f64;
            s[(a, b)] = v;
            s[(b, a)] = v;
        }
    }
    s
}

/// Least-squares weights of `target` on `regressors` given their joint
/// second moments.
fn regression(cov_rr: &DMatrix<f64>, cov_rt: &DVector<f64>) -> DVector<f64> {
    if cov_rr.nrows() == 0 {
        return DVector::zeros(0);
    }
    let eps = PINV_EPS * cov_rr.amax().max(f64::MIN_POSITIVE);
    let pinv = cov_rr.clone().pseudo_inverse(eps).expect("eps is positive");
    pinv * cov_rt
}

fn entropy_bits(indices: &[i64]) -> f64 {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    sorted
        .chunk_by(|a, b| a == b)
        .map(|c| {
            let p = c.len() as f64 / n;
            -p * p.log2()
        })
        .sum()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Chain labels and variable indices (`X_j` at `j`, `X̂_j` at `T + j`) for the
/// C–NC(k) Markov chains `X̂_j ⟂ X_{j+k+1..T} | X^{j+k}, X̂^{j-1}`.
fn chain_checks(t: usize, k: usize) -> Vec<(String, usize, Vec<usize>, Vec<usize>)> {
    (0..t)
        .filter(|j| j + k + 1 < t)
        .map(|j| {
            let after: Vec<usize> = (j + k + 1..t).collect();
            let given: Vec<usize> = (0..=j + k).chain((0..j).map(|i| t + i)).collect();
            let future = if j + k + 2 == t { format!("X{t}") } else { format!("X{}..X{t}", j + k + 2) };
            let label = format!(
                "cov(X̂{}, {future} | X^{}{})",
                j + 1,
                j + k + 1,
                if j > 0 { format!(", X̂^{j}") } else { String::new() }
            );
            (label, t + j, after, given)
        })
        .collect()
}

fn diagnostics(
    checks: &[(String, usize, Vec<usize>, Vec<usize>)],
    empirical: &DMatrix<f64>,
    population: &DMatrix<f64>,
) -> Vec<CrossCovDiagnostic> {
    let eval = |s: &DMatrix<f64>, c: &(String, usize, Vec<usize>, Vec<usize>)| {
        let cov = linalg::conditional_cross_cov(s, &[c.1], &c.2, &c.3).unwrap_or_else(|| {
            // Singular conditioning set: fall back to the pseudo-inverse.
            let g = linalg::submatrix(s, &c.3, &c.3);
            let eps = PINV_EPS * g.amax().max(f64::MIN_POSITIVE);
            let w = g.pseudo_inverse(eps).expect("eps is positive");
            linalg::submatrix(s, &[c.1], &c.2) - linalg::submatrix(s, &[c.1], &c.3) * w * linalg::submatrix(s, &c.3, &c.2)
        });
        max_abs(&cov)
    };
    checks
        .iter()
        .map(|c| CrossCovDiagnostic { label: c.0.clone(), empirical: eval(empirical, c), population: eval(population, c) })
        .collect()
}

/// Population description of ideal DPCM: every `X_j`, `X̂_j` as a linear map
/// of `2T` independent unit Gaussians (source drivers, then channel noises).
struct IdealPlan {
    factor: DMatrix<f64>,
    predictors: Vec<DVector<f64>>,
    alpha: Vec<f64>,
    noise: Vec<f64>,
    innovation: Vec<f64>,
    joint: DMatrix<f64>,
}

fn ideal_plan(sigma: &CovMatrix, d: &[f64]) -> Result<IdealPlan> {
    let t = d.len();
    let factor = linalg::psd_factor(sigma.matrix());
    let mut rows = DMatrix::<f64>::zeros(2 * t, 2 * t);
    rows.view_mut((0, 0), (t, t)).copy_from(&factor);
    let (mut predictors, mut alpha, mut noise, mut innovation) = (vec![], vec![], vec![], vec![]);
    let scale = linalg::max_eigenvalue(sigma.matrix()).max(f64::MIN_POSITIVE);
    for j in 0..t {
        let xj = rows.row(j).transpose();
        let prev = rows.rows(t, j).clone_owned();
        let c = regression(&(&prev * prev.transpose()), &(&prev * &xj));
        let pred = prev.transpose() * &c;
        let w = &xj - &pred;
        let var_w = w.norm_squared();
        if d[j] > var_w * (1.0 + 1e-9) + 1e-12 * scale {
            return Err(Error::OutOfRegion(format!(
                "D_{} = {} exceeds the innovation variance {var_w}",
                j + 1,
                d[j]
            )));
        }
        let a = if var_w > 0.0 { (1.0 - d[j] / var_w).max(0.0) } else { 0.0 };
        let nz = (a * d[j]).sqrt();
        let mut row = pred + a * w;
        row[t + j] += nz;
        rows.set_row(t + j, &row.transpose());
        predictors.push(c);
        alpha.push(a);
        noise.push(nz);
        innovation.push(var_w);
    }
    let joint = &rows * rows.transpose();
    Ok(IdealPlan { factor, predictors, alpha, noise, innovation, joint })
}

struct Run {
    stats: ReplicationStats,
    cov: DMatrix<f64>,
}

fn dpcm_replication(plan: &IdealPlan, cfg: &SimConfig, rep: usize, checks: &[(String, usize, Vec<usize>, Vec<usize>)]) -> Run {
    let t = cfg.distortion.len();
    let n = cfg.blocklength;
    let d = cfg.distortion.values();
    let mut rng = seeded_rng_stream(cfg.seed, rep as u64);
    let x = sample_gaussian(&plan.factor, n, &mut rng);
    let mut xhat: Vec<Vec<f64>> = Vec::with_capacity(t);
    let (mut mse, mut rates, mut innovation) = (vec![], vec![], vec![]);
    for j in 0..t {
        let c = match cfg.backend {
            Backend::IdealTestChannel => plan.predictors[j].clone(),
            Backend::UniformScalarQuantizer => {
                let cols: Vec<&[f64]> = xhat.iter().map(|v| v.as_slice()).chain([x[j].as_slice()]).collect();
                let s = sample_covariance(&cols);
                regression(&s.view((0, 0), (j, j)).clone_owned(), &s.view((0, j), (j, 1)).column(0).clone_owned())
            }
        };
        let pred: Vec<f64> = (0..n).map(|s| (0..j).map(|i| c[i] * xhat[i][s]).sum()).collect();
        let w: Vec<f64> = x[j].iter().zip(&pred).map(|(a, b)| a - b).collect();
        innovation.push(mean_square(&w));
        let what = match cfg.backend {
            Backend::IdealTestChannel => {
                rates.push(stage_rate(plan.innovation[j], d[j]));
                w.iter()
                    .map(|wv| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        plan.alpha[j] * wv + plan.noise[j] * z
                    })
                    .collect::<Vec<f64>>()
            }
            Backend::UniformScalarQuantizer => {
                let (q, idx) = quantize_to_target(&w, d[j]);
                rates.push(entropy_bits(&idx));
                q
            }
        };
        let rec: Vec<f64> = pred.iter().zip(&what).map(|(a, b)| a + b).collect();
        mse.push(mean_square_diff(&x[j], &rec));
        xhat.push(rec);
    }
    let cov = if checks.is_empty() {
        DMatrix::zeros(0, 0)
    } else {
        let cols: Vec<&[f64]> = x.iter().chain(&xhat).map(|v| v.as_slice()).collect();
        sample_covariance(&cols)
    };
    Run { stats: ReplicationStats { replication: rep, mse, rates, innovation_variance: innovation }, cov }
}

fn stage_rate(var_w: f64, d: f64) -> f64 {
    if d >= var_w {
        0.0
    } else {
        0.5 * (var_w / d).log2()
    }
}

fn midrise(w: &[f64], step: f64) -> (Vec<f64>, Vec<i64>) {
    w.iter()
        .map(|v| {
            let i = (v / step).floor();
            ((i + 0.5) * step, i as i64)
        })
        .unzip()
}

/// Midrise quantizer whose step is bisected so the empirical MSE meets `d`.
fn quantize_to_target(w: &[f64], d: f64) -> (Vec<f64>, Vec<i64>) {
    let mse = |step: f64| {
        let (q, _) = midrise(w, step);
        mean_square_diff(w, &q)
    };
    let (mut lo, mut hi) = (0.0, (12.0 * d).sqrt());
    while mse(hi) < d && hi < 1e6 {
        hi *= 2.0;
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mse(mid) > d {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let step = if lo > 0.0 { lo } else { hi };
    midrise(w, step)
}

fn aggregate(
    scheme: Scheme,
    cfg_n: usize,
    seed: u64,
    target: &[f64],
    runs: Vec<Run>,
    population: &DMatrix<f64>,
    checks: &[(String, usize, Vec<usize>, Vec<usize>)],
) -> SimReport {
    let r = runs.len() as f64;
    let t = target.len();
    let mean = |f: &dyn Fn(&ReplicationStats) -> &Vec<f64>| -> Vec<f64> {
        let len = runs.first().map_or(0, |x| f(&x.stats).len());
        (0..len).map(|j| runs.iter().map(|x| f(&x.stats)[j]).sum::<f64>() / r).collect()
    };
    let mse = mean(&|s| &s.mse);
    let rates = mean(&|s| &s.rates);
    let innovation = mean(&|s| &s.innovation_variance);
    let diag = if checks.is_empty() {
        vec![]
    } else {
        let mut cov = DMatrix::zeros(2 * t, 2 * t);
        for x in &runs {
            cov += &x.cov;
        }
        diagnostics(checks, &(cov / r), population)
    };
    SimReport {
        scheme,
        blocklength: cfg_n,
        seed,
        replications: runs.len(),
        target: target.to_vec(),
        mse,
        sum_rate: rates.iter().sum(),
        rates,
        nominal_rates: vec![],
        innovation_variance: innovation,
        innovation_variance_nominal: vec![],
        prediction_gain_db: vec![],
        diagnostics: diag,
        per_replication: runs.into_iter().map(|x| x.stats).collect(),
    }
}

/// Idealized DPCM: causal MMSE prediction from past reconstructions, coding
/// of the innovation, causal MMSE reconstruction.
pub fn simulate_dpcm(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let sigma = build_covariance(&cfg.spec)?;
    let d = cfg.distortion.values();
    let plan = ideal_plan(&sigma, d)?;
    if cfg.backend == Backend::UniformScalarQuantizer {
        if let Some(j) = d.iter().position(|v| *v <= 0.0) {
            return Err(Error::OutOfRange(format!("quantizer backend needs D_{} > 0", j + 1)));
        }
    }
    let t = d.len();
    let checks = chain_checks(t, 0);
    let runs: Vec<Run> =
        (0..cfg.replications).into_par_iter().map(|rep| dpcm_replication(&plan, cfg, rep, &checks)).collect();
    let scheme = match cfg.backend {
        Backend::IdealTestChannel => Scheme::IdealDpcm,
        Backend::UniformScalarQuantizer => Scheme::QuantizedDpcm,
    };
    let mut report = aggregate(scheme, cfg.blocklength, cfg.seed, d, runs, &plan.joint, &checks);
    report.nominal_rates = plan.innovation.iter().zip(d).map(|(w, dj)| stage_rate(*w, *dj)).collect();
    report.prediction_gain_db =
        (0..t).map(|j| 10.0 * (sigma.matrix()[(j, j)] / plan.innovation[j]).log10()).collect();
    report.innovation_variance_nominal = plan.innovation;
    Ok(report)
}

/// Samples `X̂ ~ N(0, Σ - diag(D))` and `X = X̂ + Z` with `Z ~ N(0, diag(D))`
/// independent, over `replications` independent streams.
pub fn simulate_jc_testchannel_replicated(
    sigma: &CovMatrix,
    d: &DistortionTuple,
    n: usize,
    seed: u64,
    replications: usize,
) -> Result<SimReport> {
    if n == 0 || replications == 0 {
        return Err(Error::OutOfRange("blocklength and replication count must be at least 1".into()));
    }
    if !in_region_jc(sigma, d)? {
        return Err(Error::OutOfRegion("Σ - diag(D) is not positive semidefinite".into()));
    }
    let t = d.len();
    let dv = d.values();
    let mut reproduction = sigma.matrix().clone();
    for j in 0..t {
        reproduction[(j, j)] -= dv[j];
    }
    linalg::symmetrize(&mut reproduction);
    let factor = linalg::psd_factor(&reproduction);
    let mut joint = DMatrix::zeros(2 * t, 2 * t);
    joint.view_mut((0, 0), (t, t)).copy_from(sigma.matrix());
    for blk in [(0, t), (t, 0), (t, t)] {
        joint.view_mut(blk, (t, t)).copy_from(&reproduction);
    }
    let checks = chain_checks(t, 1);
    let runs: Vec<Run> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = seeded_rng_stream(seed, rep as u64);
            let xhat = sample_gaussian(&factor, n, &mut rng);
            let x: Vec<Vec<f64>> = xhat
                .iter()
                .zip(dv)
                .map(|(col, dj)| {
                    let s = dj.sqrt();
                    col.iter()
                        .map(|v| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            v + s * z
                        })
                        .collect()
                })
                .collect();
            let mse = (0..t).map(|j| mean_square_diff(&x[j], &xhat[j])).collect();
            let cov = if checks.is_empty() {
                DMatrix::zeros(0, 0)
            } else {
                let cols: Vec<&[f64]> = x.iter().chain(&xhat).map(|v| v.as_slice()).collect();
                sample_covariance(&cols)
            };
            Run { stats: ReplicationStats { replication: rep, mse, rates: vec![], innovation_variance: vec![] }, cov }
        })
        .collect();
    let mut report = aggregate(Scheme::JcTestChannel, n, seed, dv, runs, &joint, &checks);
    report.sum_rate = closed_forms::jc_rate_gm(sigma, d)?;
    Ok(report)
}

/// Single-replication joint-coding test channel.
pub fn simulate_jc_testchannel(sigma: &CovMatrix, d: &DistortionTuple, n: usize, seed: u64) -> Result<SimReport> {
    simulate_jc_testchannel_replicated(sigma, d, n, seed, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::{dpcm_stage_rates, sigma_w};
    use rand::Rng;

    fn example_a() -> (SourceSpec, DistortionTuple) {
        (SourceSpec::uniform_gauss_markov(3, 0.9).unwrap(), DistortionTuple::uniform(3, 0.05).unwrap())
    }

    #[test]
    fn rng_streams() {
        let a: Vec<u64> = (0..1000).map({
            let mut r = seeded_rng_stream(7, 3);
            move |_| r.random()
        }).collect();
        let mut r = seeded_rng_stream(7, 3);
        assert!(a.iter().all(|v| *v == r.random::<u64>()));

        let (mut r0, mut r1) = (seeded_rng_stream(7, 0), seeded_rng_stream(7, 1));
        let n = 100_000;
        let (mut sxy, mut sxx, mut syy, mut sx, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x: f64 = r0.random();
            let y: f64 = r1.random();
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
            sx += x;
            sy += y;
        }
        let nf = n as f64;
        let cov = sxy / nf - sx * sy / nf / nf;
        let corr = cov / ((sxx / nf - (sx / nf).powi(2)) * (syy / nf - (sy / nf).powi(2))).sqrt();
        assert!(corr.abs() <= 0.01);
    }

    #[test]
    fn ideal_dpcm_example_a() {
        let (spec, d) = example_a();
        let r = simulate_dpcm(&SimConfig::new(spec.clone(), d.clone(), 200_000, 1)).unwrap();
        let rates = dpcm_stage_rates(&spec, &d).unwrap();
        let w = sigma_w(&spec, &d).unwrap();
        for (j, wj) in w.iter().enumerate() {
            assert!((0.049..=0.051).contains(&r.mse[j]), "{}", r.mse[j]);
            assert!((r.rates[j] - rates.rates[j]).abs() < 1e-12);
            assert!((r.innovation_variance_nominal[j] - wj).abs() < 1e-12);
            assert!((r.innovation_variance[j] / wj - 1.0).abs() < 0.02);
        }
        assert!(r.diagnostics.iter().all(|c| c.population < 1e-12 && c.empirical < 0.01));
    }

    #[test]
    fn independent_frames_have_no_prediction_gain() {
        let spec = SourceSpec::gauss_markov(vec![1.0; 3], vec![0.0, 0.0]).unwrap();
        let d = DistortionTuple::uniform(3, 0.2).unwrap();
        let r = simulate_dpcm(&SimConfig::new(spec, d, 50_000, 3)).unwrap();
        for j in 0..3 {
            assert!(r.prediction_gain_db[j].abs() < 1e-12);
            assert!((r.innovation_variance_nominal[j] - 1.0).abs() < 1e-12);
            assert!((r.mse[j] - 0.2).abs() < 0.01);
        }
    }

    #[test]
    fn quantizer_rate_exceeds_nominal() {
        let (spec, d) = example_a();
        let cfg = SimConfig::new(spec, d, 100_000, 5).with_backend(Backend::UniformScalarQuantizer);
        let r = simulate_dpcm(&cfg).unwrap();
        for j in 0..3 {
            assert!(r.rates[j] >= r.nominal_rates[j]);
            assert!((r.mse[j] / 0.05 - 1.0).abs() <= 0.01);
        }
    }

    #[test]
    fn reports_are_reproducible() {
        let (spec, d) = example_a();
        let cfg = SimConfig::new(spec, d, 2_000, 11).with_replications(4);
        let a = simulate_dpcm(&cfg).unwrap();
        let b = simulate_dpcm(&cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_csv().lines().count(), 2 + 4 * 3);
        assert_ne!(a.per_replication[0].mse, a.per_replication[1].mse);
    }

    #[test]
    fn out_of_region_requests_fail() {
        let (spec, _) = example_a();
        let d = DistortionTuple::new(vec![0.05, 0.9, 0.05]).unwrap();
        assert!(matches!(simulate_dpcm(&SimConfig::new(spec.clone(), d, 10, 0)), Err(Error::OutOfRegion(_))));
        let sigma = build_covariance(&spec).unwrap();
        let d = DistortionTuple::uniform(3, 0.5).unwrap();
        assert!(matches!(simulate_jc_testchannel(&sigma, &d, 10, 0), Err(Error::OutOfRegion(_))));
        let d = DistortionTuple::uniform(3, 0.05).unwrap();
        assert!(simulate_dpcm(&SimConfig::new(spec, d, 0, 0)).is_err());
    }

    #[test]
    fn jc_test_channel_example_a() {
        let (spec, d) = example_a();
        let sigma = build_covariance(&spec).unwrap();
        let r = simulate_jc_testchannel(&sigma, &d, 200_000, 2).unwrap();
        for j in 0..3 {
            assert!((r.mse[j] / 0.05 - 1.0).abs() <= 0.02);
        }
        assert_eq!(r.diagnostics.len(), 1);
        assert!(r.diagnostics[0].population < 1e-12);
        assert!(r.diagnostics[0].empirical <= 0.01);
        assert!((r.sum_rate - 4.0869635).abs() < 1e-6);
    }

    #[test]
    fn jc_test_channel_longer_chain() {
        let spec = SourceSpec::gauss_markov(vec![1.0, 2.0, 1.5, 1.0], vec![0.8, 0.7, 0.9]).unwrap();
        let sigma = build_covariance(&spec).unwrap();
        let d = DistortionTuple::new(vec![0.05, 0.08, 0.04, 0.06]).unwrap();
        let r = simulate_jc_testchannel(&sigma, &d, 100_000, 9).unwrap();
        assert_eq!(r.diagnostics.len(), 2);
        assert!(r.diagnostics.iter().all(|c| c.population < 1e-10 && c.empirical <= 0.01));
    }

    #[test]
    fn lossless_frames_are_copied() {
        let (spec, _) = example_a();
        let sigma = build_covariance(&spec).unwrap();
        let zero = DistortionTuple::uniform(3, 0.0).unwrap();
        let r = simulate_jc_testchannel(&sigma, &zero, 1_000, 4).unwrap();
        assert!(r.mse.iter().all(|m| *m == 0.0));
        let r = simulate_dpcm(&SimConfig::new(spec, zero, 1_000, 4)).unwrap();
        assert!(r.mse.iter().all(|m| *m < 1e-20));
    }
}
