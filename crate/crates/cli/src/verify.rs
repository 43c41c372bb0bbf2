//! Named self-checks against reference values.

use rand::Rng;

use seqcode::closed_forms::{
    cc_sum_rate_gm, counter_example_gap, dpcm_stage_rates, jc_rate_gm, sigma_w, transform_rates, RateTuple,
};
use seqcode::discrete_rd::{self, DiscreteProblem};
use seqcode::gauss_opt::{min_sum_rate, OptOptions, OptProblem};
use seqcode::info::{entropy, kdirect_identity_residual, JointPmf};
use seqcode::mc_sim::{self, seeded_rng_stream, SimConfig};
use seqcode::model::{build_covariance, in_region_jc, jc_hypercube_bound};
use seqcode::{DistortionTuple, SourceSpec, SystemKind};

use crate::config::Config;
use crate::CliError;

pub const CC_REFERENCE_BITS: f64 = 4.3658;
pub const JC_REFERENCE_BITS: f64 = 4.0870;
pub const STAGE_REFERENCE_BITS: [f64; 3] = [2.1610, 1.1024, 1.1024];
pub const COUNTER_EXAMPLE_BITS: f64 = 0.1394;

pub const CHECKS: [&str; 9] = [
    "closed_forms",
    "optimizer",
    "corollary",
    "counter_example",
    "kdirect_identity",
    "binary_entropy",
    "monte_carlo",
    "transforms",
    "regions",
];

pub struct Outcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

type CheckResult = Result<(bool, String), seqcode::Error>;

fn example_a() -> (SourceSpec, DistortionTuple) {
    (
        SourceSpec::uniform_gauss_markov(3, 0.9).expect("valid spec"),
        DistortionTuple::uniform(3, 0.05).expect("valid tuple"),
    )
}

fn closed_forms(cc_reference: f64) -> CheckResult {
    let (spec, d) = example_a();
    let cc = cc_sum_rate_gm(&spec, &d)?;
    let jc = jc_rate_gm(&build_covariance(&spec)?, &d)?;
    let stages = dpcm_stage_rates(&spec, &d)?;
    let ok = (cc - cc_reference).abs() <= 1e-4
        && (jc - JC_REFERENCE_BITS).abs() <= 1e-4
        && stages.rates.iter().zip(STAGE_REFERENCE_BITS).all(|(a, b)| (a - b).abs() <= 1e-4);
    Ok((ok, format!("cc={cc:.6} (ref {cc_reference}) jc={jc:.6} stages={:.4?}", stages.rates)))
}

fn optimizer(seed: u64) -> CheckResult {
    let (spec, d) = example_a();
    let opts = OptOptions { seed, ..OptOptions::default() };
    let cc = min_sum_rate(&OptProblem::for_system(&spec, &d, SystemKind::CC)?.with_options(opts.clone()))?;
    let jc = min_sum_rate(&OptProblem::for_system(&spec, &d, SystemKind::JC)?.with_options(opts))?;
    let (cc_ref, jc_ref) = (cc_sum_rate_gm(&spec, &d)?, jc_rate_gm(&build_covariance(&spec)?, &d)?);
    let ok = (cc.rate - cc_ref).abs() <= 1e-3 && (jc.rate - jc_ref).abs() <= 1e-3;
    Ok((ok, format!("cc={:.6} jc={:.6}", cc.rate, jc.rate)))
}

fn corollary(seed: u64) -> CheckResult {
    let (spec, d) = example_a();
    let opts = OptOptions { seed, ..OptOptions::default() };
    let cnc = min_sum_rate(&OptProblem::for_system(&spec, &d, SystemKind::CNC(1))?.with_options(opts))?;
    let jc = jc_rate_gm(&build_covariance(&spec)?, &d)?;
    Ok(((cnc.rate - jc).abs() <= 1e-3, format!("cnc1={:.6} jc={jc:.6}", cnc.rate)))
}

fn counter_example() -> CheckResult {
    let gap = counter_example_gap(0.9, 0.05, 0.05)?;
    Ok((gap > 0.0 && (gap - COUNTER_EXAMPLE_BITS).abs() <= 5e-3, format!("gap={gap:.6}")))
}

fn kdirect_identity(seed: u64) -> CheckResult {
    let mut rng = seeded_rng_stream(seed, 0);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let t = 2 + i % 2;
        let k = (i / 2) % t;
        let sizes = vec![2; 2 * t];
        let weights: Vec<f64> = (0..1usize << (2 * t)).map(|_| rng.random::<f64>()).collect();
        let p = JointPmf::from_weights(sizes, weights)?;
        worst = worst.max(kdirect_identity_residual(&p, k)?);
    }
    Ok((worst <= 1e-10, format!("max residual={worst:.3e} over 200 pmfs")))
}

fn binary_entropy() -> CheckResult {
    let pmf = discrete_rd::build_binary_markov(0.1, 0.1)?;
    let h = entropy(&pmf);
    let p = DiscreteProblem::hamming(pmf, DistortionTuple::uniform(3, 0.0)?)?;
    let jc = discrete_rd::min_rate_discrete(&p)?;
    let cnc = discrete_rd::min_rate_discrete(&p.clone().for_system(SystemKind::CNC(1))?)?;
    let ok = (jc.rate - h).abs() <= 1e-6 && (cnc.rate - h).abs() <= 1e-6;
    Ok((ok, format!("H={h:.9} jc={:.9} cnc1={:.9}", jc.rate, cnc.rate)))
}

fn monte_carlo(seed: u64) -> CheckResult {
    let (spec, d) = example_a();
    let r = mc_sim::simulate_dpcm(&SimConfig::new(spec.clone(), d.clone(), 200_000, seed))?;
    let w = sigma_w(&spec, &d)?;
    let jc = mc_sim::simulate_jc_testchannel(&build_covariance(&spec)?, &d, 200_000, seed)?;
    let mse_ok = r.mse.iter().zip(d.values()).all(|(m, dj)| (m / dj - 1.0).abs() <= 0.02);
    let w_ok = r.innovation_variance.iter().zip(&w).all(|(a, b)| (a / b - 1.0).abs() <= 0.02);
    let cov = jc.diagnostics.iter().map(|c| c.empirical).fold(0.0, f64::max);
    Ok((mse_ok && w_ok && cov <= 0.01, format!("mse={:.5?} cross-cov={cov:.2e}", r.mse)))
}

fn transforms() -> CheckResult {
    let r = RateTuple(vec![1.5, 0.75, 0.5, 0.25]);
    let to = transform_rates(SystemKind::CNC(2), SystemKind::NCNC(1, 1), &r)?;
    let back = transform_rates(SystemKind::NCNC(1, 1), SystemKind::CNC(2), &to)?;
    let ok = to.0 == [2.25, 0.5, 0.25, 0.0] && back.0 == [0.0, 2.25, 0.5, 0.25] && to.sum() == r.sum();
    Ok((ok, format!("{:?} -> {:?} -> {:?}", r.0, to.0, back.0)))
}

fn regions(seed: u64) -> CheckResult {
    let mut rng = seeded_rng_stream(seed, 1);
    let mut failures = 0;
    for _ in 0..200 {
        let t = rng.random_range(2..=5);
        let var: Vec<f64> = (0..t).map(|_| rng.random_range(0.2..3.0)).collect();
        let rho: Vec<f64> = (1..t).map(|_| rng.random_range(-0.99..0.99)).collect();
        let sigma = build_covariance(&SourceSpec::gauss_markov(var, rho)?)?;
        let b = jc_hypercube_bound(&sigma);
        let d = DistortionTuple::new((0..t).map(|_| rng.random_range(0.0..=b)).collect())?;
        let shrunk = DistortionTuple::new(d.values().iter().map(|v| v * rng.random::<f64>()).collect())?;
        if !in_region_jc(&sigma, &d)? || !in_region_jc(&sigma, &shrunk)? {
            failures += 1;
        }
    }
    Ok((failures == 0, format!("{failures} of 200 instances violated")))
}

/// Runs the selected checks (all when `selected` is empty).
pub fn run(cfg: &Config, selected: &[String], seed: u64) -> Result<Vec<Outcome>, CliError> {
    let names: Vec<&'static str> = if selected.is_empty() {
        CHECKS.to_vec()
    } else {
        selected
            .iter()
            .map(|s| {
                CHECKS.iter().copied().find(|c| *c == s.trim()).ok_or_else(|| {
                    CliError::Config(format!("unknown check `{s}`; available: {}", CHECKS.join(", ")))
                })
            })
            .collect::<Result<_, _>>()?
    };
    let cc_reference = cfg.verify.cc_reference_bits.unwrap_or(CC_REFERENCE_BITS);
    Ok(names
        .into_iter()
        .map(|name| {
            let result = match name {
                "closed_forms" => closed_forms(cc_reference),
                "optimizer" => optimizer(seed),
                "corollary" => corollary(seed),
                "counter_example" => counter_example(),
                "kdirect_identity" => kdirect_identity(seed),
                "binary_entropy" => binary_entropy(),
                "monte_carlo" => monte_carlo(seed),
                "transforms" => transforms(),
                "regions" => regions(seed),
                _ => unreachable!("names come from CHECKS"),
            };
            let (pass, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
            Outcome { name, pass, detail }
        })
        .collect())
}
