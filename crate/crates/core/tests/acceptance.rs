//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported as failing without
//! failing the run; any other failure, or a known failure that starts
//! passing, exits nonzero.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use seqcode::closed_forms::{
    cc_sum_rate_gm, counter_example_gap, dpcm_stage_rates, jc_rate_gm, sigma_w, transform_rates, RateTuple,
};
use seqcode::discrete_rd::{
    build_binary_markov, cnc_sum_rate_discrete, equivalence_scan, jc_rd_discrete, uniform_grid, DiscreteProblem,
};
use seqcode::gauss_opt::{min_sum_rate, verify_corollary, OptOptions, OptProblem};
use seqcode::info::{kdirect_identity_residual, JointPmf};
use seqcode::mc_sim::{seeded_rng_stream, simulate_dpcm, simulate_jc_testchannel, SimConfig};
use seqcode::model::{build_covariance, in_region_jc, jc_hypercube_bound};
use seqcode::{DistortionTuple, SourceSpec, SystemKind};

/// Criterion 6 requires a gap of at most 1e-3 bits at D = (0.02, 0.02, 0.02);
/// both discrete solvers find 3.14e-3.
const KNOWN_FAILURES: &[usize] = &[6];

struct Verdict {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn example_a() -> (SourceSpec, DistortionTuple) {
    (SourceSpec::uniform_gauss_markov(3, 0.9).unwrap(), DistortionTuple::uniform(3, 0.05).unwrap())
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

fn random_first_order(rng: &mut impl Rng, t: usize) -> (SourceSpec, DistortionTuple) {
    let var: Vec<f64> = (0..t).map(|_| rng.random_range(0.5..2.0)).collect();
    let rho: Vec<f64> = (1..t)
        .map(|_| {
            let r: f64 = rng.random_range(0.3..0.95);
            if rng.random::<bool>() { r } else { -r }
        })
        .collect();
    let spec = SourceSpec::gauss_markov(var, rho).unwrap();
    let b = jc_hypercube_bound(&build_covariance(&spec).unwrap());
    let d = DistortionTuple::new((0..t).map(|_| b * rng.random_range(0.2..0.9)).collect()).unwrap();
    (spec, d)
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let (spec, d) = example_a();
    let cc = cc_sum_rate_gm(&spec, &d).unwrap();
    let jc = jc_rate_gm(&build_covariance(&spec).unwrap(), &d).unwrap();
    let stages = dpcm_stage_rates(&spec, &d).unwrap().rates;
    let elapsed = start.elapsed();
    let ok = (cc - 4.3658).abs() <= 1e-4
        && (jc - 4.0870).abs() <= 1e-4
        && stages.iter().zip([2.1610, 1.1024, 1.1024]).all(|(a, b)| (a - b).abs() <= 1e-4)
        && within(elapsed, Duration::from_secs(1));
    check(ok, format!("cc={cc:.6} jc={jc:.6} stages={stages:.6?} in {elapsed:.2?}"))
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut rng = seeded_rng_stream(2024, 2);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let (spec, d) = random_first_order(&mut rng, 3 + i % 2);
        let opts = OptOptions { seed: i as u64, ..OptOptions::default() };
        let cc = min_sum_rate(&OptProblem::for_system(&spec, &d, SystemKind::CC).unwrap().with_options(opts.clone()))
            .unwrap();
        let jc = min_sum_rate(&OptProblem::new(build_covariance(&spec).unwrap(), d.clone(), vec![]).with_options(opts))
            .unwrap();
        let cc_ref = cc_sum_rate_gm(&spec, &d).unwrap();
        let jc_ref = jc_rate_gm(&build_covariance(&spec).unwrap(), &d).unwrap();
        worst = worst.max((cc.rate - cc_ref).abs()).max((jc.rate - jc_ref).abs());
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-3 && within(elapsed, Duration::from_secs(120)),
        format!("max |solver - closed form| = {worst:.2e} bits over 20 specs in {elapsed:.2?}"),
    )
}

fn criterion_3() -> Verdict {
    let mut rng = seeded_rng_stream(2024, 3);
    let opts = OptOptions::default();
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let t = rng.random_range(3..=4);
        let (spec, d) = random_first_order(&mut rng, t);
        let cnc = min_sum_rate(&OptProblem::for_system(&spec, &d, SystemKind::CNC(1)).unwrap()).unwrap();
        let jc = jc_rate_gm(&build_covariance(&spec).unwrap(), &d).unwrap();
        worst = worst.max((cnc.rate - jc).abs());
    }
    let ar = SourceSpec::autoregressive(4, vec![0.5, 0.3], 1.0).unwrap();
    let sigma = build_covariance(&ar).unwrap();
    let d = DistortionTuple::uniform(4, 0.5 * jc_hypercube_bound(&sigma)).unwrap();
    let jc = jc_rate_gm(&sigma, &d).unwrap();
    let cnc2 = verify_corollary(&ar, &d, SystemKind::CNC(2), &opts).unwrap();
    let cnc1 = verify_corollary(&ar, &d, SystemKind::CNC(1), &opts).unwrap();
    let gap2 = (cnc2.constrained - jc).abs();
    let gap1 = cnc1.constrained - jc;
    check(
        worst <= 1e-3 && gap2 <= 1e-3 && gap1 > 5e-3,
        format!(
            "first-order max |CNC1 - JC| = {worst:.2e}; order-2 |CNC2 - JC| = {gap2:.2e}, CNC1 - JC = {gap1:.4} bits"
        ),
    )
}

fn criterion_4() -> Verdict {
    let gap = counter_example_gap(0.9, 0.05, 0.05).unwrap();
    let spec = SourceSpec::gauss_markov(vec![1.0; 3], vec![0.999, 0.9]).unwrap();
    let d = DistortionTuple::uniform(3, 0.05).unwrap();
    let r = verify_corollary(&spec, &d, SystemKind::CNC(1), &OptOptions::default()).unwrap();
    check(
        gap > 0.0 && (gap - 0.1394).abs() <= 5e-3 && r.gap > 0.1,
        format!("closed-form gap = {gap:.6}; perturbed solver gap = {:.4} bits", r.gap),
    )
}

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let mut rng = seeded_rng_stream(2024, 5);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let t = 2 + i % 3;
        let k = (i / 3) % t.min(3);
        let weights: Vec<f64> = (0..1usize << (2 * t)).map(|_| rng.random::<f64>()).collect();
        let p = JointPmf::from_weights(vec![2; 2 * t], weights).unwrap();
        worst = worst.max(kdirect_identity_residual(&p, k).unwrap());
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-10 && within(elapsed, Duration::from_secs(30)),
        format!("max residual = {worst:.2e} over 1000 pmfs in {elapsed:.2?}"),
    )
}

fn criterion_6() -> Verdict {
    let p = DiscreteProblem::hamming(build_binary_markov(0.1, 0.1).unwrap(), DistortionTuple::uniform(3, 0.0).unwrap())
        .unwrap();
    let zero = [jc_rd_discrete(&p).unwrap().rate, cnc_sum_rate_discrete(&p).unwrap().rate];
    // 1.9380 is the four-decimal rounding of H(X^3) = 1 + 2 h(0.1).
    let h = |q: f64| -(q * q.log2() + (1.0 - q) * (1.0 - q).log2());
    let entropy = 1.0 + 2.0 * h(0.1);
    let zero_ok = (entropy - 1.9380).abs() < 5e-5 && zero.iter().all(|r| (r - entropy).abs() <= 1e-6);

    let p = DiscreteProblem::hamming(build_binary_markov(0.1, 0.1).unwrap(), DistortionTuple::uniform(3, 0.02).unwrap())
        .unwrap();
    let gap = cnc_sum_rate_discrete(&p).unwrap().rate - jc_rd_discrete(&p).unwrap().rate;

    let start = Instant::now();
    let rows = equivalence_scan(0.1, 0.1, &uniform_grid(3, 0.0, 0.1, 5).unwrap()).unwrap();
    let elapsed = start.elapsed();
    let equal = rows.iter().filter(|r| r.equal).count();
    let scan_ok = rows.len() == 125 && equal > 0 && within(elapsed, Duration::from_secs(300));
    check(
        zero_ok && gap <= 1e-3 && scan_ok,
        format!(
            "D=0 rates = {:.9}/{:.9} vs H = {entropy:.9} [{}]; gap at D=0.02 = {gap:.3e} bits [{}]; scan {equal}/125 equal in {elapsed:.2?} [{}]",
            zero[0],
            zero[1],
            if zero_ok { "ok" } else { "fail" },
            if gap <= 1e-3 { "ok" } else { "fail" },
            if scan_ok { "ok" } else { "fail" },
        ),
    )
}

fn criterion_7() -> Verdict {
    let start = Instant::now();
    let (spec, d) = example_a();
    let r = simulate_dpcm(&SimConfig::new(spec.clone(), d.clone(), 200_000, 20240)).unwrap();
    let w = sigma_w(&spec, &d).unwrap();
    let jc = simulate_jc_testchannel(&build_covariance(&spec).unwrap(), &d, 200_000, 20240).unwrap();
    let elapsed = start.elapsed();
    let mse_err = r.mse.iter().zip(d.values()).map(|(m, dj)| (m / dj - 1.0).abs()).fold(0.0, f64::max);
    let w_err = r.innovation_variance.iter().zip(&w).map(|(a, b)| (a / b - 1.0).abs()).fold(0.0, f64::max);
    let cov = jc.diagnostics[0].empirical;
    check(
        mse_err <= 0.02 && w_err <= 0.02 && cov <= 0.01 && within(elapsed, Duration::from_secs(30)),
        format!(
            "max rel MSE error = {mse_err:.4}; max rel innovation error = {w_err:.4}; |cross-cov| = {cov:.2e} in {elapsed:.2?}"
        ),
    )
}

fn criterion_8() -> Verdict {
    let cases: [(SystemKind, SystemKind, Vec<f64>, Vec<f64>); 4] = [
        (SystemKind::CNC(1), SystemKind::NCC(1), vec![1.0, 2.0, 3.0], vec![3.0, 3.0, 0.0]),
        (SystemKind::NCC(1), SystemKind::CNC(1), vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 5.0]),
        (SystemKind::CNC(2), SystemKind::NCNC(1, 1), vec![1.0; 4], vec![2.0, 1.0, 1.0, 0.0]),
        (SystemKind::NCNC(1, 1), SystemKind::CNC(2), vec![1.0; 4], vec![0.0, 1.0, 1.0, 2.0]),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (from, to, r, want) in cases {
        let r = RateTuple(r);
        let out = transform_rates(from, to, &r).unwrap();
        ok &= out.0 == want && out.sum() == r.sum();
        detail.push(format!("{from}->{to} {:?}", out.0));
    }
    check(ok, detail.join("; "))
}

fn criterion_9() -> Verdict {
    let mut rng = seeded_rng_stream(2024, 9);
    let mut cube_fail = 0;
    let mut mono_fail = 0;
    for i in 0..500 {
        let t = rng.random_range(2..=5);
        let var: Vec<f64> = (0..t).map(|_| rng.random_range(0.2..4.0)).collect();
        let rho: Vec<f64> = (1..t).map(|_| rng.random_range(-0.99..0.99)).collect();
        let sigma = build_covariance(&SourceSpec::gauss_markov(var, rho).unwrap()).unwrap();
        let b = jc_hypercube_bound(&sigma);
        let d = DistortionTuple::new((0..t).map(|_| rng.random_range(0.0..=b)).collect()).unwrap();
        if !in_region_jc(&sigma, &d).unwrap() {
            cube_fail += 1;
        }
        if i < 200 {
            let wide = DistortionTuple::new((0..t).map(|_| rng.random_range(0.0..=3.0 * b)).collect()).unwrap();
            let shrunk = DistortionTuple::new(wide.values().iter().map(|v| v * rng.random::<f64>()).collect()).unwrap();
            if in_region_jc(&sigma, &wide).unwrap() && !in_region_jc(&sigma, &shrunk).unwrap() {
                mono_fail += 1;
            }
        }
    }
    check(
        cube_fail == 0 && mono_fail == 0,
        format!("hypercube violations {cube_fail}/500; monotonicity violations {mono_fail}/200"),
    )
}

fn main() -> ExitCode {
    let criteria: [(usize, fn() -> Verdict); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let mut unexpected = 0;
    for (n, f) in criteria {
        let v = f();
        let known = KNOWN_FAILURES.contains(&n);
        let tag = match (v.pass, known) {
            (true, false) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
            (true, true) => "PASS (listed as a known failure)",
        };
        if v.pass == known {
            unexpected += 1;
        }
        println!("criterion {n}: {tag}  {}", v.detail);
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} unexpected result(s)");
        ExitCode::FAILURE
    }
}
