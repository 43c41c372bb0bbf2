//! Closed-form sum-rates for Gauss–Markov sources under MSE, idealized DPCM
//! stage rates, and the rate-tuple transforms relating architectures with
//! equal total delay.

use serde::{Deserialize, Serialize};

use crate::model::{build_covariance, in_region_cc, in_region_jc};
use crate::{linalg, CovMatrix, DistortionTuple, Error, Result, SourceSpec, SystemKind};

/// Per-frame rates in bits per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTuple(pub Vec<f64>);

impl RateTuple {
    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Rates of the idealized DPCM stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRates {
    pub rates: Vec<f64>,
    /// Variance of the prediction error coded at each stage; the first entry
    /// is `σ_1²`.
    pub innovation_variances: Vec<f64>,
    pub sum: f64,
}

fn half_log2_ratio(num: f64, den: f64) -> f64 {
    if num == den {
        0.0
    } else {
        0.5 * (num / den).log2()
    }
}

fn check_len(spec: &SourceSpec, d: &DistortionTuple) -> Result<()> {
    if spec.frames() != d.len() {
        return Err(Error::DimensionMismatch { expected: spec.frames(), found: d.len() });
    }
    Ok(())
}

/// Prediction-error variances
/// `σ_{W_j}² = ρ_{j-1}² (σ_j²/σ_{j-1}²) D_{j-1} + (1 - ρ_{j-1}²) σ_j²`
/// with `σ_{W_1}² = σ_1²`.
pub fn sigma_w(spec: &SourceSpec, d: &DistortionTuple) -> Result<Vec<f64>> {
    check_len(spec, d)?;
    let (var, rho) = spec
        .first_order()
        .ok_or_else(|| Error::InvalidSpec("prediction-error variances need a first-order Gauss–Markov source".into()))?;
    let mut w = Vec::with_capacity(var.len());
    w.push(var[0]);
    for j in 1..var.len() {
        let r2 = rho[j - 1] * rho[j - 1];
        w.push(r2 * (var[j] / var[j - 1]) * d[j - 1] + (1.0 - r2) * var[j]);
    }
    Ok(w)
}

/// Idealized DPCM rates `R_j = ½ log₂(σ_{W_j}² / D_j)`.
pub fn dpcm_stage_rates(spec: &SourceSpec, d: &DistortionTuple) -> Result<StageRates> {
    if !in_region_cc(spec, d)? {
        return Err(Error::OutOfRegion(format!("{:?} outside the C–C region", d.values())));
    }
    let w = sigma_w(spec, d)?;
    let rates: Vec<f64> = w.iter().zip(d.values()).map(|(wj, dj)| half_log2_ratio(*wj, *dj)).collect();
    let sum = rates.iter().sum();
    Ok(StageRates { rates, innovation_variances: w, sum })
}

/// Minimum C–C sum-rate `Σ_j ½ log₂(σ_{W_j}²/D_j)`, valid on the C–C region.
pub fn cc_sum_rate_gm(spec: &SourceSpec, d: &DistortionTuple) -> Result<f64> {
    dpcm_stage_rates(spec, d).map(|s| s.sum)
}

/// JC rate `½ log₂(|Σ| / Π_j D_j)`, valid where `Σ - diag(D) ⪰ 0`.
pub fn jc_rate_gm(sigma: &CovMatrix, d: &DistortionTuple) -> Result<f64> {
    if !in_region_jc(sigma, d)? {
        return Err(Error::OutOfRegion(format!("{:?} outside the JC region", d.values())));
    }
    let ev = sigma.eigenvalues();
    let top = ev.last().copied().unwrap_or(0.0);
    let singular = ev.first().is_some_and(|&lo| lo <= linalg::PSD_REL_TOL * top);
    if singular {
        if d.values().iter().any(|&dj| dj > 0.0) {
            return Err(Error::OutOfRegion(
                "singular source covariance: rate undefined for nonzero distortion".into(),
            ));
        }
        return Ok(f64::INFINITY);
    }
    if d.values().contains(&0.0) {
        return Ok(f64::INFINITY);
    }
    let logdet = linalg::logdet_spd(sigma.matrix())
        .unwrap_or_else(|| ev.iter().map(|v| v.ln()).sum());
    let log_prod_d: f64 = d.values().iter().map(|v| v.ln()).sum();
    Ok(0.5 * (logdet - log_prod_d) / std::f64::consts::LN_2)
}

/// JC rate of a first-order Gauss–Markov source in per-stage form
/// `½ log₂(σ_1²/D_1) + Σ_{j≥2} ½ log₂(σ_j²(1-ρ_{j-1}²)/D_j)`.
pub fn jc_rate_gm_markov(spec: &SourceSpec, d: &DistortionTuple) -> Result<f64> {
    check_len(spec, d)?;
    let sigma = build_covariance(spec)?;
    if !in_region_jc(&sigma, d)? {
        return Err(Error::OutOfRegion(format!("{:?} outside the JC region", d.values())));
    }
    let (var, rho) = spec
        .first_order()
        .ok_or_else(|| Error::InvalidSpec("per-stage JC form needs a first-order source".into()))?;
    let mut total = half_log2_ratio(var[0], d[0]);
    for j in 1..var.len() {
        total += half_log2_ratio(var[j] * (1.0 - rho[j - 1] * rho[j - 1]), d[j]);
    }
    Ok(total)
}

/// Minimum sum-rate of a C–NC system with decoder delay `k`. Equals the JC
/// rate when the source's Markov order is at most `k` and `D` lies in the JC
/// region; otherwise [`Error::NoClosedForm`] (use the numerical solver).
pub fn cnc_sum_rate_gm(spec: &SourceSpec, d: &DistortionTuple, k: usize) -> Result<f64> {
    check_len(spec, d)?;
    SystemKind::CNC(k).validate(spec.frames())?;
    if !spec.is_gaussian() {
        return Err(Error::NoClosedForm("closed form applies to Gaussian sources only".into()));
    }
    let order = spec.markov_order();
    if order > k && k + 1 < spec.frames() {
        return Err(Error::NoClosedForm(format!(
            "source has Markov order {order} but decoder delay is only {k}"
        )));
    }
    let sigma = build_covariance(spec)?;
    if !in_region_jc(&sigma, d)? {
        return Err(Error::NoClosedForm(format!("{:?} outside the JC region", d.values())));
    }
    jc_rate_gm(&sigma, d)
}

/// C–NC(1) minus JC sum-rate for the singular three-frame source with
/// `X_1 = X_2` (unit variances, correlation `rho` to `X_3`) and distortions
/// `(d, d, d3)`. Both problems reduce to two-frame problems on `(X_1, X_3)`:
/// a C–C system for C–NC(1) and a joint coder for JC.
pub fn counter_example_gap(rho: f64, d: f64, d3: f64) -> Result<f64> {
    let reduced = SourceSpec::gauss_markov(vec![1.0, 1.0], vec![rho])?;
    let dd = DistortionTuple::new(vec![d, d3])?;
    let cc = cc_sum_rate_gm(&reduced, &dd)?;
    let jc = jc_rate_gm(&build_covariance(&reduced)?, &dd)?;
    Ok((cc - jc).max(0.0))
}

/// `(encoder delay, decoder delay)` of a sequential architecture.
fn delay_pair(kind: SystemKind) -> Result<(usize, usize)> {
    kind.delays().ok_or_else(|| {
        Error::UnsupportedTransform("joint coding has no per-frame rate tuple transform".into())
    })
}

/// C–NC(k1+k2) tuple to NC–NC(k1, k2):
/// `(R_1+…+R_{k1+1}, R_{k1+2}, …, R_T, 0, …, 0)` with `k1` trailing zeros.
fn cnc_to_ncnc(r: &[f64], k1: usize) -> Vec<f64> {
    let t = r.len();
    let mut out = Vec::with_capacity(t);
    out.push(r[..=k1].iter().sum());
    out.extend_from_slice(&r[k1 + 1..]);
    out.resize(t, 0.0);
    out
}

/// NC–NC(k1, k2) tuple to C–NC(k1+k2):
/// `(0, …, 0, R_1, …, R_{T-k1-1}, R_{T-k1}+…+R_T)` with `k1` leading zeros.
fn ncnc_to_cnc(r: &[f64], k1: usize) -> Vec<f64> {
    let t = r.len();
    let mut out = vec![0.0; k1];
    out.extend_from_slice(&r[..t - k1 - 1]);
    out.push(r[t - k1 - 1..].iter().sum());
    out
}

/// Maps an admissible rate tuple of `from` to an admissible rate tuple of `to`
/// with the same distortions. Supported whenever both are sequential
/// architectures with the same total delay; the sum is preserved exactly.
pub fn transform_rates(from: SystemKind, to: SystemKind, r: &RateTuple) -> Result<RateTuple> {
    let t = r.0.len();
    let (a1, a2) = delay_pair(from)?;
    let (b1, b2) = delay_pair(to)?;
    from.validate(t)?;
    to.validate(t)?;
    if a1 + a2 != b1 + b2 {
        return Err(Error::UnsupportedTransform(format!(
            "{from} and {to} have different total delays"
        )));
    }
    if (a1, a2) == (b1, b2) {
        return Ok(r.clone());
    }
    let cnc = if a1 == 0 { r.0.clone() } else { ncnc_to_cnc(&r.0, a1) };
    let out = if b1 == 0 { cnc } else { cnc_to_ncnc(&cnc, b1) };
    Ok(RateTuple(out))
}
