//! Source models, covariance construction, distortion regions and the
//! Markov-chain constraints imposed by each coding architecture.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{Error, Result};

/// Parametric family of a `T`-frame source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceKind {
    /// First-order Gauss–Markov: per-frame variances and the `T-1`
    /// correlation coefficients between neighbouring frames.
    GaussMarkov {
        variances: Vec<f64>,
        correlations: Vec<f64>,
    },
    /// Stationary order-`k` autoregression
    /// `X_t = a_1 X_{t-1} + … + a_k X_{t-k} + N_t`, `Var N_t = innovation_variance`.
    Autoregressive {
        coefficients: Vec<f64>,
        innovation_variance: f64,
    },
    /// Symmetric binary Markov chain: `X_1 ~ Ber(1/2)`,
    /// `X_{j+1} = X_j ⊕ Ber(p_j)`.
    BinaryMarkov { crossovers: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    frames: usize,
    kind: SourceKind,
}

impl SourceSpec {
    pub fn gauss_markov(variances: Vec<f64>, correlations: Vec<f64>) -> Result<Self> {
        let frames = variances.len();
        if frames < 2 {
            return Err(Error::InvalidSpec(format!("need at least 2 frames, got {frames}")));
        }
        if correlations.len() != frames - 1 {
            return Err(Error::InvalidSpec(format!(
                "{} frames need {} correlations, got {}",
                frames,
                frames - 1,
                correlations.len()
            )));
        }
        if let Some(v) = variances.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidSpec(format!("variance {v} is not positive")));
        }
        if let Some(r) = correlations.iter().find(|r| !(r.is_finite() && r.abs() <= 1.0)) {
            return Err(Error::InvalidSpec(format!("correlation {r} outside [-1, 1]")));
        }
        Ok(Self { frames, kind: SourceKind::GaussMarkov { variances, correlations } })
    }

    /// Unit-variance first-order source with the same correlation between all
    /// neighbouring frames.
    pub fn uniform_gauss_markov(frames: usize, rho: f64) -> Result<Self> {
        let correlations = vec![rho; frames.saturating_sub(1)];
        Self::gauss_markov(vec![1.0; frames], correlations)
    }

    pub fn autoregressive(
        frames: usize,
        coefficients: Vec<f64>,
        innovation_variance: f64,
    ) -> Result<Self> {
        if frames < 2 {
            return Err(Error::InvalidSpec(format!("need at least 2 frames, got {frames}")));
        }
        if coefficients.is_empty() {
            return Err(Error::InvalidSpec("autoregression needs at least one coefficient".into()));
        }
        if coefficients.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidSpec("non-finite regression coefficient".into()));
        }
        if !(innovation_variance.is_finite() && innovation_variance > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "innovation variance {innovation_variance} is not positive"
            )));
        }
        let spec = Self {
            frames,
            kind: SourceKind::Autoregressive { coefficients, innovation_variance },
        };
        // Rejects non-stationary coefficient sets.
        build_covariance(&spec)?;
        Ok(spec)
    }

    pub fn binary_markov(crossovers: Vec<f64>) -> Result<Self> {
        if crossovers.is_empty() {
            return Err(Error::InvalidSpec("need at least one crossover probability".into()));
        }
        if let Some(p) = crossovers.iter().find(|p| !(p.is_finite() && (0.0..=0.5).contains(*p))) {
            return Err(Error::InvalidSpec(format!("crossover probability {p} outside [0, 0.5]")));
        }
        Ok(Self { frames: crossovers.len() + 1, kind: SourceKind::BinaryMarkov { crossovers } })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn kind(&self) -> &SourceKind {
        &self.kind
    }

    pub fn is_gaussian(&self) -> bool {
        !matches!(self.kind, SourceKind::BinaryMarkov { .. })
    }

    /// `(variances, correlations)` for a first-order Gauss–Markov source.
    pub fn first_order(&self) -> Option<(&[f64], &[f64])> {
        match &self.kind {
            SourceKind::GaussMarkov { variances, correlations } => Some((variances, correlations)),
            _ => None,
        }
    }

    /// Markov order of the frame sequence (index of the last nonzero
    /// regression coefficient for autoregressive sources).
    pub fn markov_order(&self) -> usize {
        match &self.kind {
            SourceKind::GaussMarkov { .. } | SourceKind::BinaryMarkov { .. } => 1,
            SourceKind::Autoregressive { coefficients, .. } => coefficients
                .iter()
                .rposition(|a| *a != 0.0)
                .map(|i| i + 1)
                .unwrap_or(0),
        }
    }
}

/// Symmetric positive semidefinite covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix(DMatrix<f64>);

impl CovMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidCovariance(format!(
                "matrix is {}x{}, not square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariance("non-finite entry".into()));
        }
        let scale = m.amax();
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidCovariance(format!(
                        "asymmetric at ({i}, {j}): {} vs {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        if !linalg::is_psd(&m) {
            return Err(Error::InvalidCovariance(format!(
                "not positive semidefinite (λ_min = {:e})",
                linalg::min_eigenvalue(&m)
            )));
        }
        Ok(Self(m))
    }

    pub fn from_row_slice(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: entries.len() });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::sym_eigenvalues(&self.0)
    }

    /// Entries in row-major order.
    pub fn row_major(&self) -> Vec<f64> {
        let n = self.dim();
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| self.0[(i, j)]).collect()
    }
}

/// Per-frame distortion targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DistortionTuple(Vec<f64>);

impl DistortionTuple {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(d) = values.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(Error::OutOfRange(format!("distortion {d} must be finite and >= 0")));
        }
        Ok(Self(values))
    }

    pub fn uniform(frames: usize, d: f64) -> Result<Self> {
        Self::new(vec![d; frames])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for DistortionTuple {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DistortionTuple> for Vec<f64> {
    fn from(d: DistortionTuple) -> Self {
        d.0
    }
}

impl std::ops::Index<usize> for DistortionTuple {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Coding architecture with its frame delays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemKind {
    /// Causal encoders, causal decoders.
    CC,
    /// Causal encoders, decoders delayed by `k` frames.
    CNC(usize),
    /// Encoders delayed by `k` frames, causal decoders.
    NCC(usize),
    /// Encoder delay `k1`, decoder delay `k2`.
    NCNC(usize, usize),
    /// Joint coding of all frames.
    JC,
}

impl SystemKind {
    /// `(encoder delay, decoder delay)`, `None` for joint coding.
    pub fn delays(&self) -> Option<(usize, usize)> {
        match *self {
            SystemKind::CC => Some((0, 0)),
            SystemKind::CNC(k) => Some((0, k)),
            SystemKind::NCC(k) => Some((k, 0)),
            SystemKind::NCNC(k1, k2) => Some((k1, k2)),
            SystemKind::JC => None,
        }
    }

    /// Total frame delay; joint coding has `T-1`.
    pub fn total_delay(&self, frames: usize) -> usize {
        match self.delays() {
            Some((k1, k2)) => k1 + k2,
            None => frames.saturating_sub(1),
        }
    }

    pub fn validate(&self, frames: usize) -> Result<()> {
        if frames < 2 {
            return Err(Error::InvalidDelay(format!("need at least 2 frames, got {frames}")));
        }
        if let Some((k1, k2)) = self.delays() {
            if k1 >= frames || k2 >= frames || k1 + k2 >= frames {
                return Err(Error::InvalidDelay(format!(
                    "{self} has total delay {} but only {frames} frames",
                    k1 + k2
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SystemKind::CC => write!(f, "CC"),
            SystemKind::CNC(k) => write!(f, "CNC{k}"),
            SystemKind::NCC(k) => write!(f, "NCC{k}"),
            SystemKind::NCNC(a, b) => write!(f, "NCNC{a}_{b}"),
            SystemKind::JC => write!(f, "JC"),
        }
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    /// Accepts `cc`, `jc`, `cnc1`, `cnc(1)`, `ncc2`, `ncnc1_1`, `ncnc(1,1)`
    /// (case-insensitive, `-` and `–` ignored).
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '–' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        let bad = || Error::InvalidDelay(format!("unrecognized system kind `{s}`"));
        let nums = |rest: &str| -> Result<Vec<usize>> {
            let rest = rest.trim_start_matches('(').trim_end_matches(')');
            if rest.is_empty() {
                return Ok(Vec::new());
            }
            rest.split([',', '_']).map(|t| t.parse::<usize>().map_err(|_| bad())).collect()
        };
        if norm == "cc" {
            return Ok(SystemKind::CC);
        }
        if norm == "jc" {
            return Ok(SystemKind::JC);
        }
        if let Some(rest) = norm.strip_prefix("ncnc") {
            return match nums(rest)?.as_slice() {
                [a, b] => Ok(SystemKind::NCNC(*a, *b)),
                _ => Err(bad()),
            };
        }
        for (prefix, ctor) in [("cnc", SystemKind::CNC as fn(usize) -> SystemKind), ("ncc", SystemKind::NCC)] {
            if let Some(rest) = norm.strip_prefix(prefix) {
                return match nums(rest)?.as_slice() {
                    [] => Ok(ctor(1)),
                    [k] => Ok(ctor(*k)),
                    _ => Err(bad()),
                };
            }
        }
        Err(bad())
    }
}

/// One of the `2T` jointly distributed variables `X_1..X_T, X̂_1..X̂_T`
/// (zero-based frame index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Var {
    X(usize),
    XHat(usize),
}

impl Var {
    /// Position in the stacked vector `(X_1..X_T, X̂_1..X̂_T)`.
    pub fn flat(&self, frames: usize) -> usize {
        match *self {
            Var::X(j) => j,
            Var::XHat(j) => frames + j,
        }
    }

    pub fn frame(&self) -> usize {
        match *self {
            Var::X(j) | Var::XHat(j) => j,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Var::X(j) => write!(f, "X{}", j + 1),
            Var::XHat(j) => write!(f, "X̂{}", j + 1),
        }
    }
}

/// Conditional-independence requirement `left ⟂ right | given`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConstraint {
    pub left: Vec<Var>,
    pub right: Vec<Var>,
    pub given: Vec<Var>,
}

/// Flat index lists of a constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatConstraint {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub given: Vec<usize>,
}

impl ChainConstraint {
    pub fn new(left: Vec<Var>, right: Vec<Var>, given: Vec<Var>) -> Self {
        Self { left, right, given }
    }

    pub fn validate(&self, frames: usize) -> Result<()> {
        let all = self.left.iter().chain(&self.right).chain(&self.given);
        let mut seen = std::collections::HashSet::new();
        for v in all {
            if v.frame() >= frames {
                return Err(Error::OutOfRange(format!("{v} outside {frames} frames")));
            }
            if !seen.insert(*v) {
                return Err(Error::OverlappingSets(v.flat(frames)));
            }
        }
        if self.left.is_empty() || self.right.is_empty() {
            return Err(Error::OutOfRange("constraint sides must be nonempty".into()));
        }
        Ok(())
    }

    pub fn flat(&self, frames: usize) -> FlatConstraint {
        let f = |vs: &[Var]| vs.iter().map(|v| v.flat(frames)).collect();
        FlatConstraint { left: f(&self.left), right: f(&self.right), given: f(&self.given) }
    }
}

impl fmt::Display for ChainConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |vs: &[Var]| vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        write!(f, "{} ⟂ {{{}}}", join(&self.left), join(&self.right))?;
        if !self.given.is_empty() {
            write!(f, " | {{{}}}", join(&self.given))?;
        }
        Ok(())
    }
}

/// Covariance of a Gaussian source.
pub fn build_covariance(spec: &SourceSpec) -> Result<CovMatrix> {
    let t = spec.frames();
    match spec.kind() {
        SourceKind::GaussMarkov { variances, correlations } => {
            let sd: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
            let m = DMatrix::from_fn(t, t, |i, j| {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                let rho: f64 = correlations[a..b].iter().product();
                sd[i] * sd[j] * rho
            });
            CovMatrix::new(m)
        }
        SourceKind::Autoregressive { coefficients, innovation_variance } => {
            let gamma = autocovariance(coefficients, *innovation_variance, t)?;
            let m = DMatrix::from_fn(t, t, |i, j| gamma[i.abs_diff(j)]);
            CovMatrix::new(m).map_err(|e| Error::InvalidSpec(format!("autoregression: {e}")))
        }
        SourceKind::BinaryMarkov { .. } => Err(Error::InvalidSpec(
            "covariance construction needs a Gaussian source".into(),
        )),
    }
}

/// Stationary autocovariances `γ_0..γ_{lags-1}` of an autoregression, from the
/// Yule–Walker equations.
fn autocovariance(coeffs: &[f64], innovation_variance: f64, lags: usize) -> Result<Vec<f64>> {
    let k = coeffs.len();
    let n = k + 1;
    // Row l: γ_l - Σ_m a_m γ_{|l-m|} = σ² δ_{l0}.
    let mut a = DMatrix::<f64>::identity(n, n);
    for l in 0..n {
        for (m, &am) in coeffs.iter().enumerate() {
            a[(l, l.abs_diff(m + 1))] -= am;
        }
    }
    let mut rhs = DVector::zeros(n);
    rhs[0] = innovation_variance;
    let gamma = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidSpec("Yule–Walker system is singular".into()))?;
    let mut out: Vec<f64> = gamma.iter().copied().collect();
    if !(out[0].is_finite() && out[0] > 0.0) {
        return Err(Error::InvalidSpec("coefficients do not define a stationary process".into()));
    }
    let toeplitz = DMatrix::from_fn(n, n, |i, j| out[i.abs_diff(j)]);
    if linalg::min_eigenvalue(&toeplitz) <= 0.0 {
        return Err(Error::InvalidSpec("coefficients do not define a stationary process".into()));
    }
    while out.len() < lags {
        let l = out.len();
        let next = coeffs.iter().enumerate().map(|(m, am)| am * out[l - m - 1]).sum();
        out.push(next);
    }
    out.truncate(lags.max(1));
    Ok(out)
}

/// Distortion tuples for which the C–C closed form is valid: `D_1 ≤ σ_1²` and
/// `D_j ≤ σ_{W_j}²` for `j ≥ 2`.
pub fn in_region_cc(spec: &SourceSpec, d: &DistortionTuple) -> Result<bool> {
    let w = crate::closed_forms::sigma_w(spec, d)?;
    Ok(d.values().iter().zip(&w).all(|(dj, wj)| *dj <= *wj))
}

/// `Σ - diag(D)` is positive semidefinite (eigenvalues down to
/// `-1e-10 λ_max(Σ)` accepted).
pub fn in_region_jc(sigma: &CovMatrix, d: &DistortionTuple) -> Result<bool> {
    if sigma.dim() != d.len() {
        return Err(Error::DimensionMismatch { expected: sigma.dim(), found: d.len() });
    }
    let mut m = sigma.matrix().clone();
    for (j, dj) in d.values().iter().enumerate() {
        m[(j, j)] -= dj;
    }
    let scale = linalg::max_eigenvalue(sigma.matrix());
    Ok(linalg::is_psd_with_scale(&m, scale))
}

/// Side length of the hypercube `[0, λ_min(Σ)]^T` contained in the JC region.
pub fn jc_hypercube_bound(sigma: &CovMatrix) -> f64 {
    linalg::min_eigenvalue(sigma.matrix()).max(0.0)
}

/// Markov-chain constraints of the sum-rate problem for `kind`.
///
/// C–NC with decoder delay `k` contributes
/// `X̂_j ⟂ X_{j+k+1..T} | (X_1..X_{j+k}, X̂_1..X̂_{j-1})` for `j = 1..T-k-1`;
/// C–C is the `k = 0` case, NC–C(k) and NC–NC(k1, k2) share the lists of
/// C–NC(k) and C–NC(k1+k2), and joint coding has none.
pub fn markov_constraints(kind: SystemKind, frames: usize) -> Result<Vec<ChainConstraint>> {
    kind.validate(frames)?;
    let k = kind.total_delay(frames);
    Ok((0..frames.saturating_sub(k + 1))
        .map(|j| {
            let left = vec![Var::XHat(j)];
            let right = ((j + k + 1)..frames).map(Var::X).collect();
            let given = (0..=(j + k)).map(Var::X).chain((0..j).map(Var::XHat)).collect();
            ChainConstraint::new(left, right, given)
        })
        .collect())
}
