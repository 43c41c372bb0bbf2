//! Information measures on discrete joint distributions and Gaussian
//! covariances. All results are in bits.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::linalg;
use crate::{CovMatrix, Error, Result};

/// Information quantities at least this negative are reported as errors in
/// debug builds; anything above is clamped to zero.
const NEG_CLAMP: f64 = -1e-12;

/// Joint probability mass function over a product alphabet, stored row-major
/// (last coordinate varies fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    sizes: Vec<usize>,
    probs: Vec<f64>,
}

impl JointPmf {
    pub fn new(sizes: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if sizes.contains(&0) {
            return Err(Error::InvalidPmf("alphabet sizes must be positive".into()));
        }
        let total: usize = sizes.iter().product();
        if probs.len() != total {
            return Err(Error::InvalidPmf(format!(
                "{} probabilities for a product alphabet of {total} outcomes",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidPmf("probabilities must be finite and nonnegative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPmf(format!("probabilities sum to {sum}")));
        }
        Ok(Self { sizes, probs })
    }

    /// Builds a pmf from nonnegative weights, normalizing them.
    pub fn from_weights(sizes: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::InvalidPmf("weights must have a positive finite sum".into()));
        }
        Self::new(sizes, weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn arity(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, outcome: &[usize]) -> f64 {
        self.probs[self.flat_index(outcome)]
    }

    pub fn flat_index(&self, outcome: &[usize]) -> usize {
        outcome.iter().zip(&self.sizes).fold(0, |acc, (x, s)| acc * s + x)
    }

    /// Iterates over `(outcome, probability)` for every point of the product
    /// alphabet.
    pub fn outcomes(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        let mut cur = vec![0usize; self.sizes.len()];
        self.probs.iter().enumerate().map(move |(i, &p)| {
            if i > 0 {
                for d in (0..cur.len()).rev() {
                    cur[d] += 1;
                    if cur[d] < self.sizes[d] {
                        break;
                    }
                    cur[d] = 0;
                }
            }
            (cur.clone(), p)
        })
    }

    /// Marginal pmf over the coordinates in `vars` (in that order).
    pub fn marginal(&self, vars: &[usize]) -> Result<JointPmf> {
        self.check_vars(vars)?;
        let sizes: Vec<usize> = vars.iter().map(|&v| self.sizes[v]).collect();
        let mut probs = vec![0.0; sizes.iter().product()];
        for (x, p) in self.outcomes() {
            let idx = vars.iter().fold(0, |acc, &v| acc * self.sizes[v] + x[v]);
            probs[idx] += p;
        }
        Ok(JointPmf { sizes, probs })
    }

    /// Appends a coordinate with a one-symbol alphabet and returns the
    /// extended pmf with the new coordinate's index. Conditioning on it, or
    /// including it in an information term, changes nothing.
    pub fn with_constant(&self) -> (JointPmf, usize) {
        let mut sizes = self.sizes.clone();
        sizes.push(1);
        (JointPmf { sizes, probs: self.probs.clone() }, self.sizes.len())
    }

    fn check_vars(&self, vars: &[usize]) -> Result<()> {
        match vars.iter().find(|&&v| v >= self.arity()) {
            Some(v) => Err(Error::OutOfRange(format!("variable {v} of a {}-ary pmf", self.arity()))),
            None => Ok(()),
        }
    }

    /// Entropy (bits) of the marginal over a set of coordinates; duplicates
    /// are ignored.
    pub fn subset_entropy(&self, vars: &[usize]) -> Result<f64> {
        let set: Vec<usize> = vars.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        Ok(entropy_of(&self.marginal(&set)?.probs))
    }

    /// Plain-text table: a `sizes` line, then one line per outcome with the
    /// symbols followed by the probability. Outcomes of probability zero are
    /// written too, so the table always lists the full product alphabet.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let sizes: Vec<String> = self.sizes.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "sizes {}", sizes.join(" "));
        for (x, p) in self.outcomes() {
            let syms: Vec<String> = x.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "{} {p:?}", syms.join(" "));
        }
        out
    }

    /// Parses the table written by [`JointPmf::to_table`]. Blank lines and
    /// `#` comments are ignored; outcomes not listed have probability zero.
    pub fn from_table(text: &str) -> Result<JointPmf> {
        let mut sizes: Option<Vec<usize>> = None;
        let mut probs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |message: String| Error::Parse { line: lineno + 1, message };
            let mut toks = line.split_whitespace();
            match &sizes {
                None => {
                    if toks.next() != Some("sizes") {
                        return Err(perr("expected `sizes` header".into()));
                    }
                    let s: Vec<usize> = toks
                        .map(|t| t.parse::<usize>().map_err(|e| perr(format!("bad size `{t}`: {e}"))))
                        .collect::<Result<_>>()?;
                    if s.is_empty() || s.contains(&0) {
                        return Err(perr("sizes must be positive".into()));
                    }
                    probs = vec![0.0; s.iter().product()];
                    sizes = Some(s);
                }
                Some(s) => {
                    let toks: Vec<&str> = toks.collect();
                    if toks.len() != s.len() + 1 {
                        return Err(perr(format!("expected {} symbols and a probability", s.len())));
                    }
                    let mut idx = 0;
                    for (t, &size) in toks[..s.len()].iter().zip(s) {
                        let sym: usize = t.parse().map_err(|e| perr(format!("bad symbol `{t}`: {e}")))?;
                        if sym >= size {
                            return Err(perr(format!("symbol {sym} outside alphabet of size {size}")));
                        }
                        idx = idx * size + sym;
                    }
                    let last = toks[s.len()];
                    let p: f64 = last.parse().map_err(|e| perr(format!("bad probability `{last}`: {e}")))?;
                    probs[idx] += p;
                }
            }
        }
        let sizes = sizes.ok_or(Error::Parse { line: 0, message: "empty pmf table".into() })?;
        JointPmf::new(sizes, probs)
    }
}

fn entropy_of(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.log2()).sum::<f64>()
}

fn clamp(v: f64) -> f64 {
    debug_assert!(v >= NEG_CLAMP * 1e3, "information quantity {v} is negative");
    v.max(0.0)
}

fn dedup(v: &[usize]) -> Vec<usize> {
    v.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
}

fn union(sets: &[&[usize]]) -> Vec<usize> {
    sets.iter().flat_map(|s| s.iter().copied()).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Shannon entropy of the full joint pmf.
pub fn entropy(p: &JointPmf) -> f64 {
    entropy_of(&p.probs)
}

/// `I(A; B | C)`; with `c` empty this is `I(A; B)`.
pub fn conditional_mi(p: &JointPmf, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
    let (a, b, c) = (dedup(a), dedup(b), dedup(c));
    for (x, y) in [(&a, &b), (&a, &c), (&b, &c)] {
        if let Some(v) = x.iter().find(|v| y.contains(v)) {
            return Err(Error::OverlappingSets(*v));
        }
    }
    let h = |s: &[usize]| p.subset_entropy(s);
    let v = h(&union(&[&a, &c]))? + h(&union(&[&b, &c]))? - h(&union(&[&a, &b, &c]))? - h(&c)?;
    Ok(clamp(v))
}

pub fn mutual_information(p: &JointPmf, a: &[usize], b: &[usize]) -> Result<f64> {
    conditional_mi(p, a, b, &[])
}

/// Directed information `I(A^N → B^N) = Σ_n I(A^n; B_n | B^{n-1})`.
pub fn directed_information(p: &JointPmf, a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let mut total = 0.0;
    for n in 0..a.len() {
        total += conditional_mi(p, &a[..=n], &b[n..=n], &b[..n])?;
    }
    Ok(total)
}

/// `k`-directed information
/// `I_k(A^N → B^N) = I(A^N; B^N) - Σ_{n=k+1}^N I(B^{n-k}; A_n | A^{n-1})`.
pub fn k_directed_information(p: &JointPmf, a: &[usize], b: &[usize], k: usize) -> Result<f64> {
    let n = a.len();
    if n != b.len() {
        return Err(Error::LengthMismatch(n, b.len()));
    }
    if k > n {
        return Err(Error::OutOfRange(format!("k = {k} exceeds sequence length {n}")));
    }
    let mut feedback = 0.0;
    for m in (k + 1)..=n {
        // I(B^{m-k}; A_m | A^{m-1}) with one-based m.
        feedback += conditional_mi(p, &b[..m - k], &a[m - 1..m], &a[..m - 1])?;
    }
    Ok(mutual_information(p, a, b)? - feedback)
}

/// The sequence `0^k B^{N-k}` over an extended pmf in which `zero` is a
/// constant coordinate.
fn delayed_sequence(b: &[usize], k: usize, zero: usize) -> Vec<usize> {
    let n = b.len();
    std::iter::repeat_n(zero, k.min(n)).chain(b[..n - k.min(n)].iter().copied()).collect()
}

/// `|I(X^T; X̂^T) - I_{k+1}(X^T → X̂^T) - I(0^{k+1} X̂^{T-k-1} → X^T)|` for a
/// pmf over `(X_1..X_T, X̂_1..X̂_T)`.
///
/// The last term is evaluated as an ordinary directed information on the
/// delayed sequence, with the padding symbol realized as an adjoined constant
/// coordinate; the middle term uses the feedback-sum form of `I_k`.
pub fn kdirect_identity_residual(p: &JointPmf, k: usize) -> Result<f64> {
    if !p.arity().is_multiple_of(2) {
        return Err(Error::InvalidPmf("expected 2T coordinates (X^T, X̂^T)".into()));
    }
    let t = p.arity() / 2;
    if k + 1 > t {
        return Err(Error::OutOfRange(format!("k + 1 = {} exceeds T = {t}", k + 1)));
    }
    let x: Vec<usize> = (0..t).collect();
    let xh: Vec<usize> = (t..2 * t).collect();
    let lhs = p.subset_entropy(&x)? + p.subset_entropy(&xh)? - entropy(p);
    let kdi = k_directed_information(p, &x, &xh, k + 1)?;
    let (ext, zero) = p.with_constant();
    let delayed = delayed_sequence(&xh, k + 1, zero);
    let feedback = directed_information(&ext, &delayed, &x)?;
    Ok((lhs - kdi - feedback).abs())
}

/// `I(0^{k+1} X̂^{T-k-1} → X^T)` for a pmf over `(X^T, X̂^T)`; zero exactly
/// when the C–NC(k) Markov chains hold.
pub fn delayed_feedback_information(p: &JointPmf, k: usize) -> Result<f64> {
    if !p.arity().is_multiple_of(2) {
        return Err(Error::InvalidPmf("expected 2T coordinates (X^T, X̂^T)".into()));
    }
    let t = p.arity() / 2;
    let x: Vec<usize> = (0..t).collect();
    let xh: Vec<usize> = (t..2 * t).collect();
    let (ext, zero) = p.with_constant();
    directed_information(&ext, &delayed_sequence(&xh, k + 1, zero), &x)
}

/// Gaussian mutual information `½ log₂(|S_AA| |S_BB| / |S_{A∪B}|)`.
///
/// A singular `S_BB` is handled by restricting `B` to the range of `S_BB`
/// (eigenvalues above `1e-10 λ_max`); `S_AA` must be nonsingular.
pub fn gaussian_mi(s: &CovMatrix, a: &[usize], b: &[usize]) -> Result<f64> {
    let n = s.dim();
    if let Some(v) = a.iter().chain(b).find(|&&v| v >= n) {
        return Err(Error::OutOfRange(format!("index {v} outside a {n}x{n} covariance")));
    }
    let (a, b) = (dedup(a), dedup(b));
    if let Some(v) = a.iter().find(|v| b.contains(v)) {
        return Err(Error::OverlappingSets(*v));
    }
    let m = s.matrix();
    let saa = linalg::submatrix(m, &a, &a);
    let sbb = linalg::submatrix(m, &b, &b);
    let sab = linalg::submatrix(m, &a, &b);
    let ld_a = linalg::logdet_spd(&saa)
        .filter(|_| linalg::min_eigenvalue(&saa) > linalg::PSD_REL_TOL * linalg::max_eigenvalue(&saa))
        .ok_or_else(|| Error::Singular("source block S_AA is singular".into()))?;
    // Reduce B to the range of S_BB: B' = Uᵀ B with orthonormal U.
    let u = linalg::range_basis(&sbb);
    if u.ncols() == 0 {
        return Ok(0.0);
    }
    let sbb_r = u.transpose() * &sbb * &u;
    let sab_r = &sab * &u;
    // |S| = |S_BB| · |S_AA - S_AB S_BB^{-1} S_BA|, so the |S_BB| factors cancel.
    let sbb_inv = linalg::spd_inverse(&sbb_r).ok_or_else(|| Error::Singular("reduced S_BB".into()))?;
    let mut schur = &saa - &sab_r * sbb_inv * sab_r.transpose();
    linalg::symmetrize(&mut schur);
    let ld_schur = match linalg::logdet_spd(&schur) {
        Some(v) => v,
        None => {
            let (ld, rank) = linalg::rank_reduced_logdet(&schur);
            if rank < a.len() {
                return Ok(f64::INFINITY);
            }
            ld
        }
    };
    Ok(clamp(0.5 * (ld_a - ld_schur) / std::f64::consts::LN_2))
}
