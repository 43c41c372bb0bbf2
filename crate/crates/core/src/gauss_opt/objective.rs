//! Augmented-Lagrangian merit function for the Gaussian sum-rate problem.
//!
//! Coordinates are normalized so that every source frame has unit variance.
//! A reproduction is written as `X̂ = L (W X + ε)` with `ε ~ N(0, I)` and `L`
//! lower triangular with positive diagonal, stored through its logarithm.
//! Every jointly Gaussian `(X, X̂)` with nonsingular `Cov(X̂ | X)` has this
//! form, and since `L` is invertible
//!
//! ```text
//! I(X; X̂) = I(X; W X + ε) = ½ log det(I + W Σ Wᵀ),
//! ```
//!
//! which stays well conditioned when the reproduction is nearly degenerate
//! (a small diagonal entry of `L` is reached at moderate log values).
//! The MSE of frame `j` is measured after the best rescaling of `X̂_j`,
//! `1 − corr(X_j, X̂_j)²`, and chain constraints are conditional
//! cross-covariances of the correlation matrix of `(X, X̂)`.

use nalgebra::DMatrix;

use crate::linalg;
use crate::model::FlatConstraint;

const LN2: f64 = std::f64::consts::LN_2;
const MAX_SCALE: f64 = 1e3;

pub(crate) struct Problem {
    pub t: usize,
    /// Source covariance with unit diagonal.
    pub sigma: DMatrix<f64>,
    /// `(frame, normalized target)` for frames whose MSE constraint can bind.
    pub targets: Vec<(usize, f64)>,
    pub constraints: Vec<FlatConstraint>,
}

/// Constraint values at a point.
#[derive(Debug, Clone)]
pub(crate) struct Residuals {
    pub rate_bits: f64,
    /// Conditional cross-correlations, flattened over all constraints.
    pub eq: Vec<f64>,
    /// Relative MSE excess `(mse_j − D_j) / D_j` per entry of `targets`.
    pub ineq: Vec<f64>,
}

pub(crate) struct Multipliers {
    pub eq: Vec<f64>,
    /// Per-entry factor applied to the conditional cross-correlations.
    pub eq_scale: Vec<f64>,
    pub ineq: Vec<f64>,
    pub penalty: f64,
}

impl Problem {
    pub fn n_params(&self) -> usize {
        self.t * self.t + self.t * (self.t + 1) / 2
    }

    pub fn n_eq(&self) -> usize {
        self.constraints.iter().map(|c| c.left.len() * c.right.len()).sum()
    }

    /// Returns `(W, L)`.
    pub fn unpack(&self, x: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let t = self.t;
        let w = DMatrix::from_row_slice(t, t, &x[..t * t]);
        let mut l = DMatrix::zeros(t, t);
        let mut k = t * t;
        for i in 0..t {
            for j in 0..i {
                l[(i, j)] = x[k];
                k += 1;
            }
        }
        for i in 0..t {
            l[(i, i)] = x[k].exp();
            k += 1;
        }
        (w, l)
    }

    pub fn pack(&self, w: &DMatrix<f64>, l: &DMatrix<f64>) -> Vec<f64> {
        let t = self.t;
        let mut x = Vec::with_capacity(self.n_params());
        for i in 0..t {
            for j in 0..t {
                x.push(w[(i, j)]);
            }
        }
        for i in 0..t {
            for j in 0..i {
                x.push(l[(i, j)]);
            }
        }
        x.extend((0..t).map(|i| l[(i, i)].ln()));
        x
    }

    /// Joint covariance of `(X, X̂)`.
    pub fn joint(&self, w: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64> {
        let t = self.t;
        let a = l * w;
        let cross = &self.sigma * a.transpose();
        let mut m = &a * &cross + l * l.transpose();
        linalg::symmetrize(&mut m);
        let mut s = DMatrix::zeros(2 * t, 2 * t);
        s.view_mut((0, 0), (t, t)).copy_from(&self.sigma);
        s.view_mut((0, t), (t, t)).copy_from(&cross);
        s.view_mut((t, 0), (t, t)).copy_from(&cross.transpose());
        s.view_mut((t, t), (t, t)).copy_from(&m);
        s
    }

    /// Parameters reproducing a given joint covariance (normalized units).
    /// `Cov(X̂ | X)` receives a small ridge so that it admits a Cholesky factor.
    pub fn params_from_joint(&self, s: &DMatrix<f64>) -> Vec<f64> {
        let t = self.t;
        let sigma_inv = linalg::spd_inverse(&self.sigma).expect("source covariance is nonsingular");
        let s21 = s.view((t, 0), (t, t)).into_owned();
        let s22 = s.view((t, t), (t, t)).into_owned();
        let a = &s21 * &sigma_inv;
        let mut q = &s22 - &a * &self.sigma * a.transpose();
        linalg::symmetrize(&mut q);
        let scale = s22.diagonal().iter().copied().fold(0.0_f64, f64::max).max(1.0);
        let floor = linalg::min_eigenvalue(&q).min(0.0);
        for i in 0..t {
            q[(i, i)] += 1e-6 * scale - floor;
        }
        let l = q.cholesky().expect("ridged conditional covariance is positive definite").l();
        let w = l.clone().solve_lower_triangular(&a).expect("triangular factor is nonsingular");
        self.pack(&w, &l)
    }

    fn constraint_values(&self, s: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
        let r = correlation(s);
        let mut eq = Vec::with_capacity(self.n_eq());
        for c in &self.constraints {
            let e = linalg::conditional_cross_cov(&r, &c.left, &c.right, &c.given)
                .unwrap_or_else(|| DMatrix::from_element(c.left.len(), c.right.len(), f64::NAN));
            for i in 0..e.nrows() {
                for j in 0..e.ncols() {
                    eq.push(e[(i, j)]);
                }
            }
        }
        let ineq = self
            .targets
            .iter()
            .map(|&(j, d)| {
                let rho = r[(j, self.t + j)];
                (1.0 - rho * rho - d) / d
            })
            .collect();
        (eq, ineq)
    }

    /// `1 / √(Var(P_i | G) Var(Q_j | G))` for every constrained pair, capped at
    /// `MAX_SCALE`, so that scaled residuals are partial correlations.
    pub fn partial_scales(&self, x: &[f64]) -> Vec<f64> {
        let (w, l) = self.unpack(x);
        let r = correlation(&self.joint(&w, &l));
        let mut out = Vec::with_capacity(self.n_eq());
        for c in &self.constraints {
            let var = |set: &[usize]| -> Vec<f64> {
                let d = linalg::conditional_cross_cov(&r, set, set, &c.given)
                    .map(|m| m.diagonal().iter().copied().collect())
                    .unwrap_or_else(|| vec![1.0; set.len()]);
                d.into_iter().map(|v: f64| v.max(1e-12)).collect()
            };
            let (vp, vq) = (var(&c.left), var(&c.right));
            for a in &vp {
                for b in &vq {
                    out.push((1.0 / (a * b).sqrt()).min(MAX_SCALE));
                }
            }
        }
        out
    }

    pub fn residuals(&self, x: &[f64]) -> Residuals {
        let (w, l) = self.unpack(x);
        let (eq, ineq) = self.constraint_values(&self.joint(&w, &l));
        let rate_bits = self.rate_bits(&w).map_or(f64::INFINITY, |r| r.0);
        Residuals { rate_bits, eq, ineq }
    }

    /// Rate in bits and `(I + W Σ Wᵀ)⁻¹`.
    fn rate_bits(&self, w: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
        let mut n = w * &self.sigma * w.transpose();
        for i in 0..self.t {
            n[(i, i)] += 1.0;
        }
        linalg::symmetrize(&mut n);
        if !n.iter().all(|v| v.is_finite()) {
            return None;
        }
        let chol = n.cholesky()?;
        let ld: f64 = (0..self.t).map(|i| 2.0 * chol.l_dirty()[(i, i)].ln()).sum();
        Some((0.5 * ld / LN2, chol.inverse()))
    }

    fn linearize(&self, x: &[f64]) -> Option<Point> {
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
        let (w, l) = self.unpack(x);
        let s = self.joint(&w, &l);
        if !s.iter().all(|v| v.is_finite()) {
            return None;
        }
        let (rate, n_inv) = self.rate_bits(&w)?;
        let r = correlation(&s);
        let mut blocks = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            let (p, q, g) = (&c.left, &c.right, &c.given);
            let rpq = linalg::submatrix(&r, p, q);
            blocks.push(if g.is_empty() {
                (rpq, None)
            } else {
                let rgg_inv = linalg::spd_inverse(&linalg::submatrix(&r, g, g))?;
                let h = linalg::submatrix(&r, p, g) * &rgg_inv; // R_PG R_GG⁻¹
                let kk = &rgg_inv * linalg::submatrix(&r, g, q); // R_GG⁻¹ R_GQ
                let e = rpq - &h * linalg::submatrix(&r, g, q);
                (e, Some((h, kk)))
            });
        }
        Some(Point { w, l, s, r, rate, n_inv, blocks })
    }

    /// Gradient of `obj_weight · rate + Σ eq_weights · E + Σ ineq_weights · g`,
    /// where `E` are the unscaled conditional cross-correlations and `g` the
    /// relative MSE excesses.
    fn weighted_gradient(
        &self,
        pt: &Point,
        obj_weight: f64,
        eq_weights: &[f64],
        ineq_weights: &[f64],
        grad: &mut [f64],
    ) {
        let t = self.t;
        let n = 2 * t;
        let (s, r) = (&pt.s, &pt.r);
        // Gradient with respect to the entries of the correlation matrix,
        // each entry treated as an independent variable.
        let mut gr = DMatrix::<f64>::zeros(n, n);
        let mut k = 0;
        for (c, (e, hk)) in self.constraints.iter().zip(&pt.blocks) {
            let (p, q, g) = (&c.left, &c.right, &c.given);
            let w = DMatrix::from_fn(e.nrows(), e.ncols(), |i, j| eq_weights[k + i * e.ncols() + j]);
            k += e.len();
            scatter_add(&mut gr, p, q, &w);
            if let Some((h, kk)) = hk {
                scatter_add(&mut gr, p, g, &(-(&w * kk.transpose())));
                scatter_add(&mut gr, g, q, &(-(h.transpose() * &w)));
                scatter_add(&mut gr, g, g, &(h.transpose() * &w * kk.transpose()));
            }
        }
        for (&(j, d), wt) in self.targets.iter().zip(ineq_weights) {
            gr[(j, t + j)] += wt * (-2.0 * r[(j, t + j)] / d);
        }

        // Correlation entries to covariance entries:
        // dR_ab = dS_ab / √(S_aa S_bb) − ½ R_ab (dS_aa / S_aa + dS_bb / S_bb).
        let mut gs = DMatrix::<f64>::zeros(n, n);
        for aa in 0..n {
            for bb in 0..n {
                let w = gr[(aa, bb)];
                if w == 0.0 {
                    continue;
                }
                gs[(aa, bb)] += w / (s[(aa, aa)] * s[(bb, bb)]).sqrt();
                let half = 0.5 * w * r[(aa, bb)];
                gs[(aa, aa)] -= half / s[(aa, aa)];
                gs[(bb, bb)] -= half / s[(bb, bb)];
            }
        }

        // Covariance entries to parameters:
        // S12 = Σ Aᵀ, S21 = A Σ, S22 = A Σ Aᵀ + L Lᵀ with A = L W.
        let (w, l) = (&pt.w, &pt.l);
        let a = l * w;
        let g12 = gs.view((0, t), (t, t)).into_owned();
        let g21 = gs.view((t, 0), (t, t)).into_owned();
        let g22 = gs.view((t, t), (t, t)).into_owned();
        let g22s = &g22 + g22.transpose();
        let ga = g12.transpose() * &self.sigma + g21 * &self.sigma + &g22s * &a * &self.sigma;
        let gw = l.transpose() * &ga + &pt.n_inv * w * &self.sigma * (obj_weight / LN2);
        let gl = &ga * w.transpose() + &g22s * l;
        let mut idx = 0;
        for i in 0..t {
            for j in 0..t {
                grad[idx] = gw[(i, j)];
                idx += 1;
            }
        }
        for i in 0..t {
            for j in 0..i {
                grad[idx] = gl[(i, j)];
                idx += 1;
            }
        }
        for i in 0..t {
            grad[idx] = gl[(i, i)] * l[(i, i)];
            idx += 1;
        }
    }

    /// Augmented Lagrangian value and gradient.
    pub fn merit(&self, x: &[f64], mult: &Multipliers, grad: &mut [f64]) -> f64 {
        let Some(pt) = self.linearize(x) else {
            grad.iter_mut().for_each(|v| *v = 0.0);
            return f64::INFINITY;
        };
        let mu = mult.penalty;
        let mut value = pt.rate;
        let mut eq_w = Vec::with_capacity(mult.eq.len());
        let mut k = 0;
        for (e, _) in &pt.blocks {
            for i in 0..e.nrows() {
                for j in 0..e.ncols() {
                    let sc = mult.eq_scale[k];
                    let c = sc * e[(i, j)];
                    value += mult.eq[k] * c + 0.5 * mu * c * c;
                    eq_w.push(sc * (mult.eq[k] + mu * c));
                    k += 1;
                }
            }
        }
        let mut ineq_w = Vec::with_capacity(mult.ineq.len());
        for (i, &(j, d)) in self.targets.iter().enumerate() {
            let rho = pt.r[(j, self.t + j)];
            let gval = (1.0 - rho * rho - d) / d;
            let lam = mult.ineq[i];
            let act = (lam + mu * gval).max(0.0);
            value += (act * act - lam * lam) / (2.0 * mu);
            ineq_w.push(act);
        }
        self.weighted_gradient(&pt, 1.0, &eq_w, &ineq_w, grad);
        value
    }

    /// Gradient of the rate and Jacobian rows of the scaled equality
    /// constraints followed by the MSE constraints.
    pub fn jacobian(&self, x: &[f64], eq_scale: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
        let pt = self.linearize(x)?;
        let (ne, ni, np) = (self.n_eq(), self.targets.len(), self.n_params());
        let mut grad = vec![0.0; np];
        self.weighted_gradient(&pt, 1.0, &vec![0.0; ne], &vec![0.0; ni], &mut grad);
        let mut jac = DMatrix::zeros(ne + ni, np);
        let mut row = vec![0.0; np];
        for k in 0..ne + ni {
            let mut ew = vec![0.0; ne];
            let mut iw = vec![0.0; ni];
            if k < ne {
                ew[k] = eq_scale[k];
            } else {
                iw[k - ne] = 1.0;
            }
            self.weighted_gradient(&pt, 0.0, &ew, &iw, &mut row);
            jac.row_mut(k).copy_from_slice(&row);
        }
        Some((grad, jac))
    }
}

struct Point {
    w: DMatrix<f64>,
    l: DMatrix<f64>,
    s: DMatrix<f64>,
    r: DMatrix<f64>,
    rate: f64,
    n_inv: DMatrix<f64>,
    /// Conditional cross-correlation and, when conditioning is present,
    /// `(R_PG R_GG⁻¹, R_GG⁻¹ R_GQ)` per constraint.
    blocks: Vec<(DMatrix<f64>, Option<Factors>)>,
}

type Factors = (DMatrix<f64>, DMatrix<f64>);

fn scatter_add(target: &mut DMatrix<f64>, rows: &[usize], cols: &[usize], block: &DMatrix<f64>) {
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            target[(r, c)] += block[(i, j)];
        }
    }
}

/// Correlation matrix of a covariance with positive diagonal.
pub(crate) fn correlation(s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    let inv_sd: Vec<f64> = (0..n).map(|i| 1.0 / s[(i, i)].sqrt()).collect();
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { s[(i, j)] * inv_sd[i] * inv_sd[j] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_covariance, markov_constraints};
    use crate::{SourceSpec, SystemKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(kind: SystemKind) -> Problem {
        let spec = SourceSpec::gauss_markov(vec![1.0; 4], vec![0.9, 0.6, 0.8]).unwrap();
        let sigma = build_covariance(&spec).unwrap().into_matrix();
        let constraints = markov_constraints(kind, 4)
            .unwrap()
            .iter()
            .map(|c| c.flat(4))
            .collect();
        Problem { t: 4, sigma, targets: vec![(0, 0.05), (1, 0.1), (2, 0.07), (3, 0.2)], constraints }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [SystemKind::CC, SystemKind::CNC(1), SystemKind::JC] {
            let p = problem(kind);
            let x: Vec<f64> = (0..p.n_params()).map(|_| rng.random_range(-0.8..0.8)).collect();
            let mult = Multipliers {
                eq: (0..p.n_eq()).map(|_| rng.random_range(-1.0..1.0)).collect(),
                eq_scale: (0..p.n_eq()).map(|_| rng.random_range(0.5..3.0)).collect(),
                ineq: vec![0.3, 0.0, 1.2, 0.5],
                penalty: 7.0,
            };
            let mut g = vec![0.0; x.len()];
            p.merit(&x, &mult, &mut g);
            let mut scratch = vec![0.0; x.len()];
            for i in 0..x.len() {
                let h = 1e-6;
                let mut xp = x.clone();
                xp[i] += h;
                let fp = p.merit(&xp, &mult, &mut scratch);
                xp[i] -= 2.0 * h;
                let fm = p.merit(&xp, &mult, &mut scratch);
                let fd = (fp - fm) / (2.0 * h);
                assert!(
                    (fd - g[i]).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "{kind}: param {i}: analytic {} vs fd {fd}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn pack_round_trip_and_joint_reconstruction() {
        let p = problem(SystemKind::CC);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..p.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (w, l) = p.unpack(&x);
        let back = p.pack(&w, &l);
        assert!(back.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-14));
        let s = p.joint(&w, &l);
        let y = p.params_from_joint(&s);
        let (w2, l2) = p.unpack(&y);
        let s2 = p.joint(&w2, &l2);
        // Same correlation structure up to the ridge.
        assert!((correlation(&s) - correlation(&s2)).amax() < 1e-5);
    }
}
