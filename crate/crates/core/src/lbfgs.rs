//! Limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

pub(crate) struct Settings {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the largest gradient component falls below this value.
    pub gradient_tol: f64,
}

/// Minimizes `f` starting from `x`, which is overwritten with the result.
/// `f` writes the gradient into its second argument and returns the value.
/// Returns the number of iterations taken.
pub(crate) fn minimize<F>(mut f: F, x: &mut [f64], settings: &Settings) -> usize
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut value = f(x, &mut g);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(settings.memory);
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut iterations = 0;
    let mut stalls = 0;

    while iterations < settings.max_iterations {
        let gnorm = inf_norm(&g);
        if !value.is_finite() || gnorm < settings.gradient_tol {
            break;
        }
        iterations += 1;

        // Two-loop recursion.
        let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &dir);
            axpy(-a, y, &mut dir);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= gamma);
        } else {
            let scale = 1.0 / gnorm.max(1.0);
            dir.iter_mut().for_each(|d| *d *= scale);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &dir);
            axpy(a - b, s, &mut dir);
        }
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            history.clear();
            dir = g.iter().map(|v| -v / gnorm.max(1.0)).collect();
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = x[i] + step * dir[i];
            }
            let v = f(&trial, &mut g_trial);
            if v.is_finite() && v <= value + 1e-4 * step * slope {
                let s: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| g_trial[i] - g[i]).collect();
                let sy = dot(&s, &y);
                if sy > 1e-14 * dot(&y, &y).max(f64::MIN_POSITIVE) {
                    if history.len() == settings.memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                let decrease = value - v;
                x.copy_from_slice(&trial);
                g.copy_from_slice(&g_trial);
                stalls = if decrease <= 1e-15 * value.abs().max(1.0) { stalls + 1 } else { 0 };
                value = v;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if history.is_empty() {
                break;
            }
            history.clear();
        } else if stalls >= 10 {
            break;
        }
    }
    iterations
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
