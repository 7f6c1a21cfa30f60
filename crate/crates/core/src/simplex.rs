//! Small numerical kernels: Euclidean projection onto the probability
//! simplex, projected-gradient minimization over mixture weights, and a
//! bracketed golden-section maximizer for concave functions of one variable.

use crate::error::{Error, Result};

/// Euclidean projection of `v` onto `{w : w ≥ 0, Σw = 1}`.
pub fn project_onto_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        cumulative += x;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if x - candidate > 0.0 {
            theta = candidate;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 && total != 1.0 {
        w.iter_mut().for_each(|x| *x /= total);
    }
    w
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Stop once an accepted step moves no coordinate by more than this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexMinimum {
    pub weights: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes a convex function of mixture weights by projected gradient with
/// backtracking. `objective` returns the value and gradient at a point; an
/// infinite value marks a point outside the effective domain and is rejected
/// by the line search.
pub fn minimize_on_simplex<F>(start: &[f64], mut objective: F, options: SimplexOptions) -> SimplexMinimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut w = project_onto_simplex(start);
    let (mut value, mut grad) = objective(&w);
    let mut step = 1.0;
    let mut iterations = 0;
    if !value.is_finite() {
        return SimplexMinimum {
            weights: w,
            value,
            iterations,
            converged: false,
        };
    }

    while iterations < options.max_iterations {
        iterations += 1;
        let mut accepted = None;
        for _ in 0..80 {
            let trial: Vec<f64> = w.iter().zip(&grad).map(|(x, g)| x - step * g).collect();
            let candidate = project_onto_simplex(&trial);
            let delta: Vec<f64> = candidate.iter().zip(&w).map(|(c, x)| c - x).collect();
            let moved = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
            if moved == 0.0 {
                return SimplexMinimum {
                    weights: w,
                    value,
                    iterations,
                    converged: true,
                };
            }
            let (cand_value, cand_grad) = objective(&candidate);
            let linear: f64 = grad.iter().zip(&delta).map(|(g, d)| g * d).sum();
            let quadratic: f64 = delta.iter().map(|d| d * d).sum::<f64>() / (2.0 * step);
            let slack = 1e-15 * (1.0 + value.abs());
            if cand_value.is_finite() && cand_value <= value + linear + quadratic + slack {
                accepted = Some((candidate, cand_value, cand_grad, moved));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, cand_value, cand_grad, moved)) = accepted else {
            break;
        };
        // Projection errors can leave the line search accepting a marginally
        // worse point; only move when the value does not increase.
        if cand_value <= value {
            w = candidate;
            value = cand_value;
            grad = cand_grad;
        }
        if moved <= options.tolerance {
            return SimplexMinimum {
                weights: w,
                value,
                iterations,
                converged: true,
            };
        }
        step = (step * 2.0).min(1e8);
    }

    SimplexMinimum {
        weights: w,
        value,
        iterations,
        converged: false,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GoldenOptions {
    pub interval_tolerance: f64,
    pub max_iterations: usize,
    pub max_doublings: usize,
}

impl Default for GoldenOptions {
    fn default() -> Self {
        Self {
            interval_tolerance: 1e-12,
            max_iterations: 500,
            max_doublings: 60,
        }
    }
}

/// Maximizes a concave `f` starting from the bracket `[lo, hi]`.
///
/// The bracket is widened by doubling on the side whose endpoint beats the
/// midpoint until the midpoint is at least as good as both ends. Returns the
/// best abscissa and value found.
pub fn maximize_concave<F>(mut f: F, mut lo: f64, mut hi: f64, options: GoldenOptions) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::domain(format!("invalid bracket [{lo}, {hi}]")));
    }
    let mut bracketed = false;
    for _ in 0..=options.max_doublings {
        let mid = 0.5 * (lo + hi);
        let (f_lo, f_mid, f_hi) = (f(lo), f(mid), f(hi));
        if f_mid.is_nan() || f_lo.is_nan() || f_hi.is_nan() {
            return Err(Error::Convergence("objective returned NaN while bracketing".into()));
        }
        let width = hi - lo;
        if f_lo > f_mid {
            lo -= width;
        } else if f_hi > f_mid {
            hi += width;
        } else {
            bracketed = true;
            break;
        }
    }
    if !bracketed {
        return Err(Error::Convergence(format!(
            "no bracket for the dual maximizer after {} doublings",
            options.max_doublings
        )));
    }

    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iterations = 0;
    while b - a > options.interval_tolerance && iterations < options.max_iterations {
        iterations += 1;
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (a + b);
    let f_mid = f(mid);
    let best = [(x1, f1), (x2, f2), (mid, f_mid)]
        .into_iter()
        .fold((mid, f_mid), |best, cand| if cand.1 > best.1 { cand } else { best });
    Ok(best)
}
