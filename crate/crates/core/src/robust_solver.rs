//! Evaluation of acts: the multiplier value against one structured model,
//! the full criterion over a model set, the max-min criterion, an
//! independent primal grid oracle and lambda sweeps.
//!
//! For a phi-divergence penalty the inner minimization over unstructured
//! models is solved through its dual,
//!
//! ```text
//! min_p { E_p[u] + λ D_φ(p || q) } = λ sup_η { η − E_q[φ*(η − u/λ)] },
//! ```
//!
//! a concave problem in one variable. Relative entropy and the Gini index
//! have closed-form maximizers; any other `φ` goes through golden-section
//! search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::divergences::{divergence_raw, DivergenceSpec, Lambda, PhiFunction, PhiKind};
use crate::error::{check_dim, Error, Result};
use crate::model_space::{dot, Act, HullMode, Model, ModelSet};
use crate::simplex::{maximize_concave, minimize_on_simplex, GoldenOptions, SimplexOptions};

/// Largest normalization defect of a recovered worst-case model that is
/// still reported (after renormalizing).
pub const WORST_CASE_NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Largest state count accepted by the primal grid oracle.
pub const PRIMAL_ORACLE_MAX_STATES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    EntropicClosedForm,
    GiniClosedForm,
    GenericDual,
    PrimalGrid,
    Maxmin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    pub value: f64,
    /// Structured model attaining the outer minimum (lowest index on ties;
    /// heaviest component for a hull mixture).
    pub binding_model_index: usize,
    /// The minimizing unstructured model, when it could be recovered.
    pub worst_case_model: Option<Model>,
    pub method: Method,
    /// Mixture weights of the binding hull point, in hull mode.
    pub mixture_weights: Option<Vec<f64>>,
}

/// Multiplier evaluation plus the dual maximizer, which the hull optimizer
/// needs for gradients in `q`.
struct Dual {
    value: f64,
    eta: f64,
    worst_case: Option<Model>,
    method: Method,
}

impl Dual {
    fn into_result(self, binding_model_index: usize) -> EvaluationResult {
        EvaluationResult {
            value: self.value,
            binding_model_index,
            worst_case_model: self.worst_case,
            method: self.method,
            mixture_weights: None,
        }
    }
}

/// `V_{λ,q}(f) = min_p { E_p[u(f)] + c(p, q) }` for a single structured model.
pub fn multiplier_value(act: &Act, q: &Model, spec: &DivergenceSpec) -> Result<EvaluationResult> {
    Ok(multiplier_dual(act, q, spec)?.into_result(0))
}

fn multiplier_dual(act: &Act, q: &Model, spec: &DivergenceSpec) -> Result<Dual> {
    check_dim(q.dim(), act.dim())?;
    spec.lambda().validate()?;
    let Some((lambda, phi)) = spec.finite_parts() else {
        return Ok(Dual {
            value: dot(q.weights(), act.utils()),
            eta: 0.0,
            worst_case: Some(q.clone()),
            method: Method::Maxmin,
        });
    };
    match phi.kind() {
        PhiKind::RelativeEntropy => Ok(entropic_dual(act.utils(), q, lambda)),
        PhiKind::Gini => Ok(gini_dual(act.utils(), q, lambda)),
        PhiKind::Custom => generic_dual(act.utils(), q, phi, lambda),
    }
}

/// `−λ log E_q[exp(−u/λ)]`, shifted by the largest exponent.
pub fn entropic_closed_form(act: &Act, q: &Model, lambda: f64) -> Result<EvaluationResult> {
    check_dim(q.dim(), act.dim())?;
    Lambda::finite(lambda)?;
    Ok(entropic_dual(act.utils(), q, lambda).into_result(0))
}

fn entropic_dual(u: &[f64], q: &Model, lambda: f64) -> Dual {
    let weights = q.weights();
    let shift = weights
        .iter()
        .zip(u)
        .filter(|(&qs, _)| qs > 0.0)
        .map(|(_, &us)| -us / lambda)
        .fold(f64::NEG_INFINITY, f64::max);
    // Σ q e^{a−m} = 1 + Σ q (e^{a−m} − 1) + (Σ q − 1), kept in log1p form so
    // that large λ does not lose the deviation from one.
    let mut excess = weights.iter().sum::<f64>() - 1.0;
    for (&qs, &us) in weights.iter().zip(u) {
        if qs > 0.0 {
            excess += qs * (-us / lambda - shift).exp_m1();
        }
    }
    let log_partition = shift + excess.ln_1p();
    let value = -lambda * log_partition;
    let tilted: Vec<f64> = weights
        .iter()
        .zip(u)
        .map(|(&qs, &us)| {
            if qs > 0.0 {
                qs * (-us / lambda - shift).exp()
            } else {
                0.0
            }
        })
        .collect();
    Dual {
        value,
        eta: -log_partition,
        worst_case: Model::from_unnormalized(tilted).ok(),
        method: Method::EntropicClosedForm,
    }
}

/// Exact dual solution for `φ(t) = (t − 1)²/2`: the optimality condition
/// `E_q[max(1 + η − u/λ, 0)] = 1` is piecewise linear in `η` and is solved by
/// sweeping states in increasing utility.
pub fn gini_closed_form(act: &Act, q: &Model, lambda: f64) -> Result<EvaluationResult> {
    check_dim(q.dim(), act.dim())?;
    Lambda::finite(lambda)?;
    Ok(gini_dual(act.utils(), q, lambda).into_result(0))
}

fn gini_dual(u: &[f64], q: &Model, lambda: f64) -> Dual {
    let weights = q.weights();
    let mut order: Vec<usize> = (0..u.len()).filter(|&s| weights[s] > 0.0).collect();
    order.sort_by(|&a, &b| u[a].total_cmp(&u[b]));
    let scaled = |s: usize| u[s] / lambda;

    let mut mass = 0.0;
    let mut moment = 0.0;
    let mut eta = f64::NAN;
    for (k, &s) in order.iter().enumerate() {
        mass += weights[s];
        moment += weights[s] * scaled(s);
        let candidate = (1.0 + moment) / mass - 1.0;
        let next_inactive = order
            .get(k + 1)
            .is_none_or(|&next| 1.0 + candidate - scaled(next) <= 0.0);
        if next_inactive {
            eta = candidate;
            break;
        }
    }

    let gini = PhiFunction::gini();
    let expected_conjugate: f64 = order
        .iter()
        .map(|&s| weights[s] * gini.conjugate(eta - scaled(s)))
        .sum();
    let value = lambda * (eta - expected_conjugate);
    let density: Vec<f64> = (0..u.len())
        .map(|s| {
            if weights[s] > 0.0 {
                weights[s] * (1.0 + eta - scaled(s)).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    Dual {
        value,
        eta,
        worst_case: Model::from_unnormalized(density).ok(),
        method: Method::GiniClosedForm,
    }
}

/// `λ sup_η { η − E_q[φ*(η − u/λ)] }` by bracketed golden-section search,
/// valid for any `φ`. The worst-case model is `q · (φ*)′(η* − u/λ)` when it
/// normalizes to within [`WORST_CASE_NORMALIZATION_TOLERANCE`].
pub fn generic_dual_value(act: &Act, q: &Model, phi: &PhiFunction, lambda: f64) -> Result<EvaluationResult> {
    check_dim(q.dim(), act.dim())?;
    Lambda::finite(lambda)?;
    Ok(generic_dual(act.utils(), q, phi, lambda)?.into_result(0))
}

fn generic_dual(u: &[f64], q: &Model, phi: &PhiFunction, lambda: f64) -> Result<Dual> {
    let weights = q.weights();
    let support: Vec<usize> = (0..u.len()).filter(|&s| weights[s] > 0.0).collect();
    let (lo, hi) = support.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
        (lo.min(u[s] / lambda), hi.max(u[s] / lambda))
    });
    let objective = |eta: f64| {
        eta - support
            .iter()
            .map(|&s| weights[s] * phi.conjugate(eta - u[s] / lambda))
            .sum::<f64>()
    };
    let (eta, best) = maximize_concave(objective, lo - 1.0, hi + 1.0, GoldenOptions::default())?;
    if !best.is_finite() {
        return Err(Error::Convergence(format!("dual objective is {best} at its maximizer")));
    }

    let density: Vec<f64> = (0..u.len())
        .map(|s| {
            if weights[s] > 0.0 {
                weights[s] * phi.conjugate_derivative(eta - u[s] / lambda)
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = density.iter().sum();
    let worst_case = if (total - 1.0).abs() <= WORST_CASE_NORMALIZATION_TOLERANCE
        && density.iter().all(|d| d.is_finite() && *d >= 0.0)
    {
        Model::from_unnormalized(density).ok()
    } else {
        None
    };
    Ok(Dual {
        value: lambda * best,
        eta,
        worst_case,
        method: Method::GenericDual,
    })
}

/// The full criterion `V(f) = min_{q ∈ Q} V_{λ,q}(f)`, over the listed
/// models or, in hull mode, over their convex hull.
pub fn criterion_value(act: &Act, set: &ModelSet, spec: &DivergenceSpec) -> Result<EvaluationResult> {
    check_dim(set.dim(), act.dim())?;
    let mut best: Option<EvaluationResult> = None;
    for (i, q) in set.models().iter().enumerate() {
        let result = multiplier_dual(act, q, spec)?.into_result(i);
        if best.as_ref().is_none_or(|b| result.value < b.value) {
            best = Some(result);
        }
    }
    let best = best.expect("model sets are nonempty");
    // Linear objectives attain their hull minimum at an extreme point.
    if set.hull_mode() == HullMode::ExtremePointsOnly || spec.is_neutral() || set.len() == 1 {
        return Ok(best);
    }
    let hull = minimize_over_hull(act, set, spec)?;
    if hull.value < best.value {
        Ok(hull)
    } else {
        Ok(best)
    }
}

/// Projected-gradient minimization of the convex map `w ↦ V_{λ, Σ w_i q_i}(f)`
/// over mixture weights, without comparing to the listed models.
pub fn minimize_over_hull(act: &Act, set: &ModelSet, spec: &DivergenceSpec) -> Result<EvaluationResult> {
    check_dim(set.dim(), act.dim())?;
    let Some((lambda, phi)) = spec.finite_parts() else {
        return Err(Error::domain("hull optimization needs a finite-lambda divergence"));
    };
    let m = set.len();
    let u = act.utils();
    let mut failure = None;
    let result = minimize_on_simplex(
        &vec![1.0 / m as f64; m],
        |w| {
            let q = match set.mixture(w) {
                Ok(q) => q,
                Err(e) => {
                    failure.get_or_insert(e);
                    return (f64::INFINITY, vec![0.0; m]);
                }
            };
            match multiplier_dual(act, &q, spec) {
                Ok(dual) => {
                    // Danskin: ∂V/∂q_s = −λ φ*(η* − u_s/λ).
                    let slope: Vec<f64> = u
                        .iter()
                        .map(|&us| -lambda * phi.conjugate(dual.eta - us / lambda))
                        .collect();
                    let grad = set.models().iter().map(|model| dot(model.weights(), &slope)).collect();
                    (dual.value, grad)
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    (f64::INFINITY, vec![0.0; m])
                }
            }
        },
        SimplexOptions::default(),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let q = set.mixture(&result.weights)?;
    let dual = multiplier_dual(act, &q, spec)?;
    Ok(EvaluationResult {
        value: dual.value,
        binding_model_index: crate::divergences::argmax(&result.weights),
        worst_case_model: dual.worst_case,
        method: dual.method,
        mixture_weights: Some(result.weights),
    })
}

/// `min_{q ∈ Q} E_q[u(f)]`.
pub fn maxmin_value(act: &Act, set: &ModelSet) -> Result<EvaluationResult> {
    check_dim(set.dim(), act.dim())?;
    let mut best_index = 0;
    let mut best_value = f64::INFINITY;
    for (i, q) in set.models().iter().enumerate() {
        let value = dot(q.weights(), act.utils());
        if value < best_value {
            best_value = value;
            best_index = i;
        }
    }
    Ok(EvaluationResult {
        value: best_value,
        binding_model_index: best_index,
        worst_case_model: Some(set.models()[best_index].clone()),
        method: Method::Maxmin,
        mixture_weights: None,
    })
}

/// Brute-force minimum of `E_p[u] + c(p, q)` over a lattice on the simplex
/// restricted to `support(q)`. Never uses the dual.
pub fn primal_oracle(act: &Act, q: &Model, spec: &DivergenceSpec, resolution: f64) -> Result<f64> {
    Ok(primal_evaluation(act, q, spec, resolution)?.value)
}

/// [`primal_oracle`] with the minimizing lattice point.
///
/// The search is multilevel: a full lattice of spacing `10⁻²`, then windows of
/// ±`K` cells on lattices ten times finer around the incumbent, recentred
/// until the incumbent is interior to its window, down to `resolution`.
/// Every returned value is attained at a feasible point, so it never falls
/// below the true minimum.
pub fn primal_evaluation(act: &Act, q: &Model, spec: &DivergenceSpec, resolution: f64) -> Result<EvaluationResult> {
    check_dim(q.dim(), act.dim())?;
    if q.dim() > PRIMAL_ORACLE_MAX_STATES {
        return Err(Error::domain(format!(
            "primal oracle supports at most {PRIMAL_ORACLE_MAX_STATES} states, got {}",
            q.dim()
        )));
    }
    if !(1e-6..=1e-2).contains(&resolution) {
        return Err(Error::domain(format!("resolution {resolution} outside [1e-6, 1e-2]")));
    }
    let u = act.utils();
    let Some((lambda, phi)) = spec.finite_parts() else {
        return Ok(EvaluationResult {
            value: dot(q.weights(), u),
            binding_model_index: 0,
            worst_case_model: Some(q.clone()),
            method: Method::PrimalGrid,
            mixture_weights: None,
        });
    };

    let support = q.support();
    let free = support.len() - 1;
    let embed = |coords: &[f64]| -> Vec<f64> {
        let mut p = vec![0.0; q.dim()];
        let mut last = 1.0;
        for (&s, &x) in support.iter().zip(coords) {
            p[s] = x;
            last -= x;
        }
        p[support[free]] = last.max(0.0);
        p
    };
    let objective = |coords: &[f64]| -> f64 {
        let p = embed(coords);
        dot(&p, u) + lambda * divergence_raw(&p, q.weights(), phi)
    };

    let mut best = (objective(&vec![0.0; free]), vec![0.0; free]);
    if free > 0 {
        let coarse = resolution.max(1e-2);
        best = full_lattice(free, coarse, &objective);
        let half_width: i64 = if free >= 3 { 10 } else { 20 };
        let mut step = coarse;
        while step > resolution * (1.0 + 1e-9) {
            step = (step / 10.0).max(resolution);
            best = refine_window(best, step, half_width, &objective);
        }
    }
    let p = embed(&best.1);
    Ok(EvaluationResult {
        value: best.0,
        binding_model_index: 0,
        worst_case_model: Model::from_unnormalized(p).ok(),
        method: Method::PrimalGrid,
        mixture_weights: None,
    })
}

fn full_lattice(free: usize, step: f64, objective: &dyn Fn(&[f64]) -> f64) -> (f64, Vec<f64>) {
    let cells = (1.0 / step).round() as i64;
    let mut best = (f64::INFINITY, vec![0.0; free]);
    let mut index = vec![0i64; free];
    loop {
        let used: i64 = index.iter().sum();
        if used <= cells {
            let coords: Vec<f64> = index.iter().map(|&k| k as f64 * step).collect();
            let value = objective(&coords);
            if value < best.0 {
                best = (value, coords);
            }
        }
        // Odometer over {0..=cells}^free.
        let mut digit = 0;
        loop {
            if digit == free {
                return best;
            }
            index[digit] += 1;
            if index[digit] <= cells {
                break;
            }
            index[digit] = 0;
            digit += 1;
        }
    }
}

fn refine_window(
    mut best: (f64, Vec<f64>),
    step: f64,
    half_width: i64,
    objective: &dyn Fn(&[f64]) -> f64,
) -> (f64, Vec<f64>) {
    let free = best.1.len();
    for _ in 0..200 {
        let center = best.1.clone();
        let mut on_edge = false;
        let mut offset = vec![-half_width; free];
        loop {
            let coords: Vec<f64> = center.iter().zip(&offset).map(|(&c, &k)| c + k as f64 * step).collect();
            let total: f64 = coords.iter().sum();
            let feasible = coords.iter().all(|&x| x >= -1e-12) && total <= 1.0 + 1e-12;
            if feasible {
                let coords: Vec<f64> = coords.into_iter().map(|x| x.max(0.0)).collect();
                let value = objective(&coords);
                if value < best.0 {
                    on_edge = offset.iter().any(|k| k.abs() == half_width);
                    best = (value, coords);
                }
            }
            let mut digit = 0;
            loop {
                if digit == free {
                    break;
                }
                offset[digit] += 1;
                if offset[digit] <= half_width {
                    break;
                }
                offset[digit] = -half_width;
                digit += 1;
            }
            if digit == free {
                break;
            }
        }
        if !on_edge {
            break;
        }
    }
    best
}

/// Criterion values along increasing `λ` for a fixed `φ`; an `Infinite`
/// entry yields the max-min value.
pub fn lambda_sweep(act: &Act, set: &ModelSet, phi: &PhiFunction, lambdas: &[Lambda]) -> Result<Vec<(Lambda, f64)>> {
    if lambdas.is_empty() {
        return Err(Error::domain("lambda sweep needs at least one lambda"));
    }
    for pair in lambdas.windows(2) {
        if !(pair[0] < pair[1]) {
            return Err(Error::domain(format!(
                "lambdas must be strictly ascending, got {} before {}",
                pair[0], pair[1]
            )));
        }
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let spec = DivergenceSpec::new(phi.clone(), lambda)?;
            Ok((lambda, criterion_value(act, set, &spec)?.value))
        })
        .collect()
}

/// Largest admissible gap between the dual and the primal oracle in
/// [`duality_gap_suite`].
pub const DUALITY_GAP_TOLERANCE: f64 = 1e-4;

/// One comparison in [`duality_gap_suite`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityGapCase {
    pub phi: &'static str,
    pub lambda: f64,
    pub q: Vec<f64>,
    pub utils: Vec<f64>,
    pub dual: f64,
    pub primal: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityGapReport {
    pub instances: usize,
    pub comparisons: usize,
    pub max_gap: f64,
    pub worst: Option<DualityGapCase>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares the generic dual with the primal grid oracle on seeded random
/// instances: 2 or 3 states, full-support `q`, utilities in `[-5, 5]`,
/// `λ ∈ {0.3, 1, 3}`, relative entropy and Gini.
pub fn duality_gap_suite(instances: usize, seed: u64, resolution: f64) -> Result<DualityGapReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus: Vec<(Vec<f64>, Vec<f64>)> = (0..instances)
        .map(|_| {
            let n = rng.random_range(2..=3);
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let q = raw.iter().map(|w| w / total).collect();
            let u = (0..n).map(|_| rng.random_range(-5.0..=5.0)).collect();
            (q, u)
        })
        .collect();
    let phis = [PhiFunction::relative_entropy(), PhiFunction::gini()];
    let cases: Vec<DualityGapCase> = corpus
        .par_iter()
        .map(|(q, u)| {
            let model = Model::new(q.clone())?;
            let act = Act::new("f", u.clone())?;
            let mut out = Vec::new();
            for phi in &phis {
                for lambda in [0.3, 1.0, 3.0] {
                    let dual = generic_dual_value(&act, &model, phi, lambda)?.value;
                    let spec = DivergenceSpec::new(phi.clone(), Lambda::Finite(lambda))?;
                    let primal = primal_oracle(&act, &model, &spec, resolution)?;
                    out.push(DualityGapCase {
                        phi: phi.kind().as_str(),
                        lambda,
                        q: q.clone(),
                        utils: u.clone(),
                        dual,
                        primal,
                        gap: (dual - primal).abs(),
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let worst = cases.iter().max_by(|a, b| a.gap.total_cmp(&b.gap)).cloned();
    let max_gap = worst.as_ref().map_or(0.0, |c| c.gap);
    Ok(DualityGapReport {
        instances,
        comparisons: cases.len(),
        max_gap,
        worst,
        tolerance: DUALITY_GAP_TOLERANCE,
        passed: max_gap <= DUALITY_GAP_TOLERANCE,
    })
}
