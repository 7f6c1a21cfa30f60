//! The model-by-model dominance relation and the classification checks built
//! on it.
//!
//! `f` dominates `g` when `V_{λ,q}(f) ≥ V_{λ,q}(g)` for every structured `q`,
//! strictly for some; strong dominance asks for a uniform gap `ε > 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::divergences::DivergenceSpec;
use crate::error::{check_dim, Error, Result};
use crate::model_space::{bet_act, mix_models, Act, HullMode, Model, ModelSet};
use crate::robust_solver::{criterion_value, maxmin_value, multiplier_value};
use crate::UTILITY_TOLERANCE;

/// Interior points per model pair on the hull refinement grid (21 points
/// per segment including both endpoints).
pub const HULL_SEGMENT_POINTS: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Dominates,
    Dominated,
    Equivalent,
    Incomparable,
}

impl Relation {
    fn classify(gaps: impl IntoIterator<Item = f64>) -> Self {
        let (lo, hi) = gaps
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| (lo.min(g), hi.max(g)));
        let tol = UTILITY_TOLERANCE;
        if lo >= -tol && hi <= tol {
            Relation::Equivalent
        } else if lo >= -tol {
            Relation::Dominates
        } else if hi <= tol {
            Relation::Dominated
        } else {
            Relation::Incomparable
        }
    }
}

/// `V_{λ,q}(f) − V_{λ,q}(g)` at a mixture `alpha·q_first + (1 − alpha)·q_second`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HullGap {
    pub first: usize,
    pub second: usize,
    pub alpha: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceVerdict {
    pub relation: Relation,
    /// `(model index, V_{λ,q}(f) − V_{λ,q}(g))` for each listed model.
    pub per_model_gaps: Vec<(usize, f64)>,
    /// Gaps on the segment grid, present only in hull mode.
    pub hull_gaps: Vec<HullGap>,
    /// Smallest gap over every point examined.
    pub uniform_gap: f64,
}

impl DominanceVerdict {
    /// `f ≻* g`.
    pub fn strictly_dominates(&self) -> bool {
        self.relation == Relation::Dominates
    }

    /// `f ≿* g`.
    pub fn weakly_dominates(&self) -> bool {
        matches!(self.relation, Relation::Dominates | Relation::Equivalent)
    }
}

#[derive(Debug, Clone)]
enum Point {
    Listed(usize),
    Segment { first: usize, second: usize, alpha: f64 },
}

/// Where dominance is checked: the listed models, plus a segment grid
/// between every pair of models in hull mode.
#[derive(Debug, Clone)]
pub struct ComparisonGrid {
    points: Vec<(Point, Model)>,
}

impl ComparisonGrid {
    pub fn new(set: &ModelSet) -> Result<Self> {
        let mut points: Vec<(Point, Model)> = set
            .models()
            .iter()
            .enumerate()
            .map(|(i, q)| (Point::Listed(i), q.clone()))
            .collect();
        if set.hull_mode() == HullMode::ConvexHull {
            let intervals = (HULL_SEGMENT_POINTS - 1) as f64;
            for first in 0..set.len() {
                for second in first + 1..set.len() {
                    for k in 1..HULL_SEGMENT_POINTS - 1 {
                        let alpha = k as f64 / intervals;
                        let q = mix_models(&set.models()[first], &set.models()[second], alpha)?;
                        points.push((Point::Segment { first, second, alpha }, q));
                    }
                }
            }
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Multiplier values of `act` at every grid point.
    pub fn profile(&self, act: &Act, spec: &DivergenceSpec) -> Result<Vec<f64>> {
        self.points
            .iter()
            .map(|(_, q)| Ok(multiplier_value(act, q, spec)?.value))
            .collect()
    }

    /// Verdict for `f` against `g` from their precomputed profiles.
    pub fn verdict(&self, f_profile: &[f64], g_profile: &[f64]) -> Result<DominanceVerdict> {
        check_dim(self.len(), f_profile.len())?;
        check_dim(self.len(), g_profile.len())?;
        let mut per_model_gaps = Vec::new();
        let mut hull_gaps = Vec::new();
        for ((point, _), (vf, vg)) in self.points.iter().zip(f_profile.iter().zip(g_profile)) {
            let gap = vf - vg;
            match *point {
                Point::Listed(i) => per_model_gaps.push((i, gap)),
                Point::Segment { first, second, alpha } => hull_gaps.push(HullGap {
                    first,
                    second,
                    alpha,
                    gap,
                }),
            }
        }
        let all_gaps = per_model_gaps
            .iter()
            .map(|g| g.1)
            .chain(hull_gaps.iter().map(|g| g.gap));
        let relation = Relation::classify(all_gaps.clone());
        let uniform_gap = all_gaps.fold(f64::INFINITY, f64::min);
        Ok(DominanceVerdict {
            relation,
            per_model_gaps,
            hull_gaps,
            uniform_gap,
        })
    }
}

/// Classifies `f` against `g` across the structured models.
pub fn dominance(f: &Act, g: &Act, set: &ModelSet, spec: &DivergenceSpec) -> Result<DominanceVerdict> {
    let grid = ComparisonGrid::new(set)?;
    grid.verdict(&grid.profile(f, spec)?, &grid.profile(g, spec)?)
}

/// `f ≻≻* g` with the given uniform margin.
pub fn strong_dominance(f: &Act, g: &Act, set: &ModelSet, spec: &DivergenceSpec, epsilon: f64) -> Result<bool> {
    check_epsilon(epsilon)?;
    Ok(dominance(f, g, set, spec)?.uniform_gap >= epsilon)
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "strong dominance needs epsilon > 0, got {epsilon}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetViolation {
    pub event_a: Vec<usize>,
    pub event_b: Vec<usize>,
    pub high_util: f64,
    pub low_util: f64,
    pub value_a: f64,
    pub value_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetConsistencyReport {
    pub trials_requested: usize,
    pub qualifying_pairs: usize,
    pub attempts: usize,
    pub violations: Vec<BetViolation>,
}

impl BetConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples event pairs `(A, B)` that every structured model ranks
/// `q(A) ≥ q(B)` and checks that betting on `A` is weakly preferred.
/// Sampling stops after `trials` qualifying pairs or `200 · trials` draws.
pub fn bet_consistency_check(
    set: &ModelSet,
    spec: &DivergenceSpec,
    trials: usize,
    seed: u64,
) -> Result<BetConsistencyReport> {
    let n = set.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = BetConsistencyReport {
        trials_requested: trials,
        qualifying_pairs: 0,
        attempts: 0,
        violations: Vec::new(),
    };
    let max_attempts = trials.saturating_mul(200);
    while report.qualifying_pairs < trials && report.attempts < max_attempts {
        report.attempts += 1;
        let a = random_event(&mut rng, n);
        let b = random_event(&mut rng, n);
        let qualifies = set
            .models()
            .iter()
            .all(|q| q.probability_of(&a) >= q.probability_of(&b));
        if !qualifies {
            continue;
        }
        report.qualifying_pairs += 1;
        let low_util = rng.random_range(-5.0..5.0);
        let high_util = low_util + rng.random_range(0.1..5.0);
        let value_a = criterion_value(&bet_act(n, &a, high_util, low_util)?, set, spec)?.value;
        let value_b = criterion_value(&bet_act(n, &b, high_util, low_util)?, set, spec)?.value;
        if value_a < value_b - UTILITY_TOLERANCE {
            report.violations.push(BetViolation {
                event_a: a,
                event_b: b,
                high_util,
                low_util,
                value_a,
                value_b,
            });
        }
    }
    Ok(report)
}

fn random_event(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).filter(|_| rng.random_bool(0.5)).collect()
}

/// Whether the criterion coincides with max-min on `trials` random acts with
/// utilities in `[−5, 5]`.
pub fn neutrality_check(set: &ModelSet, spec: &DivergenceSpec, trials: usize, seed: u64) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let acts = (0..trials)
        .map(|k| {
            let utils = (0..set.dim()).map(|_| rng.random_range(-5.0..5.0)).collect();
            Act::new(format!("random{k}"), utils)
        })
        .collect::<Result<Vec<_>>>()?;
    neutrality_holds_on(&acts, set, spec)
}

/// Whether `|V(f) − min_q E_q[u(f)]| ≤ 10⁻⁹` for every act given.
pub fn neutrality_holds_on(acts: &[Act], set: &ModelSet, spec: &DivergenceSpec) -> Result<bool> {
    for act in acts {
        let robust = criterion_value(act, set, spec)?.value;
        let wald = maxmin_value(act, set)?.value;
        if (robust - wald).abs() > UTILITY_TOLERANCE {
            return Ok(false);
        }
    }
    Ok(true)
}
