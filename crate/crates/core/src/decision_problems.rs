//! Finite choice sets: optimal acts, admissible and weakly admissible acts,
//! and the value function `v(Q)`.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::divergences::DivergenceSpec;
use crate::error::{check_dim, Error, Result};
use crate::model_space::{Act, HullMode, ModelSet, StateSpace};
use crate::preferences::{ComparisonGrid, Relation};
use crate::robust_solver::criterion_value;
use crate::UTILITY_TOLERANCE;

/// Uniform margin for strong dominance when filtering weakly admissible acts.
pub const STRONG_DOMINANCE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct DecisionProblem {
    states: StateSpace,
    acts: Vec<Act>,
    models: ModelSet,
    spec: DivergenceSpec,
}

impl DecisionProblem {
    pub fn new(states: StateSpace, acts: Vec<Act>, models: ModelSet, spec: DivergenceSpec) -> Result<Self> {
        if acts.is_empty() {
            return Err(Error::domain("choice set must contain at least one act"));
        }
        check_dim(states.len(), models.dim())?;
        let mut names = HashSet::new();
        for act in &acts {
            check_dim(states.len(), act.dim())?;
            if !names.insert(act.name()) {
                return Err(Error::domain(format!("duplicate act name `{}`", act.name())));
            }
        }
        Ok(Self {
            states,
            acts,
            models,
            spec,
        })
    }

    /// States labelled `s0, s1, ...`.
    pub fn with_indexed_states(acts: Vec<Act>, models: ModelSet, spec: DivergenceSpec) -> Result<Self> {
        Self::new(StateSpace::indexed(models.dim())?, acts, models, spec)
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn acts(&self) -> &[Act] {
        &self.acts
    }

    pub fn act(&self, name: &str) -> Option<&Act> {
        self.acts.iter().find(|a| a.name() == name)
    }

    pub fn models(&self) -> &ModelSet {
        &self.models
    }

    pub fn spec(&self) -> &DivergenceSpec {
        &self.spec
    }

    /// The same choice set under a different structured set.
    pub fn with_models(&self, models: ModelSet) -> Result<Self> {
        Self::new(self.states.clone(), self.acts.clone(), models, self.spec.clone())
    }

    pub fn with_spec(&self, spec: DivergenceSpec) -> Self {
        Self { spec, ..self.clone() }
    }

    /// `v(Q) = max_{f ∈ F} V(f)`.
    pub fn value(&self) -> Result<f64> {
        Ok(self.criterion_values()?.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }

    fn criterion_values(&self) -> Result<Vec<f64>> {
        self.acts
            .par_iter()
            .map(|act| Ok(criterion_value(act, &self.models, &self.spec)?.value))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActValue {
    pub act: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    /// Acts attaining `v(Q)` within the utility tolerance, in choice-set order.
    pub optimal: Vec<String>,
    /// Acts not strongly dominated by any other act.
    pub weakly_admissible: Vec<String>,
    /// Acts not strictly dominated by any other act.
    pub admissible: Vec<String>,
    pub value: f64,
    pub act_values: Vec<ActValue>,
}

/// Evaluates every act and filters the choice set.
pub fn solve(problem: &DecisionProblem) -> Result<AdmissibilityReport> {
    let acts = problem.acts();
    let values = problem.criterion_values()?;
    let grid = ComparisonGrid::new(problem.models())?;
    let profiles: Vec<Vec<f64>> = acts
        .par_iter()
        .map(|act| grid.profile(act, problem.spec()))
        .collect::<Result<_>>()?;

    // flags[j] = (strongly dominated, strictly dominated)
    let flags: Vec<(bool, bool)> = (0..acts.len())
        .into_par_iter()
        .map(|j| {
            let mut strongly = false;
            let mut strictly = false;
            for i in (0..acts.len()).filter(|&i| i != j) {
                let verdict = grid.verdict(&profiles[i], &profiles[j])?;
                strongly |= verdict.uniform_gap >= STRONG_DOMINANCE_EPSILON;
                strictly |= verdict.relation == Relation::Dominates;
            }
            Ok((strongly, strictly))
        })
        .collect::<Result<_>>()?;

    let value = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let names_where = |keep: &dyn Fn(usize) -> bool| -> Vec<String> {
        (0..acts.len())
            .filter(|&j| keep(j))
            .map(|j| acts[j].name().to_string())
            .collect()
    };
    Ok(AdmissibilityReport {
        optimal: names_where(&|j| values[j] >= value - UTILITY_TOLERANCE),
        weakly_admissible: names_where(&|j| !flags[j].0),
        admissible: names_where(&|j| !flags[j].1),
        value,
        act_values: acts
            .iter()
            .zip(&values)
            .map(|(a, &v)| ActValue {
                act: a.name().to_string(),
                value: v,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparativeStatics {
    pub value_q: f64,
    pub value_q_prime: f64,
    /// `v(Q) ≥ v(Q′) − 10⁻⁹`.
    pub monotone: bool,
}

/// `v(Q)` against `v(Q′)` for nested `Q ⊆ Q′`, both under the problem's
/// divergence.
pub fn value_comparative_statics(problem: &DecisionProblem, q_prime: &ModelSet) -> Result<ComparativeStatics> {
    value_comparative_statics_with(problem, q_prime, problem.spec())
}

/// As [`value_comparative_statics`], evaluating `Q′` under its own divergence
/// (for example a scale that grows with the set). `monotone` is reported but
/// carries no guarantee when the divergence changes.
pub fn value_comparative_statics_with(
    problem: &DecisionProblem,
    q_prime: &ModelSet,
    spec_prime: &DivergenceSpec,
) -> Result<ComparativeStatics> {
    check_dim(problem.models().dim(), q_prime.dim())?;
    if !problem.models().is_subset_of(q_prime) {
        return Err(Error::domain("structured set is not contained in the comparison set"));
    }
    if problem.models().hull_mode() == HullMode::ConvexHull && q_prime.hull_mode() == HullMode::ExtremePointsOnly {
        return Err(Error::domain(
            "a convex-hull set is not nested in an extreme-points-only superset",
        ));
    }
    let value_q = problem.value()?;
    let value_q_prime = problem
        .with_models(q_prime.clone())?
        .with_spec(spec_prime.clone())
        .value()?;
    Ok(ComparativeStatics {
        value_q,
        value_q_prime,
        monotone: value_q >= value_q_prime - UTILITY_TOLERANCE,
    })
}

/// Whether the maximum over weakly admissible acts alone equals `v(Q)`.
pub fn restricted_value_check(problem: &DecisionProblem) -> Result<bool> {
    let report = solve(problem)?;
    let restricted = report
        .act_values
        .iter()
        .filter(|av| report.weakly_admissible.contains(&av.act))
        .map(|av| av.value)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((restricted - report.value).abs() <= UTILITY_TOLERANCE)
}
