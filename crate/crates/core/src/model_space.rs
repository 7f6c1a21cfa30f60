//! Finite state spaces, probability models on them, structured model sets and
//! acts represented by their utility profiles.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Accepted deviation of a weight vector's sum from one before renormalizing.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Per-coordinate threshold under which two models are considered equal.
pub const MODEL_EQUALITY_TOLERANCE: f64 = 1e-12;

/// Ordered, uniquely labelled states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::domain("state space needs at least one state"));
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if label.is_empty() {
                return Err(Error::domain("state labels must be nonempty"));
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::domain(format!("duplicate state label `{label}`")));
            }
        }
        Ok(Self { labels })
    }

    /// States labelled `s0`, `s1`, ...
    pub fn indexed(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| format!("s{i}")))
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// A probability vector on a finite state space.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Model {
    weights: Vec<f64>,
}

impl Model {
    /// Validates and renormalizes `weights`. The sum must already be within
    /// [`NORMALIZATION_TOLERANCE`] of one.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let sum = validate_nonnegative(&weights)?;
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::domain(format!(
                "model weights sum to {sum}, not 1 within {NORMALIZATION_TOLERANCE:e}"
            )));
        }
        Ok(Self::rescaled(weights, sum))
    }

    /// Normalizes an arbitrary nonnegative vector with positive mass.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self> {
        let sum = validate_nonnegative(&weights)?;
        if !(sum > 0.0) {
            return Err(Error::domain("cannot normalize a vector with zero mass"));
        }
        Ok(Self::rescaled(weights, sum))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("model needs at least one state"));
        }
        Ok(Self {
            weights: vec![1.0 / n as f64; n],
        })
    }

    /// Point mass on state `index`.
    pub fn dirac(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::Dimension {
                expected: n,
                found: index + 1,
            });
        }
        let mut weights = vec![0.0; n];
        weights[index] = 1.0;
        Ok(Self { weights })
    }

    fn rescaled(mut weights: Vec<f64>, sum: f64) -> Self {
        // Sums within rounding of one are left as is, so parsing is idempotent.
        if (sum - 1.0).abs() > 4.0 * f64::EPSILON {
            weights.iter_mut().for_each(|w| *w /= sum);
        }
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&s| self.weights[s] > 0.0).collect()
    }

    /// Support inclusion `support(self) ⊆ support(other)`.
    pub fn is_absolutely_continuous_wrt(&self, other: &Model) -> bool {
        self.weights
            .iter()
            .zip(&other.weights)
            .all(|(&p, &q)| p == 0.0 || q > 0.0)
    }

    pub fn approx_eq(&self, other: &Model) -> bool {
        self.dim() == other.dim()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| (a - b).abs() <= MODEL_EQUALITY_TOLERANCE)
    }

    pub fn probability_of(&self, event: &[usize]) -> f64 {
        event.iter().map(|&s| self.weights[s]).sum()
    }

    pub fn expectation(&self, values: &[f64]) -> Result<f64> {
        check_dim(self.dim(), values.len())?;
        Ok(dot(&self.weights, values))
    }
}

fn validate_nonnegative(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::domain("model needs at least one state"));
    }
    for (s, &w) in weights.iter().enumerate() {
        if !w.is_finite() {
            return Err(Error::domain(format!("weight {s} is not finite")));
        }
        if w < 0.0 {
            return Err(Error::domain(format!("weight {s} is negative ({w})")));
        }
    }
    Ok(weights.iter().sum())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// How a [`ModelSet`] is interpreted: as its listed members or as their
/// convex hull.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HullMode {
    #[default]
    ExtremePointsOnly,
    ConvexHull,
}

/// The set of structured models.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    models: Vec<Model>,
    labels: Vec<String>,
    hull_mode: HullMode,
}

impl ModelSet {
    pub fn new(models: Vec<Model>, hull_mode: HullMode) -> Result<Self> {
        let labels = (0..models.len()).map(|i| format!("q{i}")).collect();
        Self::with_labels(models, labels, hull_mode)
    }

    pub fn with_labels(models: Vec<Model>, labels: Vec<String>, hull_mode: HullMode) -> Result<Self> {
        let Some(first) = models.first() else {
            return Err(Error::domain("model set must be nonempty"));
        };
        check_dim(models.len(), labels.len())?;
        let n = first.dim();
        for (i, m) in models.iter().enumerate() {
            check_dim(n, m.dim())?;
            if let Some(j) = models[..i].iter().position(|other| other.approx_eq(m)) {
                return Err(Error::domain(format!(
                    "models {j} and {i} coincide within {MODEL_EQUALITY_TOLERANCE:e}"
                )));
            }
        }
        Ok(Self {
            models,
            labels,
            hull_mode,
        })
    }

    pub fn singleton(model: Model) -> Self {
        Self {
            models: vec![model],
            labels: vec!["q0".to_string()],
            hull_mode: HullMode::ExtremePointsOnly,
        }
    }

    pub fn models(&self) -> &[Model] {
        &self.models
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn hull_mode(&self) -> HullMode {
        self.hull_mode
    }

    pub fn with_hull_mode(mut self, hull_mode: HullMode) -> Self {
        self.hull_mode = hull_mode;
        self
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    /// Index of the first listed member equal to `p` within tolerance.
    pub fn position(&self, p: &Model) -> Option<usize> {
        self.models.iter().position(|q| q.approx_eq(p))
    }

    /// Every listed model of `self` appears in `other`.
    pub fn is_subset_of(&self, other: &ModelSet) -> bool {
        self.models.iter().all(|q| other.position(q).is_some())
    }

    /// The mixture `Σ_i weights[i] · q_i`.
    pub fn mixture(&self, weights: &[f64]) -> Result<Model> {
        check_dim(self.len(), weights.len())?;
        let mut mixed = vec![0.0; self.dim()];
        for (w, q) in weights.iter().zip(&self.models) {
            for (m, &qs) in mixed.iter_mut().zip(q.weights()) {
                *m += w * qs;
            }
        }
        Model::from_unnormalized(mixed)
    }
}

/// An act, identified with its utility profile over states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Act {
    name: String,
    utils: Vec<f64>,
}

impl Act {
    pub fn new(name: impl Into<String>, utils: Vec<f64>) -> Result<Self> {
        if utils.is_empty() {
            return Err(Error::domain("act needs at least one state"));
        }
        if let Some(s) = utils.iter().position(|u| !u.is_finite()) {
            return Err(Error::domain(format!("utility at state {s} is not finite")));
        }
        Ok(Self {
            name: name.into(),
            utils,
        })
    }

    pub fn constant(name: impl Into<String>, n: usize, value: f64) -> Result<Self> {
        Self::new(name, vec![value; n])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn utils(&self) -> &[f64] {
        &self.utils
    }

    pub fn dim(&self) -> usize {
        self.utils.len()
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// `self + k·1`.
    pub fn translated(&self, k: f64) -> Result<Act> {
        Act::new(self.name.clone(), self.utils.iter().map(|u| u + k).collect())
    }

    /// Statewise mixture `alpha·self + (1 − alpha)·other`.
    pub fn mix(&self, other: &Act, alpha: f64) -> Result<Act> {
        check_dim(self.dim(), other.dim())?;
        check_unit_interval(alpha)?;
        let utils = self
            .utils
            .iter()
            .zip(&other.utils)
            .map(|(f, g)| alpha * f + (1.0 - alpha) * g)
            .collect();
        Act::new(format!("{}+{}", self.name, other.name), utils)
    }

    pub fn min_util(&self) -> f64 {
        self.utils.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_util(&self) -> f64 {
        self.utils.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Componentwise `self ≥ other`.
    pub fn weakly_exceeds(&self, other: &Act) -> bool {
        self.dim() == other.dim() && self.utils.iter().zip(&other.utils).all(|(f, g)| f >= g)
    }
}

fn check_unit_interval(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::domain(format!("mixing weight {alpha} outside [0, 1]")))
    }
}

/// Utility level of the certainty equivalent of `act` under `model`.
pub fn certainty_equivalent_utility(act: &Act, model: &Model) -> Result<f64> {
    model.expectation(act.utils())
}

/// The hybrid model `alpha·q1 + (1 − alpha)·q2`.
pub fn mix_models(q1: &Model, q2: &Model, alpha: f64) -> Result<Model> {
    check_dim(q1.dim(), q2.dim())?;
    check_unit_interval(alpha)?;
    let weights = q1
        .weights()
        .iter()
        .zip(q2.weights())
        .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
        .collect();
    Model::new(weights)
}

/// The bet paying `high_util` on `event` and `low_util` elsewhere.
pub fn bet_act(n: usize, event: &[usize], high_util: f64, low_util: f64) -> Result<Act> {
    if !(high_util > low_util) {
        return Err(Error::domain(format!(
            "a bet needs high utility {high_util} above low utility {low_util}"
        )));
    }
    let mut utils = vec![low_util; n];
    for &s in event {
        if s >= n {
            return Err(Error::Dimension {
                expected: n,
                found: s + 1,
            });
        }
        utils[s] = high_util;
    }
    Act::new("bet", utils)
}
