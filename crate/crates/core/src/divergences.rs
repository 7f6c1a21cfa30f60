//! Penalties `c(p, q)` between an unstructured model `p` and a structured
//! model `q`, and the misspecification index `c_Q(p) = min_{q ∈ Q} c(p, q)`.
//!
//! Extended values are plain `f64` with `f64::INFINITY` standing for `+∞`;
//! products follow the convention `0 · ∞ = 0`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::model_space::{HullMode, Model, ModelSet, MODEL_EQUALITY_TOLERANCE};
use crate::simplex::{minimize_on_simplex, SimplexOptions};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Grid spacing of the conjugate self-test in `t`.
pub const SELF_TEST_STEP: f64 = 1e-3;
/// Upper end of the self-test grid in `t`.
pub const SELF_TEST_T_MAX: f64 = 50.0;
/// Largest accepted deviation between the stated conjugate and the grid supremum.
pub const SELF_TEST_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiKind {
    RelativeEntropy,
    Gini,
    Custom,
}

impl PhiKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PhiKind::RelativeEntropy => "relative_entropy",
            PhiKind::Gini => "gini",
            PhiKind::Custom => "custom",
        }
    }
}

#[derive(Clone)]
struct CustomPhi {
    phi: ScalarFn,
    conjugate: ScalarFn,
    conjugate_derivative: ScalarFn,
    derivative: Option<ScalarFn>,
}

/// A convex `φ` on `[0, ∞)` with `φ(1) = 0`, together with its Fenchel
/// conjugate `φ*(y) = sup_{t ≥ 0} {ty − φ(t)}` and the derivative of the
/// conjugate.
#[derive(Clone)]
pub struct PhiFunction {
    kind: PhiKind,
    name: String,
    custom: Option<CustomPhi>,
}

impl fmt::Debug for PhiFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhiFunction")
            .field("kind", &self.kind)
            .field("name", &self.name)
            .finish()
    }
}

impl PhiFunction {
    /// `φ(t) = t ln t − t + 1`, giving the relative entropy.
    pub fn relative_entropy() -> Self {
        Self {
            kind: PhiKind::RelativeEntropy,
            name: "relative_entropy".into(),
            custom: None,
        }
    }

    /// `φ(t) = (t − 1)² / 2`, giving the Gini relative index.
    pub fn gini() -> Self {
        Self {
            kind: PhiKind::Gini,
            name: "gini".into(),
            custom: None,
        }
    }

    /// A user-supplied `φ`. The triple is validated before it is accepted:
    /// `φ(1) = 0`, a convexity spot check, monotonicity of the conjugate and
    /// the conjugate self-test on `y ∈ [−2, 2]`.
    pub fn custom(
        name: impl Into<String>,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        conjugate: impl Fn(f64) -> f64 + Send + Sync + 'static,
        conjugate_derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let candidate = Self {
            kind: PhiKind::Custom,
            name: name.into(),
            custom: Some(CustomPhi {
                phi: Arc::new(phi),
                conjugate: Arc::new(conjugate),
                conjugate_derivative: Arc::new(conjugate_derivative),
                derivative: None,
            }),
        };
        candidate.validate()?;
        Ok(candidate)
    }

    /// Supplies `φ′`; otherwise a central difference is used where needed.
    pub fn with_derivative(mut self, derivative: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        if let Some(custom) = self.custom.as_mut() {
            custom.derivative = Some(Arc::new(derivative));
        }
        self
    }

    fn validate(&self) -> Result<()> {
        let at_one = self.phi(1.0);
        if !(at_one.abs() <= 1e-12) {
            return Err(Error::domain(format!("{}: φ(1) = {at_one}, expected 0", self.name)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..1000 {
            let a = rng.random_range(0.0..10.0);
            let b = rng.random_range(0.0..10.0);
            let alpha: f64 = rng.random();
            let lhs = self.phi(alpha * a + (1.0 - alpha) * b);
            let rhs = alpha * self.phi(a) + (1.0 - alpha) * self.phi(b);
            if !(lhs <= rhs + 1e-12) {
                return Err(Error::domain(format!(
                    "{}: convexity fails between t = {a} and t = {b}",
                    self.name
                )));
            }
        }
        let grid = uniform_grid(-2.0, 2.0, 0.05);
        for pair in grid.windows(2) {
            if self.conjugate(pair[1]) < self.conjugate(pair[0]) {
                return Err(Error::domain(format!(
                    "{}: conjugate decreases on [{}, {}]",
                    self.name, pair[0], pair[1]
                )));
            }
        }
        let report = conjugate_self_test(self, &grid)?;
        if !report.passed {
            return Err(Error::domain(format!(
                "{}: conjugate deviates from the grid supremum by {:e} at y = {}",
                self.name, report.max_abs_deviation, report.worst_y
            )));
        }
        Ok(())
    }

    pub fn kind(&self) -> PhiKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `φ(t)`, extended by `+∞` for `t < 0`.
    pub fn phi(&self, t: f64) -> f64 {
        if t < 0.0 {
            return f64::INFINITY;
        }
        match self.kind {
            PhiKind::RelativeEntropy => {
                if t == 0.0 {
                    1.0
                } else {
                    t * t.ln() - t + 1.0
                }
            }
            PhiKind::Gini => 0.5 * (t - 1.0) * (t - 1.0),
            PhiKind::Custom => (self.custom_parts().phi)(t),
        }
    }

    pub fn conjugate(&self, y: f64) -> f64 {
        match self.kind {
            PhiKind::RelativeEntropy => y.exp_m1(),
            PhiKind::Gini => {
                if y >= -1.0 {
                    y + 0.5 * y * y
                } else {
                    -0.5
                }
            }
            PhiKind::Custom => (self.custom_parts().conjugate)(y),
        }
    }

    pub fn conjugate_derivative(&self, y: f64) -> f64 {
        match self.kind {
            PhiKind::RelativeEntropy => y.exp(),
            PhiKind::Gini => (1.0 + y).max(0.0),
            PhiKind::Custom => (self.custom_parts().conjugate_derivative)(y),
        }
    }

    /// `∂/∂q [q φ(p/q)] = φ(t) − t φ′(t)` at `t = p/q`.
    pub(crate) fn perspective_q_slope(&self, t: f64) -> f64 {
        match self.kind {
            PhiKind::RelativeEntropy => 1.0 - t,
            PhiKind::Gini => 0.5 * (1.0 - t * t),
            PhiKind::Custom => self.phi(t) - t * self.derivative(t),
        }
    }

    fn derivative(&self, t: f64) -> f64 {
        match self.kind {
            PhiKind::RelativeEntropy => t.ln(),
            PhiKind::Gini => t - 1.0,
            PhiKind::Custom => match &self.custom_parts().derivative {
                Some(d) => d(t),
                None => {
                    let h = 1e-6 * t.max(1.0);
                    if t > h {
                        (self.phi(t + h) - self.phi(t - h)) / (2.0 * h)
                    } else {
                        (self.phi(t + h) - self.phi(t)) / h
                    }
                }
            },
        }
    }

    fn custom_parts(&self) -> &CustomPhi {
        self.custom.as_ref().expect("custom kind carries its functions")
    }

    /// The `y` range used by the self-test for the built-in kinds: wide
    /// enough to exercise both branches while the maximizing `t` stays
    /// inside the `t` grid.
    pub fn default_self_test_grid(&self) -> Vec<f64> {
        match self.kind {
            PhiKind::RelativeEntropy => uniform_grid(-5.0, 3.5, 0.1),
            PhiKind::Gini => uniform_grid(-5.0, 5.0, 0.1),
            PhiKind::Custom => uniform_grid(-2.0, 2.0, 0.05),
        }
    }
}

fn uniform_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step).round() as usize;
    (0..=count).map(|k| lo + k as f64 * step).collect()
}

/// Outcome of comparing the stated conjugate with a grid supremum.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConjugateSelfTest {
    pub phi: String,
    pub points: usize,
    pub max_abs_deviation: f64,
    pub worst_y: f64,
    pub passed: bool,
}

/// Checks `φ*(y)` against `max_k {t_k y − φ(t_k)}` over `t_k = k·10⁻³ ∈ [0, 50]`
/// for every `y` in `ys`.
pub fn conjugate_self_test(phi: &PhiFunction, ys: &[f64]) -> Result<ConjugateSelfTest> {
    let steps = (SELF_TEST_T_MAX / SELF_TEST_STEP).round() as usize;
    let mut table = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * SELF_TEST_STEP;
        let value = phi.phi(t);
        if !value.is_finite() {
            return Err(Error::domain(format!("{}: φ({t}) is not finite", phi.name())));
        }
        table.push((t, value));
    }
    let mut max_abs_deviation = 0.0f64;
    let mut worst_y = ys.first().copied().unwrap_or(0.0);
    for &y in ys {
        if !y.is_finite() {
            return Err(Error::domain("self-test grid must be finite"));
        }
        let stated = phi.conjugate(y);
        if !stated.is_finite() {
            return Err(Error::domain(format!("{}: φ*({y}) is not finite", phi.name())));
        }
        let sup = table.iter().map(|&(t, v)| t * y - v).fold(f64::NEG_INFINITY, f64::max);
        let deviation = (stated - sup).abs();
        if deviation > max_abs_deviation {
            max_abs_deviation = deviation;
            worst_y = y;
        }
    }
    Ok(ConjugateSelfTest {
        phi: phi.name().to_string(),
        points: ys.len(),
        max_abs_deviation,
        worst_y,
        passed: max_abs_deviation <= SELF_TEST_TOLERANCE,
    })
}

/// Penalty scale `λ ∈ (0, ∞]`; `Infinite` is exact, never a large float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    Finite(f64),
    Infinite,
}

impl Lambda {
    pub fn finite(value: f64) -> Result<Self> {
        let lambda = Lambda::Finite(value);
        lambda.validate()?;
        Ok(lambda)
    }

    pub fn validate(self) -> Result<()> {
        match self {
            Lambda::Finite(v) if !(v > 0.0 && v.is_finite()) => {
                Err(Error::domain(format!("lambda must be positive and finite, got {v}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Lambda::Infinite)
    }

    /// As an extended real.
    pub fn as_f64(self) -> f64 {
        match self {
            Lambda::Finite(v) => v,
            Lambda::Infinite => f64::INFINITY,
        }
    }
}

impl PartialOrd for Lambda {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.as_f64().partial_cmp(&other.as_f64())
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lambda::Finite(v) => write!(f, "{v}"),
            Lambda::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Penalty {
    Phi(PhiFunction),
    /// `c(p, q) = δ_{q}(p)`: zero when `p = q`, `+∞` otherwise.
    Indicator,
}

/// The penalty family `c = λ D_φ`, or the indicator.
#[derive(Debug, Clone)]
pub struct DivergenceSpec {
    penalty: Penalty,
    lambda: Lambda,
}

impl DivergenceSpec {
    pub fn new(phi: PhiFunction, lambda: Lambda) -> Result<Self> {
        lambda.validate()?;
        Ok(Self {
            penalty: Penalty::Phi(phi),
            lambda,
        })
    }

    pub fn relative_entropy(lambda: f64) -> Result<Self> {
        Self::new(PhiFunction::relative_entropy(), Lambda::finite(lambda)?)
    }

    pub fn gini(lambda: f64) -> Result<Self> {
        Self::new(PhiFunction::gini(), Lambda::finite(lambda)?)
    }

    pub fn indicator() -> Self {
        Self {
            penalty: Penalty::Indicator,
            lambda: Lambda::Infinite,
        }
    }

    /// Same penalty family with a different scale; the indicator ignores it.
    pub fn with_lambda(&self, lambda: Lambda) -> Result<Self> {
        lambda.validate()?;
        Ok(match &self.penalty {
            Penalty::Phi(phi) => Self {
                penalty: Penalty::Phi(phi.clone()),
                lambda,
            },
            Penalty::Indicator => Self::indicator(),
        })
    }

    pub fn penalty(&self) -> &Penalty {
        &self.penalty
    }

    pub fn lambda(&self) -> Lambda {
        self.lambda
    }

    pub fn phi(&self) -> Option<&PhiFunction> {
        match &self.penalty {
            Penalty::Phi(phi) => Some(phi),
            Penalty::Indicator => None,
        }
    }

    /// Misspecification-neutral: the indicator or `λ = ∞`.
    pub fn is_neutral(&self) -> bool {
        matches!(self.penalty, Penalty::Indicator) || self.lambda.is_infinite()
    }

    /// `λ` and `φ` when the penalty is a finitely scaled divergence.
    pub fn finite_parts(&self) -> Option<(f64, &PhiFunction)> {
        match (&self.penalty, self.lambda) {
            (Penalty::Phi(phi), Lambda::Finite(lambda)) => Some((lambda, phi)),
            _ => None,
        }
    }

    pub fn kind_str(&self) -> &str {
        match &self.penalty {
            Penalty::Phi(phi) => phi.kind().as_str(),
            Penalty::Indicator => "indicator",
        }
    }
}

/// `D_φ(p || q)`; `+∞` unless `support(p) ⊆ support(q)`.
pub fn phi_divergence(p: &Model, q: &Model, phi: &PhiFunction) -> Result<f64> {
    check_dim(p.dim(), q.dim())?;
    Ok(divergence_raw(p.weights(), q.weights(), phi))
}

pub(crate) fn divergence_raw(p: &[f64], q: &[f64], phi: &PhiFunction) -> f64 {
    let mut total = 0.0;
    for (&ps, &qs) in p.iter().zip(q) {
        if qs > 0.0 {
            total += qs * phi.phi(ps / qs);
        } else if ps > 0.0 {
            return f64::INFINITY;
        }
    }
    total.max(0.0)
}

/// Extended-real product with `0 · ∞ = 0`.
pub fn ext_mul(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

/// `c(p, q)` for a single structured model.
pub fn penalty(p: &Model, q: &Model, spec: &DivergenceSpec) -> Result<f64> {
    check_dim(p.dim(), q.dim())?;
    match spec.finite_parts() {
        Some((lambda, phi)) => Ok(ext_mul(lambda, phi_divergence(p, q, phi)?)),
        None => Ok(if p.approx_eq(q) { 0.0 } else { f64::INFINITY }),
    }
}

/// The misspecification index together with where it is attained.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEvaluation {
    pub value: f64,
    /// Lowest-index minimizing listed model, or the heaviest mixture component
    /// in hull mode. `None` when the index is `+∞`.
    pub binding_model_index: Option<usize>,
    /// Mixture weights of the minimizing hull point, in hull mode.
    pub mixture_weights: Option<Vec<f64>>,
}

/// `c_Q(p) = min_{q ∈ Q} c(p, q)`, over the listed models or their hull.
pub fn misspecification_index(p: &Model, set: &ModelSet, spec: &DivergenceSpec) -> Result<f64> {
    Ok(misspecification_index_detailed(p, set, spec)?.value)
}

pub fn misspecification_index_detailed(p: &Model, set: &ModelSet, spec: &DivergenceSpec) -> Result<IndexEvaluation> {
    check_dim(set.dim(), p.dim())?;
    let mut best = IndexEvaluation {
        value: f64::INFINITY,
        binding_model_index: None,
        mixture_weights: None,
    };
    for (i, q) in set.models().iter().enumerate() {
        let value = penalty(p, q, spec)?;
        if value < best.value {
            best.value = value;
            best.binding_model_index = Some(i);
        }
    }
    if set.hull_mode() == HullMode::ExtremePointsOnly || best.value == 0.0 {
        return Ok(best);
    }

    if let Some(weights) = convex_hull_weights(p, set) {
        return Ok(IndexEvaluation {
            value: 0.0,
            binding_model_index: Some(argmax(&weights)),
            mixture_weights: Some(weights),
        });
    }
    let Some((lambda, phi)) = spec.finite_parts() else {
        return Ok(IndexEvaluation {
            value: f64::INFINITY,
            binding_model_index: None,
            mixture_weights: None,
        });
    };

    let m = set.len();
    let start = vec![1.0 / m as f64; m];
    let result = minimize_on_simplex(
        &start,
        |w| hull_divergence_objective(p.weights(), set, w, phi, lambda),
        SimplexOptions::default(),
    );
    if result.value < best.value {
        best.value = result.value;
        best.binding_model_index = Some(argmax(&result.weights));
        best.mixture_weights = Some(result.weights);
    }
    Ok(best)
}

fn hull_divergence_objective(p: &[f64], set: &ModelSet, w: &[f64], phi: &PhiFunction, lambda: f64) -> (f64, Vec<f64>) {
    let n = p.len();
    let mut q = vec![0.0; n];
    for (wi, model) in w.iter().zip(set.models()) {
        for (qs, &ms) in q.iter_mut().zip(model.weights()) {
            *qs += wi * ms;
        }
    }
    let value = lambda * divergence_raw(p, &q, phi);
    if !value.is_finite() {
        return (value, vec![0.0; w.len()]);
    }
    let slopes: Vec<f64> = p
        .iter()
        .zip(&q)
        .map(|(&ps, &qs)| {
            if qs > 0.0 {
                phi.perspective_q_slope(ps / qs)
            } else {
                phi.phi(0.0)
            }
        })
        .collect();
    let grad = set
        .models()
        .iter()
        .map(|model| lambda * model.weights().iter().zip(&slopes).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    (value, grad)
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mixture weights expressing `p` as a point of the convex hull of `set`,
/// found by nonnegative least squares on the system `[Q; 1] w = [p; 1]`.
/// `None` when the residual exceeds the model equality tolerance.
pub fn convex_hull_weights(p: &Model, set: &ModelSet) -> Option<Vec<f64>> {
    let n = p.dim();
    let m = set.len();
    let a = DMatrix::from_fn(
        n + 1,
        m,
        |row, col| {
            if row < n {
                set.models()[col].weights()[row]
            } else {
                1.0
            }
        },
    );
    let b = DVector::from_iterator(n + 1, p.weights().iter().copied().chain(std::iter::once(1.0)));
    let w = nonnegative_least_squares(&a, &b);
    let residual = &a * &w - &b;
    if residual.amax() <= MODEL_EQUALITY_TOLERANCE {
        Some(w.iter().copied().collect())
    } else {
        None
    }
}

/// Lawson–Hanson active-set NNLS: `min ||Ax − b||` subject to `x ≥ 0`.
fn nonnegative_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    const TOL: f64 = 1e-14;
    let m = a.ncols();
    let mut x = DVector::zeros(m);
    let mut passive = vec![false; m];

    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let cols: Vec<usize> = (0..m).filter(|&j| passive[j]).collect();
        let sub = DMatrix::from_fn(a.nrows(), cols.len(), |r, c| a[(r, cols[c])]);
        let sol = sub
            .svd(true, true)
            .solve(b, 1e-14)
            .unwrap_or_else(|_| DVector::zeros(cols.len()));
        let mut full = DVector::zeros(m);
        for (k, &j) in cols.iter().enumerate() {
            full[j] = sol[k];
        }
        full
    };

    for _ in 0..3 * m + 10 {
        let gradient = a.transpose() * (b - a * &x);
        let candidate = (0..m)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| gradient[i].total_cmp(&gradient[j]));
        let Some(entering) = candidate.filter(|&j| gradient[j] > TOL) else {
            break;
        };
        passive[entering] = true;
        loop {
            let s = solve_passive(&passive);
            if (0..m).filter(|&j| passive[j]).all(|j| s[j] > TOL) {
                x = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            for j in (0..m).filter(|&j| passive[j] && s[j] <= TOL) {
                let denom = x[j] - s[j];
                if denom > 0.0 {
                    alpha = alpha.min(x[j] / denom);
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            x = &x + (&s - &x) * alpha;
            let mut dropped = false;
            for j in 0..m {
                if passive[j] && x[j] <= TOL {
                    passive[j] = false;
                    x[j] = 0.0;
                    dropped = true;
                }
            }
            if !dropped || !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

/// A penalty of an unstructured model relative to a whole structured set.
/// Pairwise-induced indexes are one instance; set distances that are not of
/// the form `min_q c(p, q)` can implement this directly.
pub trait SetDistance {
    fn set_distance(&self, p: &Model, set: &ModelSet) -> Result<f64>;
}

impl SetDistance for DivergenceSpec {
    fn set_distance(&self, p: &Model, set: &ModelSet) -> Result<f64> {
        misspecification_index(p, set, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(w: &[f64]) -> Model {
        Model::new(w.to_vec()).unwrap()
    }

    fn set(ws: &[&[f64]], mode: HullMode) -> ModelSet {
        ModelSet::new(ws.iter().map(|w| model(w)).collect(), mode).unwrap()
    }

    #[test]
    fn divergence_examples() {
        let re = PhiFunction::relative_entropy();
        let gini = PhiFunction::gini();
        let p = model(&[1.0, 0.0]);
        let q = model(&[0.5, 0.5]);
        assert_eq!(phi_divergence(&q, &q, &re).unwrap(), 0.0);
        assert_eq!(phi_divergence(&q, &q, &gini).unwrap(), 0.0);
        // Σ p ln(p/q) = 1 · ln 2 plus the 0 ln 0 = 0 state.
        let expected_re = 1.0 * (1.0f64 / 0.5).ln();
        assert!((phi_divergence(&p, &q, &re).unwrap() - expected_re).abs() < 1e-15);
        assert!((phi_divergence(&p, &q, &re).unwrap() - std::f64::consts::LN_2).abs() < 1e-6);
        // ½[(2 − 1)²·½ + (0 − 1)²·½]
        let expected_gini = 0.5 * ((2.0f64 - 1.0).powi(2) * 0.5 + (0.0f64 - 1.0).powi(2) * 0.5);
        assert!((phi_divergence(&p, &q, &gini).unwrap() - expected_gini).abs() < 1e-15);
        assert_eq!(phi_divergence(&q, &p, &re).unwrap(), f64::INFINITY);
        assert_eq!(phi_divergence(&q, &p, &gini).unwrap(), f64::INFINITY);
    }

    #[test]
    fn index_examples() {
        let spec = DivergenceSpec::relative_entropy(1.0).unwrap();
        let q = set(&[&[0.5, 0.5], &[1.0, 0.0]], HullMode::ExtremePointsOnly);
        assert_eq!(misspecification_index(&model(&[1.0, 0.0]), &q, &spec).unwrap(), 0.0);

        let spec = DivergenceSpec::relative_entropy(2.0).unwrap();
        let q = set(&[&[0.6, 0.4], &[0.4, 0.6]], HullMode::ExtremePointsOnly);
        let p = model(&[0.5, 0.5]);
        let r = |a: f64, b: f64| 0.5 * (0.5 / a).ln() + 0.5 * (0.5 / b).ln();
        let expected = 2.0 * r(0.6, 0.4).min(r(0.4, 0.6));
        let detail = misspecification_index_detailed(&p, &q, &spec).unwrap();
        assert!((detail.value - expected).abs() < 1e-15);
        // Symmetric tie resolved towards the first model.
        assert_eq!(detail.binding_model_index, Some(0));
    }

    #[test]
    fn neutral_encodings_agree() {
        let q = set(&[&[0.6, 0.4], &[0.4, 0.6]], HullMode::ExtremePointsOnly);
        let indicator = DivergenceSpec::indicator();
        let infinite = DivergenceSpec::new(PhiFunction::gini(), Lambda::Infinite).unwrap();
        for p in [model(&[0.6, 0.4]), model(&[0.5, 0.5]), model(&[1.0, 0.0])] {
            assert_eq!(
                misspecification_index(&p, &q, &indicator).unwrap(),
                misspecification_index(&p, &q, &infinite).unwrap()
            );
        }
        assert_eq!(
            misspecification_index(&model(&[0.5, 0.5]), &q, &indicator).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn hull_mode_index() {
        let q = set(&[&[0.6, 0.4], &[0.4, 0.6]], HullMode::ConvexHull);
        let inside = model(&[0.5, 0.5]);
        let outside = model(&[0.9, 0.1]);
        let indicator = DivergenceSpec::indicator();
        assert_eq!(misspecification_index(&inside, &q, &indicator).unwrap(), 0.0);
        assert_eq!(misspecification_index(&outside, &q, &indicator).unwrap(), f64::INFINITY);

        let spec = DivergenceSpec::relative_entropy(1.0).unwrap();
        assert_eq!(misspecification_index(&inside, &q, &spec).unwrap(), 0.0);
        let hull = misspecification_index(&outside, &q, &spec).unwrap();
        // The nearest hull point of a 2-state set lies on the segment towards p.
        let direct = phi_divergence(&outside, &model(&[0.6, 0.4]), &PhiFunction::relative_entropy()).unwrap();
        assert!((hull - direct).abs() < 1e-9, "{hull} vs {direct}");
    }

    #[test]
    fn hull_index_interior_minimizer_three_states() {
        // p sits outside the segment between two models; the minimizer is
        // interior to the segment, below both vertex values.
        let q = set(&[&[0.7, 0.1, 0.2], &[0.1, 0.7, 0.2]], HullMode::ConvexHull);
        let p = model(&[0.4, 0.4, 0.2]);
        let spec = DivergenceSpec::gini(1.0).unwrap();
        // p is the midpoint, hence inside.
        assert_eq!(misspecification_index(&p, &q, &spec).unwrap(), 0.0);
        let p = model(&[0.45, 0.45, 0.1]);
        let hull = misspecification_index(&p, &q, &spec).unwrap();
        let vertices =
            misspecification_index(&p, &q.clone().with_hull_mode(HullMode::ExtremePointsOnly), &spec).unwrap();
        // Brute-force the segment.
        let gini = PhiFunction::gini();
        let brute = (0..=100_000)
            .map(|k| {
                let a = k as f64 / 100_000.0;
                let mix = crate::model_space::mix_models(&q.models()[0], &q.models()[1], a).unwrap();
                phi_divergence(&p, &mix, &gini).unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(hull < vertices);
        assert!((hull - brute).abs() < 1e-9, "{hull} vs {brute}");
    }

    #[test]
    fn hull_weights_for_three_states() {
        let q = set(
            &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.2, 0.4, 0.4]],
            HullMode::ConvexHull,
        );
        let p = model(&[0.3, 0.3, 0.4]);
        let w = convex_hull_weights(&p, &q).unwrap();
        let back = q.mixture(&w).unwrap();
        assert!(back.approx_eq(&p));
        let narrow = set(&[&[0.5, 0.5, 0.0], &[0.0, 0.5, 0.5]], HullMode::ConvexHull);
        assert!(convex_hull_weights(&model(&[0.5, 0.0, 0.5]), &narrow).is_none());
        assert!(convex_hull_weights(&model(&[0.25, 0.5, 0.25]), &narrow).is_some());
    }

    #[test]
    fn self_test_examples() {
        let re = PhiFunction::relative_entropy();
        let at_zero = conjugate_self_test(&re, &[0.0]).unwrap();
        assert!(at_zero.max_abs_deviation < 1e-12);
        assert_eq!(re.conjugate(0.0), 0.0);

        let gini = PhiFunction::gini();
        assert_eq!(gini.conjugate(1.0), 1.5);
        assert_eq!(gini.conjugate(-2.0), -0.5);
        let report = conjugate_self_test(&gini, &[1.0, -2.0]).unwrap();
        assert!(report.passed);
        assert!(report.max_abs_deviation < 1e-9);

        for phi in [re, gini] {
            let report = conjugate_self_test(&phi, &phi.default_self_test_grid()).unwrap();
            assert!(report.passed, "{report:?}");
        }
    }

    #[test]
    fn self_test_rejects_non_finite_phi() {
        let bad = PhiFunction {
            kind: PhiKind::Custom,
            name: "bad".into(),
            custom: Some(CustomPhi {
                phi: Arc::new(|t: f64| if t > 10.0 { f64::NAN } else { (t - 1.0).powi(2) }),
                conjugate: Arc::new(|y: f64| y),
                conjugate_derivative: Arc::new(|_| 1.0),
                derivative: None,
            }),
        };
        assert!(matches!(conjugate_self_test(&bad, &[0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn custom_phi_is_validated() {
        // Scaled chi-square: φ(t) = (t − 1)², φ*(y) = y + y²/4 for y ≥ −2.
        let ok = PhiFunction::custom(
            "chi2",
            |t| (t - 1.0) * (t - 1.0),
            |y| if y >= -2.0 { y + 0.25 * y * y } else { -1.0 },
            |y| (1.0 + 0.5 * y).max(0.0),
        );
        assert!(ok.is_ok());
        let wrong_conjugate = PhiFunction::custom("wrong", |t| (t - 1.0) * (t - 1.0), |y| y, |_| 1.0);
        assert!(wrong_conjugate.is_err());
        let not_grounded = PhiFunction::custom("shifted", |t| (t - 1.0).powi(2) + 0.1, |y| y, |_| 1.0);
        assert!(not_grounded.is_err());
        let concave = PhiFunction::custom("concave", |t: f64| -(t - 1.0).powi(2), |y| y, |_| 1.0);
        assert!(concave.is_err());
    }

    #[test]
    fn ext_mul_convention() {
        assert_eq!(ext_mul(0.0, f64::INFINITY), 0.0);
        assert_eq!(ext_mul(2.0, f64::INFINITY), f64::INFINITY);
        assert_eq!(ext_mul(2.0, 3.0), 6.0);
    }

    #[test]
    fn lambda_validation() {
        assert!(Lambda::finite(-1.0).is_err());
        assert!(Lambda::finite(0.0).is_err());
        assert!(Lambda::finite(f64::NAN).is_err());
        assert!(DivergenceSpec::relative_entropy(0.0).is_err());
        assert!(Lambda::Finite(10.0) < Lambda::Infinite);
    }

    fn positive_model(n: usize) -> impl Strategy<Value = Model> {
        proptest::collection::vec(0.02f64..1.0, n).prop_map(|v| Model::from_unnormalized(v).unwrap())
    }

    fn any_phi() -> impl Strategy<Value = PhiFunction> {
        prop_oneof![Just(PhiFunction::relative_entropy()), Just(PhiFunction::gini())]
    }

    proptest! {
        #[test]
        fn divergence_is_nonnegative_and_grounded(p in positive_model(3), q in positive_model(3), phi in any_phi()) {
            let d = phi_divergence(&p, &q, &phi).unwrap();
            prop_assert!(d >= 0.0);
            let close = p.weights().iter().zip(q.weights()).all(|(a, b)| (a - b).abs() <= 1e-9);
            if !close {
                prop_assert!(d > 0.0);
            }
            prop_assert_eq!(phi_divergence(&p, &p, &phi).unwrap(), 0.0);
        }

        #[test]
        fn divergence_is_convex_in_each_argument(
            p1 in positive_model(3), p2 in positive_model(3),
            q1 in positive_model(3), q2 in positive_model(3),
            alpha in 0.0f64..=1.0, phi in any_phi(),
        ) {
            let d = |p: &Model, q: &Model| phi_divergence(p, q, &phi).unwrap();
            let pm = crate::model_space::mix_models(&p1, &p2, alpha).unwrap();
            let qm = crate::model_space::mix_models(&q1, &q2, alpha).unwrap();
            prop_assert!(d(&pm, &q1) <= alpha * d(&p1, &q1) + (1.0 - alpha) * d(&p2, &q1) + 1e-12);
            prop_assert!(d(&p1, &qm) <= alpha * d(&p1, &q1) + (1.0 - alpha) * d(&p1, &q2) + 1e-12);
        }

        #[test]
        fn index_is_bounded_by_indicator_and_antitone_in_q(
            p in positive_model(3), a in positive_model(3), b in positive_model(3), phi in any_phi(),
            lambda in 0.1f64..5.0,
        ) {
            let spec = DivergenceSpec::new(phi, Lambda::Finite(lambda)).unwrap();
            let small = ModelSet::singleton(a.clone());
            let Ok(large) = ModelSet::new(vec![a, b], HullMode::ExtremePointsOnly) else { return Ok(()); };
            let c_small = misspecification_index(&p, &small, &spec).unwrap();
            let c_large = misspecification_index(&p, &large, &spec).unwrap();
            prop_assert!(c_small >= c_large);
            prop_assert!(c_large >= 0.0);
            let bound = if large.position(&p).is_some() { 0.0 } else { f64::INFINITY };
            prop_assert!(c_large <= bound);
            let hull = misspecification_index(&p, &large.clone().with_hull_mode(HullMode::ConvexHull), &spec).unwrap();
            prop_assert!(hull <= c_large);
        }
    }
}
