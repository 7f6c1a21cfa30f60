//! The JSON problem document and result emission.
//!
//! Numbers in result output are rounded to [`OUTPUT_SIGNIFICANT_DIGITS`]
//! significant digits; infinities are written as the strings `"inf"` and
//! `"-inf"`. Problem documents are emitted at full precision.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::decision_problems::{AdmissibilityReport, ComparativeStatics, DecisionProblem};
use crate::divergences::{DivergenceSpec, Lambda, Penalty, PhiFunction, PhiKind};
use crate::error::{Error, Result};
use crate::model_space::{Act, HullMode, Model, ModelSet, StateSpace};
use crate::preferences::DominanceVerdict;
use crate::robust_solver::EvaluationResult;

pub const SCHEMA_VERSION: &str = "1";
pub const OUTPUT_SIGNIFICANT_DIGITS: usize = 12;
const INFINITY_SENTINEL: &str = "inf";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub schema_version: String,
    pub states: Vec<String>,
    pub models: IndexMap<String, Vec<f64>>,
    pub structured_set: StructuredSetDocument,
    pub divergence: DivergenceDocument,
    pub acts: IndexMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuredSetDocument {
    pub models: Vec<String>,
    #[serde(default)]
    pub hull_mode: HullMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    RelativeEntropy,
    Gini,
    Indicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceDocument {
    pub kind: DivergenceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaValue>,
}

/// A number, or a string expected to be the `"inf"` sentinel. Any other
/// string is a validation error rather than a parse error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaValue {
    Number(f64),
    Text(String),
}

impl From<Lambda> for LambdaValue {
    fn from(lambda: Lambda) -> Self {
        match lambda {
            Lambda::Finite(v) => LambdaValue::Number(v),
            Lambda::Infinite => LambdaValue::Text(INFINITY_SENTINEL.to_string()),
        }
    }
}

/// Parses a lambda given as a number or `"inf"` (command-line form).
pub fn parse_lambda(text: &str) -> Result<Lambda> {
    let text = text.trim();
    if text == INFINITY_SENTINEL {
        return Ok(Lambda::Infinite);
    }
    let value: f64 = text
        .parse()
        .map_err(|_| Error::validation("", format!("`{text}` is neither a number nor \"inf\"")))?;
    lambda_from_number(value, "")
}

fn lambda_from_number(value: f64, pointer: &str) -> Result<Lambda> {
    Lambda::finite(value).map_err(|_| {
        Error::validation(
            pointer,
            format!("lambda must be a positive finite number or \"inf\", got {value}"),
        )
    })
}

/// Escapes one reference token of a JSON pointer.
fn escape_token(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

fn pointer(segments: &[&str]) -> String {
    segments.iter().map(|s| format!("/{}", escape_token(s))).collect()
}

fn path_to_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    path.iter()
        .filter_map(|segment| match segment {
            Segment::Seq { index } => Some(format!("/{index}")),
            Segment::Map { key } => Some(format!("/{}", escape_token(key))),
            Segment::Enum { variant } => Some(format!("/{}", escape_token(variant))),
            Segment::Unknown => None,
        })
        .collect()
}

impl ProblemDocument {
    /// Deserializes without semantic validation.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|err| Error::Parse {
            pointer: path_to_pointer(err.path()),
            message: err.inner().to_string(),
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents always serialize")
    }

    /// Validates the document and builds the problem it describes.
    pub fn to_problem(&self) -> Result<DecisionProblem> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::validation(
                "/schema_version",
                format!(
                    "unsupported schema version `{}`, expected `{SCHEMA_VERSION}`",
                    self.schema_version
                ),
            ));
        }
        let states =
            StateSpace::new(self.states.iter().cloned()).map_err(|e| Error::validation("/states", inner_message(e)))?;
        let n = states.len();

        let mut listed = Vec::with_capacity(self.structured_set.models.len());
        for (i, name) in self.structured_set.models.iter().enumerate() {
            let at = format!("/structured_set/models/{i}");
            let weights = self
                .models
                .get(name)
                .ok_or_else(|| Error::validation(at.as_str(), format!("unknown model `{name}`")))?;
            listed.push((
                name.clone(),
                model_from_weights(weights, n, &pointer(&["models", name]))?,
            ));
        }
        // Unreferenced models are validated too.
        for (name, weights) in self
            .models
            .iter()
            .filter(|(k, _)| !self.structured_set.models.contains(k))
        {
            model_from_weights(weights, n, &pointer(&["models", name]))?;
        }
        let (labels, models): (Vec<_>, Vec<_>) = listed.into_iter().unzip();
        let set = ModelSet::with_labels(models, labels, self.structured_set.hull_mode)
            .map_err(|e| Error::validation("/structured_set/models", inner_message(e)))?;

        let spec = self.divergence.to_spec()?;

        if self.acts.is_empty() {
            return Err(Error::validation("/acts", "at least one act is required"));
        }
        let mut acts = Vec::with_capacity(self.acts.len());
        for (name, utils) in &self.acts {
            let at = pointer(&["acts", name]);
            if utils.len() != n {
                return Err(Error::validation(
                    at,
                    format!("expected {n} utilities, found {}", utils.len()),
                ));
            }
            acts.push(Act::new(name.clone(), utils.clone()).map_err(|e| Error::validation(at, inner_message(e)))?);
        }

        DecisionProblem::new(states, acts, set, spec).map_err(|e| Error::validation("", inner_message(e)))
    }

    /// The document describing `problem`, with weights at full precision.
    pub fn from_problem(problem: &DecisionProblem) -> Result<Self> {
        let set = problem.models();
        let models = set
            .labels()
            .iter()
            .cloned()
            .zip(set.models().iter().map(|m| m.weights().to_vec()))
            .collect();
        Ok(Self {
            schema_version: SCHEMA_VERSION.to_string(),
            states: problem.states().labels().to_vec(),
            models,
            structured_set: StructuredSetDocument {
                models: set.labels().to_vec(),
                hull_mode: set.hull_mode(),
            },
            divergence: DivergenceDocument::from_spec(problem.spec())?,
            acts: problem
                .acts()
                .iter()
                .map(|a| (a.name().to_string(), a.utils().to_vec()))
                .collect(),
        })
    }
}

impl DivergenceDocument {
    pub fn to_spec(&self) -> Result<DivergenceSpec> {
        let at = "/divergence/lambda";
        let lambda = match &self.lambda {
            None => None,
            Some(LambdaValue::Number(v)) => Some(lambda_from_number(*v, at)?),
            Some(LambdaValue::Text(s)) if s == INFINITY_SENTINEL => Some(Lambda::Infinite),
            Some(LambdaValue::Text(s)) => {
                return Err(Error::validation(at, format!("`{s}` is not a number or \"inf\"")));
            }
        };
        let phi = match self.kind {
            DivergenceKind::Indicator => {
                return match lambda {
                    None | Some(Lambda::Infinite) => Ok(DivergenceSpec::indicator()),
                    Some(_) => Err(Error::validation(at, "the indicator takes no finite lambda")),
                };
            }
            DivergenceKind::RelativeEntropy => PhiFunction::relative_entropy(),
            DivergenceKind::Gini => PhiFunction::gini(),
        };
        let lambda = lambda.ok_or_else(|| Error::validation(at, "lambda is required for this divergence"))?;
        DivergenceSpec::new(phi, lambda).map_err(|e| Error::validation(at, inner_message(e)))
    }

    pub fn from_spec(spec: &DivergenceSpec) -> Result<Self> {
        let kind = match spec.penalty() {
            Penalty::Indicator => {
                return Ok(Self {
                    kind: DivergenceKind::Indicator,
                    lambda: None,
                })
            }
            Penalty::Phi(phi) => match phi.kind() {
                PhiKind::RelativeEntropy => DivergenceKind::RelativeEntropy,
                PhiKind::Gini => DivergenceKind::Gini,
                PhiKind::Custom => {
                    return Err(Error::domain(format!(
                        "custom phi `{}` cannot be written to a document",
                        phi.name()
                    )))
                }
            },
        };
        Ok(Self {
            kind,
            lambda: Some(spec.lambda().into()),
        })
    }
}

fn model_from_weights(weights: &[f64], n: usize, at: &str) -> Result<Model> {
    if weights.len() != n {
        return Err(Error::validation(
            at,
            format!("expected {n} weights, found {}", weights.len()),
        ));
    }
    if let Some(i) = weights.iter().position(|&w| !(w >= 0.0)) {
        return Err(Error::validation(
            format!("{at}/{i}"),
            format!("weight {} is negative or not a number", weights[i]),
        ));
    }
    Model::new(weights.to_vec()).map_err(|e| Error::validation(at, inner_message(e)))
}

fn inner_message(err: Error) -> String {
    match err {
        Error::Domain(m) | Error::Convergence(m) => m,
        Error::Parse { message, .. } | Error::Validation { message, .. } => message,
        other => other.to_string(),
    }
}

/// Parses and validates a problem document.
pub fn parse_problem(text: &str) -> Result<DecisionProblem> {
    ProblemDocument::from_json(text)?.to_problem()
}

/// Serializes a problem back to a document.
pub fn emit_problem(problem: &DecisionProblem) -> Result<String> {
    Ok(ProblemDocument::from_problem(problem)?.to_json_string())
}

/// `x` rounded to [`OUTPUT_SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", OUTPUT_SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("scientific notation round-trips")
}

/// A rounded output number; infinities become string sentinels.
pub fn number(x: f64) -> Value {
    if x.is_nan() {
        Value::String("nan".into())
    } else if x == f64::INFINITY {
        Value::String(INFINITY_SENTINEL.into())
    } else if x == f64::NEG_INFINITY {
        Value::String(format!("-{INFINITY_SENTINEL}"))
    } else {
        json!(round_sig(x))
    }
}

/// The textual form of [`number`], shared by JSON and CSV output.
pub fn format_number(x: f64) -> String {
    match number(x) {
        Value::String(s) => s,
        v => v.to_string(),
    }
}

fn numbers(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| number(x)).collect())
}

fn lambda_value(lambda: Lambda) -> Value {
    number(lambda.as_f64())
}

fn divergence_value(spec: &DivergenceSpec) -> Value {
    if matches!(spec.penalty(), Penalty::Indicator) {
        json!({ "kind": "indicator", "lambda": INFINITY_SENTINEL })
    } else {
        json!({ "kind": spec.kind_str(), "lambda": lambda_value(spec.lambda()) })
    }
}

/// One act's criterion value, binding model and worst-case model.
pub fn evaluation_json(problem: &DecisionProblem, act: &Act, result: &EvaluationResult) -> Value {
    let labels = problem.models().labels();
    json!({
        "act": act.name(),
        "value": number(result.value),
        "binding_model": labels[result.binding_model_index],
        "worst_case_model": result.worst_case_model.as_ref().map(|m| numbers(m.weights())),
        "mixture_weights": result.mixture_weights.as_deref().map(numbers),
        "method": result.method,
    })
}

pub fn evaluations_json(problem: &DecisionProblem, results: &[(&Act, EvaluationResult)]) -> Value {
    json!({
        "divergence": divergence_value(problem.spec()),
        "hull_mode": problem.models().hull_mode(),
        "results": results.iter().map(|(a, r)| evaluation_json(problem, a, r)).collect::<Vec<_>>(),
    })
}

pub fn dominance_json(problem: &DecisionProblem, f: &str, g: &str, verdict: &DominanceVerdict) -> Value {
    let labels = problem.models().labels();
    json!({
        "f": f,
        "g": g,
        "relation": verdict.relation,
        "uniform_gap": number(verdict.uniform_gap),
        "per_model_gaps": verdict.per_model_gaps.iter().map(|&(i, gap)| json!({
            "model": labels[i],
            "gap": number(gap),
        })).collect::<Vec<_>>(),
        "hull_gaps": verdict.hull_gaps.iter().map(|h| json!({
            "first": labels[h.first],
            "second": labels[h.second],
            "alpha": number(h.alpha),
            "gap": number(h.gap),
        })).collect::<Vec<_>>(),
    })
}

pub fn report_json(problem: &DecisionProblem, report: &AdmissibilityReport) -> Value {
    json!({
        "divergence": divergence_value(problem.spec()),
        "value": number(report.value),
        "optimal": report.optimal,
        "weakly_admissible": report.weakly_admissible,
        "admissible": report.admissible,
        "act_values": report.act_values.iter().map(|av| json!({
            "act": av.act,
            "value": number(av.value),
        })).collect::<Vec<_>>(),
    })
}

pub fn statics_json(statics: &ComparativeStatics) -> Value {
    json!({
        "value_q": number(statics.value_q),
        "value_q_prime": number(statics.value_q_prime),
        "monotone": statics.monotone,
    })
}

/// `lambda,value` rows for plotting.
pub fn sweep_csv(rows: &[(Lambda, f64)]) -> String {
    let mut out = String::from("lambda,value\n");
    for &(lambda, value) in rows {
        out.push_str(&format_number(lambda.as_f64()));
        out.push(',');
        out.push_str(&format_number(value));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": "1",
        "states": ["rain", "sun"],
        "models": {"q": [0.5, 0.5]},
        "structured_set": {"models": ["q"]},
        "divergence": {"kind": "relative_entropy", "lambda": 1},
        "acts": {"f": [0, 1]}
    }"#;

    fn with(field: &str, value: &str) -> String {
        let mut doc: Value = serde_json::from_str(MINIMAL).unwrap();
        let mut target = &mut doc;
        let parts: Vec<&str> = field.split('/').collect();
        for part in &parts[..parts.len() - 1] {
            target = target.get_mut(*part).unwrap();
        }
        target[parts[parts.len() - 1]] = serde_json::from_str(value).unwrap();
        doc.to_string()
    }

    fn pointer_of(err: Error) -> String {
        match err {
            Error::Parse { pointer, .. } | Error::Validation { pointer, .. } => pointer,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn minimal_document_parses() {
        let p = parse_problem(MINIMAL).unwrap();
        assert_eq!(p.states().labels(), ["rain", "sun"]);
        assert_eq!(p.models().labels(), ["q"]);
        assert_eq!(p.acts().len(), 1);
        assert_eq!(p.spec().lambda(), Lambda::Finite(1.0));
        assert_eq!(p.models().hull_mode(), HullMode::ExtremePointsOnly);
    }

    #[test]
    fn near_normalized_weights_are_renormalized() {
        let p = parse_problem(&with("models/q", "[0.50000000005, 0.50000000005]")).unwrap();
        let w = p.models().models()[0].weights();
        assert_eq!(w[0] + w[1], 1.0);
        assert!(matches!(
            parse_problem(&with("models/q", "[0.5, 0.51]")),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn bad_lambda_is_a_validation_error() {
        for bad in ["-1", "0", "\"infinity\""] {
            let err = parse_problem(&with("divergence/lambda", bad)).unwrap_err();
            assert!(matches!(err, Error::Validation { .. }), "{bad}: {err:?}");
            assert_eq!(pointer_of(err), "/divergence/lambda");
        }
        let inf = parse_problem(&with("divergence/lambda", "\"inf\"")).unwrap();
        assert!(inf.spec().is_neutral());
        let missing = with("divergence", r#"{"kind": "gini"}"#);
        assert!(matches!(parse_problem(&missing), Err(Error::Validation { .. })));
        let indicator = with("divergence", r#"{"kind": "indicator", "lambda": 2}"#);
        assert!(matches!(parse_problem(&indicator), Err(Error::Validation { .. })));
        assert!(parse_problem(&with("divergence", r#"{"kind": "indicator"}"#))
            .unwrap()
            .spec()
            .is_neutral());
    }

    #[test]
    fn negative_weight_points_at_the_entry() {
        let err = parse_problem(&with("models/q", "[1.5, -0.5]")).unwrap_err();
        assert!(matches!(err, Error::Validation { .. }));
        assert_eq!(pointer_of(err), "/models/q/1");
    }

    #[test]
    fn schema_violations_carry_pointers() {
        let err = parse_problem(&with("acts/f", r#"[0, "x"]"#)).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert_eq!(pointer_of(err), "/acts/f/1");
        let err = parse_problem(&with("divergence/kind", r#""chi2""#)).unwrap_err();
        assert_eq!(pointer_of(err), "/divergence/kind");
        let err = parse_problem(&with("structured_set/hull_mode", r#""everything""#)).unwrap_err();
        assert_eq!(pointer_of(err), "/structured_set/hull_mode");
        assert!(matches!(parse_problem("{"), Err(Error::Parse { .. })));
        assert!(matches!(parse_problem(&with("extra", "1")), Err(Error::Parse { .. })));
    }

    #[test]
    fn semantic_violations_carry_pointers() {
        let err = parse_problem(&with("structured_set/models", r#"["q", "missing"]"#)).unwrap_err();
        assert_eq!(pointer_of(err), "/structured_set/models/1");
        let err = parse_problem(&with("acts/f", "[0, 1, 2]")).unwrap_err();
        assert_eq!(pointer_of(err), "/acts/f");
        let err = parse_problem(&with("models/q", "[1]")).unwrap_err();
        assert_eq!(pointer_of(err), "/models/q");
        let err = parse_problem(&with("schema_version", r#""2""#)).unwrap_err();
        assert_eq!(pointer_of(err), "/schema_version");
        let err = parse_problem(&with("acts", "{}")).unwrap_err();
        assert_eq!(pointer_of(err), "/acts");
        let err = parse_problem(&with("states", r#"["a", "a"]"#)).unwrap_err();
        assert_eq!(pointer_of(err), "/states");
    }

    #[test]
    fn pointer_tokens_are_escaped() {
        let doc = with("models", r#"{"q": [0.5, 0.5], "a/b~c": [2, -1]}"#);
        let err = parse_problem(&doc).unwrap_err();
        assert_eq!(pointer_of(err), "/models/a~1b~0c/1");
    }

    #[test]
    fn emitted_document_round_trips() {
        let doc = with(
            "models",
            r#"{"q": [0.1234567890123456, 0.8765432109876544], "r": [0.3, 0.7]}"#,
        );
        let doc = with_value(
            &doc,
            "structured_set",
            r#"{"models": ["q", "r"], "hull_mode": "convex_hull"}"#,
        );
        let p = parse_problem(&doc).unwrap();
        let again = parse_problem(&emit_problem(&p).unwrap()).unwrap();
        assert_eq!(again.models(), p.models());
        assert_eq!(again.states().labels(), p.states().labels());
        assert_eq!(again.acts(), p.acts());
        assert_eq!(again.spec().lambda(), p.spec().lambda());
        assert_eq!(again.spec().kind_str(), p.spec().kind_str());
    }

    fn with_value(doc: &str, field: &str, value: &str) -> String {
        let mut v: Value = serde_json::from_str(doc).unwrap();
        v[field] = serde_json::from_str(value).unwrap();
        v.to_string()
    }

    #[test]
    fn custom_phi_cannot_be_emitted() {
        let p = parse_problem(MINIMAL).unwrap();
        let custom = PhiFunction::custom(
            "sq",
            |t| (t - 1.0).powi(2) / 2.0,
            |y| {
                if y >= -1.0 {
                    y + y * y / 2.0
                } else {
                    -0.5
                }
            },
            |y| (1.0 + y).max(0.0),
        )
        .unwrap();
        let p = p.with_spec(DivergenceSpec::new(custom, Lambda::Finite(1.0)).unwrap());
        assert!(matches!(emit_problem(&p), Err(Error::Domain(_))));
    }

    #[test]
    fn rounding_to_twelve_digits() {
        assert_eq!(round_sig(0.379_885_493_041_722_1), 0.379_885_493_042);
        assert_eq!(round_sig(-1_234.567_890_123_456), -1_234.567_890_12);
        assert_eq!(round_sig(0.0), 0.0);
        assert_eq!(format_number(f64::INFINITY), "inf");
        assert_eq!(format_number(f64::NEG_INFINITY), "-inf");
        assert_eq!(format_number(0.375), "0.375");
    }

    #[test]
    fn parse_lambda_on_command_line() {
        assert_eq!(parse_lambda("inf").unwrap(), Lambda::Infinite);
        assert_eq!(parse_lambda(" 2.5").unwrap(), Lambda::Finite(2.5));
        assert!(parse_lambda("-1").is_err());
        assert!(parse_lambda("abc").is_err());
    }

    #[test]
    fn sweep_csv_layout() {
        let csv = sweep_csv(&[(Lambda::Finite(0.1), -0.5), (Lambda::Infinite, -1.0)]);
        assert_eq!(csv, "lambda,value\n0.1,-0.5\ninf,-1.0\n");
    }
}
