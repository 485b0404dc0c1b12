//! Per-user feature evaluation: the `{eval, used, limit}` map carried in
//! tokens, plus change detection between two maps.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::expr::{self, EvalError, EvaluationContext, PlanContext, SubscriptionContext};
use crate::pricing::{resolve_entitlements, Gate, PricingSpec, ResolveError};
use crate::value::{Decimal, Value};

/// A user's plan, add-ons, host-supplied attributes and usage counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Subscription {
    pub user_id: String,
    pub plan: String,
    #[serde(default)]
    pub add_ons: Vec<String>,
    #[serde(default)]
    pub context_attributes: BTreeMap<String, Value>,
    #[serde(default)]
    pub usage: BTreeMap<String, u64>,
}

impl Subscription {
    pub fn new(user_id: impl Into<String>, plan: impl Into<String>) -> Self {
        Subscription {
            user_id: user_id.into(),
            plan: plan.into(),
            add_ons: Vec::new(),
            context_attributes: BTreeMap::new(),
            usage: BTreeMap::new(),
        }
    }

    pub fn used(&self, limit: &str) -> u64 {
        self.usage.get(limit).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EntitlementError {
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error("usage counter `{0}` names no declared usage limit")]
    UnknownUsageLimit(String),
    #[error("user id must be non-empty printable ASCII without `/`")]
    InvalidUserId,
}

impl EntitlementError {
    pub fn kind(&self) -> &'static str {
        match self {
            EntitlementError::Resolve(e) => e.kind(),
            EntitlementError::UnknownUsageLimit(_) => "UnknownUsageLimit",
            EntitlementError::InvalidUserId => "InvalidUserId",
        }
    }
}

/// Checks `sub` against the preconditions of [`evaluate_features`].
pub fn validate_subscription(spec: &PricingSpec, sub: &Subscription) -> Result<(), EntitlementError> {
    if sub.user_id.is_empty() || !sub.user_id.bytes().all(|b| b.is_ascii_graphic() && b != b'/') {
        return Err(EntitlementError::InvalidUserId);
    }
    resolve_entitlements(spec, &sub.plan, &sub.add_ons)?;
    if let Some(unknown) = sub.usage.keys().find(|k| !spec.usage_limits().contains_key(*k)) {
        return Err(EntitlementError::UnknownUsageLimit(unknown.clone()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureEvaluation {
    pub eval: bool,
    pub used: Option<u64>,
    pub limit: Option<Decimal>,
}

/// Feature name to evaluation, in document order.
pub type FeatureMap = IndexMap<String, FeatureEvaluation>;

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationMap {
    pub entries: FeatureMap,
    pub spec_fingerprint: String,
}

/// One feature whose expression failed and was therefore disabled.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub feature: String,
    pub expression: String,
    pub error: EvalError,
}

/// Builds the context expressions are evaluated in.
///
/// `userContext` holds the context attributes, overlaid by one counter per
/// limited feature (keyed by feature name, from its primary limit), overlaid
/// by one counter per declared limit (keyed by limit name). Counters absent
/// from `sub.usage` are 0.
pub fn build_context(spec: &PricingSpec, sub: &Subscription) -> Result<EvaluationContext, EntitlementError> {
    let resolved = resolve_entitlements(spec, &sub.plan, &sub.add_ons)?;
    let mut user_context = sub.context_attributes.clone();
    for name in spec.features().keys() {
        if let Some(limit) = spec.primary_limit_of(name) {
            user_context.insert(name.clone(), Value::Number(Decimal::from(sub.used(&limit.name))));
        }
    }
    for limit in spec.usage_limits().keys() {
        user_context.insert(limit.clone(), Value::Number(Decimal::from(sub.used(limit))));
    }
    Ok(EvaluationContext {
        user_context,
        plan_context: PlanContext {
            features: resolved.feature_values,
            usage_limits: resolved.limit_values,
        },
        subscription: SubscriptionContext {
            plan: resolved.plan_name,
            add_ons: resolved.add_ons,
        },
    })
}

/// Maps a usage key to a declared limit: a limit name maps to itself, a
/// limited feature's name maps to its primary limit.
pub fn limit_for_usage_key<'a>(spec: &'a PricingSpec, key: &str) -> Option<&'a str> {
    if let Some((name, _)) = spec.usage_limits().get_key_value(key) {
        return Some(name);
    }
    spec.primary_limit_of(key).map(|l| l.name.as_str())
}

/// Evaluates every feature, returning failed expressions alongside.
pub fn evaluate_features_with_diagnostics(
    spec: &PricingSpec,
    sub: &Subscription,
) -> Result<(EvaluationMap, Vec<Diagnostic>), EntitlementError> {
    validate_subscription(spec, sub)?;
    let ctx = build_context(spec, sub)?;
    let mut diagnostics = Vec::new();
    let mut entries = IndexMap::with_capacity(spec.features().len());
    for name in spec.features().keys() {
        let eval = match spec.gate(name) {
            Some(Gate::Expression(ast)) => match expr::evaluate(ast, &ctx) {
                Ok(b) => b,
                Err(error) => {
                    diagnostics.push(Diagnostic {
                        feature: name.clone(),
                        expression: ast.to_string(),
                        error,
                    });
                    false
                }
            },
            Some(Gate::ResolvedValue) => match ctx.plan_context.features.get(name) {
                Some(Value::Bool(b)) => *b,
                Some(Value::Number(n)) => !n.is_zero(),
                Some(Value::Text(t)) => !t.is_empty(),
                None => false,
            },
            None => false,
        };
        let (used, limit) = match spec.primary_limit_of(name) {
            Some(l) => (Some(sub.used(&l.name)), ctx.plan_context.usage_limits.get(&l.name).copied()),
            None => (None, None),
        };
        entries.insert(name.clone(), FeatureEvaluation { eval, used, limit });
    }
    Ok((
        EvaluationMap {
            entries,
            spec_fingerprint: spec.fingerprint().to_string(),
        },
        diagnostics,
    ))
}

/// Evaluates every feature for `sub`. Failing expressions disable their
/// feature and are logged; they never abort the map.
pub fn evaluate_features(spec: &PricingSpec, sub: &Subscription) -> Result<EvaluationMap, EntitlementError> {
    let (map, diagnostics) = evaluate_features_with_diagnostics(spec, sub)?;
    for d in diagnostics {
        tracing::warn!(
            user = %sub.user_id,
            feature = %d.feature,
            expression = %d.expression,
            error = %d.error,
            "feature expression failed, feature disabled"
        );
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EvaluationDiff {
    /// Features whose triple differs or that exist on one side only.
    pub features: Vec<String>,
    pub fingerprint_changed: bool,
}

impl EvaluationDiff {
    pub fn changed(&self) -> bool {
        self.fingerprint_changed || !self.features.is_empty()
    }
}

/// Compares two maps; the change list follows `new`'s order, then features
/// only `old` has.
pub fn diff_evaluations(old: &EvaluationMap, new: &EvaluationMap) -> EvaluationDiff {
    let mut features: Vec<String> = new
        .entries
        .iter()
        .filter(|(name, ev)| old.entries.get(*name) != Some(ev))
        .map(|(name, _)| name.clone())
        .collect();
    features.extend(old.entries.keys().filter(|k| !new.entries.contains_key(*k)).cloned());
    EvaluationDiff {
        features,
        fingerprint_changed: old.spec_fingerprint != new.spec_fingerprint,
    }
}
