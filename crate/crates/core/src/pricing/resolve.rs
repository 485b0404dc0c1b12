use indexmap::IndexMap;

use super::PricingSpec;
use crate::value::{Decimal, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResolveError {
    #[error("unknown plan `{0}`")]
    UnknownPlan(String),
    #[error("unknown add-on `{0}`")]
    UnknownAddOn(String),
    #[error("add-on `{add_on}` is not available for plan `{plan}`")]
    AddOnNotAvailable { add_on: String, plan: String },
    #[error("add-on `{0}` is listed more than once")]
    DuplicateAddOn(String),
}

impl ResolveError {
    pub fn kind(&self) -> &'static str {
        match self {
            ResolveError::UnknownPlan(_) => "UnknownPlan",
            ResolveError::UnknownAddOn(_) => "UnknownAddOn",
            ResolveError::AddOnNotAvailable { .. } => "AddOnNotAvailable",
            ResolveError::DuplicateAddOn(_) => "DuplicateAddOn",
        }
    }
}

/// Effective feature values and limits for one plan + add-on selection.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedEntitlements {
    pub plan_name: String,
    pub add_ons: Vec<String>,
    /// Every declared feature, in document order.
    pub feature_values: IndexMap<String, Value>,
    /// Every declared usage limit, in document order.
    pub limit_values: IndexMap<String, Decimal>,
}

fn number(v: &Value) -> Decimal {
    // validated documents only carry numbers here
    v.as_number().unwrap_or(Decimal::ZERO)
}

/// Resolves `plan` plus `add_ons`.
///
/// Feature values: the last subscribed add-on that overrides a feature
/// wins, then the plan override, then the default. Limits: the plan value
/// (or default) plus every subscribed add-on's extension.
pub fn resolve_entitlements(spec: &PricingSpec, plan: &str, add_ons: &[String]) -> Result<ResolvedEntitlements, ResolveError> {
    let plan_def = spec
        .plans()
        .get(plan)
        .ok_or_else(|| ResolveError::UnknownPlan(plan.to_string()))?;
    let mut add_on_defs = Vec::with_capacity(add_ons.len());
    for (i, name) in add_ons.iter().enumerate() {
        let def = spec
            .add_ons()
            .get(name)
            .ok_or_else(|| ResolveError::UnknownAddOn(name.clone()))?;
        if !def.available_for.iter().any(|p| p == plan) {
            return Err(ResolveError::AddOnNotAvailable {
                add_on: name.clone(),
                plan: plan.to_string(),
            });
        }
        if add_ons[..i].contains(name) {
            return Err(ResolveError::DuplicateAddOn(name.clone()));
        }
        add_on_defs.push(def);
    }

    let feature_values = spec
        .features()
        .iter()
        .map(|(name, f)| {
            let value = add_on_defs
                .iter()
                .rev()
                .find_map(|a| a.features.get(name))
                .or_else(|| plan_def.features.get(name))
                .unwrap_or(&f.default_value);
            (name.clone(), value.clone())
        })
        .collect();

    let limit_values = spec
        .usage_limits()
        .iter()
        .map(|(name, l)| {
            let base = number(plan_def.usage_limits.get(name).unwrap_or(&l.default_value));
            let total = add_on_defs
                .iter()
                .filter_map(|a| a.usage_limit_extensions.get(name))
                .fold(base, |acc, ext| acc.checked_add(number(ext)).unwrap_or(acc));
            (name.clone(), total)
        })
        .collect();

    Ok(ResolvedEntitlements {
        plan_name: plan.to_string(),
        add_ons: add_ons.to_vec(),
        feature_values,
        limit_values,
    })
}
