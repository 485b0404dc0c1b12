//! Strict structural reading of the YAML document. Unknown keys, missing
//! required keys and mistyped scalars become `SCHEMA_VIOLATION`s with the
//! offending path; semantic checks live in `validate`.

use indexmap::IndexMap;
use serde_yaml::{Mapping, Value as Yaml};

use super::{AddOnDef, FeatureDef, PlanDef, PricingDocument, SpecError, UsageLimitDef, Violation, ViolationCode};
use crate::value::{Decimal, Value, ValueType};

const TOP_KEYS: &[&str] = &[
    "saasName",
    "syntaxVersion",
    "currency",
    "features",
    "usageLimits",
    "plans",
    "addOns",
];
const FEATURE_KEYS: &[&str] = &["description", "valueType", "defaultValue", "expression", "serverExpression"];
const LIMIT_KEYS: &[&str] = &["description", "unit", "defaultValue", "linkedFeatures"];
const PLAN_KEYS: &[&str] = &["description", "monthlyPrice", "features", "usageLimits"];
const ADDON_KEYS: &[&str] = &[
    "description",
    "monthlyPrice",
    "availableFor",
    "features",
    "usageLimitExtensions",
];

fn kind(v: &Yaml) -> &'static str {
    match v {
        Yaml::Null => "null",
        Yaml::Bool(_) => "boolean",
        Yaml::Number(_) => "number",
        Yaml::String(_) => "string",
        Yaml::Sequence(_) => "sequence",
        Yaml::Mapping(_) => "mapping",
        Yaml::Tagged(_) => "tagged value",
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

#[derive(Default)]
struct Walker {
    violations: Vec<Violation>,
}

impl Walker {
    fn schema(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations
            .push(Violation::new(ViolationCode::SchemaViolation, path, message));
    }

    fn mapping<'a>(&mut self, v: &'a Yaml, path: &str) -> Option<&'a Mapping> {
        match v {
            Yaml::Mapping(m) => Some(m),
            other => {
                self.schema(path, format!("expected a mapping, found {}", kind(other)));
                None
            }
        }
    }

    /// String-keyed entries of `map`; reports non-string and unknown keys.
    fn entries<'a>(&mut self, map: &'a Mapping, path: &str, allowed: Option<&[&str]>) -> Vec<(&'a str, &'a Yaml)> {
        let mut out = Vec::new();
        for (k, v) in map {
            let Yaml::String(key) = k else {
                self.schema(path, format!("keys must be strings, found {}", kind(k)));
                continue;
            };
            if let Some(allowed) = allowed {
                if !allowed.contains(&key.as_str()) {
                    self.schema(join(path, key), format!("unknown key `{key}`"));
                    continue;
                }
            }
            out.push((key.as_str(), v));
        }
        out
    }

    fn required<'a>(&mut self, map: &'a Mapping, path: &str, key: &str) -> Option<&'a Yaml> {
        let v = map.get(key);
        if v.is_none() {
            self.schema(join(path, key), format!("missing required key `{key}`"));
        }
        v
    }

    fn string(&mut self, v: &Yaml, path: &str) -> Option<String> {
        match v {
            Yaml::String(s) => Some(s.clone()),
            other => {
                self.schema(path, format!("expected a string, found {}", kind(other)));
                None
            }
        }
    }

    fn opt_string(&mut self, map: &Mapping, path: &str, key: &str) -> Option<String> {
        map.get(key).and_then(|v| self.string(v, &join(path, key)))
    }

    fn req_string(&mut self, map: &Mapping, path: &str, key: &str) -> Option<String> {
        self.required(map, path, key).and_then(|v| self.string(v, &join(path, key)))
    }

    fn number(&mut self, v: &Yaml, path: &str) -> Option<Decimal> {
        match scalar(v) {
            Ok(Value::Number(n)) => Some(n),
            Ok(other) => {
                self.schema(path, format!("expected a number, found {}", other.value_type()));
                None
            }
            Err(msg) => {
                self.schema(path, msg);
                None
            }
        }
    }

    fn value(&mut self, v: &Yaml, path: &str) -> Option<Value> {
        match scalar(v) {
            Ok(v) => Some(v),
            Err(msg) => {
                self.schema(path, msg);
                None
            }
        }
    }

    fn string_list(&mut self, v: &Yaml, path: &str) -> Option<Vec<String>> {
        let Yaml::Sequence(items) = v else {
            self.schema(path, format!("expected a sequence, found {}", kind(v)));
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            out.push(self.string(item, &format!("{path}[{i}]"))?);
        }
        Some(out)
    }

    /// `{ name: { value: V } }` override maps.
    fn overrides(&mut self, map: &Mapping, path: &str, key: &str) -> IndexMap<String, Value> {
        let mut out = IndexMap::new();
        let Some(v) = map.get(key) else {
            return out;
        };
        let path = join(path, key);
        let Some(m) = self.mapping(v, &path) else {
            return out;
        };
        for (name, entry) in self.entries(m, &path, None) {
            let entry_path = join(&path, name);
            let Some(em) = self.mapping(entry, &entry_path) else {
                continue;
            };
            self.entries(em, &entry_path, Some(&["value"]));
            let raw = self.required(em, &entry_path, "value");
            if let Some(val) = raw.and_then(|r| self.value(r, &join(&entry_path, "value"))) {
                out.insert(name.to_string(), val);
            }
        }
        out
    }

    fn feature(&mut self, name: &str, v: &Yaml, path: &str) -> Option<FeatureDef> {
        let m = self.mapping(v, path)?;
        self.entries(m, path, Some(FEATURE_KEYS));
        let description = self.opt_string(m, path, "description");
        let value_type = self.req_string(m, path, "valueType").and_then(|s| match s.parse::<ValueType>() {
            Ok(t) => Some(t),
            Err(msg) => {
                self.schema(join(path, "valueType"), msg);
                None
            }
        });
        let default_value = self
            .required(m, path, "defaultValue")
            .and_then(|d| self.value(d, &join(path, "defaultValue")));
        let expression = self.opt_string(m, path, "expression");
        let server_expression = self.opt_string(m, path, "serverExpression");
        Some(FeatureDef {
            name: name.to_string(),
            description,
            value_type: value_type?,
            default_value: default_value?,
            expression,
            server_expression,
        })
    }

    fn limit(&mut self, name: &str, v: &Yaml, path: &str) -> Option<UsageLimitDef> {
        let m = self.mapping(v, path)?;
        self.entries(m, path, Some(LIMIT_KEYS));
        let description = self.opt_string(m, path, "description");
        let unit = self.req_string(m, path, "unit");
        let default_value = self
            .required(m, path, "defaultValue")
            .and_then(|d| self.value(d, &join(path, "defaultValue")));
        let linked = self
            .required(m, path, "linkedFeatures")
            .and_then(|l| self.string_list(l, &join(path, "linkedFeatures")));
        Some(UsageLimitDef {
            name: name.to_string(),
            description,
            unit: unit?,
            default_value: default_value?,
            linked_features: linked?,
        })
    }

    fn plan(&mut self, name: &str, v: &Yaml, path: &str) -> Option<PlanDef> {
        let m = self.mapping(v, path)?;
        self.entries(m, path, Some(PLAN_KEYS));
        let description = self.opt_string(m, path, "description");
        let price = self
            .required(m, path, "monthlyPrice")
            .and_then(|p| self.number(p, &join(path, "monthlyPrice")));
        let features = self.overrides(m, path, "features");
        let usage_limits = self.overrides(m, path, "usageLimits");
        Some(PlanDef {
            name: name.to_string(),
            description,
            monthly_price: price?,
            features,
            usage_limits,
        })
    }

    fn add_on(&mut self, name: &str, v: &Yaml, path: &str) -> Option<AddOnDef> {
        let m = self.mapping(v, path)?;
        self.entries(m, path, Some(ADDON_KEYS));
        let description = self.opt_string(m, path, "description");
        let price = self
            .required(m, path, "monthlyPrice")
            .and_then(|p| self.number(p, &join(path, "monthlyPrice")));
        let available_for = self
            .required(m, path, "availableFor")
            .and_then(|a| self.string_list(a, &join(path, "availableFor")));
        let features = self.overrides(m, path, "features");
        let usage_limit_extensions = self.overrides(m, path, "usageLimitExtensions");
        Some(AddOnDef {
            name: name.to_string(),
            description,
            monthly_price: price?,
            available_for: available_for?,
            features,
            usage_limit_extensions,
        })
    }

    fn section<T>(
        &mut self,
        top: &Mapping,
        key: &str,
        required: bool,
        mut read: impl FnMut(&mut Self, &str, &Yaml, &str) -> Option<T>,
    ) -> IndexMap<String, T> {
        let mut out = IndexMap::new();
        let v = if required { self.required(top, "", key) } else { top.get(key) };
        let Some(v) = v else {
            return out;
        };
        if !required && v.is_null() {
            return out;
        }
        let Some(m) = self.mapping(v, key) else {
            return out;
        };
        for (name, entry) in self.entries(m, key, None) {
            if let Some(def) = read(self, name, entry, &join(key, name)) {
                out.insert(name.to_string(), def);
            }
        }
        out
    }
}

fn scalar(v: &Yaml) -> Result<Value, String> {
    match v {
        Yaml::Bool(b) => Ok(Value::Bool(*b)),
        Yaml::String(s) => Ok(Value::Text(s.clone())),
        Yaml::Number(n) => {
            let parsed = if let Some(i) = n.as_i64() {
                Ok(Decimal::from_int(i))
            } else if let Some(u) = n.as_u64() {
                Ok(Decimal::from(u))
            } else {
                Decimal::from_f64(n.as_f64().unwrap_or(f64::NAN))
            };
            parsed.map(Value::Number).map_err(|e| e.to_string())
        }
        other => Err(format!("expected a boolean, number or string, found {}", kind(other))),
    }
}

fn load(yaml: &str) -> Result<Yaml, SpecError> {
    serde_yaml::from_str(yaml).map_err(|e| SpecError::MalformedDocument(e.to_string()))
}

/// Reads the document structure without semantic validation.
pub fn parse_document(yaml: &str) -> Result<PricingDocument, SpecError> {
    let root = load(yaml)?;
    let mut w = Walker::default();
    let Some(top) = w.mapping(&root, "") else {
        return Err(SpecError::Invalid(w.violations));
    };
    w.entries(top, "", Some(TOP_KEYS));
    let saas_name = w.req_string(top, "", "saasName");
    let syntax_version = w.req_string(top, "", "syntaxVersion");
    let currency = w.req_string(top, "", "currency");
    let features = w.section(top, "features", true, Walker::feature);
    let usage_limits = w.section(top, "usageLimits", false, Walker::limit);
    let plans = w.section(top, "plans", true, Walker::plan);
    let add_ons = w.section(top, "addOns", false, Walker::add_on);
    match (saas_name, syntax_version, currency) {
        (Some(saas_name), Some(syntax_version), Some(currency)) if w.violations.is_empty() => Ok(PricingDocument {
            saas_name,
            syntax_version,
            currency,
            features,
            usage_limits,
            plans,
            add_ons,
        }),
        _ => Err(SpecError::Invalid(w.violations)),
    }
}

/// Reads a single-entry mapping `{ NAME: <plan> }`.
pub fn parse_plan_fragment(yaml: &str) -> Result<PlanDef, SpecError> {
    let root = load(yaml)?;
    let mut w = Walker::default();
    let Some(m) = w.mapping(&root, "plans") else {
        return Err(SpecError::Invalid(w.violations));
    };
    let entries = w.entries(m, "plans", None);
    if entries.len() != 1 {
        w.schema("plans", format!("expected exactly one plan, found {}", entries.len()));
        return Err(SpecError::Invalid(w.violations));
    }
    let (name, body) = entries[0];
    match w.plan(name, body, &join("plans", name)) {
        Some(plan) if w.violations.is_empty() => Ok(plan),
        _ => Err(SpecError::Invalid(w.violations)),
    }
}
