use indexmap::IndexMap;

use super::{PricingDocument, Violation, ViolationCode, SYNTAX_VERSION};
use crate::expr::{self, TypeViolation};
use crate::value::{Value, ValueType};

/// `[A-Za-z][A-Za-z0-9_]*`
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic()) && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct Validator<'a> {
    doc: &'a PricingDocument,
    out: Vec<Violation>,
}

impl Validator<'_> {
    fn push(&mut self, code: ViolationCode, path: impl Into<String>, message: impl Into<String>) {
        self.out.push(Violation::new(code, path, message));
    }

    fn name(&mut self, section: &str, name: &str, inner: &str) {
        if !is_identifier(name) {
            self.push(
                ViolationCode::InvalidName,
                format!("{section}.{name}"),
                format!("`{name}` is not an identifier"),
            );
        }
        if inner != name {
            self.push(
                ViolationCode::InvalidName,
                format!("{section}.{name}"),
                format!("entry is keyed `{name}` but named `{inner}`"),
            );
        }
    }

    fn expression(&mut self, path: String, source: &str) {
        let ast = match expr::parse_expression(source) {
            Ok(ast) => ast,
            Err(e) => {
                self.push(ViolationCode::ExpressionError, path, e.to_string());
                return;
            }
        };
        if let Err(violations) = expr::type_check(&ast, self.doc) {
            for v in violations {
                let code = match v {
                    TypeViolation::UnknownPlanPath { .. } => ViolationCode::UnknownPlanPath,
                    TypeViolation::UnknownPath { .. } => ViolationCode::UnknownPath,
                    TypeViolation::TypeMismatch { .. } => ViolationCode::TypeMismatch,
                    TypeViolation::NonBooleanRoot { .. } => ViolationCode::NonBooleanRoot,
                };
                self.push(code, path.clone(), v.to_string());
            }
        }
    }

    fn limit_value(&mut self, path: String, value: &Value) {
        match value {
            Value::Number(n) if n.is_negative() => {
                self.push(ViolationCode::NegativeLimit, path, format!("limit value {n} is negative"));
            }
            Value::Number(_) => {}
            other => self.push(
                ViolationCode::TypeMismatch,
                path,
                format!("expected NUMERIC, found {} {other:?}", other.value_type()),
            ),
        }
    }

    fn feature_overrides(&mut self, base: &str, overrides: &IndexMap<String, Value>) {
        for (name, value) in overrides {
            let path = format!("{base}.features.{name}");
            match self.doc.features.get(name) {
                None => self.push(ViolationCode::DanglingReference, path, format!("no feature named `{name}`")),
                Some(f) if f.value_type != value.value_type() => self.push(
                    ViolationCode::TypeMismatch,
                    path,
                    format!("feature `{name}` is {}, found {} {value:?}", f.value_type, value.value_type()),
                ),
                Some(_) => {}
            }
        }
    }

    fn limit_overrides(&mut self, base: &str, key: &str, overrides: &IndexMap<String, Value>) {
        for (name, value) in overrides {
            let path = format!("{base}.{key}.{name}");
            if self.doc.usage_limits.contains_key(name) {
                self.limit_value(path, value);
            } else {
                self.push(ViolationCode::DanglingReference, path, format!("no usage limit named `{name}`"));
            }
        }
    }

    fn run(&mut self) {
        let doc = self.doc;
        if doc.syntax_version != SYNTAX_VERSION {
            self.push(
                ViolationCode::UnsupportedSyntaxVersion,
                "syntaxVersion",
                format!("expected \"{SYNTAX_VERSION}\", found \"{}\"", doc.syntax_version),
            );
        }
        if !(doc.currency.len() == 3 && doc.currency.bytes().all(|b| b.is_ascii_uppercase())) {
            self.push(
                ViolationCode::InvalidCurrency,
                "currency",
                format!("`{}` is not an ISO-4217 code", doc.currency),
            );
        }
        if doc.features.is_empty() {
            self.push(ViolationCode::NoFeatures, "features", "at least one feature is required");
        }
        if doc.plans.is_empty() {
            self.push(ViolationCode::NoPlans, "plans", "at least one plan is required");
        }

        for (key, f) in &doc.features {
            self.name("features", key, &f.name);
            let base = format!("features.{key}");
            if f.default_value.value_type() != f.value_type {
                self.push(
                    ViolationCode::TypeMismatch,
                    format!("{base}.defaultValue"),
                    format!("valueType is {}, found {} {:?}", f.value_type, f.default_value.value_type(), f.default_value),
                );
            }
            if f.server_expression.is_some() && f.expression.is_none() {
                self.push(
                    ViolationCode::ServerExpressionWithoutExpression,
                    format!("{base}.serverExpression"),
                    "serverExpression requires expression",
                );
            }
            if let Some(src) = &f.expression {
                self.expression(format!("{base}.expression"), src);
            }
            if let Some(src) = &f.server_expression {
                self.expression(format!("{base}.serverExpression"), src);
            }
        }

        for (key, l) in &doc.usage_limits {
            self.name("usageLimits", key, &l.name);
            let base = format!("usageLimits.{key}");
            match &l.default_value {
                Value::Number(n) if n.is_negative() => {
                    self.push(ViolationCode::NegativeLimit, base.clone(), format!("defaultValue {n} is negative"))
                }
                Value::Number(_) => {}
                other => self.push(
                    ViolationCode::TypeMismatch,
                    format!("{base}.defaultValue"),
                    format!("expected {}, found {} {other:?}", ValueType::Numeric, other.value_type()),
                ),
            }
            if l.linked_features.is_empty() {
                self.push(
                    ViolationCode::EmptyLinkedFeatures,
                    format!("{base}.linkedFeatures"),
                    "a usage limit must link at least one feature",
                );
            }
            for f in &l.linked_features {
                if !doc.features.contains_key(f) {
                    self.push(
                        ViolationCode::DanglingReference,
                        format!("{base}.linkedFeatures.{f}"),
                        format!("no feature named `{f}`"),
                    );
                }
            }
        }

        for (key, p) in &doc.plans {
            self.name("plans", key, &p.name);
            let base = format!("plans.{key}");
            if p.monthly_price.is_negative() {
                self.push(ViolationCode::NegativePrice, format!("{base}.monthlyPrice"), "price is negative");
            }
            self.feature_overrides(&base, &p.features);
            self.limit_overrides(&base, "usageLimits", &p.usage_limits);
        }

        for (key, a) in &doc.add_ons {
            self.name("addOns", key, &a.name);
            let base = format!("addOns.{key}");
            if a.monthly_price.is_negative() {
                self.push(ViolationCode::NegativePrice, format!("{base}.monthlyPrice"), "price is negative");
            }
            if a.available_for.is_empty() {
                self.push(
                    ViolationCode::EmptyAvailableFor,
                    format!("{base}.availableFor"),
                    "an add-on must be available for at least one plan",
                );
            }
            for plan in &a.available_for {
                if !doc.plans.contains_key(plan) {
                    self.push(
                        ViolationCode::DanglingReference,
                        format!("{base}.availableFor.{plan}"),
                        format!("no plan named `{plan}`"),
                    );
                }
            }
            self.feature_overrides(&base, &a.features);
            self.limit_overrides(&base, "usageLimitExtensions", &a.usage_limit_extensions);
        }
    }
}

/// All invariant violations of `doc`, in document order. Empty iff valid.
pub fn validate_spec(doc: &PricingDocument) -> Vec<Violation> {
    let mut v = Validator { doc, out: Vec::new() };
    v.run();
    v.out
}
