//! Canonical YAML rendering. Keys follow schema order, map entries keep
//! insertion order, strings are always double-quoted and numbers carry no
//! superfluous zeros, so equal models render to equal bytes.

use std::fmt::Write;

use indexmap::IndexMap;
use sha2::{Digest, Sha256};

use super::{is_identifier, PricingDocument};
use crate::value::Value;

fn quote(s: &str) -> String {
    // JSON string syntax is valid YAML double-quoted scalar syntax
    serde_json::to_string(s).expect("string serialization")
}

fn key(s: &str) -> String {
    if is_identifier(s) && !matches!(s, "true" | "false" | "null" | "yes" | "no" | "on" | "off" | "y" | "n") {
        s.to_string()
    } else {
        quote(s)
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => n.to_string(),
        Value::Text(t) => quote(t),
    }
}

fn list(items: &[String]) -> String {
    let inner: Vec<String> = items.iter().map(|s| quote(s)).collect();
    format!("[{}]", inner.join(", "))
}

fn overrides(out: &mut String, indent: &str, name: &str, map: &IndexMap<String, Value>) {
    if map.is_empty() {
        return;
    }
    let _ = writeln!(out, "{indent}{name}:");
    for (k, v) in map {
        let _ = writeln!(out, "{indent}  {}: {{ value: {} }}", key(k), scalar(v));
    }
}

fn opt(out: &mut String, indent: &str, name: &str, v: &Option<String>) {
    if let Some(v) = v {
        let _ = writeln!(out, "{indent}{name}: {}", quote(v));
    }
}

/// Canonical text of `doc`.
pub fn serialize_document(doc: &PricingDocument) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "saasName: {}", quote(&doc.saas_name));
    let _ = writeln!(out, "syntaxVersion: {}", quote(&doc.syntax_version));
    let _ = writeln!(out, "currency: {}", quote(&doc.currency));

    out.push_str("features:\n");
    for (name, f) in &doc.features {
        let _ = writeln!(out, "  {}:", key(name));
        opt(&mut out, "    ", "description", &f.description);
        let _ = writeln!(out, "    valueType: {}", f.value_type);
        let _ = writeln!(out, "    defaultValue: {}", scalar(&f.default_value));
        opt(&mut out, "    ", "expression", &f.expression);
        opt(&mut out, "    ", "serverExpression", &f.server_expression);
    }

    if !doc.usage_limits.is_empty() {
        out.push_str("usageLimits:\n");
        for (name, l) in &doc.usage_limits {
            let _ = writeln!(out, "  {}:", key(name));
            opt(&mut out, "    ", "description", &l.description);
            let _ = writeln!(out, "    unit: {}", quote(&l.unit));
            let _ = writeln!(out, "    defaultValue: {}", scalar(&l.default_value));
            let _ = writeln!(out, "    linkedFeatures: {}", list(&l.linked_features));
        }
    }

    out.push_str("plans:\n");
    for (name, p) in &doc.plans {
        let _ = writeln!(out, "  {}:", key(name));
        opt(&mut out, "    ", "description", &p.description);
        let _ = writeln!(out, "    monthlyPrice: {}", p.monthly_price);
        overrides(&mut out, "    ", "features", &p.features);
        overrides(&mut out, "    ", "usageLimits", &p.usage_limits);
    }

    if !doc.add_ons.is_empty() {
        out.push_str("addOns:\n");
        for (name, a) in &doc.add_ons {
            let _ = writeln!(out, "  {}:", key(name));
            opt(&mut out, "    ", "description", &a.description);
            let _ = writeln!(out, "    monthlyPrice: {}", a.monthly_price);
            let _ = writeln!(out, "    availableFor: {}", list(&a.available_for));
            overrides(&mut out, "    ", "features", &a.features);
            overrides(&mut out, "    ", "usageLimitExtensions", &a.usage_limit_extensions);
        }
    }
    out
}

/// First 16 hex chars of SHA-256 over `canonical`.
pub fn fingerprint_of(canonical: &str) -> String {
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
