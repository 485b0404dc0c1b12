//! The pricing document: features, usage limits, plans and add-ons.
//!
//! A [`PricingDocument`] is the raw, possibly invalid model (what the
//! admin API edits). A [`PricingSpec`] is a document that passed
//! validation, with its content fingerprint and compiled feature gates.

mod canonical;
mod parse;
mod resolve;
mod validate;

use std::fmt;

use indexmap::IndexMap;
use serde::Serialize;

pub use canonical::{fingerprint_of, serialize_document};
pub use parse::{parse_document, parse_plan_fragment};
pub use resolve::{resolve_entitlements, ResolveError, ResolvedEntitlements};
pub use validate::{is_identifier, validate_spec};

use crate::expr::{self, CmpOp, Expr, Namespace, PlanSchema};
use crate::value::{Decimal, Value, ValueType};

pub const SYNTAX_VERSION: &str = "1.0";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDef {
    pub name: String,
    pub description: Option<String>,
    pub value_type: ValueType,
    pub default_value: Value,
    pub expression: Option<String>,
    /// Back-end override of `expression`.
    pub server_expression: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UsageLimitDef {
    pub name: String,
    pub description: Option<String>,
    pub unit: String,
    pub default_value: Value,
    pub linked_features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanDef {
    pub name: String,
    pub description: Option<String>,
    pub monthly_price: Decimal,
    pub features: IndexMap<String, Value>,
    /// Replacements for the limit defaults.
    pub usage_limits: IndexMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AddOnDef {
    pub name: String,
    pub description: Option<String>,
    pub monthly_price: Decimal,
    pub available_for: Vec<String>,
    pub features: IndexMap<String, Value>,
    /// Added on top of the plan's limit values.
    pub usage_limit_extensions: IndexMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingDocument {
    pub saas_name: String,
    pub syntax_version: String,
    pub currency: String,
    pub features: IndexMap<String, FeatureDef>,
    pub usage_limits: IndexMap<String, UsageLimitDef>,
    pub plans: IndexMap<String, PlanDef>,
    pub add_ons: IndexMap<String, AddOnDef>,
}

impl PlanSchema for PricingDocument {
    fn feature_type(&self, name: &str) -> Option<ValueType> {
        self.features.get(name).map(|f| f.value_type)
    }

    fn has_limit(&self, name: &str) -> bool {
        self.usage_limits.contains_key(name)
    }
}

/// Machine-readable violation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    SchemaViolation,
    UnsupportedSyntaxVersion,
    InvalidCurrency,
    InvalidName,
    NoFeatures,
    NoPlans,
    TypeMismatch,
    NegativeLimit,
    NegativePrice,
    DanglingReference,
    EmptyLinkedFeatures,
    EmptyAvailableFor,
    ServerExpressionWithoutExpression,
    ExpressionError,
    UnknownPlanPath,
    UnknownPath,
    NonBooleanRoot,
    DuplicateName,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        use ViolationCode::*;
        match self {
            SchemaViolation => "SCHEMA_VIOLATION",
            UnsupportedSyntaxVersion => "UNSUPPORTED_SYNTAX_VERSION",
            InvalidCurrency => "INVALID_CURRENCY",
            InvalidName => "INVALID_NAME",
            NoFeatures => "NO_FEATURES",
            NoPlans => "NO_PLANS",
            TypeMismatch => "TYPE_MISMATCH",
            NegativeLimit => "NEGATIVE_LIMIT",
            NegativePrice => "NEGATIVE_PRICE",
            DanglingReference => "DANGLING_REFERENCE",
            EmptyLinkedFeatures => "EMPTY_LINKED_FEATURES",
            EmptyAvailableFor => "EMPTY_AVAILABLE_FOR",
            ServerExpressionWithoutExpression => "SERVER_EXPRESSION_WITHOUT_EXPRESSION",
            ExpressionError => "EXPRESSION_ERROR",
            UnknownPlanPath => "UNKNOWN_PLAN_PATH",
            UnknownPath => "UNKNOWN_PATH",
            NonBooleanRoot => "NON_BOOLEAN_ROOT",
            DuplicateName => "DUPLICATE_NAME",
        }
    }

    /// True for violations raised by an embedded expression.
    pub fn is_expression(self) -> bool {
        use ViolationCode::*;
        matches!(self, ExpressionError | UnknownPlanPath | UnknownPath | NonBooleanRoot)
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// Dotted location in the document, e.g. `plans.BASIC.features.ghost`.
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(code: ViolationCode, path: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            code,
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.path, self.code, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("{} violation(s), first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
}

impl SpecError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            SpecError::MalformedDocument(_) => &[],
            SpecError::Invalid(v) => v,
        }
    }
}

/// How a feature's availability is decided.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Expression(Expr),
    /// NUMERIC/TEXT feature with no expression: enabled iff its resolved
    /// value is non-zero / non-empty.
    ResolvedValue,
}

/// A validated pricing document.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingSpec {
    document: PricingDocument,
    fingerprint: String,
    gates: IndexMap<String, Gate>,
}

impl PricingSpec {
    /// Validates `document` and compiles its feature gates.
    pub fn new(document: PricingDocument) -> Result<Self, Vec<Violation>> {
        let violations = validate_spec(&document);
        if !violations.is_empty() {
            return Err(violations);
        }
        let gates = document
            .features
            .values()
            .map(|f| (f.name.clone(), compile_gate(f)))
            .collect();
        let fingerprint = fingerprint_of(&serialize_document(&document));
        Ok(PricingSpec {
            document,
            fingerprint,
            gates,
        })
    }

    pub fn document(&self) -> &PricingDocument {
        &self.document
    }

    pub fn into_document(self) -> PricingDocument {
        self.document
    }

    /// First 16 hex chars of the SHA-256 of the canonical serialization.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn features(&self) -> &IndexMap<String, FeatureDef> {
        &self.document.features
    }

    pub fn usage_limits(&self) -> &IndexMap<String, UsageLimitDef> {
        &self.document.usage_limits
    }

    pub fn plans(&self) -> &IndexMap<String, PlanDef> {
        &self.document.plans
    }

    pub fn add_ons(&self) -> &IndexMap<String, AddOnDef> {
        &self.document.add_ons
    }

    pub fn gate(&self, feature: &str) -> Option<&Gate> {
        self.gates.get(feature)
    }

    /// First limit, in document order, that lists `feature`.
    pub fn primary_limit_of(&self, feature: &str) -> Option<&UsageLimitDef> {
        self.document
            .usage_limits
            .values()
            .find(|l| l.linked_features.iter().any(|f| f == feature))
    }

    /// Returns a copy with one more plan, validated as a whole.
    pub fn with_plan(&self, plan: PlanDef) -> Result<PricingSpec, Vec<Violation>> {
        if self.document.plans.contains_key(&plan.name) {
            return Err(vec![Violation::new(
                ViolationCode::DuplicateName,
                format!("plans.{}", plan.name),
                format!("plan `{}` already exists", plan.name),
            )]);
        }
        let mut doc = self.document.clone();
        doc.plans.insert(plan.name.clone(), plan);
        PricingSpec::new(doc)
    }
}

fn compile_gate(feature: &FeatureDef) -> Gate {
    let source = feature.server_expression.as_ref().or(feature.expression.as_ref());
    match source {
        // validation already parsed it
        Some(src) => Gate::Expression(expr::parse_expression(src).expect("validated expression")),
        None if feature.value_type == ValueType::Boolean => Gate::Expression(Expr::cmp(
            CmpOp::Eq,
            Expr::path(Namespace::PlanContext, &["features", &feature.name]),
            Expr::Bool(true),
        )),
        None => Gate::ResolvedValue,
    }
}

/// Parses, validates and fingerprints a YAML pricing document.
pub fn parse_spec(yaml: &str) -> Result<PricingSpec, SpecError> {
    let document = parse_document(yaml)?;
    PricingSpec::new(document).map_err(SpecError::Invalid)
}

/// Canonical YAML text of a validated spec.
pub fn serialize_spec(spec: &PricingSpec) -> String {
    serialize_document(&spec.document)
}
