//! Pricing-driven feature toggling.
//!
//! * [`pricing`]: the YAML pricing document (features, usage limits, plans,
//!   add-ons), its validation, canonical form and entitlement resolution.
//! * [`expr`]: the expression DSL that decides each feature's toggle.
//! * [`entitlement`]: per-user `{eval, used, limit}` evaluation maps.
//! * [`token`]: HS256 tokens carrying identity and evaluation maps.
//! * [`store`]: subscriptions, atomic usage counters and snapshots.

pub mod entitlement;
pub mod expr;
pub mod pricing;
pub mod store;
pub mod token;
pub mod value;

pub use entitlement::{
    diff_evaluations, evaluate_features, EvaluationDiff, EvaluationMap, FeatureEvaluation, FeatureMap, Subscription,
};
pub use pricing::{
    parse_spec, resolve_entitlements, serialize_spec, validate_spec, PricingSpec, ResolvedEntitlements, SpecError,
    Violation, ViolationCode,
};
pub use store::{Consumption, StoreError, SubscriptionStore};
pub use token::{mint, refresh_if_changed, verify, TokenClaims, TokenError};
pub use value::{Decimal, Value, ValueType};
