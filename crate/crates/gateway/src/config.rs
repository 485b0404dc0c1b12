use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use pricing_gate_core::pricing::ViolationCode;
use pricing_gate_core::{PricingSpec, Subscription, Violation};
use serde::{Deserialize, Serialize};

use crate::GatewayError;

pub const ENV_SECRET: &str = "PRICING_GATE_SECRET";
pub const ENV_PORT: &str = "PRICING_GATE_PORT";
pub const ENV_SPEC: &str = "PRICING_GATE_SPEC";

/// Usage a guarded route charges before its handler runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Consumes {
    pub limit: String,
    #[serde(default = "one")]
    pub amount: u64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RouteGuard {
    pub method: String,
    pub path_pattern: String,
    pub feature: String,
    #[serde(default)]
    pub consumes: Option<Consumes>,
}

impl RouteGuard {
    /// Literal segments must match exactly, `{param}` segments match any
    /// single non-empty segment.
    pub fn matches(&self, method: &str, path: &str) -> bool {
        if !self.method.eq_ignore_ascii_case(method) {
            return false;
        }
        let mut pattern = self.path_pattern.trim_end_matches('/').split('/');
        let mut actual = path.trim_end_matches('/').split('/');
        loop {
            match (pattern.next(), actual.next()) {
                (None, None) => return true,
                (Some(p), Some(a)) if is_param(p) => {
                    if a.is_empty() {
                        return false;
                    }
                }
                (Some(p), Some(a)) if p == a => {}
                _ => return false,
            }
        }
    }
}

fn is_param(segment: &str) -> bool {
    segment.len() > 2 && segment.starts_with('{') && segment.ends_with('}')
}

/// Checks every guard against `spec`; violations are reported under
/// `guards[i]`.
pub fn validate_guards(spec: &PricingSpec, guards: &[RouteGuard]) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, g) in guards.iter().enumerate() {
        let at = |field: &str| format!("guards[{i}].{field}");
        if !matches!(
            g.method.to_ascii_uppercase().as_str(),
            "GET" | "POST" | "PUT" | "PATCH" | "DELETE"
        ) {
            out.push(Violation::new(
                ViolationCode::SchemaViolation,
                at("method"),
                format!("unsupported method `{}`", g.method),
            ));
        }
        if !g.path_pattern.starts_with('/') {
            out.push(Violation::new(
                ViolationCode::SchemaViolation,
                at("pathPattern"),
                "pattern must start with `/`",
            ));
        }
        if !spec.features().contains_key(&g.feature) {
            out.push(Violation::new(
                ViolationCode::DanglingReference,
                at("feature"),
                format!("feature `{}` is not declared", g.feature),
            ));
        }
        if let Some(c) = &g.consumes {
            if c.amount == 0 {
                out.push(Violation::new(
                    ViolationCode::SchemaViolation,
                    at("consumes.amount"),
                    "amount must be positive",
                ));
            }
            match spec.usage_limits().get(&c.limit) {
                None => out.push(Violation::new(
                    ViolationCode::DanglingReference,
                    at("consumes.limit"),
                    format!("usage limit `{}` is not declared", c.limit),
                )),
                Some(l) if !l.linked_features.contains(&g.feature) => out.push(Violation::new(
                    ViolationCode::DanglingReference,
                    at("consumes.limit"),
                    format!("usage limit `{}` is not linked to `{}`", c.limit, g.feature),
                )),
                Some(_) => {}
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default = "default_port")]
    pub listen_port: u16,
    #[serde(default)]
    pub secret: String,
    #[serde(default = "default_ttl")]
    pub token_ttl: u64,
    pub spec_path: PathBuf,
    pub store_path: PathBuf,
    #[serde(default)]
    pub guards: Vec<RouteGuard>,
    /// Reverse-proxy target; `None` serves the built-in demo handlers.
    #[serde(default)]
    pub upstream: Option<String>,
    /// Users whose demo login carries the `admin` role.
    #[serde(default)]
    pub admin_users: Vec<String>,
    /// Loaded when no snapshot exists yet.
    #[serde(default)]
    pub seed_subscriptions: Vec<Subscription>,
    #[serde(default)]
    pub cors_origins: Vec<String>,
    #[serde(default = "default_interval")]
    pub snapshot_interval_secs: u64,
}

fn default_port() -> u16 {
    8080
}

fn default_ttl() -> u64 {
    pricing_gate_core::token::DEFAULT_TTL_SECS
}

fn default_interval() -> u64 {
    30
}

impl GatewayConfig {
    /// Reads a YAML config file. Relative paths resolve against the file's
    /// directory; environment overrides are applied afterwards.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path).map_err(|source| GatewayError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: GatewayConfig =
            serde_yaml::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.spec_path = base.join(&config.spec_path);
        config.store_path = base.join(&config.store_path);
        config.apply_env(|k| env::var(k).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), GatewayError> {
        if let Some(secret) = var(ENV_SECRET) {
            self.secret = secret;
        }
        if let Some(port) = var(ENV_PORT) {
            self.listen_port = port
                .parse()
                .map_err(|_| GatewayError::Config(format!("{ENV_PORT}: `{port}` is not a port number")))?;
        }
        if let Some(spec) = var(ENV_SPEC) {
            self.spec_path = PathBuf::from(spec);
        }
        Ok(())
    }
}
