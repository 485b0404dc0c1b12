//! The Feature Checker: an HTTP gateway that verifies evaluation tokens,
//! enforces pricing gates and usage limits on configured routes, re-issues
//! tokens when a user's evaluation changes, and serves the admin API for
//! live pricing edits.

mod backend;
pub mod config;
mod http;

use std::future::Future;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::Router;
use pricing_gate_core::entitlement::validate_subscription;
use pricing_gate_core::store::load_snapshot;
use pricing_gate_core::token::MIN_SECRET_LEN;
use pricing_gate_core::{parse_spec, serialize_spec, PricingSpec, SpecError, StoreError, SubscriptionStore, Violation};
use tokio::net::TcpListener;

use crate::backend::Backend;
pub use crate::config::{validate_guards, Consumes, GatewayConfig, RouteGuard};

/// Response header carrying a re-issued token.
pub const PRICING_TOKEN_HEADER: &str = "pricing-token";

/// Seconds since the Unix epoch.
pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("pricing spec {}: {source}", path.display())]
    Spec { path: PathBuf, source: SpecError },
    #[error("invalid route guards:\n{}", join_lines(.0))]
    Guards(Vec<Violation>),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("stored subscription `{user}` is invalid: {reason}")]
    Subscription { user: String, reason: String },
}

fn join_lines(vs: &[Violation]) -> String {
    vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n")
}

/// The pricing spec in force plus the guards validated against it.
#[derive(Debug)]
pub struct ActiveSpec {
    pub spec: PricingSpec,
    pub guards: Vec<RouteGuard>,
}

pub(crate) struct AppState {
    active: RwLock<Arc<ActiveSpec>>,
    store: SubscriptionStore,
    admin_lock: tokio::sync::Mutex<()>,
    secret: Vec<u8>,
    token_ttl: u64,
    spec_path: PathBuf,
    store_path: PathBuf,
    admin_users: Vec<String>,
    cors_origins: Vec<String>,
    backend: Backend,
    clock: Clock,
}

impl AppState {
    pub(crate) fn active(&self) -> Arc<ActiveSpec> {
        self.active.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    fn swap(&self, next: ActiveSpec) {
        *self.active.write().unwrap_or_else(|p| p.into_inner()) = Arc::new(next);
    }

    pub(crate) fn now(&self) -> u64 {
        (self.clock)()
    }

    fn save_blocking(&self) -> Result<(), StoreError> {
        let fingerprint = self.active().spec.fingerprint().to_string();
        self.store.save_snapshot(&self.store_path, self.now(), &fingerprint)
    }
}

/// Writes the store snapshot before the caller responds. Failures are
/// logged and the store stays dirty for the periodic saver.
pub(crate) async fn persist(state: &Arc<AppState>) {
    let st = state.clone();
    match tokio::task::spawn_blocking(move || st.save_blocking()).await {
        Ok(Ok(())) => {}
        Ok(Err(e)) => tracing::error!(error = %e, "snapshot write failed"),
        Err(e) => tracing::error!(error = %e, "snapshot task panicked"),
    }
}

/// Replaces the spec file on disk atomically.
pub(crate) fn write_spec_file(path: &Path, spec: &PricingSpec) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(serialize_spec(spec).as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Validates a would-be spec against the guards and every stored subscription.
pub(crate) fn check_replacement(spec: &PricingSpec, guards: &[RouteGuard], store: &SubscriptionStore) -> Vec<Violation> {
    let mut out = validate_guards(spec, guards);
    for user in store.user_ids() {
        if let Ok(sub) = store.get_subscription(&user) {
            if let Err(e) = validate_subscription(spec, &sub) {
                out.push(Violation::new(
                    pricing_gate_core::pricing::ViolationCode::DanglingReference,
                    format!("subscriptions.{user}"),
                    e.to_string(),
                ));
            }
        }
    }
    out
}

#[derive(Clone)]
pub struct Gateway {
    state: Arc<AppState>,
    snapshot_interval: Duration,
}

impl Gateway {
    /// Loads and validates the spec, guards and store. Nothing is bound yet.
    pub fn from_config(config: GatewayConfig) -> Result<Self, GatewayError> {
        Self::with_clock(config, system_clock())
    }

    pub fn with_clock(config: GatewayConfig, clock: Clock) -> Result<Self, GatewayError> {
        if config.secret.len() < MIN_SECRET_LEN {
            return Err(GatewayError::Config(format!(
                "secret must be at least {MIN_SECRET_LEN} bytes (got {})",
                config.secret.len()
            )));
        }
        if config.token_ttl == 0 {
            return Err(GatewayError::Config("tokenTtl must be positive".into()));
        }
        let text = std::fs::read_to_string(&config.spec_path).map_err(|source| GatewayError::Io {
            path: config.spec_path.clone(),
            source,
        })?;
        let spec = parse_spec(&text).map_err(|source| GatewayError::Spec {
            path: config.spec_path.clone(),
            source,
        })?;
        let violations = validate_guards(&spec, &config.guards);
        if !violations.is_empty() {
            return Err(GatewayError::Guards(violations));
        }

        let store = if config.store_path.exists() {
            SubscriptionStore::from_snapshot(load_snapshot(&config.store_path)?)
        } else {
            let store = SubscriptionStore::new();
            for sub in &config.seed_subscriptions {
                store.put_subscription(&spec, sub.clone()).map_err(|e| GatewayError::Subscription {
                    user: sub.user_id.clone(),
                    reason: e.to_string(),
                })?;
            }
            store
        };
        for user in store.user_ids() {
            let sub = store.get_subscription(&user)?;
            validate_subscription(&spec, &sub).map_err(|e| GatewayError::Subscription {
                user,
                reason: e.to_string(),
            })?;
        }

        let backend = match &config.upstream {
            Some(url) => Backend::proxy(url).map_err(GatewayError::Config)?,
            None => Backend::demo(),
        };
        let state = AppState {
            active: RwLock::new(Arc::new(ActiveSpec {
                spec,
                guards: config.guards.clone(),
            })),
            store,
            admin_lock: tokio::sync::Mutex::new(()),
            secret: config.secret.into_bytes(),
            token_ttl: config.token_ttl,
            spec_path: config.spec_path,
            store_path: config.store_path,
            admin_users: config.admin_users,
            cors_origins: config.cors_origins,
            backend,
            clock,
        };
        Ok(Gateway {
            state: Arc::new(state),
            snapshot_interval: Duration::from_secs(config.snapshot_interval_secs.max(1)),
        })
    }

    pub fn router(&self) -> Router {
        http::router(self.state.clone())
    }

    pub fn active(&self) -> Arc<ActiveSpec> {
        self.state.active()
    }

    pub fn store(&self) -> &SubscriptionStore {
        &self.state.store
    }

    /// Saves the store snapshot now.
    pub fn save(&self) -> Result<(), StoreError> {
        self.state.save_blocking()
    }

    /// Serves until `shutdown` resolves, then writes a final snapshot.
    pub async fn serve<F>(self, listener: TcpListener, shutdown: F) -> Result<(), GatewayError>
    where
        F: Future<Output = ()> + Send + 'static,
    {
        let state = self.state.clone();
        let interval = self.snapshot_interval;
        let saver = tokio::spawn(async move {
            let mut tick = tokio::time::interval(interval);
            tick.tick().await;
            loop {
                tick.tick().await;
                if state.store.is_dirty() {
                    persist(&state).await;
                }
            }
        });
        let addr = listener.local_addr().ok();
        tracing::info!(?addr, fingerprint = %self.active().spec.fingerprint(), "gateway listening");
        let served = axum::serve(listener, self.router()).with_graceful_shutdown(shutdown).await;
        saver.abort();
        let st = self.state.clone();
        tokio::task::spawn_blocking(move || st.save_blocking())
            .await
            .map_err(|e| GatewayError::Config(format!("final snapshot task failed: {e}")))??;
        tracing::info!("store snapshot written, gateway stopped");
        served.map_err(|source| GatewayError::Io {
            path: PathBuf::from("<listener>"),
            source,
        })
    }
}
