#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use pricing_gate_core::{verify, Subscription, TokenClaims};
use pricing_gate_gateway::{Consumes, Gateway, GatewayConfig, RouteGuard, PRICING_TOKEN_HEADER};
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

pub const SECRET: &str = "test-secret-test-secret-test-sec";
pub const T0: u64 = 1_700_000_000;

pub fn fixture_spec() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/petclinic.pricing.yml")
}

pub fn guards() -> Vec<RouteGuard> {
    vec![
        RouteGuard {
            method: "POST".into(),
            path_pattern: "/api/pets".into(),
            feature: "pets".into(),
            consumes: Some(Consumes {
                limit: "maxPets".into(),
                amount: 1,
            }),
        },
        RouteGuard {
            method: "POST".into(),
            path_pattern: "/api/pets/{petId}/visits".into(),
            feature: "visits".into(),
            consumes: Some(Consumes {
                limit: "maxVisitsPerMonthAndPet".into(),
                amount: 1,
            }),
        },
        RouteGuard {
            method: "GET".into(),
            path_pattern: "/api/consultations".into(),
            feature: "onlineConsultations".into(),
            consumes: None,
        },
    ]
}

pub fn config(dir: &Path) -> GatewayConfig {
    let spec_path = dir.join("pricing.yml");
    if !spec_path.exists() {
        std::fs::copy(fixture_spec(), &spec_path).unwrap();
    }
    GatewayConfig {
        listen_port: 0,
        secret: SECRET.into(),
        token_ttl: 3600,
        spec_path,
        store_path: dir.join("store.snapshot"),
        guards: guards(),
        upstream: None,
        admin_users: vec!["root".into()],
        seed_subscriptions: vec![Subscription::new("alice", "BASIC"), Subscription::new("bob", "GOLD")],
        cors_origins: vec![],
        snapshot_interval_secs: 30,
    }
}

pub struct Harness {
    pub dir: TempDir,
    pub gateway: Gateway,
    pub app: Router,
    pub clock: Arc<AtomicU64>,
}

pub struct Reply {
    pub status: StatusCode,
    pub token: Option<String>,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }

    pub fn claims(&self) -> TokenClaims {
        verify(self.token.as_deref().expect("Pricing-Token header"), SECRET.as_bytes(), T0).unwrap()
    }
}

impl Harness {
    pub fn new() -> Self {
        Self::with(|_| {})
    }

    pub fn with(tweak: impl FnOnce(&mut GatewayConfig)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(dir.path());
        tweak(&mut cfg);
        Self::open(dir, cfg)
    }

    pub fn open(dir: TempDir, cfg: GatewayConfig) -> Self {
        let clock = Arc::new(AtomicU64::new(T0));
        let c = clock.clone();
        let gateway = Gateway::with_clock(cfg, Arc::new(move || c.load(Ordering::SeqCst))).unwrap();
        let app = gateway.router();
        Harness {
            dir,
            gateway,
            app,
            clock,
        }
    }

    pub fn set_time(&self, t: u64) {
        self.clock.store(t, Ordering::SeqCst);
    }

    pub async fn send(&self, method: Method, uri: &str, token: Option<&str>, body: Option<(&str, String)>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        let req = match body {
            Some((ct, b)) => req.header(header::CONTENT_TYPE, ct).body(Body::from(b)),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let token = resp
            .headers()
            .get(PRICING_TOKEN_HEADER)
            .map(|v| v.to_str().unwrap().to_string());
        let content_type = resp
            .headers()
            .get(header::CONTENT_TYPE)
            .map(|v| v.to_str().unwrap().to_string());
        let body = to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec();
        Reply {
            status,
            token,
            content_type,
            body,
        }
    }

    pub async fn login(&self, user: &str) -> String {
        let r = self
            .send(
                Method::POST,
                "/api/login",
                None,
                Some(("application/json", format!(r#"{{"userId":"{user}"}}"#))),
            )
            .await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text());
        r.json()["token"].as_str().unwrap().to_string()
    }

    pub async fn post_pet(&self, token: &str) -> Reply {
        self.send(
            Method::POST,
            "/api/pets",
            Some(token),
            Some(("application/json", r#"{"name":"Rex"}"#.into())),
        )
        .await
    }

    pub async fn put_pricing(&self, admin: &str, yaml: String) -> Reply {
        self.send(Method::PUT, "/admin/pricing", Some(admin), Some(("application/yaml", yaml)))
            .await
    }

    pub async fn get_pricing(&self, admin: &str) -> String {
        let r = self.send(Method::GET, "/admin/pricing", Some(admin), None).await;
        assert_eq!(r.status, StatusCode::OK);
        r.text()
    }
}
