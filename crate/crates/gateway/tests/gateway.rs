mod common;

use std::sync::Arc;

use axum::http::{Method, StatusCode};
use common::{Harness, SECRET, T0};
use pricing_gate_core::store::load_snapshot;
use pricing_gate_core::{mint, parse_spec, serialize_spec, Decimal, PricingSpec, TokenClaims, Value};
use pricing_gate_gateway::{Gateway, GatewayError, RouteGuard};

fn with_basic_max_pets(yaml: &str, n: i64) -> String {
    let mut doc = parse_spec(yaml).unwrap().into_document();
    doc.plans
        .get_mut("BASIC")
        .unwrap()
        .usage_limits
        .insert("maxPets".into(), Value::from(n));
    serialize_spec(&PricingSpec::new(doc).unwrap())
}

#[tokio::test]
async fn healthz_reports_fingerprint() {
    let h = Harness::new();
    let r = h.send(Method::GET, "/healthz", None, None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["fingerprint"], h.gateway.active().spec.fingerprint());
}

#[tokio::test]
async fn login_issues_evaluated_token() {
    let h = Harness::new();
    let token = h.login("alice").await;
    let claims = pricing_gate_core::verify(&token, SECRET.as_bytes(), T0).unwrap();
    assert_eq!(claims.sub, "alice");
    assert_eq!(claims.roles, ["user"]);
    assert_eq!(claims.exp, T0 + 3600);
    assert_eq!(claims.pricing_fingerprint, h.gateway.active().spec.fingerprint());
    let pets = claims.features["pets"];
    assert!(pets.eval);
    assert_eq!((pets.used, pets.limit), (Some(0), Some(Decimal::from_int(2))));

    let r = h
        .send(Method::POST, "/api/login", None, Some(("application/json", r#"{"userId":"mallory"}"#.into())))
        .await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.json()["error"], "unknown_user");

    let root = pricing_gate_core::verify(&h.login("root").await, SECRET.as_bytes(), T0).unwrap();
    assert!(root.has_role("admin"));
    assert!(root.features.is_empty());
}

#[tokio::test]
async fn pet_lifecycle_reaches_limit() {
    let h = Harness::new();
    let token = h.login("alice").await;

    let first = h.post_pet(&token).await;
    assert_eq!(first.status, StatusCode::OK);
    let c1 = first.claims();
    assert_eq!(c1.features["pets"].used, Some(1));
    assert!(c1.features["pets"].eval);

    let second = h.post_pet(first.token.as_deref().unwrap()).await;
    assert_eq!(second.status, StatusCode::OK);
    let c2 = second.claims();
    assert_eq!(c2.features["pets"].used, Some(2));
    assert!(!c2.features["pets"].eval);

    let third = h.post_pet(second.token.as_deref().unwrap()).await;
    assert_eq!(third.status, StatusCode::FORBIDDEN);
    let body = third.json();
    assert_eq!(body["error"], "limit_exceeded");
    assert_eq!(body["feature"], "pets");
    assert_eq!(body["status"], 403);
    assert!(third.token.is_none());
    assert_eq!(h.gateway.store().get_subscription("alice").unwrap().used("maxPets"), 2);

    // the demo handler really ran twice
    let list = h.send(Method::GET, "/api/pets", Some(&token), None).await;
    assert_eq!(list.json()["items"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn stale_token_still_gets_limit_exceeded_and_refresh() {
    let h = Harness::new();
    let token = h.login("alice").await;
    h.post_pet(&token).await;
    h.post_pet(&token).await;
    // the original token still claims used=0
    let r = h.post_pet(&token).await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
    assert_eq!(r.json()["error"], "limit_exceeded");
    assert_eq!(r.claims().features["pets"].used, Some(2));
}

#[tokio::test]
async fn disabled_feature_is_refused_without_side_effects() {
    let h = Harness::new();
    let alice = h.login("alice").await;
    let r = h.send(Method::GET, "/api/consultations", Some(&alice), None).await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
    assert_eq!(r.json()["error"], "feature_disabled");
    assert_eq!(r.json()["feature"], "onlineConsultations");

    let bob = h.login("bob").await;
    let r = h.send(Method::GET, "/api/consultations", Some(&bob), None).await;
    assert_eq!(r.status, StatusCode::OK);
    // nothing changed, so no token is re-issued
    assert!(r.token.is_none());
}

#[tokio::test]
async fn path_parameters_and_visit_limit() {
    let h = Harness::new();
    let bob = h.login("bob").await;
    for i in 1..=3 {
        let r = h.send(Method::POST, "/api/pets/7/visits", Some(&bob), None).await;
        assert_eq!(r.status, StatusCode::OK, "visit {i}");
    }
    let r = h.send(Method::POST, "/api/pets/7/visits", Some(&bob), None).await;
    assert_eq!(r.json()["error"], "limit_exceeded");
    assert_eq!(r.json()["feature"], "visits");
    let sub = h.gateway.store().get_subscription("bob").unwrap();
    assert_eq!(sub.used("maxVisitsPerMonthAndPet"), 3);
}

#[tokio::test]
async fn bad_tokens_never_touch_the_store() {
    let h = Harness::new();
    let token = h.login("alice").await;

    let mut tampered = token.clone().into_bytes();
    let mid = token.find('.').unwrap() + 5;
    tampered[mid] = if tampered[mid] == b'A' { b'B' } else { b'A' };
    let tampered = String::from_utf8(tampered).unwrap();

    let forged_claims = TokenClaims {
        iss: "pricing-gate".into(),
        sub: "ghost".into(),
        iat: T0,
        exp: T0 + 60,
        roles: vec!["admin".into()],
        pricing_fingerprint: String::new(),
        features: Default::default(),
    };
    let forged = mint(&forged_claims, b"some-other-secret-some-other-sec").unwrap();

    for bad in [tampered.as_str(), forged.as_str(), "garbage", ""] {
        let r = h.post_pet(bad).await;
        assert_eq!(r.status, StatusCode::UNAUTHORIZED, "{bad}");
        assert_eq!(r.json()["error"], "token_invalid");
    }
    let r = h.send(Method::POST, "/api/pets", None, None).await;
    assert_eq!(r.json()["error"], "token_invalid");
    assert_eq!(h.gateway.store().get_subscription("alice").unwrap().used("maxPets"), 0);
    assert!(!h.dir.path().join("store.snapshot").exists());

    h.set_time(T0 + 3600);
    let r = h.post_pet(&token).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    assert_eq!(r.json()["error"], "token_expired");
}

#[tokio::test]
async fn unguarded_and_unknown_routes() {
    let h = Harness::new();
    let token = h.login("alice").await;
    let r = h.send(Method::GET, "/api/owners", Some(&token), None).await;
    assert_eq!(r.status, StatusCode::OK);
    let r = h.send(Method::GET, "/elsewhere", Some(&token), None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);

    h.gateway
        .store()
        .put_subscription(&h.gateway.active().spec, pricing_gate_core::Subscription::new("carol", "BASIC"))
        .unwrap();
    let carol = h.login("carol").await;
    // validly signed, but for a subject with no subscription
    let claims = TokenClaims {
        sub: "nobody".into(),
        ..pricing_gate_core::verify(&carol, SECRET.as_bytes(), T0).unwrap()
    };
    let orphan = mint(&claims, SECRET.as_bytes()).unwrap();
    let r = h.post_pet(&orphan).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.json()["error"], "unknown_user");
}

#[tokio::test]
async fn me_features_bootstraps_and_refreshes() {
    let h = Harness::new();
    let token = h.login("alice").await;
    let r = h.send(Method::GET, "/api/me/features", Some(&token), None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert!(r.token.is_none());
    let body = r.json();
    assert_eq!(body["pets"], serde_json::json!({"eval": true, "used": 0, "limit": 2}));
    assert_eq!(body["onlineConsultations"], serde_json::json!({"eval": false, "used": null, "limit": null}));
    let keys: Vec<_> = body.as_object().unwrap().keys().cloned().collect();
    assert_eq!(
        keys,
        ["pets", "visits", "onlineConsultations", "vetSelection", "supportPriority", "historyMonths"]
    );

    h.post_pet(&token).await;
    let r = h.send(Method::GET, "/api/me/features", Some(&token), None).await;
    assert_eq!(r.claims().features["pets"].used, Some(1));
}

#[tokio::test]
async fn admin_routes_require_admin_role() {
    let h = Harness::new();
    let alice = h.login("alice").await;
    for (method, uri) in [
        (Method::GET, "/admin/pricing"),
        (Method::PUT, "/admin/pricing"),
        (Method::POST, "/admin/plans"),
        (Method::GET, "/admin/users/alice/subscription"),
        (Method::PUT, "/admin/users/alice/subscription"),
        (Method::POST, "/admin/users/alice/usage/maxPets/reset"),
    ] {
        let r = h.send(method.clone(), uri, None, None).await;
        assert_eq!(r.status, StatusCode::UNAUTHORIZED, "{method} {uri}");
        let r = h.send(method.clone(), uri, Some(&alice), None).await;
        assert_eq!(r.status, StatusCode::FORBIDDEN, "{method} {uri}");
        assert_eq!(r.json()["error"], "forbidden");
    }
}

#[tokio::test]
async fn live_pricing_update_unblocks_user() {
    let h = Harness::new();
    let root = h.login("root").await;
    let token = h.login("alice").await;
    h.post_pet(&token).await;
    h.post_pet(&token).await;
    assert_eq!(h.post_pet(&token).await.json()["error"], "limit_exceeded");

    let current = h.get_pricing(&root).await;
    let old_fp = h.gateway.active().spec.fingerprint().to_string();
    let r = h.put_pricing(&root, with_basic_max_pets(&current, 3)).await;
    assert_eq!(r.status, StatusCode::NO_CONTENT, "{}", r.text());

    let r = h.post_pet(&token).await;
    assert_eq!(r.status, StatusCode::OK);
    let claims = r.claims();
    assert_eq!(claims.features["pets"].used, Some(3));
    assert_eq!(claims.features["pets"].limit, Some(Decimal::from_int(3)));
    assert_ne!(claims.pricing_fingerprint, old_fp);
    assert_eq!(claims.pricing_fingerprint, h.gateway.active().spec.fingerprint());

    // persisted canonically, so a restart keeps the edit
    let on_disk = std::fs::read_to_string(h.dir.path().join("pricing.yml")).unwrap();
    assert_eq!(on_disk, h.get_pricing(&root).await);
    let r = h.send(Method::GET, "/admin/pricing", Some(&root), None).await;
    assert_eq!(r.content_type.as_deref(), Some("application/yaml"));
}

#[tokio::test]
async fn rejected_pricing_keeps_old_document() {
    let h = Harness::new();
    let root = h.login("root").await;
    let before = h.get_pricing(&root).await;

    let dangling = before.replace(r#"linkedFeatures: ["pets"]"#, r#"linkedFeatures: ["ghost"]"#);
    assert_ne!(dangling, before);
    let r = h.put_pricing(&root, dangling).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let body = r.json();
    assert_eq!(body["error"], "invalid_pricing");
    assert!(body["violations"]
        .as_array()
        .unwrap()
        .iter()
        .any(|v| v["code"] == "DANGLING_REFERENCE"));

    let r = h.put_pricing(&root, "features: [".into()).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);

    // valid on its own, but a guard consumes maxPets for pets
    let mut doc = parse_spec(&before).unwrap().into_document();
    doc.usage_limits.get_mut("maxPets").unwrap().linked_features = vec!["visits".into()];
    doc.usage_limits.get_mut("maxVisitsPerMonthAndPet").unwrap().linked_features = vec!["visits".into()];
    let r = h.put_pricing(&root, serialize_spec(&PricingSpec::new(doc).unwrap())).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["violations"][0]["path"], "guards[0].consumes.limit");

    // valid on its own, but alice and bob would be orphaned
    let mut doc = parse_spec(&before).unwrap().into_document();
    doc.plans.shift_remove("BASIC");
    doc.add_ons.get_mut("prioritySupport").unwrap().available_for.retain(|p| p != "BASIC");
    let r = h.put_pricing(&root, serialize_spec(&PricingSpec::new(doc).unwrap())).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["violations"][0]["path"], "subscriptions.alice");

    assert_eq!(h.get_pricing(&root).await, before);
}

#[tokio::test]
async fn subscription_admin() {
    let h = Harness::new();
    let root = h.login("root").await;
    let alice = h.login("alice").await;
    h.post_pet(&alice).await;

    let r = h.send(Method::GET, "/admin/users/alice/subscription", Some(&root), None).await;
    let mut sub = r.json();
    assert_eq!(sub["plan"], "BASIC");
    assert_eq!(sub["usage"]["maxPets"], 1);

    sub["plan"] = "GOLD".into();
    let r = h
        .send(
            Method::PUT,
            "/admin/users/alice/subscription",
            Some(&root),
            Some(("application/json", sub.to_string())),
        )
        .await;
    assert_eq!(r.status, StatusCode::NO_CONTENT, "{}", r.text());
    let r = h.send(Method::GET, "/api/me/features", Some(&alice), None).await;
    assert_eq!(r.json()["onlineConsultations"]["eval"], true);
    assert_eq!(r.json()["pets"]["used"], 1);
    assert!(r.claims().features["onlineConsultations"].eval);

    for (uri, body, status) in [
        ("/admin/users/alice/subscription", r#"{"userId":"bob","plan":"GOLD"}"#, 422),
        ("/admin/users/alice/subscription", r#"{"userId":"alice","plan":"DIAMOND"}"#, 422),
        ("/admin/users/alice/subscription", r#"{"userId":"alice","plan":"GOLD","x":1}"#, 422),
        ("/admin/users/dave/subscription", r#"{"userId":"dave","plan":"PLATINUM"}"#, 204),
    ] {
        let r = h
            .send(Method::PUT, uri, Some(&root), Some(("application/json", body.into())))
            .await;
        assert_eq!(r.status.as_u16(), status, "{body}: {}", r.text());
    }
    let r = h.send(Method::GET, "/admin/users/nobody/subscription", Some(&root), None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.json()["error"], "unknown_user");
}

#[tokio::test]
async fn usage_reset_reopens_limit() {
    let h = Harness::new();
    let root = h.login("root").await;
    let token = h.login("alice").await;
    h.post_pet(&token).await;
    h.post_pet(&token).await;
    assert_eq!(h.post_pet(&token).await.status, StatusCode::FORBIDDEN);

    let r = h.send(Method::POST, "/admin/users/alice/usage/maxPets/reset", Some(&root), None).await;
    assert_eq!(r.status, StatusCode::NO_CONTENT);
    assert_eq!(h.post_pet(&token).await.status, StatusCode::OK);

    let r = h.send(Method::POST, "/admin/users/alice/usage/maxCats/reset", Some(&root), None).await;
    assert_eq!(r.json()["error"], "unknown_limit");
    let r = h.send(Method::POST, "/admin/users/zed/usage/maxPets/reset", Some(&root), None).await;
    assert_eq!(r.json()["error"], "unknown_user");
}

#[tokio::test]
async fn plan_addition() {
    let h = Harness::new();
    let root = h.login("root").await;
    let plan = "DIAMOND:\n  monthlyPrice: 30\n  usageLimits:\n    maxPets: { value: 50 }\n";
    let r = h
        .send(Method::POST, "/admin/plans", Some(&root), Some(("application/yaml", plan.into())))
        .await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    assert!(h.get_pricing(&root).await.contains("DIAMOND"));

    let r = h
        .send(Method::POST, "/admin/plans", Some(&root), Some(("application/yaml", plan.into())))
        .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["violations"][0]["code"], "DUPLICATE_NAME");

    let bad = "RUBY:\n  monthlyPrice: 1\n  features:\n    ghost: { value: true }\n";
    let r = h
        .send(Method::POST, "/admin/plans", Some(&root), Some(("application/yaml", bad.into())))
        .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);

    let r = h
        .send(
            Method::PUT,
            "/admin/users/alice/subscription",
            Some(&root),
            Some(("application/json", r#"{"userId":"alice","plan":"DIAMOND"}"#.into())),
        )
        .await;
    assert_eq!(r.status, StatusCode::NO_CONTENT);
    let token = h.login("alice").await;
    let r = h.send(Method::GET, "/api/me/features", Some(&token), None).await;
    assert_eq!(r.json()["pets"]["limit"], 50);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn concurrent_requests_never_overshoot() {
    let h = Arc::new(Harness::new());
    let root = h.login("root").await;
    let plan = "BULK:\n  monthlyPrice: 9\n  usageLimits:\n    maxPets: { value: 50 }\n";
    h.send(Method::POST, "/admin/plans", Some(&root), Some(("application/yaml", plan.into())))
        .await;
    h.send(
        Method::PUT,
        "/admin/users/alice/subscription",
        Some(&root),
        Some(("application/json", r#"{"userId":"alice","plan":"BULK"}"#.into())),
    )
    .await;
    let token = Arc::new(h.login("alice").await);
    let tasks: Vec<_> = (0..100)
        .map(|_| {
            let (h, token) = (h.clone(), token.clone());
            tokio::spawn(async move { h.post_pet(&token).await })
        })
        .collect();
    let (mut ok, mut exceeded) = (0, 0);
    for t in tasks {
        let r = t.await.unwrap();
        match r.status {
            StatusCode::OK => ok += 1,
            StatusCode::FORBIDDEN if r.json()["error"] == "limit_exceeded" => exceeded += 1,
            other => panic!("unexpected {other}: {}", r.text()),
        }
    }
    assert_eq!((ok, exceeded), (50, 50));
    assert_eq!(h.gateway.store().get_subscription("alice").unwrap().used("maxPets"), 50);
}

#[tokio::test]
async fn usage_is_written_through_and_survives_restart() {
    let h = Harness::new();
    let token = h.login("alice").await;
    h.post_pet(&token).await;
    h.post_pet(&token).await;
    let snap = load_snapshot(&h.dir.path().join("store.snapshot")).unwrap();
    assert_eq!(snap.subscriptions["alice"].used("maxPets"), 2);
    assert_eq!(snap.spec_fingerprint, h.gateway.active().spec.fingerprint());

    let Harness { dir, .. } = h;
    let cfg = common::config(dir.path());
    let restarted = Harness::open(dir, cfg);
    assert_eq!(restarted.gateway.store().get_subscription("alice").unwrap().used("maxPets"), 2);
    let r = restarted.post_pet(&token).await;
    assert_eq!(r.json()["error"], "limit_exceeded");
}

#[test]
fn startup_rejects_bad_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::config(dir.path());
    cfg.guards.push(RouteGuard {
        method: "GET".into(),
        path_pattern: "/api/grooming".into(),
        feature: "grooming".into(),
        consumes: None,
    });
    match Gateway::from_config(cfg) {
        Err(GatewayError::Guards(vs)) => assert_eq!(vs[0].path, "guards[3].feature"),
        other => panic!("{:?}", other.err()),
    }

    let mut cfg = common::config(dir.path());
    cfg.secret = "short".into();
    assert!(matches!(Gateway::from_config(cfg), Err(GatewayError::Config(_))));

    let mut cfg = common::config(dir.path());
    cfg.seed_subscriptions[0].plan = "DIAMOND".into();
    assert!(matches!(Gateway::from_config(cfg), Err(GatewayError::Subscription { .. })));

    let cfg = common::config(dir.path());
    std::fs::write(&cfg.store_path, "pricing-gate-store v1\n{}\ncrc32 00000000\n").unwrap();
    assert!(matches!(Gateway::from_config(cfg), Err(GatewayError::Store(_))));
}

#[tokio::test]
async fn cors_exposes_pricing_token() {
    use axum::body::Body;
    use axum::http::Request;
    use tower::ServiceExt;

    let h = Harness::with(|c| c.cors_origins = vec!["http://localhost:5173".into()]);
    let req = Request::builder()
        .method(Method::GET)
        .uri("/healthz")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = h.app.clone().oneshot(req).await.unwrap();
    let headers = resp.headers();
    assert_eq!(headers["access-control-allow-origin"], "http://localhost:5173");
    assert_eq!(headers["access-control-expose-headers"], "pricing-token");

    let req = Request::builder()
        .method(Method::GET)
        .uri("/healthz")
        .header("origin", "http://evil.example")
        .body(Body::empty())
        .unwrap();
    let resp = h.app.clone().oneshot(req).await.unwrap();
    assert!(resp.headers().get("access-control-allow-origin").is_none());
}
