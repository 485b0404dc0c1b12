use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pricing_gate_core::entitlement::EvaluationMap;
use pricing_gate_core::pricing::{parse_plan_fragment, resolve_entitlements};
use pricing_gate_core::{
    evaluate_features, mint, parse_spec, refresh_if_changed, serialize_spec, verify, Consumption, Decimal,
    SpecError, StoreError, Subscription, TokenClaims, TokenError, Violation,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::{check_replacement, persist, write_spec_file, ActiveSpec, AppState, PRICING_TOKEN_HEADER};

/// JSON error body: `{"error", "feature", "detail", "status"}`, plus
/// `violations` on validation failures.
#[derive(Debug)]
pub(crate) struct ApiError {
    status: StatusCode,
    code: &'static str,
    feature: Option<String>,
    detail: String,
    violations: Option<Vec<Violation>>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    feature: Option<&'a str>,
    detail: &'a str,
    status: u16,
    #[serde(skip_serializing_if = "Option::is_none")]
    violations: Option<&'a [Violation]>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, detail: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            feature: None,
            detail: detail.into(),
            violations: None,
        }
    }

    fn with_feature(mut self, feature: &str) -> Self {
        self.feature = Some(feature.to_string());
        self
    }

    pub(crate) fn bad_request(detail: String) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", detail)
    }

    pub(crate) fn upstream(detail: String) -> Self {
        ApiError::new(StatusCode::BAD_GATEWAY, "upstream_unreachable", detail)
    }

    fn unknown_user(user: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_user", format!("no subscription for `{user}`"))
    }

    fn internal(detail: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", detail)
    }

    fn invalid(code: &'static str, detail: impl Into<String>, violations: Vec<Violation>) -> Self {
        let mut e = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, detail);
        e.violations = Some(violations);
        e
    }
}

impl From<TokenError> for ApiError {
    fn from(e: TokenError) -> Self {
        match e {
            TokenError::Expired => ApiError::new(StatusCode::UNAUTHORIZED, "token_expired", e.to_string()),
            _ => ApiError::new(StatusCode::UNAUTHORIZED, "token_invalid", e.to_string()),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownUser(ref u) => ApiError::unknown_user(u),
            StoreError::UnknownLimit(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_limit", e.to_string()),
            StoreError::InvalidSubscription(_) => {
                ApiError::invalid("invalid_subscription", e.to_string(), Vec::new())
            }
            _ => ApiError::internal(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code,
            feature: self.feature.as_deref(),
            detail: &self.detail,
            status: self.status.as_u16(),
            violations: self.violations.as_deref(),
        };
        (self.status, Json(body)).into_response()
    }
}

type Shared = Arc<AppState>;

pub(crate) fn router(state: Shared) -> Router {
    let cors = cors_layer(&state.cors_origins);
    let router = Router::new()
        .route("/healthz", get(healthz))
        .route("/api/login", post(login))
        .route("/api/me/features", get(my_features))
        .route("/admin/pricing", get(get_pricing).put(put_pricing))
        .route("/admin/plans", post(add_plan))
        .route("/admin/users/{id}/subscription", get(get_subscription).put(put_subscription))
        .route("/admin/users/{id}/usage/{limit}/reset", post(reset_usage))
        .fallback(guarded)
        .with_state(state);
    match cors {
        Some(layer) => router.layer(layer),
        None => router,
    }
}

fn cors_layer(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    Some(
        CorsLayer::new()
            .allow_origin(allow)
            .allow_methods([Method::GET, Method::POST, Method::PUT, Method::PATCH, Method::DELETE])
            .allow_headers([header::AUTHORIZATION, header::CONTENT_TYPE])
            .expose_headers([header::HeaderName::from_static(PRICING_TOKEN_HEADER)]),
    )
}

fn authenticate(state: &AppState, headers: &HeaderMap) -> Result<TokenClaims, ApiError> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "token_invalid", "missing bearer token"))?;
    Ok(verify(token.trim(), &state.secret, state.now())?)
}

fn require_admin(state: &AppState, headers: &HeaderMap) -> Result<TokenClaims, ApiError> {
    let claims = authenticate(state, headers)?;
    if !claims.has_role("admin") {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "forbidden", "admin role required"));
    }
    Ok(claims)
}

fn evaluate(active: &ActiveSpec, sub: &Subscription) -> Result<EvaluationMap, ApiError> {
    evaluate_features(&active.spec, sub).map_err(|e| ApiError::internal(format!("stored subscription unusable: {e}")))
}

fn empty_map(active: &ActiveSpec) -> EvaluationMap {
    EvaluationMap {
        entries: Default::default(),
        spec_fingerprint: active.spec.fingerprint().to_string(),
    }
}

/// Attaches a re-issued token when `map` differs from what `claims` carry.
fn refresh(state: &AppState, claims: &TokenClaims, map: &EvaluationMap, response: &mut Response) {
    match refresh_if_changed(claims, map, &state.secret, state.now(), state.token_ttl) {
        Ok(Some(issued)) => {
            if let Ok(v) = HeaderValue::from_str(&issued.token) {
                response.headers_mut().insert(PRICING_TOKEN_HEADER, v);
            }
        }
        Ok(None) => {}
        Err(e) => tracing::error!(error = %e, "token refresh failed"),
    }
}

async fn healthz(State(state): State<Shared>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "fingerprint": state.active().spec.fingerprint() }))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct LoginRequest {
    user_id: String,
}

async fn login(State(state): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let req: LoginRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("expected {{\"userId\"}}: {e}")))?;
    let active = state.active();
    let is_admin = state.admin_users.contains(&req.user_id);
    let map = match state.store.get_subscription(&req.user_id) {
        Ok(sub) => evaluate(&active, &sub)?,
        Err(_) if is_admin => empty_map(&active),
        Err(_) => return Err(ApiError::unknown_user(&req.user_id)),
    };
    let mut roles = vec!["user".to_string()];
    if is_admin {
        roles.push("admin".into());
    }
    let claims = TokenClaims::issue(&req.user_id, roles, &map, state.now(), state.token_ttl);
    let token = mint(&claims, &state.secret).map_err(|e| ApiError::internal(e.to_string()))?;
    let mut response = Json(json!({ "token": token, "features": map.entries })).into_response();
    if let Ok(v) = HeaderValue::from_str(&token) {
        response.headers_mut().insert(PRICING_TOKEN_HEADER, v);
    }
    Ok(response)
}

async fn my_features(State(state): State<Shared>, headers: HeaderMap) -> Result<Response, ApiError> {
    let claims = authenticate(&state, &headers)?;
    let active = state.active();
    let map = match state.store.get_subscription(&claims.sub) {
        Ok(sub) => evaluate(&active, &sub)?,
        Err(_) if claims.has_role("admin") => empty_map(&active),
        Err(_) => return Err(ApiError::unknown_user(&claims.sub)),
    };
    let mut response = Json(&map.entries).into_response();
    refresh(&state, &claims, &map, &mut response);
    Ok(response)
}

/// Everything not routed above: token check, gate, consumption, handler,
/// token refresh.
async fn guarded(State(state): State<Shared>, req: Request) -> Response {
    match pipeline(&state, req).await {
        Ok(r) | Err(r) => r,
    }
}

async fn pipeline(state: &Shared, req: Request) -> Result<Response, Response> {
    let path = req.uri().path().to_string();
    if !path.starts_with("/api/") {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no route for {path}")).into_response());
    }
    let claims = authenticate(state, req.headers()).map_err(IntoResponse::into_response)?;
    let active = state.active();
    let guard = active.guards.iter().find(|g| g.matches(req.method().as_str(), &path));
    let sub = state
        .store
        .get_subscription(&claims.sub)
        .map_err(|_| ApiError::unknown_user(&claims.sub).into_response())?;
    let map = evaluate(&active, &sub).map_err(IntoResponse::into_response)?;

    let denied = |e: ApiError| {
        let mut r = e.into_response();
        refresh(state, &claims, &map, &mut r);
        r
    };
    let mut consumed = None;
    if let Some(guard) = guard {
        let feature = guard.feature.as_str();
        let cap = match &guard.consumes {
            Some(c) => {
                let resolved = resolve_entitlements(&active.spec, &sub.plan, &sub.add_ons)
                    .map_err(|e| ApiError::internal(e.to_string()).into_response())?;
                Some(resolved.limit_values.get(&c.limit).copied().unwrap_or(Decimal::from_int(0)))
            }
            None => None,
        };
        let enabled = map.entries.get(feature).is_some_and(|e| e.eval);
        if !enabled {
            let over = match (&guard.consumes, cap) {
                (Some(c), Some(cap)) => Decimal::from(sub.used(&c.limit).saturating_add(c.amount)) > cap,
                _ => false,
            };
            let e = if over {
                limit_exceeded(feature)
            } else {
                ApiError::new(StatusCode::FORBIDDEN, "feature_disabled", format!("`{feature}` is not enabled"))
                    .with_feature(feature)
            };
            return Err(denied(e));
        }
        if let (Some(c), Some(cap)) = (&guard.consumes, cap) {
            match state.store.try_consume(&active.spec, &claims.sub, &c.limit, c.amount, cap) {
                Ok(Consumption::Consumed(_)) => {
                    persist(state).await;
                    consumed = Some(c);
                }
                Ok(Consumption::Denied(_)) => return Err(denied(limit_exceeded(feature))),
                Err(e) => return Err(ApiError::from(e).into_response()),
            }
        }
    }

    let mut response = state.backend.execute(&claims.sub, req).await;

    let after = match consumed {
        Some(c) => {
            if response.status().is_server_error() {
                match state.store.refund(&claims.sub, &c.limit, c.amount) {
                    Ok(n) => tracing::warn!(user = %claims.sub, limit = %c.limit, used = n, "refunded after upstream failure"),
                    Err(e) => tracing::error!(error = %e, "refund failed"),
                }
                persist(state).await;
            }
            match state.store.get_subscription(&claims.sub) {
                Ok(sub) => evaluate(&active, &sub).map_err(IntoResponse::into_response)?,
                Err(_) => map,
            }
        }
        None => map,
    };
    refresh(state, &claims, &after, &mut response);
    Ok(response)
}

fn limit_exceeded(feature: &str) -> ApiError {
    ApiError::new(StatusCode::FORBIDDEN, "limit_exceeded", format!("usage limit of `{feature}` reached"))
        .with_feature(feature)
}

fn yaml(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/yaml")], body).into_response()
}

async fn get_pricing(State(state): State<Shared>, headers: HeaderMap) -> Result<Response, ApiError> {
    require_admin(&state, &headers)?;
    Ok(yaml(serialize_spec(&state.active().spec)))
}

fn spec_rejected(e: SpecError) -> ApiError {
    match e {
        SpecError::MalformedDocument(m) => ApiError::invalid("invalid_pricing", m, Vec::new()),
        SpecError::Invalid(vs) => ApiError::invalid("invalid_pricing", format!("{} violation(s)", vs.len()), vs),
    }
}

/// Validates `next` against guards and subscriptions, writes it to disk
/// and swaps it in. Callers hold the admin lock.
async fn commit(state: &Shared, next: pricing_gate_core::PricingSpec) -> Result<(), ApiError> {
    let guards = state.active().guards.clone();
    let violations = check_replacement(&next, &guards, &state.store);
    if !violations.is_empty() {
        return Err(ApiError::invalid(
            "invalid_pricing",
            format!("{} violation(s)", violations.len()),
            violations,
        ));
    }
    let path = state.spec_path.clone();
    let next = tokio::task::spawn_blocking(move || write_spec_file(&path, &next).map(|()| next))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| ApiError::internal(format!("writing spec file: {e}")))?;
    tracing::info!(fingerprint = %next.fingerprint(), "pricing spec replaced");
    state.swap(ActiveSpec { spec: next, guards });
    persist(state).await;
    Ok(())
}

async fn put_pricing(State(state): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<StatusCode, ApiError> {
    require_admin(&state, &headers)?;
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::bad_request(format!("body is not UTF-8: {e}")))?;
    let _admin = state.admin_lock.lock().await;
    let next = parse_spec(text).map_err(spec_rejected)?;
    commit(&state, next).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn add_plan(State(state): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<StatusCode, ApiError> {
    require_admin(&state, &headers)?;
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::bad_request(format!("body is not UTF-8: {e}")))?;
    let plan = parse_plan_fragment(text).map_err(spec_rejected)?;
    let _admin = state.admin_lock.lock().await;
    let next = state
        .active()
        .spec
        .with_plan(plan)
        .map_err(|vs| ApiError::invalid("invalid_plan", format!("{} violation(s)", vs.len()), vs))?;
    commit(&state, next).await?;
    Ok(StatusCode::CREATED)
}

async fn get_subscription(
    State(state): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<Subscription>, ApiError> {
    require_admin(&state, &headers)?;
    Ok(Json(state.store.get_subscription(&id)?))
}

async fn put_subscription(
    State(state): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<StatusCode, ApiError> {
    require_admin(&state, &headers)?;
    let sub: Subscription = serde_json::from_slice(&body)
        .map_err(|e| ApiError::invalid("invalid_subscription", e.to_string(), Vec::new()))?;
    if sub.user_id != id {
        return Err(ApiError::invalid(
            "invalid_subscription",
            format!("body userId `{}` does not match path `{id}`", sub.user_id),
            Vec::new(),
        ));
    }
    let _admin = state.admin_lock.lock().await;
    state.store.put_subscription(&state.active().spec, sub)?;
    persist(&state).await;
    Ok(StatusCode::NO_CONTENT)
}

async fn reset_usage(
    State(state): State<Shared>,
    headers: HeaderMap,
    Path((id, limit)): Path<(String, String)>,
) -> Result<StatusCode, ApiError> {
    require_admin(&state, &headers)?;
    let _admin = state.admin_lock.lock().await;
    state.store.reset_usage(&state.active().spec, &id, &limit)?;
    persist(&state).await;
    Ok(StatusCode::NO_CONTENT)
}
