use std::collections::HashMap;
use std::sync::Mutex;

use axum::body::{to_bytes, Body};
use axum::extract::Request;
use axum::http::{header, HeaderMap, HeaderName, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::{json, Value};

use crate::http::ApiError;

const MAX_BODY: usize = 1 << 20;

/// Header naming the authenticated user on proxied requests.
pub const USER_HEADER: &str = "x-pricing-user";

const HOP_BY_HOP: [&str; 8] = [
    "connection",
    "keep-alive",
    "proxy-authenticate",
    "proxy-authorization",
    "te",
    "trailer",
    "transfer-encoding",
    "upgrade",
];

pub(crate) enum Backend {
    /// In-memory item lists keyed by (user, path).
    Demo(Mutex<HashMap<(String, String), Vec<Value>>>),
    Proxy { client: reqwest::Client, base: String },
}

impl Backend {
    pub(crate) fn demo() -> Self {
        Backend::Demo(Mutex::new(HashMap::new()))
    }

    pub(crate) fn proxy(base: &str) -> Result<Self, String> {
        let url = reqwest::Url::parse(base).map_err(|e| format!("upstream `{base}`: {e}"))?;
        if url.scheme() != "http" {
            return Err(format!("upstream `{base}`: only http:// upstreams are supported"));
        }
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| format!("http client: {e}"))?;
        Ok(Backend::Proxy {
            client,
            base: base.trim_end_matches('/').to_string(),
        })
    }

    pub(crate) async fn execute(&self, user: &str, req: Request) -> Response {
        match self {
            Backend::Demo(lists) => demo(lists, user, req).await,
            Backend::Proxy { client, base } => proxy(client, base, user, req).await,
        }
    }
}

async fn demo(lists: &Mutex<HashMap<(String, String), Vec<Value>>>, user: &str, req: Request) -> Response {
    let (parts, body) = req.into_parts();
    let key = (user.to_string(), parts.uri.path().trim_end_matches('/').to_string());
    let bytes = match to_bytes(body, MAX_BODY).await {
        Ok(b) => b,
        Err(e) => return ApiError::bad_request(format!("request body: {e}")).into_response(),
    };
    let data: Value = if bytes.is_empty() {
        Value::Null
    } else {
        match serde_json::from_slice(&bytes) {
            Ok(v) => v,
            Err(e) => return ApiError::bad_request(format!("request body is not JSON: {e}")).into_response(),
        }
    };
    let mut lists = lists.lock().unwrap_or_else(|p| p.into_inner());
    let items = lists.entry(key).or_default();
    match parts.method {
        Method::GET => Json(json!({ "items": items })).into_response(),
        Method::POST | Method::PUT => {
            let item = json!({ "id": items.len() + 1, "data": data });
            items.push(item.clone());
            Json(item).into_response()
        }
        Method::DELETE => match items.pop() {
            Some(item) => Json(item).into_response(),
            None => StatusCode::NO_CONTENT.into_response(),
        },
        _ => StatusCode::METHOD_NOT_ALLOWED.into_response(),
    }
}

fn forwardable(name: &HeaderName) -> bool {
    !HOP_BY_HOP.contains(&name.as_str()) && name != header::HOST && name != header::CONTENT_LENGTH
}

async fn proxy(client: &reqwest::Client, base: &str, user: &str, req: Request) -> Response {
    let (parts, body) = req.into_parts();
    let target = format!(
        "{base}{}",
        parts.uri.path_and_query().map(|p| p.as_str()).unwrap_or("/")
    );
    let bytes = match to_bytes(body, MAX_BODY).await {
        Ok(b) => b,
        Err(e) => return ApiError::bad_request(format!("request body: {e}")).into_response(),
    };
    let mut headers = HeaderMap::new();
    for (name, value) in parts.headers.iter().filter(|(n, _)| forwardable(n)) {
        if name != header::AUTHORIZATION {
            headers.append(name.clone(), value.clone());
        }
    }
    if let Ok(v) = user.parse() {
        headers.insert(USER_HEADER, v);
    }
    let upstream = client
        .request(parts.method, &target)
        .headers(headers)
        .body(bytes)
        .send()
        .await;
    let resp = match upstream {
        Ok(r) => r,
        Err(e) => return ApiError::upstream(format!("{target}: {e}")).into_response(),
    };
    let status = resp.status();
    let mut out_headers = HeaderMap::new();
    for (name, value) in resp.headers().iter().filter(|(n, _)| forwardable(n)) {
        out_headers.append(name.clone(), value.clone());
    }
    match resp.bytes().await {
        Ok(body) => {
            let mut response = Response::new(Body::from(body));
            *response.status_mut() = status;
            *response.headers_mut() = out_headers;
            response
        }
        Err(e) => ApiError::upstream(format!("{target}: reading body: {e}")).into_response(),
    }
}
