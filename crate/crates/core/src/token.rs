//! HS256 JSON Web Tokens carrying identity plus the feature evaluation map.
//!
//! Minting is deterministic: the header is fixed and payload keys are
//! always written in the same order, so equal claims give equal tokens.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::entitlement::{diff_evaluations, EvaluationMap, FeatureMap};

pub const ISSUER: &str = "pricing-gate";
pub const MIN_SECRET_LEN: usize = 32;
pub const DEFAULT_TTL_SECS: u64 = 3600;
const HEADER_JSON: &str = r#"{"alg":"HS256","typ":"JWT"}"#;

type HmacSha256 = Hmac<Sha256>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TokenClaims {
    pub iss: String,
    pub sub: String,
    pub iat: u64,
    pub exp: u64,
    pub roles: Vec<String>,
    pub pricing_fingerprint: String,
    pub features: FeatureMap,
}

impl TokenClaims {
    /// Claims for `sub` valid from `now` for `ttl` seconds.
    pub fn issue(sub: impl Into<String>, roles: Vec<String>, map: &EvaluationMap, now: u64, ttl: u64) -> Self {
        TokenClaims {
            iss: ISSUER.to_string(),
            sub: sub.into(),
            iat: now,
            exp: now.saturating_add(ttl),
            roles,
            pricing_fingerprint: map.spec_fingerprint.clone(),
            features: map.entries.clone(),
        }
    }

    pub fn evaluation_map(&self) -> EvaluationMap {
        EvaluationMap {
            entries: self.features.clone(),
            spec_fingerprint: self.pricing_fingerprint.clone(),
        }
    }

    pub fn has_role(&self, role: &str) -> bool {
        self.roles.iter().any(|r| r == role)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenError {
    #[error("secret must be at least {MIN_SECRET_LEN} bytes, got {0}")]
    WeakSecret(usize),
    #[error("invalid claims: {0}")]
    InvalidClaims(&'static str),
    #[error("malformed token: {0}")]
    Malformed(String),
    #[error("signature does not match")]
    BadSignature,
    #[error("token expired")]
    Expired,
    #[error("algorithm `{0}` rejected, only HS256 is accepted")]
    AlgorithmRejected(String),
}

fn mac(secret: &[u8]) -> Result<HmacSha256, TokenError> {
    if secret.len() < MIN_SECRET_LEN {
        return Err(TokenError::WeakSecret(secret.len()));
    }
    Ok(HmacSha256::new_from_slice(secret).expect("HMAC accepts any key length"))
}

/// Signs `claims` into a compact JWT.
pub fn mint(claims: &TokenClaims, secret: &[u8]) -> Result<String, TokenError> {
    let mut m = mac(secret)?;
    if claims.exp <= claims.iat {
        return Err(TokenError::InvalidClaims("exp must be after iat"));
    }
    let payload = serde_json::to_vec(claims).expect("claims serialize");
    let signing_input = format!("{}.{}", URL_SAFE_NO_PAD.encode(HEADER_JSON), URL_SAFE_NO_PAD.encode(payload));
    m.update(signing_input.as_bytes());
    let sig = m.finalize().into_bytes();
    Ok(format!("{signing_input}.{}", URL_SAFE_NO_PAD.encode(sig)))
}

fn segment(part: &str, what: &str) -> Result<Vec<u8>, TokenError> {
    URL_SAFE_NO_PAD
        .decode(part)
        .map_err(|e| TokenError::Malformed(format!("{what} is not base64url: {e}")))
}

/// Header and claims of a token, without any signature check.
pub fn decode_unverified(token: &str) -> Result<(serde_json::Value, TokenClaims), TokenError> {
    let parts: Vec<&str> = token.split('.').collect();
    if parts.len() != 3 {
        return Err(TokenError::Malformed(format!("expected 3 segments, found {}", parts.len())));
    }
    let header: serde_json::Value = serde_json::from_slice(&segment(parts[0], "header")?)
        .map_err(|e| TokenError::Malformed(format!("header is not JSON: {e}")))?;
    if !header.is_object() {
        return Err(TokenError::Malformed("header is not a JSON object".into()));
    }
    let claims: TokenClaims = serde_json::from_slice(&segment(parts[1], "payload")?)
        .map_err(|e| TokenError::Malformed(format!("payload is not a claim set: {e}")))?;
    Ok((header, claims))
}

/// Verifies signature, algorithm and expiry (`now < exp`).
pub fn verify(token: &str, secret: &[u8], now: u64) -> Result<TokenClaims, TokenError> {
    let mut m = mac(secret)?;
    let (signing_input, sig_part) = token
        .rsplit_once('.')
        .ok_or_else(|| TokenError::Malformed("expected 3 segments, found 1".into()))?;
    let (header, claims) = decode_unverified(token)?;
    let alg = header
        .get("alg")
        .and_then(|a| a.as_str())
        .ok_or_else(|| TokenError::Malformed("header has no `alg`".into()))?;
    if alg.eq_ignore_ascii_case("none") {
        return Err(TokenError::AlgorithmRejected(alg.to_string()));
    }
    let signature = segment(sig_part, "signature")?;
    m.update(signing_input.as_bytes());
    // constant-time comparison
    m.verify_slice(&signature).map_err(|_| TokenError::BadSignature)?;
    if alg != "HS256" {
        return Err(TokenError::AlgorithmRejected(alg.to_string()));
    }
    if claims.iss != ISSUER {
        return Err(TokenError::InvalidClaims("unexpected issuer"));
    }
    if now >= claims.exp {
        return Err(TokenError::Expired);
    }
    Ok(claims)
}

/// A freshly minted token and the claims it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct IssuedToken {
    pub token: String,
    pub claims: TokenClaims,
}

/// Mints a replacement token iff `new_map` differs from what `old` carries.
pub fn refresh_if_changed(
    old: &TokenClaims,
    new_map: &EvaluationMap,
    secret: &[u8],
    now: u64,
    ttl: u64,
) -> Result<Option<IssuedToken>, TokenError> {
    if !diff_evaluations(&old.evaluation_map(), new_map).changed() {
        return Ok(None);
    }
    let claims = TokenClaims::issue(old.sub.clone(), old.roles.clone(), new_map, now, ttl);
    let token = mint(&claims, secret)?;
    Ok(Some(IssuedToken { token, claims }))
}
