//! Subscriptions and usage counters, with atomic limit-checked increments
//! and checksummed on-disk snapshots.
//!
//! Snapshot file layout:
//!
//! ```text
//! pricing-gate-store v1
//! {"subscriptions":{...},"savedAt":...,"specFingerprint":"..."}
//! crc32 0a1b2c3d
//! ```
//!
//! The CRC32 covers the JSON line's bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::entitlement::{validate_subscription, Subscription};
use crate::pricing::PricingSpec;
use crate::value::Decimal;

const HEADER: &str = "pricing-gate-store v1";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("unknown usage limit `{0}`")]
    UnknownLimit(String),
    #[error("invalid subscription: {0}")]
    InvalidSubscription(String),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

/// Outcome of [`SubscriptionStore::try_consume`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Consumption {
    Consumed(u64),
    Denied(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StoreSnapshot {
    pub subscriptions: BTreeMap<String, Subscription>,
    pub saved_at: u64,
    pub spec_fingerprint: String,
}

#[derive(Debug, Default)]
struct State {
    subscriptions: BTreeMap<String, Subscription>,
    dirty: bool,
}

/// Thread-safe subscription store. Every operation holds one lock for its
/// whole read-modify-write, so per-user operations are linearizable.
#[derive(Debug, Default)]
pub struct SubscriptionStore {
    state: Mutex<State>,
    save_lock: Mutex<()>,
}

impl SubscriptionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_snapshot(snapshot: StoreSnapshot) -> Self {
        SubscriptionStore {
            state: Mutex::new(State {
                subscriptions: snapshot.subscriptions,
                dirty: false,
            }),
            save_lock: Mutex::new(()),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    pub fn get_subscription(&self, user_id: &str) -> Result<Subscription, StoreError> {
        self.lock()
            .subscriptions
            .get(user_id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownUser(user_id.to_string()))
    }

    pub fn contains(&self, user_id: &str) -> bool {
        self.lock().subscriptions.contains_key(user_id)
    }

    pub fn user_ids(&self) -> Vec<String> {
        self.lock().subscriptions.keys().cloned().collect()
    }

    /// Replaces the whole record for `sub.user_id`.
    pub fn put_subscription(&self, spec: &PricingSpec, sub: Subscription) -> Result<(), StoreError> {
        validate_subscription(spec, &sub).map_err(|e| StoreError::InvalidSubscription(e.to_string()))?;
        let mut state = self.lock();
        state.subscriptions.insert(sub.user_id.clone(), sub);
        state.dirty = true;
        Ok(())
    }

    /// Atomically adds `amount` to the user's usage of `limit` iff the
    /// result stays within `cap`.
    pub fn try_consume(
        &self,
        spec: &PricingSpec,
        user_id: &str,
        limit: &str,
        amount: u64,
        cap: Decimal,
    ) -> Result<Consumption, StoreError> {
        if !spec.usage_limits().contains_key(limit) {
            return Err(StoreError::UnknownLimit(limit.to_string()));
        }
        let mut state = self.lock();
        let sub = state
            .subscriptions
            .get_mut(user_id)
            .ok_or_else(|| StoreError::UnknownUser(user_id.to_string()))?;
        let used = sub.used(limit);
        let next = used.saturating_add(amount);
        if Decimal::from(next) > cap {
            return Ok(Consumption::Denied(used));
        }
        sub.usage.insert(limit.to_string(), next);
        state.dirty = true;
        Ok(Consumption::Consumed(next))
    }

    /// Compensating decrement; saturates at zero. Returns the new usage.
    pub fn refund(&self, user_id: &str, limit: &str, amount: u64) -> Result<u64, StoreError> {
        let mut state = self.lock();
        let sub = state
            .subscriptions
            .get_mut(user_id)
            .ok_or_else(|| StoreError::UnknownUser(user_id.to_string()))?;
        let next = sub.used(limit).saturating_sub(amount);
        sub.usage.insert(limit.to_string(), next);
        state.dirty = true;
        Ok(next)
    }

    pub fn reset_usage(&self, spec: &PricingSpec, user_id: &str, limit: &str) -> Result<(), StoreError> {
        if !spec.usage_limits().contains_key(limit) {
            return Err(StoreError::UnknownLimit(limit.to_string()));
        }
        let mut state = self.lock();
        let sub = state
            .subscriptions
            .get_mut(user_id)
            .ok_or_else(|| StoreError::UnknownUser(user_id.to_string()))?;
        sub.usage.insert(limit.to_string(), 0);
        state.dirty = true;
        Ok(())
    }

    pub fn is_dirty(&self) -> bool {
        self.lock().dirty
    }

    pub fn snapshot(&self, saved_at: u64, spec_fingerprint: &str) -> StoreSnapshot {
        StoreSnapshot {
            subscriptions: self.lock().subscriptions.clone(),
            saved_at,
            spec_fingerprint: spec_fingerprint.to_string(),
        }
    }

    /// Writes a snapshot via temp file + rename. Concurrent saves are
    /// serialized so the file never goes back in time.
    pub fn save_snapshot(&self, path: &Path, saved_at: u64, spec_fingerprint: &str) -> Result<(), StoreError> {
        let _guard = self.save_lock.lock().unwrap_or_else(|p| p.into_inner());
        let snapshot = {
            let mut state = self.lock();
            state.dirty = false;
            StoreSnapshot {
                subscriptions: state.subscriptions.clone(),
                saved_at,
                spec_fingerprint: spec_fingerprint.to_string(),
            }
        };
        if let Err(e) = write_snapshot(path, &snapshot) {
            self.lock().dirty = true;
            return Err(e);
        }
        Ok(())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

pub fn encode_snapshot(snapshot: &StoreSnapshot) -> String {
    let body = serde_json::to_string(snapshot).expect("snapshot serializes");
    let crc = crc32fast::hash(body.as_bytes());
    format!("{HEADER}\n{body}\ncrc32 {crc:08x}\n")
}

pub fn decode_snapshot(text: &str) -> Result<StoreSnapshot, StoreError> {
    let corrupt = |m: &str| StoreError::CorruptSnapshot(m.to_string());
    let mut lines = text.split('\n');
    if lines.next() != Some(HEADER) {
        return Err(corrupt("missing `pricing-gate-store v1` header"));
    }
    let body = lines.next().ok_or_else(|| corrupt("missing body"))?;
    let footer = lines.next().ok_or_else(|| corrupt("missing checksum footer"))?;
    if lines.any(|rest| !rest.is_empty()) {
        return Err(corrupt("trailing data after checksum"));
    }
    let stated = footer
        .strip_prefix("crc32 ")
        .and_then(|h| u32::from_str_radix(h, 16).ok())
        .ok_or_else(|| corrupt("malformed checksum footer"))?;
    let actual = crc32fast::hash(body.as_bytes());
    if stated != actual {
        return Err(StoreError::CorruptSnapshot(format!(
            "checksum mismatch: stated {stated:08x}, computed {actual:08x}"
        )));
    }
    serde_json::from_str(body).map_err(|e| StoreError::CorruptSnapshot(format!("body: {e}")))
}

pub fn write_snapshot(path: &Path, snapshot: &StoreSnapshot) -> Result<(), StoreError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(encode_snapshot(snapshot).as_bytes()).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<StoreSnapshot, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    decode_snapshot(&text)
}
