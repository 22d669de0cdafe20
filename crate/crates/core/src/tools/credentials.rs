use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Serialize, Serializer};

pub const REDACTED: &str = "***";

/// A service token held for one session. Never printed or serialized.
#[derive(Clone, PartialEq, Eq)]
pub struct CredentialSlot {
    pub service: String,
    token: String,
    /// Milliseconds since the Unix epoch.
    pub acquired_at: u64,
}

impl CredentialSlot {
    pub fn new(service: &str, token: &str) -> Self {
        let acquired_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or_default();
        CredentialSlot {
            service: service.to_string(),
            token: token.to_string(),
            acquired_at,
        }
    }

    pub fn token(&self) -> &str {
        &self.token
    }
}

impl fmt::Debug for CredentialSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CredentialSlot")
            .field("service", &self.service)
            .field("token", &REDACTED)
            .field("acquired_at", &self.acquired_at)
            .finish()
    }
}

impl Serialize for CredentialSlot {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("CredentialSlot", 3)?;
        s.serialize_field("service", &self.service)?;
        s.serialize_field("token", REDACTED)?;
        s.serialize_field("acquired_at", &self.acquired_at)?;
        s.end()
    }
}

/// One slot per service.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Credentials {
    slots: BTreeMap<String, CredentialSlot>,
}

impl Credentials {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, slot: CredentialSlot) {
        self.slots.insert(slot.service.clone(), slot);
    }

    pub fn get(&self, service: &str) -> Option<&CredentialSlot> {
        self.slots.get(service)
    }

    pub fn services(&self) -> BTreeSet<String> {
        self.slots.keys().cloned().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Replaces every token occurrence in `text` with `***`.
    pub fn redact(&self, text: &str) -> String {
        let mut out = text.to_string();
        for slot in self.slots.values() {
            if !slot.token.is_empty() {
                out = out.replace(&slot.token, REDACTED);
            }
        }
        out
    }

    pub fn redact_json(&self, value: &mut serde_json::Value) {
        match value {
            serde_json::Value::String(s) => *s = self.redact(s),
            serde_json::Value::Array(items) => items.iter_mut().for_each(|v| self.redact_json(v)),
            serde_json::Value::Object(map) => map.values_mut().for_each(|v| self.redact_json(v)),
            _ => {}
        }
    }
}
