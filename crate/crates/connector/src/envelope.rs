use chrono::{DateTime, Utc};
use lostwage_core::Trip;
use serde::{Deserialize, Serialize};

use crate::signature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    AccountConnected,
    TripsAdded,
    SyncFailed,
}

/// JSON body of one webhook POST.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebhookEnvelope {
    pub delivery_id: String,
    pub event: EventKind,
    pub connector_account_id: String,
    #[serde(default)]
    pub payload: Vec<Trip>,
    pub emitted_at: DateTime<Utc>,
    pub attempt: u32,
    /// Set on the batch that completes the account's declared history.
    #[serde(rename = "final", default)]
    pub is_final: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A serialized, signed envelope ready to POST.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub delivery_id: String,
    pub connector_account_id: String,
    pub body: Vec<u8>,
    pub signature: String,
}

impl Delivery {
    pub fn sign(envelope: &WebhookEnvelope, secret: &[u8]) -> Delivery {
        let body = serde_json::to_vec(envelope).expect("envelope serializes");
        Delivery {
            delivery_id: envelope.delivery_id.clone(),
            connector_account_id: envelope.connector_account_id.clone(),
            signature: signature::sign(secret, &body),
            body,
        }
    }
}
