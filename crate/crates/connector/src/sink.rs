use std::sync::Mutex;
use std::time::Duration;

use crate::envelope::Delivery;
use crate::{DELIVERY_ID_HEADER, SIGNATURE_HEADER};

/// Where the connector sends its webhooks. `deliver` returns `true` when the
/// subscriber acknowledged the delivery (a 2xx response over HTTP).
pub trait WebhookSink: Send + Sync {
    fn deliver(&self, delivery: &Delivery) -> bool;
}

impl<T: WebhookSink + ?Sized> WebhookSink for std::sync::Arc<T> {
    fn deliver(&self, delivery: &Delivery) -> bool {
        (**self).deliver(delivery)
    }
}

/// Keeps every delivery in memory.
#[derive(Debug)]
pub struct RecordingSink {
    accept: bool,
    seen: Mutex<Vec<Delivery>>,
}

impl Default for RecordingSink {
    fn default() -> Self {
        RecordingSink { accept: true, seen: Mutex::new(Vec::new()) }
    }
}

impl RecordingSink {
    /// Records but never acknowledges.
    pub fn refusing() -> Self {
        RecordingSink { accept: false, seen: Mutex::new(Vec::new()) }
    }

    pub fn deliveries(&self) -> Vec<Delivery> {
        self.seen.lock().unwrap().clone()
    }
}

impl WebhookSink for RecordingSink {
    fn deliver(&self, delivery: &Delivery) -> bool {
        self.seen.lock().unwrap().push(delivery.clone());
        self.accept
    }
}

/// POSTs deliveries to a subscriber URL.
pub struct HttpSink {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpSink {
    pub fn new(endpoint: impl Into<String>) -> Result<Self, reqwest::Error> {
        let client = reqwest::blocking::Client::builder().timeout(Duration::from_secs(30)).build()?;
        Ok(HttpSink { endpoint: endpoint.into(), client })
    }
}

impl WebhookSink for HttpSink {
    fn deliver(&self, delivery: &Delivery) -> bool {
        let resp = self
            .client
            .post(&self.endpoint)
            .header("Content-Type", "application/json")
            .header(DELIVERY_ID_HEADER, &delivery.delivery_id)
            .header(SIGNATURE_HEADER, &delivery.signature)
            .body(delivery.body.clone())
            .send();
        match resp {
            Ok(r) => r.status().is_success(),
            Err(err) => {
                tracing::warn!(delivery_id = %delivery.delivery_id, %err, "webhook POST failed");
                false
            }
        }
    }
}
