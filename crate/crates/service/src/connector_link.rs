//! How the service reaches the connector when a driver links an account.

use std::sync::{Arc, Mutex};

use lostwage_connector::{ConnectorError, ConnectorSim, Delivery, WebhookSink};
use lostwage_core::Platform;

use crate::error::{ServiceError, ServiceResult};
use crate::ingestion::Ingestor;
use crate::store::{self, Store, CONNECTOR_KEY};

pub trait ConnectorClient: Send + Sync {
    /// Finds the connector account unlocked by a driver's sign-in.
    fn resolve_login(&self, platform: Platform, credential: &str) -> ServiceResult<String>;
    /// Asks the connector to connect the account and push its history.
    fn start_sync(&self, account_id: &str) -> ServiceResult<()>;
    /// Triggers the connector's daily refresh; returns deliveries emitted.
    fn refresh(&self) -> ServiceResult<usize>;
}

/// Used when no connector is configured; linking fails cleanly.
#[derive(Debug, Default)]
pub struct NoConnector;

impl ConnectorClient for NoConnector {
    fn resolve_login(&self, _: Platform, _: &str) -> ServiceResult<String> {
        Err(ServiceError::Validation("no connector configured".into()))
    }

    fn start_sync(&self, _: &str) -> ServiceResult<()> {
        Err(ServiceError::Validation("no connector configured".into()))
    }

    fn refresh(&self) -> ServiceResult<usize> {
        Ok(0)
    }
}

/// Delivers webhooks straight into an [`Ingestor`], as if over HTTP.
pub struct IngestSink(pub Arc<Ingestor>);

impl WebhookSink for IngestSink {
    fn deliver(&self, d: &Delivery) -> bool {
        match self.0.handle_webhook(&d.body, &d.signature) {
            Ok(r) => r.is_acknowledged(),
            Err(err) => {
                tracing::error!(delivery_id = %d.delivery_id, %err, "ingestion failed");
                false
            }
        }
    }
}

/// The simulated connector running inside this process. When given a
/// store, its state is saved there after every change.
pub struct EmbeddedConnector {
    sim: Mutex<ConnectorSim>,
    sink: Arc<dyn WebhookSink>,
    store: Option<Arc<Store>>,
}

fn map_err(e: ConnectorError) -> ServiceError {
    match e {
        ConnectorError::NotFound(id) => ServiceError::NotFound(format!("connector account {id}")),
        ConnectorError::NoSuchLogin { .. } => ServiceError::Validation(e.to_string()),
        other => ServiceError::Internal(other.to_string()),
    }
}

fn write_state(store: &Store, sim: &ConnectorSim) -> ServiceResult<()> {
    let json = serde_json::to_string(sim).map_err(|e| ServiceError::Internal(e.to_string()))?;
    store.write(|c| store::meta_set(c, CONNECTOR_KEY, &json))
}

impl EmbeddedConnector {
    pub fn new(sim: ConnectorSim, sink: Arc<dyn WebhookSink>) -> Self {
        EmbeddedConnector { sim: Mutex::new(sim), sink, store: None }
    }

    pub fn persisted_in(mut self, store: Arc<Store>) -> ServiceResult<Self> {
        self.store = Some(store);
        self.save(&self.sim.lock().unwrap())?;
        Ok(self)
    }

    /// Restores a connector saved by [`persisted_in`](Self::persisted_in).
    pub fn load(store: Arc<Store>, sink: Arc<dyn WebhookSink>) -> ServiceResult<Option<Self>> {
        let Some(json) = store.read(|c| store::meta_get(c, CONNECTOR_KEY))? else {
            return Ok(None);
        };
        let sim: ConnectorSim = serde_json::from_str(&json)
            .map_err(|e| ServiceError::Internal(format!("stored connector state: {e}")))?;
        Ok(Some(EmbeddedConnector { sim: Mutex::new(sim), sink, store: Some(store) }))
    }

    fn save(&self, sim: &ConnectorSim) -> ServiceResult<()> {
        match &self.store {
            Some(store) => write_state(store, sim),
            None => Ok(()),
        }
    }

    /// Writes the current state into `store` once, for a connector that is
    /// not persisted after every change.
    pub fn snapshot_into(&self, store: &Store) -> ServiceResult<()> {
        write_state(store, &self.sim.lock().unwrap())
    }

    /// Runs `f` against the simulator and saves the result.
    pub fn with_sim<T>(&self, f: impl FnOnce(&mut ConnectorSim) -> T) -> ServiceResult<T> {
        let mut sim = self.sim.lock().unwrap();
        let out = f(&mut sim);
        self.save(&sim)?;
        Ok(out)
    }
}

impl ConnectorClient for EmbeddedConnector {
    fn resolve_login(&self, platform: Platform, credential: &str) -> ServiceResult<String> {
        self.sim.lock().unwrap().find_login(platform, credential).map_err(map_err)
    }

    fn start_sync(&self, account_id: &str) -> ServiceResult<()> {
        let sink = self.sink.clone();
        self.with_sim(|sim| sim.link_account(account_id, &sink).map(|_| ()))?.map_err(map_err)
    }

    fn refresh(&self) -> ServiceResult<usize> {
        let sink = self.sink.clone();
        self.with_sim(|sim| sim.daily_refresh(&sink).len())
    }
}
