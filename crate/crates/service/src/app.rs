use std::sync::Arc;

use lostwage_connector::{HttpSink, WebhookSink};

use crate::clock::Clock;
use crate::config::ServiceConfig;
use crate::connector_link::{ConnectorClient, EmbeddedConnector, IngestSink, NoConnector};
use crate::error::{ServiceError, ServiceResult};
use crate::http::AppState;
use crate::ingestion::Ingestor;
use crate::otp::{FileOtpChannel, LogOtpChannel, OtpChannel};
use crate::service::CaseService;
use crate::store::Store;

/// A fully wired service over one database.
pub struct App {
    pub config: ServiceConfig,
    pub store: Arc<Store>,
    pub ingestor: Arc<Ingestor>,
    pub service: Arc<CaseService>,
    /// The embedded connector, if a scenario has been seeded into this store.
    pub connector: Option<Arc<EmbeddedConnector>>,
}

pub fn otp_channel(config: &ServiceConfig) -> Arc<dyn OtpChannel> {
    match config.otp_sink.as_str() {
        "log" | "" => Arc::new(LogOtpChannel),
        path => Arc::new(FileOtpChannel::new(path)),
    }
}

impl App {
    pub fn open(config: ServiceConfig, clock: Arc<dyn Clock>) -> ServiceResult<App> {
        let otp = otp_channel(&config);
        Self::open_with(config, clock, otp)
    }

    pub fn open_with(
        config: ServiceConfig,
        clock: Arc<dyn Clock>,
        otp: Arc<dyn OtpChannel>,
    ) -> ServiceResult<App> {
        let store = Arc::new(Store::open(&config.database)?);
        Self::assemble(config, store, clock, otp)
    }

    pub fn assemble(
        config: ServiceConfig,
        store: Arc<Store>,
        clock: Arc<dyn Clock>,
        otp: Arc<dyn OtpChannel>,
    ) -> ServiceResult<App> {
        let ingestor =
            Arc::new(Ingestor::new(store.clone(), config.webhook_secret.as_bytes(), clock.clone()));
        let sink: Arc<dyn WebhookSink> = match &config.connector_endpoint {
            Some(url) => Arc::new(
                HttpSink::new(url.clone()).map_err(|e| ServiceError::Internal(e.to_string()))?,
            ),
            None => Arc::new(IngestSink(ingestor.clone())),
        };
        let connector = EmbeddedConnector::load(store.clone(), sink)?.map(Arc::new);
        let client: Arc<dyn ConnectorClient> = match &connector {
            Some(c) => c.clone(),
            None => Arc::new(NoConnector),
        };
        let service =
            Arc::new(CaseService::new(store.clone(), clock, otp, client, config.clone()));
        Ok(App { config, store, ingestor, service, connector })
    }

    pub fn state(&self) -> AppState {
        AppState { service: self.service.clone(), ingestor: self.ingestor.clone() }
    }
}
