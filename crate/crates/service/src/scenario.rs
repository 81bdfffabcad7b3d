//! Seeding a store from a synthetic scenario: one enrolled driver per
//! connector account, each walked through the intake flow and linked.

use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use lostwage_connector::{
    scenario::exact_count, ConnectorSim, Delivery, ScenarioConfig, WebhookSink, DEFAULT_BATCH_SIZE,
};
use serde::{Deserialize, Serialize};

use crate::clock::FixedClock;
use crate::config::ServiceConfig;
use crate::connector_link::{EmbeddedConnector, IngestSink};
use crate::error::{ServiceError, ServiceResult};
use crate::ingestion::Ingestor;
use crate::model::{Actor, ConsentScope, Role, Stats};
use crate::otp::MemoryOtpChannel;
use crate::service::CaseService;
use crate::store::{self, Store};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Intake {
    /// Fraction of drivers who also opt in to sharing with the organization.
    pub share_rate: f64,
    pub batch_size: usize,
    /// How many times each webhook is delivered (at-least-once replay).
    pub deliveries: u32,
    /// Clock for the whole run; defaults to noon UTC the day after the range.
    pub now: Option<DateTime<Utc>>,
}

impl Default for Intake {
    fn default() -> Self {
        Intake { share_rate: 1.0, batch_size: DEFAULT_BATCH_SIZE, deliveries: 1, now: None }
    }
}

/// A scenario file: the connector population plus intake settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(flatten)]
    pub profile: ScenarioConfig,
    #[serde(default)]
    pub intake: Intake,
}

impl Scenario {
    pub fn from_json(s: &str) -> ServiceResult<Scenario> {
        let sc: Scenario =
            serde_json::from_str(s).map_err(|e| ServiceError::Validation(format!("scenario: {e}")))?;
        if !(0.0..=1.0).contains(&sc.intake.share_rate) {
            return Err(ServiceError::Validation("intake.share_rate must be within [0, 1]".into()));
        }
        if sc.intake.deliveries == 0 {
            return Err(ServiceError::Validation("intake.deliveries must be at least 1".into()));
        }
        Ok(sc)
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.intake.now.unwrap_or_else(|| {
            let day = self.profile.date_range.end + Duration::days(1);
            day.and_hms_opt(12, 0, 0).expect("valid time").and_utc()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SeedSummary {
    pub accounts: usize,
    pub stats: Stats,
    pub store_hash: String,
}

/// Hands every delivery to the inner sink `times` times in a row.
struct RepeatSink<S> {
    inner: S,
    times: u32,
}

impl<S: WebhookSink> WebhookSink for RepeatSink<S> {
    fn deliver(&self, d: &Delivery) -> bool {
        let mut ok = true;
        for _ in 0..self.times {
            ok &= self.inner.deliver(d);
        }
        ok
    }
}

/// Seeds an empty store. The same scenario always yields the same store
/// contents, byte for byte.
pub fn seed(store: Arc<Store>, config: &ServiceConfig, scenario: &Scenario) -> ServiceResult<SeedSummary> {
    if store.read(|c| store::count(c, "SELECT COUNT(*) FROM drivers"))? > 0 {
        return Err(ServiceError::Validation("store already holds drivers; seed into an empty store".into()));
    }
    let now = scenario.now();
    let clock = Arc::new(FixedClock::new(now));
    let ingestor = Arc::new(Ingestor::new(store.clone(), config.webhook_secret.as_bytes(), clock.clone()));
    let sim = ConnectorSim::from_profile(config.webhook_secret.as_bytes(), &scenario.profile, now)
        .map_err(|e| ServiceError::Validation(e.to_string()))?
        .with_batch_size(scenario.intake.batch_size);
    let logins: Vec<_> = sim.accounts().map(|a| (a.platform, a.credential_hint.clone())).collect();
    let sink = RepeatSink { inner: IngestSink(ingestor), times: scenario.intake.deliveries };
    let connector = Arc::new(EmbeddedConnector::new(sim, Arc::new(sink)));
    let otp = Arc::new(MemoryOtpChannel::default());
    let service = CaseService::new(store.clone(), clock, otp.clone(), connector.clone(), config.clone())
        .with_rng_seed(scenario.profile.seed);

    let rep = Actor::new("seed", Role::FieldRep);
    let sharing = exact_count(scenario.intake.share_rate, logins.len());
    for (i, (platform, login)) in logins.iter().enumerate() {
        let e = service.enroll_driver(&rep, login, &format!("Driver {:04}", i + 1), Some("en"))?;
        let code = otp
            .last_code(login)
            .ok_or_else(|| ServiceError::Internal("no code was sent".into()))?;
        service.verify_driver(&rep, &e.driver_id, &code)?;
        service.grant_consent(&rep, &e.driver_id, ConsentScope::StudyOnly)?;
        if i < sharing {
            service.grant_consent(&rep, &e.driver_id, ConsentScope::ShareWithOrg)?;
        }
        service.link_account(&rep, &e.driver_id, *platform, login)?;
    }
    connector.snapshot_into(&store)?;

    Ok(SeedSummary {
        accounts: logins.len(),
        stats: store.read(store::stats)?,
        store_hash: store.content_hash()?,
    })
}
