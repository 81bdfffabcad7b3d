use std::collections::BTreeMap;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use lostwage_core::{Platform, Trip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envelope::{Delivery, EventKind, WebhookEnvelope};
use crate::scenario::{generate_day, ConnectorAccount, FailMode, ScenarioConfig};
use crate::sink::WebhookSink;

pub const DEFAULT_BATCH_SIZE: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConnectorError {
    #[error("connector account {0} not found")]
    NotFound(String),
    #[error("no connector account for {platform} credential {credential}")]
    NoSuchLogin { platform: Platform, credential: String },
    #[error("invalid scenario profile: {0}")]
    InvalidProfile(String),
    #[error("duplicate connector account id {0}")]
    DuplicateAccount(String),
}

/// Simulated sync latency. With the default all-zero model deliveries are
/// immediate. `compression` divides simulated seconds into wall-clock seconds
/// (3600 maps one simulated hour to one real second).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub min_secs: u64,
    pub max_secs: u64,
    pub compression: u64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel { min_secs: 0, max_secs: 0, compression: 3600 }
    }
}

impl LatencyModel {
    /// Two to twenty-four hours, compressed 1:3600.
    pub fn demo() -> Self {
        LatencyModel { min_secs: 2 * 3600, max_secs: 24 * 3600, compression: 3600 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkResult {
    pub connector_account_id: String,
    pub envelopes: Vec<WebhookEnvelope>,
    /// How many of the deliveries the subscriber acknowledged.
    pub acknowledged: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SimAccount {
    account: ConnectorAccount,
    linked: bool,
    /// Trips already handed to the subscriber (prefix of `account.trips`).
    delivered: usize,
    next_seq: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Outstanding {
    envelope: WebhookEnvelope,
}

/// The connector's side of the sync. Serializable so an operator tool can
/// persist it between runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnectorSim {
    secret: Vec<u8>,
    accounts: BTreeMap<String, SimAccount>,
    unacked: Vec<Outstanding>,
    batch_size: usize,
    latency: LatencyModel,
    profile: Option<ScenarioConfig>,
    rng: ChaCha8Rng,
    now: DateTime<Utc>,
}

impl ConnectorSim {
    pub fn new(secret: impl Into<Vec<u8>>, now: DateTime<Utc>) -> Self {
        ConnectorSim {
            secret: secret.into(),
            accounts: BTreeMap::new(),
            unacked: Vec::new(),
            batch_size: DEFAULT_BATCH_SIZE,
            latency: LatencyModel::default(),
            profile: None,
            rng: ChaCha8Rng::seed_from_u64(0),
            now,
        }
    }

    /// A simulator holding the accounts generated from `profile`.
    pub fn from_profile(
        secret: impl Into<Vec<u8>>,
        profile: &ScenarioConfig,
        now: DateTime<Utc>,
    ) -> Result<Self, ConnectorError> {
        let accounts = crate::scenario::seed(profile)?;
        let mut sim = ConnectorSim::new(secret, now);
        sim.rng = ChaCha8Rng::seed_from_u64(profile.seed ^ 0x5eed_0fda_11e5);
        sim.profile = Some(profile.clone());
        for a in accounts {
            sim.add_account(a)?;
        }
        Ok(sim)
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn with_latency(mut self, latency: LatencyModel) -> Self {
        self.latency = latency;
        self
    }

    pub fn add_account(&mut self, mut account: ConnectorAccount) -> Result<(), ConnectorError> {
        let id = account.connector_account_id.clone();
        if self.accounts.contains_key(&id) {
            return Err(ConnectorError::DuplicateAccount(id));
        }
        account.trips.sort_by_key(|t| t.start_time);
        self.accounts
            .insert(id, SimAccount { account, linked: false, delivered: 0, next_seq: 0 });
        Ok(())
    }

    pub fn accounts(&self) -> impl Iterator<Item = &ConnectorAccount> {
        self.accounts.values().map(|a| &a.account)
    }

    pub fn account(&self, id: &str) -> Option<&ConnectorAccount> {
        self.accounts.get(id).map(|a| &a.account)
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.now
    }

    pub fn set_now(&mut self, now: DateTime<Utc>) {
        self.now = now;
    }

    pub fn set_fail_mode(&mut self, id: &str, mode: FailMode) -> Result<(), ConnectorError> {
        let acct = self.accounts.get_mut(id).ok_or_else(|| ConnectorError::NotFound(id.into()))?;
        acct.account.fail_mode = mode;
        Ok(())
    }

    /// Resolves a driver's sign-in to the account it unlocks.
    pub fn find_login(&self, platform: Platform, credential: &str) -> Result<String, ConnectorError> {
        self.accounts
            .values()
            .find(|a| {
                a.account.platform == platform
                    && a.account.credential_hint.eq_ignore_ascii_case(credential.trim())
            })
            .map(|a| a.account.connector_account_id.clone())
            .ok_or_else(|| ConnectorError::NoSuchLogin {
                platform,
                credential: credential.to_string(),
            })
    }

    /// Number of deliveries the subscriber has not acknowledged yet.
    pub fn outstanding(&self) -> usize {
        self.unacked.len()
    }

    /// Connects an account and pushes its history: `ACCOUNT_CONNECTED`, then
    /// either the trips in batches (last one flagged final) or `SYNC_FAILED`.
    pub fn link_account(
        &mut self,
        id: &str,
        sink: &dyn WebhookSink,
    ) -> Result<LinkResult, ConnectorError> {
        let acct = self.accounts.get_mut(id).ok_or_else(|| ConnectorError::NotFound(id.into()))?;
        acct.linked = true;
        let mode = acct.account.fail_mode;
        let total = acct.account.trips.len();

        let mut plan: Vec<(EventKind, Vec<Trip>, bool, Option<String>)> =
            vec![(EventKind::AccountConnected, Vec::new(), false, None)];
        match mode {
            FailMode::None => {
                let trips = acct.account.trips.clone();
                plan.extend(batches(trips, self.batch_size, true));
                acct.delivered = total;
            }
            FailMode::Partial => {
                let half = acct.account.trips[..total.div_ceil(2)].to_vec();
                plan.extend(batches(half, self.batch_size, false));
                acct.delivered = total;
            }
            FailMode::SyncFailure => {
                plan.push((
                    EventKind::SyncFailed,
                    Vec::new(),
                    false,
                    Some("platform rejected the data request".into()),
                ));
            }
        }

        let envelopes: Vec<WebhookEnvelope> = plan
            .into_iter()
            .map(|(event, payload, is_final, error)| self.mint(id, event, payload, is_final, error))
            .collect();
        let acknowledged = self.dispatch(&envelopes, sink);
        Ok(LinkResult { connector_account_id: id.to_string(), envelopes, acknowledged })
    }

    /// Adds trips on the platform side; they go out with the next refresh.
    pub fn append_trips(&mut self, id: &str, trips: Vec<Trip>) -> Result<(), ConnectorError> {
        let acct = self.accounts.get_mut(id).ok_or_else(|| ConnectorError::NotFound(id.into()))?;
        acct.account.trips.extend(trips);
        // Keep the undelivered suffix ordered without disturbing what was sent.
        let delivered = acct.delivered;
        acct.account.trips[delivered..].sort_by_key(|t| t.start_time);
        Ok(())
    }

    /// Drivers keep working: generates one more day of trips for every
    /// linked, healthy account, using the scenario profile.
    pub fn simulate_day(&mut self, day: NaiveDate) -> usize {
        let Some(profile) = self.profile.clone() else {
            return 0;
        };
        let mut added = 0;
        for acct in self.accounts.values_mut() {
            if !acct.linked || acct.account.fail_mode != FailMode::None {
                continue;
            }
            let seq = acct.account.trips.len();
            let id = acct.account.connector_account_id.clone();
            let new = generate_day(&mut self.rng, &profile, &id, acct.account.platform, day, seq);
            added += new.len();
            acct.account.trips.extend(new);
        }
        added
    }

    /// Re-sends unacknowledged deliveries (same id, next attempt), then sends
    /// new trips of every linked healthy account as `TRIPS_ADDED` deltas.
    /// Returns everything emitted during this refresh.
    pub fn daily_refresh(&mut self, sink: &dyn WebhookSink) -> Vec<WebhookEnvelope> {
        let mut emitted: Vec<WebhookEnvelope> = std::mem::take(&mut self.unacked)
            .into_iter()
            .map(|mut o| {
                o.envelope.attempt += 1;
                o.envelope.emitted_at = self.now;
                o.envelope
            })
            .collect();

        let ids: Vec<String> = self.accounts.keys().cloned().collect();
        for id in ids {
            let acct = self.accounts.get_mut(&id).expect("listed");
            if !acct.linked || acct.account.fail_mode != FailMode::None {
                continue;
            }
            if acct.delivered >= acct.account.trips.len() {
                continue;
            }
            let delta = acct.account.trips[acct.delivered..].to_vec();
            acct.delivered = acct.account.trips.len();
            for (event, payload, is_final, error) in batches(delta, self.batch_size, true) {
                let env = self.mint(&id, event, payload, is_final, error);
                emitted.push(env);
            }
        }

        self.dispatch(&emitted, sink);
        emitted
    }

    fn mint(
        &mut self,
        id: &str,
        event: EventKind,
        payload: Vec<Trip>,
        is_final: bool,
        error: Option<String>,
    ) -> WebhookEnvelope {
        let acct = self.accounts.get_mut(id).expect("caller checked");
        acct.next_seq += 1;
        let delivery_id = format!("dlv-{id}-{:06}", acct.next_seq);
        let delay = if self.latency.max_secs > 0 {
            self.rng.gen_range(self.latency.min_secs..=self.latency.max_secs)
        } else {
            0
        };
        WebhookEnvelope {
            delivery_id,
            event,
            connector_account_id: id.to_string(),
            payload,
            emitted_at: self.now + Duration::seconds(delay as i64),
            attempt: 1,
            is_final,
            error,
        }
    }

    /// Sends in order; anything not acknowledged is kept for the next refresh.
    fn dispatch(&mut self, envelopes: &[WebhookEnvelope], sink: &dyn WebhookSink) -> usize {
        let mut acked = 0;
        for env in envelopes {
            let wait = (env.emitted_at - self.now).num_milliseconds().max(0) as u64;
            if wait > 0 && self.latency.compression > 0 {
                std::thread::sleep(std::time::Duration::from_millis(
                    wait / self.latency.compression,
                ));
            }
            let delivery = Delivery::sign(env, &self.secret);
            if sink.deliver(&delivery) {
                acked += 1;
            } else {
                tracing::debug!(delivery_id = %env.delivery_id, "delivery not acknowledged");
                self.unacked.push(Outstanding { envelope: env.clone() });
            }
        }
        acked
    }
}

fn batches(
    trips: Vec<Trip>,
    size: usize,
    mark_final: bool,
) -> Vec<(EventKind, Vec<Trip>, bool, Option<String>)> {
    if trips.is_empty() {
        return vec![(EventKind::TripsAdded, Vec::new(), mark_final, None)];
    }
    let chunks: Vec<Vec<Trip>> = trips.chunks(size).map(<[Trip]>::to_vec).collect();
    let last = chunks.len() - 1;
    chunks
        .into_iter()
        .enumerate()
        .map(|(i, c)| (EventKind::TripsAdded, c, mark_final && i == last, None))
        .collect()
}
