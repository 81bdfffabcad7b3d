//! Connector webhook intake.
//!
//! Every delivery is checked in order: signature, shape, then trip
//! validity. Rejected signatures leave no trace; malformed bodies and batches
//! with any invalid trip go to the dead-letter table whole. Accepted
//! deliveries are applied in one transaction, deduplicated first by
//! `delivery_id` and then per trip by `(account_id, trip_id)`.

use std::sync::Arc;

use lostwage_connector::{signature, EventKind, WebhookEnvelope};
use lostwage_core::Platform;
use serde::Serialize;

use crate::clock::Clock;
use crate::error::{ServiceError, ServiceResult};
use crate::model::{SyncState, SyncStatus};
use crate::store::{self, Store};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IngestResult {
    /// Trips were written. `already_present` counts trips stored earlier
    /// under another delivery.
    Inserted {
        delivery_id: String,
        account_id: String,
        inserted: usize,
        already_present: usize,
        state: SyncState,
    },
    /// A non-trip event was applied.
    Acknowledged { delivery_id: String, account_id: String, state: SyncState },
    Duplicate { delivery_id: String },
    RejectedSignature,
    RejectedMalformed { dead_letter_id: i64, reason: String },
    Quarantined { dead_letter_id: i64, reason: String },
}

impl IngestResult {
    /// Whether the connector should consider the delivery handled.
    pub fn is_acknowledged(&self) -> bool {
        matches!(
            self,
            IngestResult::Inserted { .. }
                | IngestResult::Acknowledged { .. }
                | IngestResult::Duplicate { .. }
        )
    }
}

pub struct Ingestor {
    store: Arc<Store>,
    secret: Vec<u8>,
    clock: Arc<dyn Clock>,
}

fn hint(body: &[u8], key: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_slice(body).ok()?;
    v.get(key)?.as_str().map(str::to_string)
}

fn check_shape(env: &WebhookEnvelope) -> Result<(), String> {
    if env.delivery_id.trim().is_empty() {
        return Err("empty delivery_id".into());
    }
    if env.connector_account_id.trim().is_empty() {
        return Err("empty connector_account_id".into());
    }
    if env.attempt == 0 {
        return Err("attempt must be at least 1".into());
    }
    if env.event != EventKind::TripsAdded && !env.payload.is_empty() {
        return Err(format!("{:?} must not carry trips", env.event));
    }
    Ok(())
}

fn check_trips(env: &WebhookEnvelope, known: Option<Platform>) -> Result<Option<Platform>, String> {
    let mut platform = known;
    for t in &env.payload {
        t.validate().map_err(|e| format!("trip {}: {e}", t.trip_id))?;
        if t.account_id != env.connector_account_id {
            return Err(format!(
                "trip {} belongs to account {}, not {}",
                t.trip_id, t.account_id, env.connector_account_id
            ));
        }
        match platform {
            Some(p) if p != t.platform => {
                return Err(format!("trip {} is {} on a {} account", t.trip_id, t.platform, p));
            }
            _ => platform = Some(t.platform),
        }
    }
    Ok(platform)
}

impl Ingestor {
    pub fn new(store: Arc<Store>, secret: impl Into<Vec<u8>>, clock: Arc<dyn Clock>) -> Self {
        Ingestor { store, secret: secret.into(), clock }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    /// Handles one raw webhook POST. `Err` only for store failures, which the
    /// caller should surface as a retryable error.
    pub fn handle_webhook(&self, raw_body: &[u8], sig: &str) -> ServiceResult<IngestResult> {
        if !signature::verify(&self.secret, raw_body, sig) {
            return Ok(IngestResult::RejectedSignature);
        }
        let now = self.clock.now();

        let env: WebhookEnvelope = match serde_json::from_slice::<WebhookEnvelope>(raw_body)
            .map_err(|e| e.to_string())
            .and_then(|env| check_shape(&env).map(|_| env))
        {
            Ok(env) => env,
            Err(reason) => {
                let reason = format!("malformed: {reason}");
                let id = self.store.write(|c| {
                    store::insert_dead_letter(
                        c,
                        now,
                        hint(raw_body, "delivery_id").as_deref(),
                        hint(raw_body, "connector_account_id").as_deref(),
                        &reason,
                        raw_body,
                    )
                })?;
                tracing::warn!(dead_letter_id = id, %reason, "webhook dead-lettered");
                return Ok(IngestResult::RejectedMalformed { dead_letter_id: id, reason });
            }
        };

        let account_id = env.connector_account_id.clone();
        self.store.write(|c| {
            if store::delivery_seen(c, &env.delivery_id)? {
                return Ok(IngestResult::Duplicate { delivery_id: env.delivery_id.clone() });
            }
            let known = store::account(c, &account_id)?.and_then(|a| a.platform);
            let platform = match check_trips(&env, known) {
                Ok(p) => p,
                Err(reason) => {
                    let reason = format!("quarantined: {reason}");
                    let id = store::insert_dead_letter(
                        c,
                        now,
                        Some(&env.delivery_id),
                        Some(&account_id),
                        &reason,
                        raw_body,
                    )?;
                    tracing::warn!(dead_letter_id = id, %reason, "batch quarantined");
                    return Ok(IngestResult::Quarantined { dead_letter_id: id, reason });
                }
            };

            store::ensure_account(c, &account_id)?;
            let current = store::account(c, &account_id)?.expect("just ensured").status.state;
            let mut inserted = 0;
            let result = match env.event {
                EventKind::AccountConnected => {
                    let next = match current {
                        SyncState::Pending | SyncState::Failed => SyncState::Syncing,
                        s => s,
                    };
                    store::update_status(c, &account_id, next, now, None)?;
                    IngestResult::Acknowledged {
                        delivery_id: env.delivery_id.clone(),
                        account_id: account_id.clone(),
                        state: next,
                    }
                }
                EventKind::SyncFailed => {
                    let msg = env.error.clone().unwrap_or_else(|| "sync failed".to_string());
                    // A refresh failure after a completed sync keeps the data usable.
                    let next = match current {
                        SyncState::Synced => SyncState::Synced,
                        _ => SyncState::Failed,
                    };
                    store::update_status(c, &account_id, next, now, Some(&msg))?;
                    IngestResult::Acknowledged {
                        delivery_id: env.delivery_id.clone(),
                        account_id: account_id.clone(),
                        state: next,
                    }
                }
                EventKind::TripsAdded => {
                    if let Some(p) = platform {
                        store::set_account_platform(c, &account_id, p)?;
                    }
                    for t in &env.payload {
                        if store::insert_trip(c, t, &env.delivery_id)? {
                            inserted += 1;
                        }
                    }
                    store::refresh_trip_count(c, &account_id)?;
                    if env.is_final {
                        store::mark_final(c, &account_id)?;
                    }
                    let mut next = match current {
                        SyncState::Pending | SyncState::Failed => SyncState::Syncing,
                        s => s,
                    };
                    if next == SyncState::Syncing && store::final_received(c, &account_id)? {
                        next = SyncState::Synced;
                    }
                    store::update_status(c, &account_id, next, now, None)?;
                    IngestResult::Inserted {
                        delivery_id: env.delivery_id.clone(),
                        account_id: account_id.clone(),
                        inserted,
                        already_present: env.payload.len() - inserted,
                        state: next,
                    }
                }
            };
            store::record_delivery(
                c,
                &env.delivery_id,
                &account_id,
                event_name(env.event),
                env.attempt,
                now,
                inserted,
            )?;
            Ok(result)
        })
    }

    /// Marks the account `SYNCED` if its final batch has arrived; returns the
    /// current status either way.
    pub fn finalize_account(&self, account_id: &str) -> ServiceResult<SyncStatus> {
        let now = self.clock.now();
        self.store.write(|c| {
            let acct = store::account(c, account_id)?
                .ok_or_else(|| ServiceError::NotFound(format!("account {account_id}")))?;
            if acct.status.state == SyncState::Syncing && store::final_received(c, account_id)? {
                store::update_status(c, account_id, SyncState::Synced, now, None)?;
                return Ok(store::account(c, account_id)?.expect("exists").status);
            }
            Ok(acct.status)
        })
    }
}

fn event_name(e: EventKind) -> &'static str {
    match e {
        EventKind::AccountConnected => "ACCOUNT_CONNECTED",
        EventKind::TripsAdded => "TRIPS_ADDED",
        EventKind::SyncFailed => "SYNC_FAILED",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;
    use chrono::{Duration, FixedOffset, TimeZone, Utc};
    use lostwage_connector::Delivery;
    use lostwage_core::{Coordinate, Money, Trip};

    const SECRET: &[u8] = b"test-secret";

    fn ingestor() -> Ingestor {
        let clock = Arc::new(FixedClock::new(Utc.with_ymd_and_hms(2024, 7, 1, 12, 0, 0).unwrap()));
        Ingestor::new(Arc::new(Store::open_in_memory().unwrap()), SECRET, clock)
    }

    fn trip(id: &str, pay: i64) -> Trip {
        let at = FixedOffset::west_opt(7 * 3600)
            .unwrap()
            .with_ymd_and_hms(2024, 5, 20, 9, 0, 0)
            .unwrap();
        Trip {
            trip_id: id.into(),
            account_id: "ca-1".into(),
            platform: Platform::Lyft,
            start_time: at,
            end_time: at + Duration::minutes(15),
            start_lat: Coordinate::from_micro_degrees(47_000_000),
            start_lon: Coordinate::from_micro_degrees(-122_000_000),
            end_lat: Coordinate::from_micro_degrees(47_010_000),
            end_lon: Coordinate::from_micro_degrees(-122_010_000),
            driver_pay: Money::from_cents(pay),
            customer_charge: Money::from_cents(pay * 2),
            tips: Money::ZERO,
            bonus: Money::ZERO,
        }
    }

    fn envelope(id: &str, event: EventKind, payload: Vec<Trip>, is_final: bool) -> Delivery {
        let env = WebhookEnvelope {
            delivery_id: id.into(),
            event,
            connector_account_id: "ca-1".into(),
            payload,
            emitted_at: Utc.with_ymd_and_hms(2024, 7, 1, 11, 0, 0).unwrap(),
            attempt: 1,
            is_final,
            error: (event == EventKind::SyncFailed).then(|| "vendor error 503".into()),
        };
        Delivery::sign(&env, SECRET)
    }

    fn send(ing: &Ingestor, d: &Delivery) -> IngestResult {
        ing.handle_webhook(&d.body, &d.signature).unwrap()
    }

    fn status(ing: &Ingestor) -> SyncStatus {
        ing.store.read(|c| store::account(c, "ca-1")).unwrap().unwrap().status
    }

    #[test]
    fn happy_path_then_duplicate() {
        let ing = ingestor();
        assert!(matches!(
            send(&ing, &envelope("d1", EventKind::AccountConnected, vec![], false)),
            IngestResult::Acknowledged { state: SyncState::Syncing, .. }
        ));
        let batch = envelope("d2", EventKind::TripsAdded, vec![trip("t1", 100), trip("t2", 200), trip("t3", 300)], false);
        match send(&ing, &batch) {
            IngestResult::Inserted { inserted, state, .. } => {
                assert_eq!(inserted, 3);
                assert_eq!(state, SyncState::Syncing);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(send(&ing, &batch), IngestResult::Duplicate { delivery_id: "d2".into() });
        assert_eq!(status(&ing).trips_ingested, 3);
        assert_eq!(ing.finalize_account("ca-1").unwrap().state, SyncState::Syncing);

        // Same trips under a new delivery id: second dedup layer.
        let resend = envelope("d3", EventKind::TripsAdded, vec![trip("t3", 300), trip("t4", 50)], true);
        match send(&ing, &resend) {
            IngestResult::Inserted { inserted, already_present, state, .. } => {
                assert_eq!((inserted, already_present), (1, 1));
                assert_eq!(state, SyncState::Synced);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(status(&ing).trips_ingested, 4);
        assert_eq!(ing.finalize_account("ca-1").unwrap().state, SyncState::Synced);
    }

    #[test]
    fn tampered_body_leaves_no_trace() {
        let ing = ingestor();
        let before = ing.store.content_hash().unwrap();
        let mut d = envelope("d1", EventKind::TripsAdded, vec![trip("t1", 100)], true);
        let pos = d.body.windows(3).position(|w| w == b"100").unwrap();
        d.body[pos] = b'9';
        assert_eq!(send(&ing, &d), IngestResult::RejectedSignature);
        assert_eq!(ing.handle_webhook(b"{}", "zz").unwrap(), IngestResult::RejectedSignature);
        assert_eq!(ing.store.content_hash().unwrap(), before);
    }

    #[test]
    fn malformed_goes_to_dead_letters() {
        let ing = ingestor();
        let body = br#"{"delivery_id":"d9","event":"TRIPS_ADDED","connector_account_id":"ca-1"}"#;
        let sig = signature::sign(SECRET, body);
        let r = ing.handle_webhook(body, &sig).unwrap();
        assert!(matches!(r, IngestResult::RejectedMalformed { .. }), "{r:?}");
        let dl = ing.store.read(store::dead_letters).unwrap();
        assert_eq!(dl.len(), 1);
        assert_eq!(dl[0].delivery_id.as_deref(), Some("d9"));
        assert!(ing.store.read(|c| store::account(c, "ca-1")).unwrap().is_none());
    }

    #[test]
    fn one_bad_trip_quarantines_the_batch() {
        let ing = ingestor();
        let d = envelope("d1", EventKind::TripsAdded, vec![trip("ok", 100), trip("bad", -5)], true);
        let r = send(&ing, &d);
        assert!(matches!(r, IngestResult::Quarantined { .. }), "{r:?}");
        assert!(ing.store.read(|c| store::account(c, "ca-1")).unwrap().is_none());
        assert_eq!(ing.store.read(|c| store::trips_for_account(c, "ca-1")).unwrap().len(), 0);
        // Not marked seen: a corrected redelivery with the same id is accepted.
        let fixed = envelope("d1", EventKind::TripsAdded, vec![trip("ok", 100), trip("bad", 5)], true);
        assert!(matches!(send(&ing, &fixed), IngestResult::Inserted { inserted: 2, .. }));
    }

    #[test]
    fn sync_failure_and_retry() {
        let ing = ingestor();
        send(&ing, &envelope("d1", EventKind::AccountConnected, vec![], false));
        send(&ing, &envelope("d2", EventKind::SyncFailed, vec![], false));
        let st = status(&ing);
        assert_eq!(st.state, SyncState::Failed);
        assert_eq!(st.last_error.as_deref(), Some("vendor error 503"));
        assert_eq!(ing.finalize_account("ca-1").unwrap().state, SyncState::Failed);

        send(&ing, &envelope("d3", EventKind::AccountConnected, vec![], false));
        assert_eq!(status(&ing).state, SyncState::Syncing);
        send(&ing, &envelope("d4", EventKind::TripsAdded, vec![trip("t1", 1)], true));
        assert_eq!(status(&ing).state, SyncState::Synced);
    }

    #[test]
    fn trips_round_trip_through_store() {
        let ing = ingestor();
        let mut t = trip("t1", 1234);
        t.start_time = FixedOffset::east_opt(5 * 3600 + 1800)
            .unwrap()
            .with_ymd_and_hms(2024, 3, 1, 23, 59, 59)
            .unwrap()
            + Duration::nanoseconds(123_456_789);
        t.end_time = t.start_time + Duration::minutes(3);
        t.platform = Platform::Lyft;
        send(&ing, &envelope("d1", EventKind::TripsAdded, vec![t.clone()], true));
        let back = ing.store.read(|c| store::trips_for_account(c, "ca-1")).unwrap();
        assert_eq!(back, vec![t.clone()]);
        assert_eq!(back[0].start_time.offset(), t.start_time.offset());
    }

    #[test]
    fn platform_mismatch_is_quarantined() {
        let ing = ingestor();
        send(&ing, &envelope("d1", EventKind::TripsAdded, vec![trip("t1", 1)], false));
        let mut other = trip("t2", 1);
        other.platform = Platform::Uber;
        assert!(matches!(
            send(&ing, &envelope("d2", EventKind::TripsAdded, vec![other], false)),
            IngestResult::Quarantined { .. }
        ));
    }
}
