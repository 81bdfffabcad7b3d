#![allow(dead_code)]

use std::sync::Arc;

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, TimeZone, Utc};
use lostwage_connector::{ConnectorAccount, ConnectorSim, FailMode};
use lostwage_core::{Coordinate, Money, Platform, Trip};
use lostwage_service::*;

pub const SECRET: &str = "harness-secret";

pub struct Harness {
    pub service: Arc<CaseService>,
    pub ingestor: Arc<Ingestor>,
    pub store: Arc<Store>,
    pub otp: Arc<MemoryOtpChannel>,
    pub connector: Arc<EmbeddedConnector>,
    pub clock: Arc<FixedClock>,
}

pub fn now() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 7, 15, 18, 0, 0).unwrap()
}

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// Two trips a day from January through June 2024, Pacific time.
pub fn history(account: &str, platform: Platform, base_pay: i64) -> Vec<Trip> {
    let mut out = Vec::new();
    let mut day = date(2024, 1, 1);
    let mut n = 0i64;
    while day <= date(2024, 6, 30) {
        let dst = day >= date(2024, 3, 10);
        let tz = FixedOffset::west_opt(if dst { 7 } else { 8 } * 3600).unwrap();
        for k in 0..2 {
            n += 1;
            let start = tz.from_local_datetime(&day.and_hms_opt(9 + 6 * k, 10, 0).unwrap()).unwrap();
            let pay = base_pay + (n * 37) % 900;
            out.push(Trip {
                trip_id: format!("{account}-t{n:05}"),
                account_id: account.to_string(),
                platform,
                start_time: start,
                end_time: start + Duration::minutes(25),
                start_lat: Coordinate::from_micro_degrees(47_600_000 + n as i32),
                start_lon: Coordinate::from_micro_degrees(-122_330_000),
                end_lat: Coordinate::from_micro_degrees(47_650_000),
                end_lon: Coordinate::from_micro_degrees(-122_300_000 - n as i32),
                driver_pay: Money::from_cents(pay),
                customer_charge: Money::from_cents(pay * 3 / 2 + 100),
                tips: Money::from_cents(if n % 3 == 0 { 200 } else { 0 }),
                bonus: Money::from_cents(if n % 20 == 0 { 500 } else { 0 }),
            });
        }
        day = day.succ_opt().unwrap();
    }
    out
}

pub fn account(id: &str, platform: Platform, credential: &str, mode: FailMode, pay: i64) -> ConnectorAccount {
    ConnectorAccount {
        connector_account_id: id.into(),
        platform,
        credential_hint: credential.into(),
        trips: history(id, platform, pay),
        fail_mode: mode,
    }
}

/// Connector accounts available to link in every harness.
pub fn default_accounts() -> Vec<ConnectorAccount> {
    vec![
        account("ca-ok", Platform::Uber, "+12065550101", FailMode::None, 1500),
        account("ca-fail", Platform::Lyft, "+12065550102", FailMode::SyncFailure, 1200),
        account("ca-part", Platform::Uber, "+12065550103", FailMode::Partial, 1300),
        account("ca-lyft", Platform::Lyft, "+12065550104", FailMode::None, 1100),
    ]
}

pub fn harness_with(config: ServiceConfig, accounts: Vec<ConnectorAccount>) -> Harness {
    let store = Arc::new(Store::open_in_memory().unwrap());
    let clock = Arc::new(FixedClock::new(now()));
    let ingestor = Arc::new(Ingestor::new(store.clone(), SECRET, clock.clone()));
    let mut sim = ConnectorSim::new(SECRET, now()).with_batch_size(100);
    for a in accounts {
        sim.add_account(a).unwrap();
    }
    let connector = Arc::new(EmbeddedConnector::new(sim, Arc::new(IngestSink(ingestor.clone()))));
    let otp = Arc::new(MemoryOtpChannel::default());
    let service = Arc::new(
        CaseService::new(store.clone(), clock.clone(), otp.clone(), connector.clone(), config)
            .with_rng_seed(7),
    );
    Harness { service, ingestor, store, otp, connector, clock }
}

pub fn harness() -> Harness {
    harness_with(ServiceConfig::default(), default_accounts())
}

pub fn field_rep() -> Actor {
    Actor::new("fr-1", Role::FieldRep)
}

pub fn attorney() -> Actor {
    Actor::new("atty-1", Role::Attorney)
}

pub fn paralegal() -> Actor {
    Actor::new("para-1", Role::Paralegal)
}

pub fn admin() -> Actor {
    Actor::new("admin-1", Role::Admin)
}

impl Harness {
    /// Enrolls and verifies a driver, records study consent and optionally
    /// the share consent, and links the given connector logins.
    pub fn onboard(&self, contact: &str, share: bool, logins: &[(Platform, &str)]) -> String {
        let fr = field_rep();
        let e = self.service.enroll_driver(&fr, contact, "Test Driver", Some("en")).unwrap();
        let code = self.otp.last_code(contact).expect("code sent");
        self.service.verify_driver(&fr, &e.driver_id, &code).unwrap();
        self.service.grant_consent(&fr, &e.driver_id, ConsentScope::StudyOnly).unwrap();
        if share {
            self.service.grant_consent(&fr, &e.driver_id, ConsentScope::ShareWithOrg).unwrap();
        }
        for (platform, login) in logins {
            self.service.link_account(&fr, &e.driver_id, *platform, login).unwrap();
        }
        e.driver_id
    }

    pub fn case(&self, driver_id: &str, platform: Platform) -> StoredCase {
        self.service
            .create_case(
                &attorney(),
                CreateCase {
                    driver_id: driver_id.into(),
                    platform,
                    deactivation_date: date(2024, 6, 1),
                    reactivation_date: Some(date(2024, 6, 22)),
                    as_of_date: Some(date(2024, 7, 15)),
                    params: None,
                    use_fallback: false,
                },
            )
            .unwrap()
    }
}
