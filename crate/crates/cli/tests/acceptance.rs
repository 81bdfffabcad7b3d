//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! nonzero if any criterion fails. Tolerances and budgets are the constants
//! below; none of them are tuned per run.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use chrono::{DateTime, Duration as Days, FixedOffset, NaiveDate, TimeZone, Utc};
use chrono_tz::Tz;
use lostwage_connector::{ConnectorAccount, ConnectorSim, FailMode};
use lostwage_core::oracle::{brute_force, compare};
use lostwage_core::{
    lost_wage, lost_wage_with, Coordinate, DataStatus, DeactivationCase, Money, Platform, PolicyParams, Trip,
};
use lostwage_report::{parse_csv, render_csv, ReportPreview};
use lostwage_service::http::{router, AppState, ACTOR_ID_HEADER, ACTOR_ROLE_HEADER};
use lostwage_service::scenario::{self, Scenario};
use lostwage_service::{
    Actor, App, CaseService, ConsentScope, CreateCase, EmbeddedConnector, FixedClock, IngestSink, Ingestor,
    MemoryOtpChannel, ParamsPatch, ReportFormat, ReportOptions, Role, ServiceConfig, Stats, Store, SyncState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tower::ServiceExt;

// Pinned expectations and budgets.
const FALLBACK_DAYS: i64 = 7;
const FALLBACK_PRINCIPAL_CENTS: i64 = 140_000;
const FALLBACK_BUDGET: Duration = Duration::from_secs(1);
const ORACLE_CASES: u64 = 200;
const ORACLE_MAX_TRIPS: usize = 2_000;
const ORACLE_BUDGET: Duration = Duration::from_secs(10);
const DEFAULT_SETS: usize = 50;
const DEFAULT_REFERENCE_DAYS: u32 = 84;
const DEFAULT_INTEREST_BP: u32 = 1_200;
const DEFAULT_FALLBACK_CENTS: i64 = 20_000;
const SCENARIO_ACCOUNTS: usize = 178;
const EXPECTED_FAILED: u64 = 36;
const EXPECTED_SYNCED: std::ops::RangeInclusive<u64> = 142..=143;
const GATE_BUDGET: Duration = Duration::from_secs(30);
const FORMAT_CASES: usize = 20;
const LATENCY_TRIPS: usize = 2_000;
const LATENCY_BUDGET: Duration = Duration::from_secs(2);

const SECRET: &str = "acceptance-secret";

fn now() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 7, 15, 18, 0, 0).unwrap()
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn admin() -> Actor {
    Actor::new("acc-admin", Role::Admin)
}

fn attorney() -> Actor {
    Actor::new("acc-atty", Role::Attorney)
}

// ---------------------------------------------------------------------------
// Fixtures

/// A service over an in-memory store with its own simulated connector.
struct World {
    service: Arc<CaseService>,
    ingestor: Arc<Ingestor>,
    store: Arc<Store>,
    otp: Arc<MemoryOtpChannel>,
}

fn world(config: ServiceConfig, accounts: Vec<ConnectorAccount>) -> World {
    let store = Arc::new(Store::open_in_memory().unwrap());
    let clock = Arc::new(FixedClock::new(now()));
    let ingestor = Arc::new(Ingestor::new(store.clone(), SECRET, clock.clone()));
    let mut sim = ConnectorSim::new(SECRET, now());
    for a in accounts {
        sim.add_account(a).unwrap();
    }
    let connector = Arc::new(EmbeddedConnector::new(sim, Arc::new(IngestSink(ingestor.clone()))));
    let otp = Arc::new(MemoryOtpChannel::default());
    let service = Arc::new(
        CaseService::new(store.clone(), clock, otp.clone(), connector, config).with_rng_seed(99),
    );
    World { service, ingestor, store, otp }
}

impl World {
    fn onboard(&self, login: &str, platform: Platform, share: bool) -> String {
        let rep = Actor::new("acc-rep", Role::FieldRep);
        let e = self.service.enroll_driver(&rep, login, "Acceptance Driver", None).unwrap();
        let code = self.otp.last_code(login).unwrap();
        self.service.verify_driver(&rep, &e.driver_id, &code).unwrap();
        self.service.grant_consent(&rep, &e.driver_id, ConsentScope::StudyOnly).unwrap();
        if share {
            self.service.grant_consent(&rep, &e.driver_id, ConsentScope::ShareWithOrg).unwrap();
        }
        self.service.link_account(&rep, &e.driver_id, platform, login).unwrap();
        e.driver_id
    }
}

fn login(i: usize) -> String {
    format!("+1415555{:04}", i)
}

/// `n` trips spread over `[first, first + days)` in Pacific time.
fn random_trips(rng: &mut ChaCha8Rng, account: &str, platform: Platform, n: usize, first: NaiveDate, days: i64) -> Vec<Trip> {
    let tz = chrono_tz::America::Los_Angeles;
    let mut out: Vec<Trip> = (0..n)
        .map(|i| {
            let day = first + Days::days(rng.gen_range(0..days));
            let naive = day.and_hms_opt(rng.gen_range(0..24), rng.gen_range(0..60), rng.gen_range(0..60)).unwrap();
            let local = tz.from_local_datetime(&naive).earliest().unwrap_or_else(|| tz.from_utc_datetime(&naive));
            let start = local.fixed_offset();
            let pay = rng.gen_range(500..6_000);
            Trip {
                trip_id: format!("{account}-{i:05}"),
                account_id: account.into(),
                platform,
                start_time: start,
                end_time: start + Days::minutes(rng.gen_range(3..90)),
                start_lat: Coordinate::from_micro_degrees(rng.gen_range(37_200_000..37_900_000)),
                start_lon: Coordinate::from_micro_degrees(rng.gen_range(-122_500_000..-121_800_000)),
                end_lat: Coordinate::from_micro_degrees(rng.gen_range(37_200_000..37_900_000)),
                end_lon: Coordinate::from_micro_degrees(rng.gen_range(-122_500_000..-121_800_000)),
                driver_pay: Money::from_cents(pay),
                customer_charge: Money::from_cents(pay + rng.gen_range(0..4_000)),
                tips: Money::from_cents(if rng.gen_bool(0.4) { rng.gen_range(0..1_200) } else { 0 }),
                bonus: Money::from_cents(if rng.gen_bool(0.05) { rng.gen_range(0..800) } else { 0 }),
            }
        })
        .collect();
    out.sort_by_key(|t| t.start_time);
    out
}

fn connector_account(id: &str, platform: Platform, login: &str, trips: Vec<Trip>, mode: FailMode) -> ConnectorAccount {
    ConnectorAccount {
        connector_account_id: id.into(),
        platform,
        credential_hint: login.into(),
        trips,
        fail_mode: mode,
    }
}

fn preview_value(p: &ReportPreview) -> Value {
    let mut v = serde_json::to_value(p).unwrap();
    let o = v.as_object_mut().unwrap();
    o.remove("generated_at");
    o.remove("summary");
    v
}

fn pdf_amounts(bytes: &[u8]) -> BTreeMap<&'static str, i64> {
    let doc = lopdf::Document::load_mem(bytes).expect("pdf parses");
    let pages: Vec<u32> = doc.get_pages().keys().copied().collect();
    let text = doc.extract_text(&pages).expect("pdf text");
    let mut out = BTreeMap::new();
    for label in ["Principal:", "Interest:", "Total:"] {
        let line = text
            .lines()
            .find(|l| l.trim_start().starts_with(label))
            .unwrap_or_else(|| panic!("no {label} line in pdf"));
        let cents: String = line.split('$').nth(1).expect("amount").chars().filter(char::is_ascii_digit).collect();
        out.insert(label, cents.parse().unwrap());
    }
    out
}

// ---------------------------------------------------------------------------
// Criteria

fn fallback_fixed_point() -> Result<String, String> {
    let started = Instant::now();
    let w = world(
        ServiceConfig::default(),
        vec![connector_account("acc-failed", Platform::Lyft, &login(1), Vec::new(), FailMode::SyncFailure)],
    );
    let driver = w.onboard(&login(1), Platform::Lyft, true);
    let status = w.service.account_status(&admin(), "acc-failed").unwrap();
    if status.state != SyncState::Failed {
        return Err(format!("account is {:?}, expected FAILED", status.state));
    }
    let deact = date(2024, 6, 3);
    let case = w
        .service
        .create_case(
            &attorney(),
            CreateCase {
                driver_id: driver,
                platform: Platform::Lyft,
                deactivation_date: deact,
                reactivation_date: Some(deact + Days::days(FALLBACK_DAYS)),
                as_of_date: Some(date(2024, 7, 15)),
                params: None,
                use_fallback: true,
            },
        )
        .unwrap();
    let out = w
        .service
        .get_report(&attorney(), &case.case_id, ReportFormat::JsonPreview, &ReportOptions::default())
        .unwrap();
    let p = &out.preview;
    let elapsed = started.elapsed();
    let detail = format!(
        "{} days, principal {} cents, fallback_used {} in {:.2?}",
        p.deactivation_days, p.principal_cents, p.fallback_used, elapsed
    );
    if p.principal_cents == FALLBACK_PRINCIPAL_CENTS && p.fallback_used && elapsed < FALLBACK_BUDGET {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const ZONES: [Tz; 10] = [
    chrono_tz::America::Los_Angeles,
    chrono_tz::America::New_York,
    chrono_tz::America::Chicago,
    chrono_tz::America::Phoenix,
    chrono_tz::America::Anchorage,
    chrono_tz::Pacific::Honolulu,
    chrono_tz::UTC,
    chrono_tz::Asia::Kolkata,
    chrono_tz::Asia::Kathmandu,
    chrono_tz::Australia::Lord_Howe,
];

/// A random case whose trips cluster around local midnight and are
/// reported in assorted UTC offsets.
fn oracle_case(seed: u64) -> (DeactivationCase, Vec<Trip>, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0AC1E ^ seed);
    let tz = ZONES[rng.gen_range(0..ZONES.len())];
    let reference_days = match rng.gen_range(0..4) {
        0 | 1 => 84,
        2 => rng.gen_range(1..=14),
        _ => rng.gen_range(15..=120),
    };
    let deact = date(2023, 1, 1) + Days::days(rng.gen_range(0..900));
    let reactivation = rng.gen_bool(0.6).then(|| deact + Days::days(rng.gen_range(0..90)));
    let as_of = deact + Days::days(rng.gen_range(0..400));
    let platform = if rng.gen_bool(0.5) { Platform::Uber } else { Platform::Lyft };
    let params = PolicyParams {
        reference_days,
        interest_rate: rng.gen_range(0..=3_000),
        fallback_daily: Money::from_cents(rng.gen_range(0..=50_000)),
        interest_day_count: if rng.gen_bool(0.9) { 365 } else { 360 },
        case_timezone: tz,
        include_tips: rng.gen_bool(0.8),
    };
    let case = DeactivationCase {
        case_id: format!("oracle-{seed}"),
        driver_id: "drv".into(),
        platform,
        deactivation_date: deact,
        reactivation_date: reactivation,
        as_of_date: as_of,
        params,
        use_fallback: rng.gen_bool(0.1),
    };
    let sync_failed = rng.gen_bool(0.15);

    let n = if rng.gen_bool(0.05) { 0 } else { rng.gen_range(1..=ORACLE_MAX_TRIPS) };
    let window_start = deact - Days::days(reference_days as i64);
    let span = reference_days as i64 + 6;
    let trips = (0..n)
        .map(|i| {
            let day = window_start + Days::days(rng.gen_range(-3..span - 3));
            let secs: u32 = match rng.gen_range(0..3) {
                0 => rng.gen_range(0..1_800),
                1 => rng.gen_range(84_600..86_400),
                _ => rng.gen_range(0..86_400),
            };
            let naive = day.and_hms_opt(secs / 3600, secs / 60 % 60, secs % 60).unwrap();
            let local = tz.from_local_datetime(&naive).earliest().unwrap_or_else(|| tz.from_utc_datetime(&naive));
            let offset = FixedOffset::east_opt(rng.gen_range(-48..=56) * 900).unwrap();
            let start = local.with_timezone(&offset);
            let other = rng.gen_bool(0.15);
            Trip {
                trip_id: format!("t{i}"),
                account_id: "acct".into(),
                platform: match (platform, other) {
                    (p, false) => p,
                    (Platform::Uber, true) => Platform::Lyft,
                    (Platform::Lyft, true) => Platform::Uber,
                },
                start_time: start,
                end_time: start + Days::minutes(rng.gen_range(1..120)),
                start_lat: Coordinate::from_micro_degrees(0),
                start_lon: Coordinate::from_micro_degrees(0),
                end_lat: Coordinate::from_micro_degrees(0),
                end_lon: Coordinate::from_micro_degrees(0),
                driver_pay: Money::from_cents(rng.gen_range(0..9_000)),
                customer_charge: Money::from_cents(rng.gen_range(0..15_000)),
                tips: Money::from_cents(rng.gen_range(0..2_000)),
                bonus: Money::from_cents(if rng.gen_bool(0.1) { rng.gen_range(0..1_500) } else { 0 }),
            }
        })
        .collect();
    (case, trips, sync_failed)
}

fn oracle_equivalence() -> Result<String, String> {
    let started = Instant::now();
    let mut matched = 0;
    let mut trips_total = 0;
    let mut first_failure = None;
    for seed in 0..ORACLE_CASES {
        let (case, trips, sync_failed) = oracle_case(seed);
        trips_total += trips.len();
        let engine = lost_wage_with(&case, &trips, DataStatus { sync_failed }).map_err(|e| e.to_string())?;
        let oracle = brute_force(&case, &trips, sync_failed)?;
        let diffs = compare(&engine, &oracle);
        if diffs.is_empty() {
            matched += 1;
        } else if first_failure.is_none() {
            first_failure = Some(format!("case {seed}: {}", diffs[0]));
        }
    }
    let elapsed = started.elapsed();
    let detail = format!("{matched}/{ORACLE_CASES} exact over {trips_total} trips in {elapsed:.2?}");
    match first_failure {
        None if elapsed < ORACLE_BUDGET => Ok(detail),
        None => Err(format!("{detail}, over the {ORACLE_BUDGET:?} budget")),
        Some(f) => Err(format!("{detail}; {f}")),
    }
}

fn defaults_fidelity() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xDEFA);
    let mut accounts = Vec::new();
    let mut meta = Vec::new();
    for i in 0..DEFAULT_SETS {
        let platform = if i % 2 == 0 { Platform::Uber } else { Platform::Lyft };
        let n = rng.gen_range(0..600);
        let id = format!("def-{i:02}");
        accounts.push(connector_account(&id, platform, &login(100 + i), random_trips(&mut rng, &id, platform, n, date(2024, 1, 1), 182), FailMode::None));
        let deact = date(2024, 3, 15) + Days::days(rng.gen_range(0..100));
        let re = rng.gen_bool(0.5).then(|| deact + Days::days(rng.gen_range(0..30)));
        meta.push((platform, deact, re));
    }
    let w = world(ServiceConfig::default(), accounts);
    let explicit = ParamsPatch {
        reference_days: Some(DEFAULT_REFERENCE_DAYS),
        interest_rate: Some(DEFAULT_INTEREST_BP),
        fallback_daily: Some(Money::from_cents(DEFAULT_FALLBACK_CENTS)),
        ..ParamsPatch::default()
    };
    let mut identical = 0;
    for (i, (platform, deact, re)) in meta.into_iter().enumerate() {
        let driver = w.onboard(&login(100 + i), platform, true);
        let make = |params: Option<ParamsPatch>| {
            w.service
                .create_case(
                    &attorney(),
                    CreateCase {
                        driver_id: driver.clone(),
                        platform,
                        deactivation_date: deact,
                        reactivation_date: re,
                        as_of_date: Some(date(2024, 8, 1)),
                        params,
                        use_fallback: false,
                    },
                )
                .unwrap()
        };
        let implicit = make(None);
        let given = make(Some(explicit.clone()));
        let p = &implicit.params;
        if (p.reference_days, p.interest_rate, p.fallback_daily.cents())
            != (DEFAULT_REFERENCE_DAYS, DEFAULT_INTEREST_BP, DEFAULT_FALLBACK_CENTS)
        {
            return Err(format!("set {i}: defaults were {p:?}"));
        }
        let report = |case_id: &str| {
            w.service
                .get_report(&attorney(), case_id, ReportFormat::JsonPreview, &ReportOptions::default())
                .unwrap()
                .preview
        };
        let a = report(&implicit.case_id);
        let b = report(&given.case_id);
        if preview_value(&a) != preview_value(&b) {
            return Err(format!("set {i}: implicit total {} != explicit {}", a.total_cents, b.total_cents));
        }
        identical += 1;
    }
    Ok(format!("{identical}/{DEFAULT_SETS} trip sets identical (84 days, 1200 bp, 20000 cents/day)"))
}

struct Seeded {
    app: App,
    stats: Stats,
    hash: String,
}

fn seed_deployment(deliveries: u32) -> Seeded {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/deployment-178.json");
    let mut sc = Scenario::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(sc.profile.accounts, SCENARIO_ACCOUNTS);
    sc.intake.deliveries = deliveries;
    let config = ServiceConfig::default();
    let store = Arc::new(Store::open_in_memory().unwrap());
    let summary = scenario::seed(store.clone(), &config, &sc).unwrap();
    let clock = Arc::new(FixedClock::new(sc.now()));
    let app = App::assemble(config, store, clock, Arc::new(MemoryOtpChannel::default())).unwrap();
    Seeded { app, stats: summary.stats, hash: summary.store_hash }
}

fn single_delivery() -> &'static Seeded {
    static ONCE: OnceLock<Seeded> = OnceLock::new();
    ONCE.get_or_init(|| seed_deployment(1))
}

/// Opens one case per sharing driver and returns every estimate, keyed by case.
fn all_estimates(app: &App) -> BTreeMap<String, Value> {
    let drivers = app.service.list_drivers(&admin(), None).unwrap();
    let mut out = BTreeMap::new();
    for d in drivers.iter().filter(|d| d.share_consent) {
        let acct = &d.accounts[0];
        let state = acct.status.state;
        if state == SyncState::Syncing {
            continue;
        }
        let case = app
            .service
            .create_case(
                &attorney(),
                CreateCase {
                    driver_id: d.driver_id.clone(),
                    platform: acct.platform.unwrap(),
                    deactivation_date: date(2024, 6, 1),
                    reactivation_date: None,
                    as_of_date: Some(date(2024, 7, 15)),
                    params: None,
                    use_fallback: state == SyncState::Failed,
                },
            )
            .unwrap();
        let r = app
            .service
            .get_report(&attorney(), &case.case_id, ReportFormat::JsonPreview, &ReportOptions::default())
            .unwrap();
        out.insert(case.case_id, preview_value(&r.preview));
    }
    out
}

fn per_account(app: &App) -> BTreeMap<String, (SyncState, u64)> {
    app.service
        .list_drivers(&admin(), None)
        .unwrap()
        .into_iter()
        .flat_map(|d| d.accounts)
        .map(|a| (a.account_id, (a.status.state, a.status.trips_ingested)))
        .collect()
}

fn idempotent_ingestion() -> Result<String, String> {
    let once = single_delivery();
    let twice = seed_deployment(2);
    if once.stats.trips != twice.stats.trips {
        return Err(format!("trips {} vs {}", once.stats.trips, twice.stats.trips));
    }
    if per_account(&once.app) != per_account(&twice.app) {
        return Err("per-account state or trip counts differ".into());
    }
    let a = all_estimates(&once.app);
    let b = all_estimates(&twice.app);
    if a.len() < 100 || a != b {
        let bad = a.iter().filter(|(k, v)| b.get(*k) != Some(*v)).count();
        return Err(format!("{bad} of {} case estimates differ", a.len()));
    }
    Ok(format!(
        "{} accounts, {} trips, {} case estimates identical; store hashes {}",
        twice.stats.accounts_created,
        twice.stats.trips,
        a.len(),
        if once.hash == twice.hash { "identical" } else { "differ" }
    ))
}

fn sync_failure_fidelity() -> Result<String, String> {
    let s = &single_delivery().stats;
    let detail = format!(
        "{} accounts: {} SYNCED (uber {}, lyft {}), {} FAILED, {} still syncing",
        s.accounts_created, s.synced, s.synced_by_platform.uber, s.synced_by_platform.lyft, s.failed, s.syncing
    );
    if s.accounts_created == SCENARIO_ACCOUNTS as u64
        && s.failed == EXPECTED_FAILED
        && EXPECTED_SYNCED.contains(&s.synced)
        && s.syncing == 0
    {
        Ok(detail)
    } else {
        Err(detail)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum ShareState {
    Never,
    Active,
    Revoked,
}

fn consent_gate() -> Result<String, String> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6A7E);
    let states = [ShareState::Never, ShareState::Active, ShareState::Revoked];
    let accounts = states
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let id = format!("gate-{i}");
            connector_account(&id, Platform::Uber, &login(300 + i), random_trips(&mut rng, &id, Platform::Uber, 400, date(2024, 1, 1), 150), FailMode::None)
        })
        .collect();
    let w = world(ServiceConfig::default(), accounts);
    let mut subjects = Vec::new();
    for (i, state) in states.iter().enumerate() {
        let driver = w.onboard(&login(300 + i), Platform::Uber, *state != ShareState::Never);
        let req = CreateCase {
            driver_id: driver.clone(),
            platform: Platform::Uber,
            deactivation_date: date(2024, 5, 1),
            reactivation_date: None,
            as_of_date: Some(date(2024, 7, 1)),
            params: None,
            use_fallback: false,
        };
        let case_id = match state {
            // No case can be opened without consent; one is planted below.
            ShareState::Never => "case-never".to_string(),
            _ => w.service.create_case(&attorney(), req).unwrap().case_id,
        };
        if *state == ShareState::Revoked {
            let c = w.service.consents(&admin(), &driver).unwrap();
            let share = c.iter().find(|c| c.scope == ConsentScope::ShareWithOrg && c.is_active()).unwrap();
            w.service.revoke_consent(&Actor::new(driver.clone(), Role::Driver), &share.consent_id).unwrap();
        }
        subjects.push((*state, driver, case_id));
    }
    plant_case(&w.store, &subjects[0].2, &subjects[0].1, &subjects[1].2);

    let app = router(AppState { service: w.service.clone(), ingestor: w.ingestor.clone() });
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    let roles = [Role::Driver, Role::FieldRep, Role::Paralegal, Role::Attorney, Role::Admin];
    let mut cells = 0;
    let mut leaks = Vec::new();
    let mut consent_errors = 0;
    for (state, driver, case_id) in &subjects {
        let endpoints = [
            ("GET", format!("/drivers/{driver}/trips"), false),
            ("GET", format!("/drivers/{driver}/take-rate"), false),
            ("GET", format!("/cases/{case_id}/report.pdf"), true),
            ("GET", format!("/cases/{case_id}/report.csv"), true),
            ("GET", format!("/cases/{case_id}/report.zip"), true),
            ("GET", format!("/cases/{case_id}/preview"), true),
            ("GET", format!("/cases/{case_id}/oracle"), true),
            ("POST", "/cases".to_string(), true),
        ];
        for role in roles {
            let actor_id = if role == Role::Driver { driver.clone() } else { format!("{}-1", role.as_str().to_lowercase()) };
            for (method, uri, legal_only) in &endpoints {
                cells += 1;
                let body = if *method == "POST" {
                    serde_json::json!({"driver_id": driver, "platform": "UBER", "deactivation_date": "2024-05-02"}).to_string()
                } else {
                    String::new()
                };
                let req = Request::builder()
                    .method(*method)
                    .uri(uri)
                    .header(ACTOR_ID_HEADER, &actor_id)
                    .header(ACTOR_ROLE_HEADER, role.as_str())
                    .body(Body::from(body))
                    .unwrap();
                let (status, bytes) = rt.block_on(async {
                    let res = app.clone().oneshot(req).await.unwrap();
                    let status = res.status();
                    (status, axum::body::to_bytes(res.into_body(), usize::MAX).await.unwrap())
                });
                let allowed = match role {
                    Role::Driver => !legal_only,
                    Role::FieldRep => false,
                    _ => *state == ShareState::Active,
                };
                let json: Option<Value> = serde_json::from_slice(&bytes).ok();
                let error = json.as_ref().and_then(|j| j.get("error")).and_then(Value::as_str).map(str::to_string);
                let cell = format!("{} {method} {uri} share={state:?}", role.as_str());
                if allowed {
                    if !status.is_success() {
                        leaks.push(format!("{cell}: refused with {status}"));
                    }
                    continue;
                }
                if status.is_success() || error.is_none() {
                    leaks.push(format!("{cell}: returned {status} with data"));
                    continue;
                }
                let expected = if role.is_legal() { "CONSENT_REQUIRED" } else { "FORBIDDEN" };
                if error.as_deref() != Some(expected) || status != StatusCode::FORBIDDEN {
                    leaks.push(format!("{cell}: {status} {error:?}, expected {expected}"));
                }
                if error.as_deref() == Some("CONSENT_REQUIRED") {
                    consent_errors += 1;
                }
            }
        }
        // Another driver never sees this driver's data.
        let stranger = Actor::new("drv-99999", Role::Driver);
        if w.service.driver_trips(&stranger, driver, None).is_ok() {
            leaks.push(format!("stranger read {driver}"));
        }
    }
    let elapsed = started.elapsed();
    let detail = format!(
        "{cells} cells (5 roles x 3 consent states x 8 endpoints), {} violations, {consent_errors} CONSENT_REQUIRED refusals, {elapsed:.2?}",
        leaks.len()
    );
    if leaks.is_empty() && elapsed < GATE_BUDGET {
        Ok(detail)
    } else {
        Err(format!("{detail}; first: {}", leaks.first().map(String::as_str).unwrap_or("over budget")))
    }
}

/// Copies an existing case row for a driver who never consented.
fn plant_case(store: &Store, case_id: &str, driver_id: &str, template: &str) {
    store
        .write(|c| {
            c.execute(
                "INSERT INTO cases (case_id, driver_id, platform, deactivation_date, reactivation_date, \
                 as_of_date, params, use_fallback, created_by, created_at) \
                 SELECT ?1, ?2, platform, deactivation_date, reactivation_date, as_of_date, params, use_fallback, \
                 created_by, created_at FROM cases WHERE case_id = ?3",
                [case_id, driver_id, template],
            )?;
            Ok(())
        })
        .unwrap();
}

fn format_consistency() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF0A7);
    let mut accounts = Vec::new();
    for i in 0..FORMAT_CASES {
        let platform = if i % 3 == 0 { Platform::Lyft } else { Platform::Uber };
        let id = format!("fmt-{i:02}");
        let n = rng.gen_range(50..1_200);
        accounts.push(connector_account(&id, platform, &login(500 + i), random_trips(&mut rng, &id, platform, n, date(2024, 1, 1), 170), FailMode::None));
    }
    let w = world(ServiceConfig::default(), accounts.clone());
    let mut checked = 0;
    for (i, acct) in accounts.iter().enumerate() {
        let driver = w.onboard(&acct.credential_hint, acct.platform, true);
        let params = ParamsPatch {
            reference_days: Some([84, 28, 56, 7, 120][i % 5]),
            include_tips: Some(i % 4 != 3),
            interest_rate: Some([1200, 0, 750, 2400][i % 4]),
            ..ParamsPatch::default()
        };
        let deact = date(2024, 4, 20) + Days::days(rng.gen_range(0..60));
        let case = w
            .service
            .create_case(
                &attorney(),
                CreateCase {
                    driver_id: driver.clone(),
                    platform: acct.platform,
                    deactivation_date: deact,
                    reactivation_date: rng.gen_bool(0.5).then(|| deact + Days::days(rng.gen_range(1..40))),
                    as_of_date: Some(date(2024, 7, 15)),
                    params: Some(params),
                    use_fallback: false,
                },
            )
            .unwrap();
        let opts = ReportOptions { redact: Some(i % 2 == 0), ..ReportOptions::default() };
        let get = |f| w.service.get_report(&attorney(), &case.case_id, f, &opts).unwrap();
        let pdf = get(ReportFormat::Pdf);
        let json = get(ReportFormat::JsonPreview);
        let csv = get(ReportFormat::Csv);
        let preview: ReportPreview = serde_json::from_slice(&json.bytes).unwrap();

        let from_pdf = pdf_amounts(&pdf.bytes);
        let from_json = [
            ("Interest:", preview.interest_cents),
            ("Principal:", preview.principal_cents),
            ("Total:", preview.total_cents),
        ]
        .into_iter()
        .collect::<BTreeMap<_, _>>();
        if from_pdf != from_json {
            return Err(format!("{}: pdf {from_pdf:?} != json {from_json:?}", case.case_id));
        }

        let parsed = parse_csv(&csv.bytes, &acct.connector_account_id).map_err(|e| e.to_string())?;
        let ecase = DeactivationCase {
            case_id: case.case_id.clone(),
            driver_id: driver.clone(),
            platform: case.platform,
            deactivation_date: case.deactivation_date,
            reactivation_date: case.reactivation_date,
            as_of_date: preview.summary.as_of_date,
            params: case.params.clone(),
            use_fallback: false,
        };
        let recomputed = lost_wage(&ecase, &parsed).map_err(|e| e.to_string())?;
        let got = (recomputed.principal.cents(), recomputed.interest.cents(), recomputed.total.cents());
        if got != (preview.principal_cents, preview.interest_cents, preview.total_cents) {
            return Err(format!("{}: csv recomputation {got:?} != json", case.case_id));
        }

        let stored = w.service.driver_trips(&attorney(), &driver, Some(acct.platform)).unwrap();
        if parsed != stored {
            return Err(format!("{}: csv trips differ from stored trips", case.case_id));
        }
        if render_csv(&parsed) != csv.bytes {
            return Err(format!("{}: csv does not re-render byte-identically", case.case_id));
        }
        checked += 1;
    }
    Ok(format!("{checked}/{FORMAT_CASES} cases: pdf = json = csv recomputation; csv round trip lossless"))
}

fn report_latency() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1A7E);
    let deact = date(2024, 6, 1);
    let trips = random_trips(&mut rng, "big", Platform::Uber, LATENCY_TRIPS, deact - Days::days(84), 84);
    let w = world(ServiceConfig::default(), vec![connector_account("big", Platform::Uber, &login(900), trips, FailMode::None)]);
    let driver = w.onboard(&login(900), Platform::Uber, true);
    let case = w
        .service
        .create_case(
            &attorney(),
            CreateCase {
                driver_id: driver,
                platform: Platform::Uber,
                deactivation_date: deact,
                reactivation_date: None,
                as_of_date: Some(date(2024, 7, 15)),
                params: None,
                use_fallback: false,
            },
        )
        .unwrap();
    let mut timings = Vec::new();
    for f in [ReportFormat::Pdf, ReportFormat::Csv, ReportFormat::Zip, ReportFormat::JsonPreview] {
        let started = Instant::now();
        let out = w.service.get_report(&attorney(), &case.case_id, f, &ReportOptions::default()).unwrap();
        let elapsed = started.elapsed();
        if out.preview.trips_in_window != LATENCY_TRIPS {
            return Err(format!("{} trips in window, expected {LATENCY_TRIPS}", out.preview.trips_in_window));
        }
        timings.push((f.as_str(), elapsed));
    }
    let worst = timings.iter().map(|t| t.1).max().unwrap();
    let detail = timings.iter().map(|(f, t)| format!("{f} {t:.2?}")).collect::<Vec<_>>().join(", ");
    let detail = format!("{LATENCY_TRIPS} trips: {detail}");
    if worst < LATENCY_BUDGET {
        Ok(detail)
    } else {
        Err(format!("{detail}; budget {LATENCY_BUDGET:?}"))
    }
}

type Criterion = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Criterion); 8] = [
        ("fallback_fixed_point", fallback_fixed_point),
        ("oracle_equivalence", oracle_equivalence),
        ("defaults_fidelity", defaults_fidelity),
        ("idempotent_ingestion", idempotent_ingestion),
        ("sync_failure_fidelity", sync_failure_fidelity),
        ("consent_gate", consent_gate),
        ("format_consistency", format_consistency),
        ("report_latency", report_latency),
    ];
    // Panics are reported as failures on their criterion's line.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS  {name:<24} {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<24} {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
