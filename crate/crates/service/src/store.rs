//! SQLite persistence.
//!
//! One connection behind a mutex; every mutation runs inside an immediate
//! transaction, so writes are serialized and never partially applied.
//! Consent, revocation, report and audit tables are insert-only, enforced by
//! triggers.

use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, FixedOffset, NaiveDate, SecondsFormat, Utc};
use lostwage_core::{Coordinate, Money, Platform, PolicyParams, Trip};
use rusqlite::types::ValueRef;
use rusqlite::{params, Connection, OptionalExtension, Row, TransactionBehavior};
use sha2::{Digest, Sha256};

use crate::error::{ServiceError, ServiceResult};
use crate::model::*;

const SCHEMA: &str = r#"
PRAGMA foreign_keys = ON;

CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS counters (
    name TEXT PRIMARY KEY,
    value INTEGER NOT NULL
);

CREATE TABLE IF NOT EXISTS drivers (
    driver_id TEXT PRIMARY KEY,
    display_name TEXT NOT NULL,
    contact TEXT NOT NULL UNIQUE,
    preferred_language TEXT,
    created_at TEXT NOT NULL,
    verified_at TEXT
);

CREATE TABLE IF NOT EXISTS otp_challenges (
    driver_id TEXT PRIMARY KEY REFERENCES drivers(driver_id),
    code_sha256 TEXT NOT NULL,
    issued_at TEXT NOT NULL,
    failed_attempts INTEGER NOT NULL DEFAULT 0
);

CREATE TABLE IF NOT EXISTS consents (
    consent_id TEXT PRIMARY KEY,
    driver_id TEXT NOT NULL REFERENCES drivers(driver_id),
    scope TEXT NOT NULL,
    granted_at TEXT NOT NULL,
    granted_by TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS consent_revocations (
    consent_id TEXT PRIMARY KEY REFERENCES consents(consent_id),
    revoked_at TEXT NOT NULL,
    revoked_by TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS accounts (
    account_id TEXT PRIMARY KEY,
    driver_id TEXT REFERENCES drivers(driver_id),
    platform TEXT,
    credential TEXT,
    state TEXT NOT NULL,
    last_event_at TEXT,
    trips_ingested INTEGER NOT NULL DEFAULT 0,
    last_error TEXT,
    final_received INTEGER NOT NULL DEFAULT 0
);

CREATE TABLE IF NOT EXISTS trips (
    account_id TEXT NOT NULL,
    trip_id TEXT NOT NULL,
    platform TEXT NOT NULL,
    start_utc_ns INTEGER NOT NULL,
    start_offset INTEGER NOT NULL,
    end_utc_ns INTEGER NOT NULL,
    end_offset INTEGER NOT NULL,
    start_lat INTEGER NOT NULL,
    start_lon INTEGER NOT NULL,
    end_lat INTEGER NOT NULL,
    end_lon INTEGER NOT NULL,
    driver_pay INTEGER NOT NULL,
    customer_charge INTEGER NOT NULL,
    tips INTEGER NOT NULL,
    bonus INTEGER NOT NULL,
    delivery_id TEXT NOT NULL,
    PRIMARY KEY (account_id, trip_id)
);
CREATE INDEX IF NOT EXISTS trips_by_start ON trips(account_id, start_utc_ns);

CREATE TABLE IF NOT EXISTS deliveries (
    delivery_id TEXT PRIMARY KEY,
    account_id TEXT NOT NULL,
    event TEXT NOT NULL,
    attempt INTEGER NOT NULL,
    received_at TEXT NOT NULL,
    trips_inserted INTEGER NOT NULL
);

CREATE TABLE IF NOT EXISTS dead_letters (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    received_at TEXT NOT NULL,
    delivery_id TEXT,
    account_id TEXT,
    reason TEXT NOT NULL,
    body TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS cases (
    case_id TEXT PRIMARY KEY,
    driver_id TEXT NOT NULL REFERENCES drivers(driver_id),
    platform TEXT NOT NULL,
    deactivation_date TEXT NOT NULL,
    reactivation_date TEXT,
    as_of_date TEXT,
    params TEXT NOT NULL,
    use_fallback INTEGER NOT NULL,
    created_by TEXT NOT NULL,
    created_at TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS reports (
    report_id INTEGER PRIMARY KEY AUTOINCREMENT,
    case_id TEXT NOT NULL REFERENCES cases(case_id),
    format TEXT NOT NULL,
    generated_at TEXT NOT NULL,
    actor_id TEXT NOT NULL,
    engine_version TEXT NOT NULL,
    as_of_date TEXT NOT NULL,
    principal_cents INTEGER NOT NULL,
    interest_cents INTEGER NOT NULL,
    total_cents INTEGER NOT NULL,
    fallback_used INTEGER NOT NULL,
    sync_override INTEGER NOT NULL,
    sha256 TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS audit_log (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    at TEXT NOT NULL,
    actor_id TEXT NOT NULL,
    role TEXT NOT NULL,
    action TEXT NOT NULL,
    case_id TEXT,
    engine_version TEXT NOT NULL,
    detail TEXT NOT NULL
);
"#;

const APPEND_ONLY: [&str; 4] = ["consents", "consent_revocations", "reports", "audit_log"];

/// Tables and their canonical order for [`Store::content_hash`].
const HASHED: [(&str, &str); 13] = [
    ("meta", "key"),
    ("counters", "name"),
    ("drivers", "driver_id"),
    ("otp_challenges", "driver_id"),
    ("consents", "consent_id"),
    ("consent_revocations", "consent_id"),
    ("accounts", "account_id"),
    ("trips", "account_id, trip_id"),
    ("deliveries", "delivery_id"),
    ("dead_letters", "id"),
    ("cases", "case_id"),
    ("reports", "report_id"),
    ("audit_log", "seq"),
];

pub const POLICY_KEY: &str = "policy_defaults";
pub const CONNECTOR_KEY: &str = "connector_state";

pub struct Store {
    conn: Mutex<Connection>,
}

pub(crate) fn ts(at: DateTime<Utc>) -> String {
    at.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

fn parse_ts(s: &str) -> rusqlite::Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s).map(|d| d.with_timezone(&Utc)).map_err(|e| {
        rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, Box::new(e))
    })
}

fn parse_opt_ts(s: Option<String>) -> rusqlite::Result<Option<DateTime<Utc>>> {
    s.as_deref().map(parse_ts).transpose()
}

fn conv_err<E: std::error::Error + Send + Sync + 'static>(e: E) -> rusqlite::Error {
    rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, Box::new(e))
}

fn parse_date(s: &str) -> rusqlite::Result<NaiveDate> {
    s.parse::<NaiveDate>().map_err(conv_err)
}

fn parse_platform(s: &str) -> rusqlite::Result<Platform> {
    s.parse::<Platform>().map_err(|e| conv_err(std::io::Error::other(e.to_string())))
}

impl Store {
    pub fn open(path: &Path) -> ServiceResult<Store> {
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.busy_timeout(std::time::Duration::from_secs(10))?;
        Self::init(conn)
    }

    pub fn open_in_memory() -> ServiceResult<Store> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> ServiceResult<Store> {
        conn.execute_batch(SCHEMA)?;
        for table in APPEND_ONLY {
            conn.execute_batch(&format!(
                "CREATE TRIGGER IF NOT EXISTS {table}_no_update BEFORE UPDATE ON {table} \
                 BEGIN SELECT RAISE(ABORT, '{table} is append-only'); END;\n\
                 CREATE TRIGGER IF NOT EXISTS {table}_no_delete BEFORE DELETE ON {table} \
                 BEGIN SELECT RAISE(ABORT, '{table} is append-only'); END;"
            ))?;
        }
        Ok(Store { conn: Mutex::new(conn) })
    }

    /// Runs `f` on the connection without a transaction (reads).
    pub fn read<T>(&self, f: impl FnOnce(&Connection) -> ServiceResult<T>) -> ServiceResult<T> {
        let conn = self.conn.lock().map_err(|_| ServiceError::Internal("store poisoned".into()))?;
        f(&conn)
    }

    /// Runs `f` inside an immediate transaction; commits on `Ok`.
    pub fn write<T>(&self, f: impl FnOnce(&Connection) -> ServiceResult<T>) -> ServiceResult<T> {
        let mut conn =
            self.conn.lock().map_err(|_| ServiceError::Internal("store poisoned".into()))?;
        let tx = conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let out = f(&tx)?;
        tx.commit()?;
        Ok(out)
    }

    /// SHA-256 over every table in primary-key order. Two stores with the same
    /// logical contents hash the same.
    pub fn content_hash(&self) -> ServiceResult<String> {
        self.read(|c| {
            let mut h = Sha256::new();
            for (table, order) in HASHED {
                h.update(format!("table {table}\n").as_bytes());
                let mut stmt = c.prepare(&format!("SELECT * FROM {table} ORDER BY {order}"))?;
                let cols = stmt.column_count();
                let mut rows = stmt.query([])?;
                while let Some(row) = rows.next()? {
                    for i in 0..cols {
                        match row.get_ref(i)? {
                            ValueRef::Null => h.update(b"N"),
                            ValueRef::Integer(v) => h.update(format!("I{v}").as_bytes()),
                            ValueRef::Real(v) => h.update(format!("R{v}").as_bytes()),
                            ValueRef::Text(t) => {
                                h.update(format!("T{}:", t.len()).as_bytes());
                                h.update(t);
                            }
                            ValueRef::Blob(b) => {
                                h.update(format!("B{}:", b.len()).as_bytes());
                                h.update(b);
                            }
                        }
                        h.update(b"|");
                    }
                    h.update(b"\n");
                }
            }
            Ok(hex::encode(h.finalize()))
        })
    }
}

// Query helpers over a connection or transaction.

pub(crate) fn next_id(c: &Connection, name: &str) -> ServiceResult<i64> {
    c.execute(
        "INSERT INTO counters(name, value) VALUES (?1, 1) \
         ON CONFLICT(name) DO UPDATE SET value = value + 1",
        params![name],
    )?;
    Ok(c.query_row("SELECT value FROM counters WHERE name = ?1", params![name], |r| r.get(0))?)
}

pub(crate) fn meta_get(c: &Connection, key: &str) -> ServiceResult<Option<String>> {
    Ok(c.query_row("SELECT value FROM meta WHERE key = ?1", params![key], |r| r.get(0))
        .optional()?)
}

pub(crate) fn meta_set(c: &Connection, key: &str, value: &str) -> ServiceResult<()> {
    c.execute(
        "INSERT INTO meta(key, value) VALUES (?1, ?2) \
         ON CONFLICT(key) DO UPDATE SET value = excluded.value",
        params![key, value],
    )?;
    Ok(())
}

pub(crate) fn policy_defaults(c: &Connection) -> ServiceResult<Option<PolicyParams>> {
    meta_get(c, POLICY_KEY)?
        .map(|s| {
            serde_json::from_str(&s)
                .map_err(|e| ServiceError::Internal(format!("stored policy defaults: {e}")))
        })
        .transpose()
}

// Drivers and OTP.

fn driver_row(r: &Row) -> rusqlite::Result<Driver> {
    Ok(Driver {
        driver_id: r.get(0)?,
        display_name: r.get(1)?,
        phone_or_email: r.get(2)?,
        preferred_language: r.get(3)?,
        created_at: parse_ts(&r.get::<_, String>(4)?)?,
        verified_at: parse_opt_ts(r.get(5)?)?,
    })
}

const DRIVER_COLS: &str =
    "driver_id, display_name, contact, preferred_language, created_at, verified_at";

pub(crate) fn insert_driver(c: &Connection, d: &Driver) -> ServiceResult<()> {
    c.execute(
        "INSERT INTO drivers(driver_id, display_name, contact, preferred_language, created_at) \
         VALUES (?1, ?2, ?3, ?4, ?5)",
        params![d.driver_id, d.display_name, d.phone_or_email, d.preferred_language, ts(d.created_at)],
    )?;
    Ok(())
}

pub(crate) fn driver(c: &Connection, driver_id: &str) -> ServiceResult<Option<Driver>> {
    Ok(c.query_row(
        &format!("SELECT {DRIVER_COLS} FROM drivers WHERE driver_id = ?1"),
        params![driver_id],
        driver_row,
    )
    .optional()?)
}

pub(crate) fn driver_by_contact(c: &Connection, contact: &str) -> ServiceResult<Option<Driver>> {
    Ok(c.query_row(
        &format!("SELECT {DRIVER_COLS} FROM drivers WHERE contact = ?1"),
        params![contact],
        driver_row,
    )
    .optional()?)
}

pub(crate) fn drivers(c: &Connection) -> ServiceResult<Vec<Driver>> {
    let mut stmt = c.prepare(&format!("SELECT {DRIVER_COLS} FROM drivers ORDER BY driver_id"))?;
    let rows = stmt.query_map([], driver_row)?.collect::<Result<Vec<_>, _>>()?;
    Ok(rows)
}

pub(crate) fn set_verified(c: &Connection, driver_id: &str, at: DateTime<Utc>) -> ServiceResult<()> {
    c.execute(
        "UPDATE drivers SET verified_at = ?2 WHERE driver_id = ?1",
        params![driver_id, ts(at)],
    )?;
    Ok(())
}

pub(crate) struct ChallengeRow {
    pub code_sha256: String,
    pub issued_at: DateTime<Utc>,
    pub failed_attempts: u32,
}

pub(crate) fn challenge(c: &Connection, driver_id: &str) -> ServiceResult<Option<ChallengeRow>> {
    Ok(c.query_row(
        "SELECT code_sha256, issued_at, failed_attempts FROM otp_challenges WHERE driver_id = ?1",
        params![driver_id],
        |r| {
            Ok(ChallengeRow {
                code_sha256: r.get(0)?,
                issued_at: parse_ts(&r.get::<_, String>(1)?)?,
                failed_attempts: r.get(2)?,
            })
        },
    )
    .optional()?)
}

pub(crate) fn put_challenge(
    c: &Connection,
    driver_id: &str,
    code_sha256: &str,
    at: DateTime<Utc>,
) -> ServiceResult<()> {
    c.execute(
        "INSERT INTO otp_challenges(driver_id, code_sha256, issued_at, failed_attempts) \
         VALUES (?1, ?2, ?3, 0) ON CONFLICT(driver_id) DO UPDATE SET \
         code_sha256 = excluded.code_sha256, issued_at = excluded.issued_at, failed_attempts = 0",
        params![driver_id, code_sha256, ts(at)],
    )?;
    Ok(())
}

pub(crate) fn record_otp_failure(c: &Connection, driver_id: &str) -> ServiceResult<u32> {
    c.execute(
        "UPDATE otp_challenges SET failed_attempts = failed_attempts + 1 WHERE driver_id = ?1",
        params![driver_id],
    )?;
    Ok(c.query_row(
        "SELECT failed_attempts FROM otp_challenges WHERE driver_id = ?1",
        params![driver_id],
        |r| r.get(0),
    )?)
}

pub(crate) fn delete_challenge(c: &Connection, driver_id: &str) -> ServiceResult<()> {
    c.execute("DELETE FROM otp_challenges WHERE driver_id = ?1", params![driver_id])?;
    Ok(())
}

// Consent.

const CONSENT_SELECT: &str = "SELECT c.consent_id, c.driver_id, c.scope, c.granted_at, r.revoked_at \
     FROM consents c LEFT JOIN consent_revocations r ON r.consent_id = c.consent_id";

fn consent_row(r: &Row) -> rusqlite::Result<ConsentRecord> {
    Ok(ConsentRecord {
        consent_id: r.get(0)?,
        driver_id: r.get(1)?,
        scope: r.get::<_, String>(2)?.parse().map_err(|e: ServiceError| {
            conv_err(std::io::Error::other(e.to_string()))
        })?,
        granted_at: parse_ts(&r.get::<_, String>(3)?)?,
        revoked_at: parse_opt_ts(r.get(4)?)?,
    })
}

pub(crate) fn insert_consent(c: &Connection, rec: &ConsentRecord, by: &str) -> ServiceResult<()> {
    c.execute(
        "INSERT INTO consents(consent_id, driver_id, scope, granted_at, granted_by) \
         VALUES (?1, ?2, ?3, ?4, ?5)",
        params![rec.consent_id, rec.driver_id, rec.scope.as_str(), ts(rec.granted_at), by],
    )?;
    Ok(())
}

pub(crate) fn revoke_consent(
    c: &Connection,
    consent_id: &str,
    at: DateTime<Utc>,
    by: &str,
) -> ServiceResult<()> {
    c.execute(
        "INSERT INTO consent_revocations(consent_id, revoked_at, revoked_by) VALUES (?1, ?2, ?3)",
        params![consent_id, ts(at), by],
    )?;
    Ok(())
}

pub(crate) fn consent(c: &Connection, consent_id: &str) -> ServiceResult<Option<ConsentRecord>> {
    Ok(c.query_row(
        &format!("{CONSENT_SELECT} WHERE c.consent_id = ?1"),
        params![consent_id],
        consent_row,
    )
    .optional()?)
}

pub(crate) fn consents_for(c: &Connection, driver_id: &str) -> ServiceResult<Vec<ConsentRecord>> {
    let mut stmt = c.prepare(&format!(
        "{CONSENT_SELECT} WHERE c.driver_id = ?1 ORDER BY c.granted_at, c.consent_id"
    ))?;
    let rows = stmt.query_map(params![driver_id], consent_row)?.collect::<Result<Vec<_>, _>>()?;
    Ok(rows)
}

pub(crate) fn active_consent(
    c: &Connection,
    driver_id: &str,
    scope: ConsentScope,
) -> ServiceResult<Option<ConsentRecord>> {
    Ok(c.query_row(
        &format!(
            "{CONSENT_SELECT} WHERE c.driver_id = ?1 AND c.scope = ?2 AND r.revoked_at IS NULL \
             ORDER BY c.consent_id LIMIT 1"
        ),
        params![driver_id, scope.as_str()],
        consent_row,
    )
    .optional()?)
}

// Accounts and sync status.

const ACCOUNT_COLS: &str =
    "account_id, driver_id, platform, state, last_event_at, trips_ingested, last_error";

fn account_row(r: &Row) -> rusqlite::Result<AccountRecord> {
    let state: String = r.get(3)?;
    Ok(AccountRecord {
        account_id: r.get(0)?,
        driver_id: r.get(1)?,
        platform: r.get::<_, Option<String>>(2)?.as_deref().map(parse_platform).transpose()?,
        status: SyncStatus {
            account_id: r.get(0)?,
            state: SyncState::parse(&state).ok_or_else(|| {
                conv_err(std::io::Error::other(format!("bad sync state {state}")))
            })?,
            last_event_at: parse_opt_ts(r.get(4)?)?,
            trips_ingested: r.get::<_, i64>(5)? as u64,
            last_error: r.get(6)?,
        },
    })
}

pub(crate) fn account(c: &Connection, account_id: &str) -> ServiceResult<Option<AccountRecord>> {
    Ok(c.query_row(
        &format!("SELECT {ACCOUNT_COLS} FROM accounts WHERE account_id = ?1"),
        params![account_id],
        account_row,
    )
    .optional()?)
}

pub(crate) fn accounts(c: &Connection) -> ServiceResult<Vec<AccountRecord>> {
    let mut stmt = c.prepare(&format!("SELECT {ACCOUNT_COLS} FROM accounts ORDER BY account_id"))?;
    let rows = stmt.query_map([], account_row)?.collect::<Result<Vec<_>, _>>()?;
    Ok(rows)
}

pub(crate) fn accounts_for_driver(
    c: &Connection,
    driver_id: &str,
) -> ServiceResult<Vec<AccountRecord>> {
    let mut stmt = c.prepare(&format!(
        "SELECT {ACCOUNT_COLS} FROM accounts WHERE driver_id = ?1 ORDER BY account_id"
    ))?;
    let rows = stmt.query_map(params![driver_id], account_row)?.collect::<Result<Vec<_>, _>>()?;
    Ok(rows)
}

/// Creates the account row in `PENDING` if it does not exist.
pub(crate) fn ensure_account(c: &Connection, account_id: &str) -> ServiceResult<()> {
    c.execute(
        "INSERT OR IGNORE INTO accounts(account_id, state) VALUES (?1, 'PENDING')",
        params![account_id],
    )?;
    Ok(())
}

pub(crate) fn link_account(
    c: &Connection,
    account_id: &str,
    driver_id: &str,
    platform: Platform,
    credential: &str,
) -> ServiceResult<()> {
    ensure_account(c, account_id)?;
    c.execute(
        "UPDATE accounts SET driver_id = ?2, platform = ?3, credential = ?4 WHERE account_id = ?1",
        params![account_id, driver_id, platform.to_string(), credential],
    )?;
    Ok(())
}

pub(crate) fn set_account_platform(
    c: &Connection,
    account_id: &str,
    platform: Platform,
) -> ServiceResult<()> {
    c.execute(
        "UPDATE accounts SET platform = ?2 WHERE account_id = ?1 AND platform IS NULL",
        params![account_id, platform.to_string()],
    )?;
    Ok(())
}

pub(crate) fn update_status(
    c: &Connection,
    account_id: &str,
    state: SyncState,
    at: DateTime<Utc>,
    last_error: Option<&str>,
) -> ServiceResult<()> {
    c.execute(
        "UPDATE accounts SET state = ?2, last_event_at = ?3, last_error = COALESCE(?4, last_error) \
         WHERE account_id = ?1",
        params![account_id, state.as_str(), ts(at), last_error],
    )?;
    Ok(())
}

pub(crate) fn mark_final(c: &Connection, account_id: &str) -> ServiceResult<()> {
    c.execute("UPDATE accounts SET final_received = 1 WHERE account_id = ?1", params![account_id])?;
    Ok(())
}

pub(crate) fn final_received(c: &Connection, account_id: &str) -> ServiceResult<bool> {
    Ok(c.query_row(
        "SELECT final_received FROM accounts WHERE account_id = ?1",
        params![account_id],
        |r| r.get::<_, i64>(0),
    )? != 0)
}

/// Recomputes `trips_ingested` from the trip table.
pub(crate) fn refresh_trip_count(c: &Connection, account_id: &str) -> ServiceResult<u64> {
    c.execute(
        "UPDATE accounts SET trips_ingested = \
         (SELECT COUNT(*) FROM trips WHERE account_id = ?1) WHERE account_id = ?1",
        params![account_id],
    )?;
    Ok(c.query_row(
        "SELECT trips_ingested FROM accounts WHERE account_id = ?1",
        params![account_id],
        |r| r.get::<_, i64>(0),
    )? as u64)
}

// Trips.

pub(crate) fn insert_trip(c: &Connection, t: &Trip, delivery_id: &str) -> ServiceResult<bool> {
    let nanos = |d: &DateTime<FixedOffset>| {
        d.timestamp_nanos_opt()
            .ok_or_else(|| ServiceError::Validation(format!("trip {} time out of range", t.trip_id)))
    };
    let n = c.execute(
        "INSERT OR IGNORE INTO trips(account_id, trip_id, platform, start_utc_ns, start_offset, \
         end_utc_ns, end_offset, start_lat, start_lon, end_lat, end_lon, driver_pay, \
         customer_charge, tips, bonus, delivery_id) \
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14, ?15, ?16)",
        params![
            t.account_id,
            t.trip_id,
            t.platform.to_string(),
            nanos(&t.start_time)?,
            t.start_time.offset().local_minus_utc(),
            nanos(&t.end_time)?,
            t.end_time.offset().local_minus_utc(),
            t.start_lat.micro_degrees(),
            t.start_lon.micro_degrees(),
            t.end_lat.micro_degrees(),
            t.end_lon.micro_degrees(),
            t.driver_pay.cents(),
            t.customer_charge.cents(),
            t.tips.cents(),
            t.bonus.cents(),
            delivery_id,
        ],
    )?;
    Ok(n == 1)
}

fn instant(ns: i64, offset: i32) -> rusqlite::Result<DateTime<FixedOffset>> {
    let tz = FixedOffset::east_opt(offset)
        .ok_or_else(|| conv_err(std::io::Error::other(format!("bad offset {offset}"))))?;
    Ok(DateTime::from_timestamp_nanos(ns).with_timezone(&tz))
}

fn trip_row(r: &Row) -> rusqlite::Result<Trip> {
    Ok(Trip {
        account_id: r.get(0)?,
        trip_id: r.get(1)?,
        platform: parse_platform(&r.get::<_, String>(2)?)?,
        start_time: instant(r.get(3)?, r.get(4)?)?,
        end_time: instant(r.get(5)?, r.get(6)?)?,
        start_lat: Coordinate::from_micro_degrees(r.get(7)?),
        start_lon: Coordinate::from_micro_degrees(r.get(8)?),
        end_lat: Coordinate::from_micro_degrees(r.get(9)?),
        end_lon: Coordinate::from_micro_degrees(r.get(10)?),
        driver_pay: Money::from_cents(r.get(11)?),
        customer_charge: Money::from_cents(r.get(12)?),
        tips: Money::from_cents(r.get(13)?),
        bonus: Money::from_cents(r.get(14)?),
    })
}

const TRIP_COLS: &str = "t.account_id, t.trip_id, t.platform, t.start_utc_ns, t.start_offset, \
     t.end_utc_ns, t.end_offset, t.start_lat, t.start_lon, t.end_lat, t.end_lon, t.driver_pay, \
     t.customer_charge, t.tips, t.bonus";

/// A driver's trips across linked accounts, optionally on one platform,
/// ordered by start instant then trip id.
pub(crate) fn trips_for_driver(
    c: &Connection,
    driver_id: &str,
    platform: Option<Platform>,
) -> ServiceResult<Vec<Trip>> {
    let mut stmt = c.prepare(&format!(
        "SELECT {TRIP_COLS} FROM trips t JOIN accounts a ON a.account_id = t.account_id \
         WHERE a.driver_id = ?1 AND (?2 IS NULL OR t.platform = ?2) \
         ORDER BY t.start_utc_ns, t.account_id, t.trip_id"
    ))?;
    let rows = stmt
        .query_map(params![driver_id, platform.map(|p| p.to_string())], trip_row)?
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rows)
}

#[cfg(test)]
pub(crate) fn trips_for_account(c: &Connection, account_id: &str) -> ServiceResult<Vec<Trip>> {
    let mut stmt = c.prepare(&format!(
        "SELECT {TRIP_COLS} FROM trips t WHERE t.account_id = ?1 ORDER BY t.start_utc_ns, t.trip_id"
    ))?;
    let rows = stmt.query_map(params![account_id], trip_row)?.collect::<Result<Vec<_>, _>>()?;
    Ok(rows)
}

// Deliveries and dead letters.

pub(crate) fn delivery_seen(c: &Connection, delivery_id: &str) -> ServiceResult<bool> {
    Ok(c.query_row(
        "SELECT 1 FROM deliveries WHERE delivery_id = ?1",
        params![delivery_id],
        |_| Ok(()),
    )
    .optional()?
    .is_some())
}

pub(crate) fn record_delivery(
    c: &Connection,
    delivery_id: &str,
    account_id: &str,
    event: &str,
    attempt: u32,
    at: DateTime<Utc>,
    inserted: usize,
) -> ServiceResult<()> {
    c.execute(
        "INSERT INTO deliveries(delivery_id, account_id, event, attempt, received_at, trips_inserted) \
         VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
        params![delivery_id, account_id, event, attempt, ts(at), inserted as i64],
    )?;
    Ok(())
}

pub(crate) fn insert_dead_letter(
    c: &Connection,
    at: DateTime<Utc>,
    delivery_id: Option<&str>,
    account_id: Option<&str>,
    reason: &str,
    body: &[u8],
) -> ServiceResult<i64> {
    c.execute(
        "INSERT INTO dead_letters(received_at, delivery_id, account_id, reason, body) \
         VALUES (?1, ?2, ?3, ?4, ?5)",
        params![ts(at), delivery_id, account_id, reason, String::from_utf8_lossy(body)],
    )?;
    Ok(c.last_insert_rowid())
}

pub(crate) fn dead_letters(c: &Connection) -> ServiceResult<Vec<DeadLetter>> {
    let mut stmt = c.prepare(
        "SELECT id, received_at, delivery_id, account_id, reason, body FROM dead_letters ORDER BY id",
    )?;
    let rows = stmt
        .query_map([], |r| {
            Ok(DeadLetter {
                id: r.get(0)?,
                received_at: parse_ts(&r.get::<_, String>(1)?)?,
                delivery_id: r.get(2)?,
                account_id: r.get(3)?,
                reason: r.get(4)?,
                body: r.get(5)?,
            })
        })?
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rows)
}

// Cases.

const CASE_COLS: &str = "case_id, driver_id, platform, deactivation_date, reactivation_date, \
     as_of_date, params, use_fallback, created_by, created_at";

fn case_row(r: &Row) -> rusqlite::Result<StoredCase> {
    let params: String = r.get(6)?;
    Ok(StoredCase {
        case_id: r.get(0)?,
        driver_id: r.get(1)?,
        platform: parse_platform(&r.get::<_, String>(2)?)?,
        deactivation_date: parse_date(&r.get::<_, String>(3)?)?,
        reactivation_date: r.get::<_, Option<String>>(4)?.as_deref().map(parse_date).transpose()?,
        as_of_date: r.get::<_, Option<String>>(5)?.as_deref().map(parse_date).transpose()?,
        params: serde_json::from_str(&params).map_err(conv_err)?,
        use_fallback: r.get::<_, i64>(7)? != 0,
        created_by: r.get(8)?,
        created_at: parse_ts(&r.get::<_, String>(9)?)?,
    })
}

pub(crate) fn insert_case(c: &Connection, case: &StoredCase) -> ServiceResult<()> {
    let params_json = serde_json::to_string(&case.params)
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
    c.execute(
        &format!("INSERT INTO cases({CASE_COLS}) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10)"),
        params![
            case.case_id,
            case.driver_id,
            case.platform.to_string(),
            case.deactivation_date.to_string(),
            case.reactivation_date.map(|d| d.to_string()),
            case.as_of_date.map(|d| d.to_string()),
            params_json,
            case.use_fallback as i64,
            case.created_by,
            ts(case.created_at),
        ],
    )?;
    Ok(())
}

pub(crate) fn case(c: &Connection, case_id: &str) -> ServiceResult<Option<StoredCase>> {
    Ok(c.query_row(
        &format!("SELECT {CASE_COLS} FROM cases WHERE case_id = ?1"),
        params![case_id],
        case_row,
    )
    .optional()?)
}

pub(crate) fn cases(c: &Connection) -> ServiceResult<Vec<StoredCase>> {
    let mut stmt = c.prepare(&format!("SELECT {CASE_COLS} FROM cases ORDER BY case_id"))?;
    let rows = stmt.query_map([], case_row)?.collect::<Result<Vec<_>, _>>()?;
    Ok(rows)
}

pub(crate) fn set_case_fallback(c: &Connection, case_id: &str, on: bool) -> ServiceResult<()> {
    c.execute(
        "UPDATE cases SET use_fallback = ?2 WHERE case_id = ?1",
        params![case_id, on as i64],
    )?;
    Ok(())
}

// Reports and audit.

pub(crate) fn insert_report(c: &Connection, r: &ReportRecord) -> ServiceResult<i64> {
    c.execute(
        "INSERT INTO reports(case_id, format, generated_at, actor_id, engine_version, as_of_date, \
         principal_cents, interest_cents, total_cents, fallback_used, sync_override, sha256) \
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12)",
        params![
            r.case_id,
            r.format,
            ts(r.generated_at),
            r.actor_id,
            r.engine_version,
            r.as_of_date.to_string(),
            r.principal_cents,
            r.interest_cents,
            r.total_cents,
            r.fallback_used as i64,
            r.sync_override as i64,
            r.sha256,
        ],
    )?;
    Ok(c.last_insert_rowid())
}

pub(crate) fn reports_for(c: &Connection, case_id: &str) -> ServiceResult<Vec<ReportRecord>> {
    let mut stmt = c.prepare(
        "SELECT report_id, case_id, format, generated_at, actor_id, engine_version, as_of_date, \
         principal_cents, interest_cents, total_cents, fallback_used, sync_override, sha256 \
         FROM reports WHERE case_id = ?1 ORDER BY report_id",
    )?;
    let rows = stmt
        .query_map(params![case_id], |r| {
            Ok(ReportRecord {
                report_id: r.get(0)?,
                case_id: r.get(1)?,
                format: r.get(2)?,
                generated_at: parse_ts(&r.get::<_, String>(3)?)?,
                actor_id: r.get(4)?,
                engine_version: r.get(5)?,
                as_of_date: parse_date(&r.get::<_, String>(6)?)?,
                principal_cents: r.get(7)?,
                interest_cents: r.get(8)?,
                total_cents: r.get(9)?,
                fallback_used: r.get::<_, i64>(10)? != 0,
                sync_override: r.get::<_, i64>(11)? != 0,
                sha256: r.get(12)?,
            })
        })?
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rows)
}

pub(crate) fn insert_audit(
    c: &Connection,
    at: DateTime<Utc>,
    actor: &Actor,
    action: &str,
    case_id: Option<&str>,
    detail: &serde_json::Value,
) -> ServiceResult<i64> {
    c.execute(
        "INSERT INTO audit_log(at, actor_id, role, action, case_id, engine_version, detail) \
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
        params![
            ts(at),
            actor.actor_id,
            actor.role.as_str(),
            action,
            case_id,
            lostwage_core::ENGINE_VERSION,
            detail.to_string(),
        ],
    )?;
    Ok(c.last_insert_rowid())
}

pub(crate) fn audit_log(c: &Connection) -> ServiceResult<Vec<AuditEntry>> {
    let mut stmt = c.prepare(
        "SELECT seq, at, actor_id, role, action, case_id, engine_version, detail \
         FROM audit_log ORDER BY seq",
    )?;
    let rows = stmt
        .query_map([], |r| {
            let role: String = r.get(3)?;
            let detail: String = r.get(7)?;
            Ok(AuditEntry {
                seq: r.get(0)?,
                at: parse_ts(&r.get::<_, String>(1)?)?,
                actor_id: r.get(2)?,
                role: role.parse().map_err(|e: ServiceError| {
                    conv_err(std::io::Error::other(e.to_string()))
                })?,
                action: r.get(4)?,
                case_id: r.get(5)?,
                engine_version: r.get(6)?,
                detail: serde_json::from_str(&detail).map_err(conv_err)?,
            })
        })?
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rows)
}

pub(crate) fn count(c: &Connection, sql: &str) -> ServiceResult<u64> {
    Ok(c.query_row(sql, [], |r| r.get::<_, i64>(0))? as u64)
}

pub(crate) fn stats(c: &Connection) -> ServiceResult<Stats> {
    let mut s = Stats {
        drivers: count(c, "SELECT COUNT(*) FROM drivers")?,
        drivers_verified: count(c, "SELECT COUNT(*) FROM drivers WHERE verified_at IS NOT NULL")?,
        drivers_sharing: count(
            c,
            "SELECT COUNT(DISTINCT c.driver_id) FROM consents c \
             LEFT JOIN consent_revocations r ON r.consent_id = c.consent_id \
             WHERE c.scope = 'SHARE_WITH_ORG' AND r.revoked_at IS NULL",
        )?,
        trips: count(c, "SELECT COUNT(*) FROM trips")?,
        cases: count(c, "SELECT COUNT(*) FROM cases")?,
        reports: count(c, "SELECT COUNT(*) FROM reports")?,
        dead_letters: count(c, "SELECT COUNT(*) FROM dead_letters")?,
        ..Stats::default()
    };
    for a in accounts(c)? {
        s.accounts_created += 1;
        match a.status.state {
            SyncState::Pending => s.pending += 1,
            SyncState::Syncing => s.syncing += 1,
            SyncState::Synced => s.synced += 1,
            SyncState::Failed => s.failed += 1,
        }
        let bump = |p: &mut PlatformCounts| match a.platform {
            Some(Platform::Uber) => p.uber += 1,
            Some(Platform::Lyft) => p.lyft += 1,
            None => {}
        };
        bump(&mut s.accounts_by_platform);
        if a.status.state == SyncState::Synced {
            bump(&mut s.synced_by_platform);
        }
    }
    Ok(s)
}
