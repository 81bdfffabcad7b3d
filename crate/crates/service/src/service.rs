//! Operations behind the REST API and the CLI.
//!
//! Every operation takes the calling [`Actor`]. Checks run in a fixed order:
//! role (`FORBIDDEN`), existence (`NOT_FOUND`), share consent
//! (`CONSENT_REQUIRED`), then sync readiness (`SYNC_INCOMPLETE`).

use std::str::FromStr;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, NaiveDate, Utc};
use chrono_tz::Tz;
use lostwage_core::oracle::{brute_force, compare};
use lostwage_core::{
    lost_wage_with, take_rate, DataStatus, DeactivationCase, LostWageEstimate, Money, Platform,
    PolicyParams, TakeRate, Trip,
};
use lostwage_report::{render_csv, render_pdf, render_zip, ReportDocument, ReportPreview};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rusqlite::Connection;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::Clock;
use crate::config::{ConsentMode, ServiceConfig};
use crate::connector_link::ConnectorClient;
use crate::error::{ServiceError, ServiceResult};
use crate::model::*;
use crate::otp::OtpChannel;
use crate::store::{self, Store};

pub const OTP_DIGITS: u32 = 6;
pub const OTP_MAX_ATTEMPTS: u32 = 5;

const ENROLLERS: &[Role] = &[Role::Driver, Role::FieldRep, Role::Admin];
const LEGAL: &[Role] = &[Role::Paralegal, Role::Attorney, Role::Admin];
const STAFF: &[Role] = &[Role::FieldRep, Role::Paralegal, Role::Attorney, Role::Admin];

/// Case parameters to override; anything left out comes from the current
/// policy defaults.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsPatch {
    pub reference_days: Option<u32>,
    pub interest_rate: Option<u32>,
    pub fallback_daily: Option<Money>,
    pub interest_day_count: Option<u32>,
    pub case_timezone: Option<Tz>,
    pub include_tips: Option<bool>,
}

impl ParamsPatch {
    pub fn apply(&self, base: &PolicyParams) -> PolicyParams {
        PolicyParams {
            reference_days: self.reference_days.unwrap_or(base.reference_days),
            interest_rate: self.interest_rate.unwrap_or(base.interest_rate),
            fallback_daily: self.fallback_daily.unwrap_or(base.fallback_daily),
            interest_day_count: self.interest_day_count.unwrap_or(base.interest_day_count),
            case_timezone: self.case_timezone.unwrap_or(base.case_timezone),
            include_tips: self.include_tips.unwrap_or(base.include_tips),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateCase {
    pub driver_id: String,
    pub platform: Platform,
    pub deactivation_date: NaiveDate,
    #[serde(default)]
    pub reactivation_date: Option<NaiveDate>,
    #[serde(default)]
    pub as_of_date: Option<NaiveDate>,
    #[serde(default)]
    pub params: Option<ParamsPatch>,
    #[serde(default)]
    pub use_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReportFormat {
    Pdf,
    Csv,
    Zip,
    JsonPreview,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 4] =
        [ReportFormat::Pdf, ReportFormat::Csv, ReportFormat::Zip, ReportFormat::JsonPreview];

    pub fn as_str(self) -> &'static str {
        match self {
            ReportFormat::Pdf => "PDF",
            ReportFormat::Csv => "CSV",
            ReportFormat::Zip => "ZIP",
            ReportFormat::JsonPreview => "JSON_PREVIEW",
        }
    }

    pub fn content_type(self) -> &'static str {
        match self {
            ReportFormat::Pdf => "application/pdf",
            ReportFormat::Csv => "text/csv; charset=utf-8",
            ReportFormat::Zip => "application/zip",
            ReportFormat::JsonPreview => "application/json",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Pdf => "pdf",
            ReportFormat::Csv => "csv",
            ReportFormat::Zip => "zip",
            ReportFormat::JsonPreview => "json",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pdf" => Ok(ReportFormat::Pdf),
            "csv" => Ok(ReportFormat::Csv),
            "zip" => Ok(ReportFormat::Zip),
            "json" | "preview" | "json_preview" => Ok(ReportFormat::JsonPreview),
            other => Err(ServiceError::Validation(format!("unknown report format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportOptions {
    /// Generate even though the account has not finished syncing. Audited.
    pub override_sync: bool,
    /// Apply the statutory daily rate for this report.
    pub use_fallback: bool,
    /// Overrides the configured redaction default.
    pub redact: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct ReportOutput {
    pub format: ReportFormat,
    pub bytes: Vec<u8>,
    pub filename: String,
    pub record: ReportRecord,
    pub preview: ReportPreview,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub principal_cents: i64,
    pub interest_cents: i64,
    pub total_cents: i64,
}

/// Result of recomputing a case with the brute-force oracle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub case_id: String,
    pub as_of_date: NaiveDate,
    pub trips: usize,
    pub engine: Totals,
    pub oracle: Totals,
    /// Latest persisted report, if any.
    pub report: Option<Totals>,
    pub report_id: Option<i64>,
    pub diffs: Vec<String>,
    pub matches: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TakeRateView {
    pub driver_id: String,
    pub platform: Option<Platform>,
    pub trips: usize,
    pub take_rate: TakeRate,
}

pub struct CaseService {
    store: Arc<Store>,
    clock: Arc<dyn Clock>,
    otp: Arc<dyn OtpChannel>,
    connector: Arc<dyn ConnectorClient>,
    config: ServiceConfig,
    rng: Mutex<ChaCha8Rng>,
}

fn require(actor: &Actor, roles: &[Role]) -> ServiceResult<()> {
    if roles.contains(&actor.role) {
        Ok(())
    } else {
        Err(ServiceError::Forbidden(format!("role {} may not do this", actor.role)))
    }
}

/// Drivers may act only on themselves.
fn require_self(actor: &Actor, driver_id: &str) -> ServiceResult<()> {
    if actor.role == Role::Driver && actor.actor_id != driver_id {
        return Err(ServiceError::Forbidden("drivers may only act on their own record".into()));
    }
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn normalize_contact(raw: &str) -> ServiceResult<String> {
    let s = raw.trim();
    if s.contains('@') {
        let lower = s.to_lowercase();
        let (user, domain) = lower.split_once('@').unwrap_or_default();
        if user.is_empty() || !domain.contains('.') || lower.chars().any(char::is_whitespace) {
            return Err(ServiceError::Validation(format!("not an email address: {raw:?}")));
        }
        return Ok(lower);
    }
    let plus = s.starts_with('+');
    let digits: String = s
        .chars()
        .filter(|c| !matches!(c, ' ' | '-' | '(' | ')' | '.' | '+'))
        .collect();
    if !(7..=15).contains(&digits.len()) || !digits.chars().all(|c| c.is_ascii_digit()) {
        return Err(ServiceError::Validation(format!("not a phone number or email: {raw:?}")));
    }
    Ok(if plus { format!("+{digits}") } else { digits })
}

fn not_found(what: &str, id: &str) -> ServiceError {
    ServiceError::NotFound(format!("{what} {id}"))
}

fn load_driver(c: &Connection, driver_id: &str) -> ServiceResult<Driver> {
    store::driver(c, driver_id)?.ok_or_else(|| not_found("driver", driver_id))
}

fn load_case(c: &Connection, case_id: &str) -> ServiceResult<StoredCase> {
    store::case(c, case_id)?.ok_or_else(|| not_found("case", case_id))
}

fn require_share(c: &Connection, driver_id: &str) -> ServiceResult<()> {
    match store::active_consent(c, driver_id, ConsentScope::ShareWithOrg)? {
        Some(_) => Ok(()),
        None => Err(ServiceError::ConsentRequired(driver_id.to_string())),
    }
}

/// The consent gate for reading a driver's data: the driver themself, or
/// the legal team while a share consent is active. Nobody else.
fn authorize_data(c: &Connection, actor: &Actor, driver_id: &str) -> ServiceResult<()> {
    match actor.role {
        Role::Driver => {
            require_self(actor, driver_id)?;
            load_driver(c, driver_id)?;
            Ok(())
        }
        r if r.is_legal() => {
            load_driver(c, driver_id)?;
            require_share(c, driver_id)
        }
        _ => Err(ServiceError::Forbidden(format!("role {} may not read driver data", actor.role))),
    }
}

struct SyncView {
    ready: bool,
    sync_failed: bool,
    describe: String,
}

fn sync_view(accounts: &[AccountRecord], platform: Platform) -> SyncView {
    let states: Vec<SyncState> = accounts
        .iter()
        .filter(|a| a.platform == Some(platform))
        .map(|a| a.status.state)
        .collect();
    let ready = !states.is_empty() && states.iter().all(|s| *s == SyncState::Synced);
    let sync_failed = states.contains(&SyncState::Failed) && !states.contains(&SyncState::Synced);
    let describe = if states.is_empty() {
        format!("no {platform} account linked")
    } else {
        let names: Vec<&str> = states.iter().map(|s| s.as_str()).collect();
        format!("{platform} accounts {}", names.join(", "))
    };
    SyncView { ready, sync_failed, describe }
}

enum VerifyOutcome {
    Verified(Driver),
    Wrong(u32),
    Locked,
}

impl CaseService {
    pub fn new(
        store: Arc<Store>,
        clock: Arc<dyn Clock>,
        otp: Arc<dyn OtpChannel>,
        connector: Arc<dyn ConnectorClient>,
        config: ServiceConfig,
    ) -> Self {
        CaseService {
            store,
            clock,
            otp,
            connector,
            config,
            rng: Mutex::new(ChaCha8Rng::from_entropy()),
        }
    }

    /// Makes OTP codes reproducible.
    pub fn with_rng_seed(self, seed: u64) -> Self {
        *self.rng.lock().unwrap() = ChaCha8Rng::seed_from_u64(seed);
        self
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    fn new_code(&self) -> String {
        let n: u32 = self.rng.lock().unwrap().gen_range(0..10u32.pow(OTP_DIGITS));
        format!("{n:0width$}", width = OTP_DIGITS as usize)
    }

    fn defaults_in(&self, c: &Connection) -> ServiceResult<PolicyParams> {
        Ok(store::policy_defaults(c)?.unwrap_or_else(|| PolicyParams {
            case_timezone: self.config.default_timezone,
            ..PolicyParams::default()
        }))
    }

    fn challenge_info(&self, driver_id: &str, issued_at: DateTime<Utc>, failed: u32) -> OtpChallenge {
        OtpChallenge {
            driver_id: driver_id.to_string(),
            channel: self.otp.name().to_string(),
            digits: OTP_DIGITS,
            issued_at,
            attempts_remaining: OTP_MAX_ATTEMPTS.saturating_sub(failed),
        }
    }

    fn grant_in(
        &self,
        c: &Connection,
        actor: &Actor,
        driver_id: &str,
        scope: ConsentScope,
        now: DateTime<Utc>,
    ) -> ServiceResult<ConsentRecord> {
        if let Some(existing) = store::active_consent(c, driver_id, scope)? {
            return Ok(existing);
        }
        let rec = ConsentRecord {
            consent_id: format!("cns-{:05}", store::next_id(c, "consent")?),
            driver_id: driver_id.to_string(),
            scope,
            granted_at: now,
            revoked_at: None,
        };
        store::insert_consent(c, &rec, &actor.actor_id)?;
        store::insert_audit(
            c,
            now,
            actor,
            "CONSENT_GRANTED",
            None,
            &serde_json::json!({"driver_id": driver_id, "consent_id": rec.consent_id, "scope": scope}),
        )?;
        Ok(rec)
    }

    // Enrollment.

    pub fn enroll_driver(
        &self,
        actor: &Actor,
        contact: &str,
        display_name: &str,
        preferred_language: Option<&str>,
    ) -> ServiceResult<Enrollment> {
        require(actor, ENROLLERS)?;
        let contact = normalize_contact(contact)?;
        let name = display_name.trim();
        if name.is_empty() {
            return Err(ServiceError::Validation("display_name is required".into()));
        }
        let now = self.clock.now();
        let code = self.new_code();
        self.store.write(|c| {
            let driver_id = match store::driver_by_contact(c, &contact)? {
                Some(d) if d.is_verified() => {
                    return Err(ServiceError::Conflict(format!("{contact} is already enrolled")));
                }
                Some(d) => {
                    let locked = store::challenge(c, &d.driver_id)?
                        .map_or(true, |ch| ch.failed_attempts >= OTP_MAX_ATTEMPTS);
                    if !locked {
                        return Err(ServiceError::Conflict(format!(
                            "{contact} is already enrolled and awaiting verification"
                        )));
                    }
                    d.driver_id
                }
                None => {
                    let d = Driver {
                        driver_id: format!("drv-{:05}", store::next_id(c, "driver")?),
                        display_name: name.to_string(),
                        phone_or_email: contact.clone(),
                        preferred_language: preferred_language.map(str::to_string),
                        created_at: now,
                        verified_at: None,
                    };
                    store::insert_driver(c, &d)?;
                    d.driver_id
                }
            };
            store::put_challenge(c, &driver_id, &sha256_hex(code.as_bytes()), now)?;
            store::insert_audit(
                c,
                now,
                actor,
                "DRIVER_ENROLLED",
                None,
                &serde_json::json!({"driver_id": driver_id}),
            )?;
            self.otp.send(&contact, &code).map_err(|e| {
                ServiceError::Internal(format!("verification code delivery failed: {e}"))
            })?;
            Ok(Enrollment {
                otp_challenge: self.challenge_info(&driver_id, now, 0),
                driver_id,
            })
        })
    }

    pub fn verify_driver(&self, actor: &Actor, driver_id: &str, code: &str) -> ServiceResult<Driver> {
        require(actor, ENROLLERS)?;
        require_self(actor, driver_id)?;
        let now = self.clock.now();
        let outcome = self.store.write(|c| {
            let d = load_driver(c, driver_id)?;
            if d.is_verified() {
                return Ok(VerifyOutcome::Verified(d));
            }
            let Some(ch) = store::challenge(c, driver_id)? else {
                return Ok(VerifyOutcome::Locked);
            };
            if ch.failed_attempts >= OTP_MAX_ATTEMPTS {
                return Ok(VerifyOutcome::Locked);
            }
            if sha256_hex(code.trim().as_bytes()) != ch.code_sha256 {
                let failed = store::record_otp_failure(c, driver_id)?;
                return Ok(if failed >= OTP_MAX_ATTEMPTS {
                    VerifyOutcome::Locked
                } else {
                    VerifyOutcome::Wrong(OTP_MAX_ATTEMPTS - failed)
                });
            }
            store::set_verified(c, driver_id, now)?;
            store::delete_challenge(c, driver_id)?;
            store::insert_audit(
                c,
                now,
                actor,
                "DRIVER_VERIFIED",
                None,
                &serde_json::json!({"driver_id": driver_id, "challenge_issued_at": store::ts(ch.issued_at)}),
            )?;
            if self.config.consent_mode == ConsentMode::OptOut {
                let system = Actor::new("system:opt-out", Role::Admin);
                self.grant_in(c, &system, driver_id, ConsentScope::ShareWithOrg, now)?;
            }
            Ok(VerifyOutcome::Verified(load_driver(c, driver_id)?))
        })?;
        match outcome {
            VerifyOutcome::Verified(d) => Ok(d),
            VerifyOutcome::Wrong(remaining) => Err(ServiceError::OtpInvalid { remaining }),
            VerifyOutcome::Locked => Err(ServiceError::OtpLocked),
        }
    }

    pub fn get_driver(&self, actor: &Actor, driver_id: &str) -> ServiceResult<DriverSummary> {
        require(actor, &Role::ALL)?;
        require_self(actor, driver_id)?;
        self.store.read(|c| {
            let d = load_driver(c, driver_id)?;
            self.summary(c, d)
        })
    }

    fn summary(&self, c: &Connection, d: Driver) -> ServiceResult<DriverSummary> {
        Ok(DriverSummary {
            share_consent: store::active_consent(c, &d.driver_id, ConsentScope::ShareWithOrg)?
                .is_some(),
            accounts: store::accounts_for_driver(c, &d.driver_id)?,
            verified: d.is_verified(),
            driver_id: d.driver_id,
            display_name: d.display_name,
        })
    }

    /// Driver list for field reps and the legal dashboard. `synced` keeps
    /// drivers with (or without) at least one synced account.
    pub fn list_drivers(&self, actor: &Actor, synced: Option<bool>) -> ServiceResult<Vec<DriverSummary>> {
        require(actor, STAFF)?;
        self.store.read(|c| {
            let mut out = Vec::new();
            for d in store::drivers(c)? {
                let s = self.summary(c, d)?;
                let any_synced = s.accounts.iter().any(|a| a.status.state == SyncState::Synced);
                if synced.map_or(true, |want| want == any_synced) {
                    out.push(s);
                }
            }
            Ok(out)
        })
    }

    // Consent.

    pub fn grant_consent(
        &self,
        actor: &Actor,
        driver_id: &str,
        scope: ConsentScope,
    ) -> ServiceResult<ConsentRecord> {
        require(actor, ENROLLERS)?;
        require_self(actor, driver_id)?;
        let now = self.clock.now();
        self.store.write(|c| {
            let d = load_driver(c, driver_id)?;
            if !d.is_verified() {
                return Err(ServiceError::Validation(format!("driver {driver_id} is not verified")));
            }
            self.grant_in(c, actor, driver_id, scope, now)
        })
    }

    pub fn revoke_consent(&self, actor: &Actor, consent_id: &str) -> ServiceResult<ConsentRecord> {
        require(actor, ENROLLERS)?;
        let now = self.clock.now();
        self.store.write(|c| {
            let rec = store::consent(c, consent_id)?.ok_or_else(|| not_found("consent", consent_id))?;
            require_self(actor, &rec.driver_id)?;
            if !rec.is_active() {
                return Ok(rec);
            }
            store::revoke_consent(c, consent_id, now, &actor.actor_id)?;
            store::insert_audit(
                c,
                now,
                actor,
                "CONSENT_REVOKED",
                None,
                &serde_json::json!({"driver_id": rec.driver_id, "consent_id": consent_id, "scope": rec.scope}),
            )?;
            Ok(store::consent(c, consent_id)?.expect("exists"))
        })
    }

    pub fn consents(&self, actor: &Actor, driver_id: &str) -> ServiceResult<Vec<ConsentRecord>> {
        require(actor, &Role::ALL)?;
        require_self(actor, driver_id)?;
        self.store.read(|c| {
            load_driver(c, driver_id)?;
            store::consents_for(c, driver_id)
        })
    }

    // Accounts.

    /// Resolves the driver's platform sign-in with the connector, records the
    /// account and starts its sync.
    pub fn link_account(
        &self,
        actor: &Actor,
        driver_id: &str,
        platform: Platform,
        credential: &str,
    ) -> ServiceResult<AccountRecord> {
        require(actor, ENROLLERS)?;
        require_self(actor, driver_id)?;
        let d = self.store.read(|c| load_driver(c, driver_id))?;
        if !d.is_verified() {
            return Err(ServiceError::Validation(format!("driver {driver_id} is not verified")));
        }
        let account_id = self.connector.resolve_login(platform, credential)?;
        let now = self.clock.now();
        self.store.write(|c| {
            if let Some(existing) = store::account(c, &account_id)? {
                if let Some(owner) = existing.driver_id.filter(|o| o != driver_id) {
                    return Err(ServiceError::Conflict(format!(
                        "account {account_id} is linked to {owner}"
                    )));
                }
            }
            store::link_account(c, &account_id, driver_id, platform, credential.trim())?;
            store::insert_audit(
                c,
                now,
                actor,
                "ACCOUNT_LINKED",
                None,
                &serde_json::json!({"driver_id": driver_id, "account_id": account_id, "platform": platform}),
            )?;
            Ok(())
        })?;
        self.connector.start_sync(&account_id)?;
        self.store
            .read(|c| store::account(c, &account_id))?
            .ok_or_else(|| not_found("account", &account_id))
    }

    pub fn account_status(&self, actor: &Actor, account_id: &str) -> ServiceResult<SyncStatus> {
        require(actor, &Role::ALL)?;
        self.store.read(|c| {
            let a = store::account(c, account_id)?.ok_or_else(|| not_found("account", account_id))?;
            if actor.role == Role::Driver && a.driver_id.as_deref() != Some(actor.actor_id.as_str()) {
                return Err(ServiceError::Forbidden("not your account".into()));
            }
            Ok(a.status)
        })
    }

    pub fn refresh_connector(&self, actor: &Actor) -> ServiceResult<usize> {
        require(actor, &[Role::Admin])?;
        self.connector.refresh()
    }

    // Driver data, behind the consent gate.

    pub fn driver_trips(
        &self,
        actor: &Actor,
        driver_id: &str,
        platform: Option<Platform>,
    ) -> ServiceResult<Vec<Trip>> {
        self.store.read(|c| {
            authorize_data(c, actor, driver_id)?;
            store::trips_for_driver(c, driver_id, platform)
        })
    }

    pub fn driver_take_rate(
        &self,
        actor: &Actor,
        driver_id: &str,
        platform: Option<Platform>,
    ) -> ServiceResult<TakeRateView> {
        let trips = self.driver_trips(actor, driver_id, platform)?;
        Ok(TakeRateView {
            driver_id: driver_id.to_string(),
            platform,
            trips: trips.len(),
            take_rate: take_rate(&trips),
        })
    }

    // Policy defaults.

    pub fn policy_defaults(&self, actor: &Actor) -> ServiceResult<PolicyParams> {
        require(actor, &Role::ALL)?;
        self.store.read(|c| self.defaults_in(c))
    }

    pub fn set_policy_defaults(&self, actor: &Actor, params: PolicyParams) -> ServiceResult<PolicyParams> {
        require(actor, &[Role::Admin])?;
        params.validate()?;
        let now = self.clock.now();
        self.store.write(|c| {
            let json = serde_json::to_string(&params).map_err(|e| ServiceError::Internal(e.to_string()))?;
            store::meta_set(c, store::POLICY_KEY, &json)?;
            store::insert_audit(c, now, actor, "POLICY_DEFAULTS_SET", None, &serde_json::to_value(&params).unwrap_or_default())?;
            Ok(params.clone())
        })
    }

    // Cases.

    pub fn create_case(&self, actor: &Actor, req: CreateCase) -> ServiceResult<StoredCase> {
        require(actor, LEGAL)?;
        let now = self.clock.now();
        self.store.write(|c| {
            load_driver(c, &req.driver_id)?;
            require_share(c, &req.driver_id)?;
            let params = req.params.clone().unwrap_or_default().apply(&self.defaults_in(c)?);
            let probe = DeactivationCase {
                case_id: String::new(),
                driver_id: req.driver_id.clone(),
                platform: req.platform,
                deactivation_date: req.deactivation_date,
                reactivation_date: req.reactivation_date,
                as_of_date: req.as_of_date.unwrap_or(req.deactivation_date),
                params: params.clone(),
                use_fallback: req.use_fallback,
            };
            probe.validate()?;
            let case = StoredCase {
                case_id: format!("case-{:05}", store::next_id(c, "case")?),
                driver_id: req.driver_id.clone(),
                platform: req.platform,
                deactivation_date: req.deactivation_date,
                reactivation_date: req.reactivation_date,
                as_of_date: req.as_of_date,
                params,
                use_fallback: req.use_fallback,
                created_by: actor.actor_id.clone(),
                created_at: now,
            };
            store::insert_case(c, &case)?;
            store::insert_audit(
                c,
                now,
                actor,
                "CASE_CREATED",
                Some(&case.case_id),
                &serde_json::to_value(&req).unwrap_or_default(),
            )?;
            Ok(case)
        })
    }

    pub fn get_case(&self, actor: &Actor, case_id: &str) -> ServiceResult<StoredCase> {
        require(actor, LEGAL)?;
        self.store.read(|c| load_case(c, case_id))
    }

    pub fn list_cases(&self, actor: &Actor) -> ServiceResult<Vec<StoredCase>> {
        require(actor, LEGAL)?;
        self.store.read(store::cases)
    }

    pub fn set_case_fallback(&self, actor: &Actor, case_id: &str, on: bool) -> ServiceResult<StoredCase> {
        require(actor, LEGAL)?;
        let now = self.clock.now();
        self.store.write(|c| {
            load_case(c, case_id)?;
            store::set_case_fallback(c, case_id, on)?;
            store::insert_audit(
                c,
                now,
                actor,
                "CASE_FALLBACK_SET",
                Some(case_id),
                &serde_json::json!({"use_fallback": on}),
            )?;
            load_case(c, case_id)
        })
    }

    pub fn case_reports(&self, actor: &Actor, case_id: &str) -> ServiceResult<Vec<ReportRecord>> {
        require(actor, LEGAL)?;
        self.store.read(|c| {
            load_case(c, case_id)?;
            store::reports_for(c, case_id)
        })
    }

    fn today(&self, tz: Tz) -> NaiveDate {
        self.clock.now().with_timezone(&tz).date_naive()
    }

    fn engine_case(&self, case: &StoredCase, as_of: NaiveDate, use_fallback: bool) -> DeactivationCase {
        DeactivationCase {
            case_id: case.case_id.clone(),
            driver_id: case.driver_id.clone(),
            platform: case.platform,
            deactivation_date: case.deactivation_date,
            reactivation_date: case.reactivation_date,
            as_of_date: as_of,
            params: case.params.clone(),
            use_fallback,
        }
    }

    /// Builds a report and records the generation with an audit entry, in the
    /// same transaction.
    pub fn get_report(
        &self,
        actor: &Actor,
        case_id: &str,
        format: ReportFormat,
        opts: &ReportOptions,
    ) -> ServiceResult<ReportOutput> {
        let mut allowed = LEGAL.to_vec();
        if self.config.driver_report_access {
            allowed.push(Role::Driver);
        }
        require(actor, &allowed)?;

        let (case, driver, trips, view) = self.store.read(|c| {
            let case = load_case(c, case_id)?;
            if actor.role == Role::Driver {
                require_self(actor, &case.driver_id)?;
            } else {
                require_share(c, &case.driver_id)?;
            }
            let driver = load_driver(c, &case.driver_id)?;
            let accounts = store::accounts_for_driver(c, &case.driver_id)?;
            let trips = store::trips_for_driver(c, &case.driver_id, Some(case.platform))?;
            let view = sync_view(&accounts, case.platform);
            Ok((case, driver, trips, view))
        })?;

        let use_fallback = case.use_fallback || opts.use_fallback;
        let sync_override = !view.ready && !use_fallback;
        if sync_override && !opts.override_sync {
            return Err(ServiceError::SyncIncomplete(view.describe));
        }

        let now = self.clock.now();
        let as_of = case.as_of_date.unwrap_or_else(|| self.today(case.params.case_timezone));
        let ecase = self.engine_case(&case, as_of, use_fallback);
        let estimate = lost_wage_with(&ecase, &trips, DataStatus { sync_failed: view.sync_failed })?;
        let redact = opts.redact.unwrap_or(self.config.redact_reports);
        let doc = ReportDocument::new(&ecase, &driver.display_name, &driver.phone_or_email, estimate, redact);
        doc.validate()?;
        let preview = ReportPreview::new(&doc, now);
        let bytes = match format {
            ReportFormat::Pdf => render_pdf(&doc, now)?,
            ReportFormat::Csv => render_csv(&trips),
            ReportFormat::Zip => render_zip(&doc, &trips, now)?,
            ReportFormat::JsonPreview => serde_json::to_vec_pretty(&preview)
                .map_err(|e| ServiceError::Internal(e.to_string()))?,
        };

        let est = &doc.estimate;
        let mut record = ReportRecord {
            report_id: 0,
            case_id: case.case_id.clone(),
            format: format.as_str().to_string(),
            generated_at: now,
            actor_id: actor.actor_id.clone(),
            engine_version: doc.engine_version.clone(),
            as_of_date: as_of,
            principal_cents: est.principal.cents(),
            interest_cents: est.interest.cents(),
            total_cents: est.total.cents(),
            fallback_used: est.fallback_used,
            sync_override,
            sha256: sha256_hex(&bytes),
        };
        record.report_id = self.store.write(|c| {
            // Consent may have been revoked while rendering.
            if actor.role != Role::Driver {
                require_share(c, &case.driver_id)?;
            }
            let id = store::insert_report(c, &record)?;
            store::insert_audit(
                c,
                now,
                actor,
                "REPORT_GENERATED",
                Some(&case.case_id),
                &serde_json::json!({
                    "report_id": id,
                    "format": format,
                    "sha256": record.sha256,
                    "as_of_date": as_of,
                    "total_cents": record.total_cents,
                    "fallback_used": record.fallback_used,
                    "sync_override": sync_override,
                    "sync_state": view.describe,
                    "redacted": redact,
                }),
            )?;
            Ok(id)
        })?;

        Ok(ReportOutput {
            format,
            filename: format!("{}-lost-wage.{}", case.case_id, format.extension()),
            bytes,
            record,
            preview,
        })
    }

    /// Recomputes a case with the engine and the brute-force oracle and
    /// compares both with the latest stored report.
    pub fn verify_case(&self, actor: &Actor, case_id: &str) -> ServiceResult<OracleCheck> {
        require(actor, LEGAL)?;
        let (case, trips, view, last) = self.store.read(|c| {
            let case = load_case(c, case_id)?;
            require_share(c, &case.driver_id)?;
            let accounts = store::accounts_for_driver(c, &case.driver_id)?;
            let trips = store::trips_for_driver(c, &case.driver_id, Some(case.platform))?;
            let last = store::reports_for(c, case_id)?.pop();
            let view = sync_view(&accounts, case.platform);
            Ok((case, trips, view, last))
        })?;

        let as_of = last
            .as_ref()
            .map(|r| r.as_of_date)
            .or(case.as_of_date)
            .unwrap_or_else(|| self.today(case.params.case_timezone));
        let use_fallback = case.use_fallback || last.as_ref().is_some_and(|r| r.fallback_used);
        let ecase = self.engine_case(&case, as_of, use_fallback);
        let engine: LostWageEstimate =
            lost_wage_with(&ecase, &trips, DataStatus { sync_failed: view.sync_failed })?;
        let oracle = brute_force(&ecase, &trips, view.sync_failed).map_err(ServiceError::Internal)?;

        let mut diffs = compare(&engine, &oracle);
        let oracle_totals = Totals {
            principal_cents: oracle.principal,
            interest_cents: oracle.interest,
            total_cents: oracle.total,
        };
        let report = last.as_ref().map(|r| Totals {
            principal_cents: r.principal_cents,
            interest_cents: r.interest_cents,
            total_cents: r.total_cents,
        });
        if let Some(r) = report {
            for (name, stored, fresh) in [
                ("principal", r.principal_cents, oracle_totals.principal_cents),
                ("interest", r.interest_cents, oracle_totals.interest_cents),
                ("total", r.total_cents, oracle_totals.total_cents),
            ] {
                if stored != fresh {
                    diffs.push(format!("stored report {name} {stored} != oracle {fresh}"));
                }
            }
        }
        Ok(OracleCheck {
            case_id: case.case_id.clone(),
            as_of_date: as_of,
            trips: trips.len(),
            engine: Totals {
                principal_cents: engine.principal.cents(),
                interest_cents: engine.interest.cents(),
                total_cents: engine.total.cents(),
            },
            oracle: oracle_totals,
            report,
            report_id: last.map(|r| r.report_id),
            matches: diffs.is_empty(),
            diffs,
        })
    }

    // Operations views.

    pub fn audit_log(&self, actor: &Actor) -> ServiceResult<Vec<AuditEntry>> {
        require(actor, &[Role::Attorney, Role::Admin])?;
        self.store.read(store::audit_log)
    }

    pub fn dead_letters(&self, actor: &Actor) -> ServiceResult<Vec<DeadLetter>> {
        require(actor, &[Role::Admin])?;
        self.store.read(store::dead_letters)
    }

    pub fn stats(&self, actor: &Actor) -> ServiceResult<Stats> {
        require(actor, STAFF)?;
        self.store.read(store::stats)
    }
}
