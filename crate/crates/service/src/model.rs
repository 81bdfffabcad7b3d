use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use lostwage_core::{Platform, PolicyParams};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Driver,
    FieldRep,
    Paralegal,
    Attorney,
    Admin,
}

impl Role {
    pub const ALL: [Role; 5] =
        [Role::Driver, Role::FieldRep, Role::Paralegal, Role::Attorney, Role::Admin];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Driver => "DRIVER",
            Role::FieldRep => "FIELD_REP",
            Role::Paralegal => "PARALEGAL",
            Role::Attorney => "ATTORNEY",
            Role::Admin => "ADMIN",
        }
    }

    /// Roles on the legal team, which read driver data under the consent gate.
    pub fn is_legal(self) -> bool {
        matches!(self, Role::Paralegal | Role::Attorney | Role::Admin)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or(ServiceError::Unauthenticated)
    }
}

/// Who is making a call. For a driver, `actor_id` is their driver id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actor {
    pub actor_id: String,
    pub role: Role,
}

impl Actor {
    pub fn new(actor_id: impl Into<String>, role: Role) -> Self {
        Actor { actor_id: actor_id.into(), role }
    }

    pub fn system() -> Self {
        Actor::new("system", Role::Admin)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Driver {
    pub driver_id: String,
    pub display_name: String,
    pub phone_or_email: String,
    pub preferred_language: Option<String>,
    pub created_at: DateTime<Utc>,
    pub verified_at: Option<DateTime<Utc>>,
}

impl Driver {
    pub fn is_verified(&self) -> bool {
        self.verified_at.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OtpChallenge {
    pub driver_id: String,
    pub channel: String,
    pub digits: u32,
    pub issued_at: DateTime<Utc>,
    pub attempts_remaining: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enrollment {
    pub driver_id: String,
    pub otp_challenge: OtpChallenge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConsentScope {
    StudyOnly,
    ShareWithOrg,
}

impl ConsentScope {
    pub fn as_str(self) -> &'static str {
        match self {
            ConsentScope::StudyOnly => "STUDY_ONLY",
            ConsentScope::ShareWithOrg => "SHARE_WITH_ORG",
        }
    }
}

impl FromStr for ConsentScope {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "STUDY_ONLY" => Ok(ConsentScope::StudyOnly),
            "SHARE_WITH_ORG" => Ok(ConsentScope::ShareWithOrg),
            other => Err(ServiceError::Validation(format!("unknown consent scope {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentRecord {
    pub consent_id: String,
    pub driver_id: String,
    pub scope: ConsentScope,
    pub granted_at: DateTime<Utc>,
    pub revoked_at: Option<DateTime<Utc>>,
}

impl ConsentRecord {
    pub fn is_active(&self) -> bool {
        self.revoked_at.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SyncState {
    Pending,
    Syncing,
    Synced,
    Failed,
}

impl SyncState {
    pub fn as_str(self) -> &'static str {
        match self {
            SyncState::Pending => "PENDING",
            SyncState::Syncing => "SYNCING",
            SyncState::Synced => "SYNCED",
            SyncState::Failed => "FAILED",
        }
    }

    pub fn parse(s: &str) -> Option<SyncState> {
        [SyncState::Pending, SyncState::Syncing, SyncState::Synced, SyncState::Failed]
            .into_iter()
            .find(|st| st.as_str() == s)
    }

    /// Whether the state machine allows moving from `self` to `next`.
    pub fn can_become(self, next: SyncState) -> bool {
        use SyncState::*;
        self == next
            || matches!((self, next), (Pending, Syncing) | (Syncing, Synced) | (Syncing, Failed) | (Failed, Syncing))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncStatus {
    pub account_id: String,
    pub state: SyncState,
    pub last_event_at: Option<DateTime<Utc>>,
    pub trips_ingested: u64,
    pub last_error: Option<String>,
}

/// A connector account as the service knows it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountRecord {
    pub account_id: String,
    pub driver_id: Option<String>,
    pub platform: Option<Platform>,
    pub status: SyncStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriverSummary {
    pub driver_id: String,
    pub display_name: String,
    pub verified: bool,
    pub share_consent: bool,
    pub accounts: Vec<AccountRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredCase {
    pub case_id: String,
    pub driver_id: String,
    pub platform: Platform,
    pub deactivation_date: NaiveDate,
    pub reactivation_date: Option<NaiveDate>,
    /// Interest end date; when absent, reports use the current date in the case timezone.
    pub as_of_date: Option<NaiveDate>,
    pub params: PolicyParams,
    pub use_fallback: bool,
    pub created_by: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: i64,
    pub at: DateTime<Utc>,
    pub actor_id: String,
    pub role: Role,
    pub action: String,
    pub case_id: Option<String>,
    pub engine_version: String,
    pub detail: serde_json::Value,
}

/// One persisted report generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub report_id: i64,
    pub case_id: String,
    pub format: String,
    pub generated_at: DateTime<Utc>,
    pub actor_id: String,
    pub engine_version: String,
    pub as_of_date: NaiveDate,
    pub principal_cents: i64,
    pub interest_cents: i64,
    pub total_cents: i64,
    pub fallback_used: bool,
    pub sync_override: bool,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadLetter {
    pub id: i64,
    pub received_at: DateTime<Utc>,
    pub delivery_id: Option<String>,
    pub account_id: Option<String>,
    pub reason: String,
    pub body: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatformCounts {
    pub uber: u64,
    pub lyft: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub drivers: u64,
    pub drivers_verified: u64,
    pub drivers_sharing: u64,
    pub accounts_created: u64,
    pub pending: u64,
    pub syncing: u64,
    pub synced: u64,
    pub failed: u64,
    pub accounts_by_platform: PlatformCounts,
    pub synced_by_platform: PlatformCounts,
    pub trips: u64,
    pub cases: u64,
    pub reports: u64,
    pub dead_letters: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sync_transitions() {
        use SyncState::*;
        assert!(Pending.can_become(Syncing));
        assert!(Syncing.can_become(Synced));
        assert!(Syncing.can_become(Failed));
        assert!(Failed.can_become(Syncing));
        assert!(!Pending.can_become(Synced));
        assert!(!Synced.can_become(Failed));
        assert!(!Failed.can_become(Synced));
    }

    #[test]
    fn role_parsing() {
        assert_eq!("field_rep".parse::<Role>().unwrap(), Role::FieldRep);
        assert!("janitor".parse::<Role>().is_err());
        assert_eq!(serde_json::to_string(&Role::FieldRep).unwrap(), "\"FIELD_REP\"");
    }
}
