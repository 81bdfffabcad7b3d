use chrono::NaiveDate;
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, EngineResult};
use crate::money::Money;
use crate::trip::Platform;

pub const DEFAULT_REFERENCE_DAYS: u32 = 84;
/// 12% a year, in basis points.
pub const DEFAULT_INTEREST_RATE_BP: u32 = 1200;
/// $200 per day.
pub const DEFAULT_FALLBACK_DAILY: Money = Money::from_cents(20_000);
pub const DEFAULT_DAY_COUNT: u32 = 365;
pub const DEFAULT_TIMEZONE: Tz = chrono_tz::America::Los_Angeles;

/// Parameters of the lost-wage rule applied to a case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyParams {
    pub reference_days: u32,
    /// Annual simple interest in basis points.
    pub interest_rate: u32,
    pub fallback_daily: Money,
    pub interest_day_count: u32,
    pub case_timezone: Tz,
    /// Count tips as earnings. Turning this off is a sensitivity knob.
    pub include_tips: bool,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            reference_days: DEFAULT_REFERENCE_DAYS,
            interest_rate: DEFAULT_INTEREST_RATE_BP,
            fallback_daily: DEFAULT_FALLBACK_DAILY,
            interest_day_count: DEFAULT_DAY_COUNT,
            case_timezone: DEFAULT_TIMEZONE,
            include_tips: true,
        }
    }
}

impl PolicyParams {
    pub fn validate(&self) -> EngineResult<()> {
        if self.reference_days == 0 {
            return Err(EngineError::invalid("reference_days must be at least 1"));
        }
        if self.interest_day_count == 0 {
            return Err(EngineError::invalid("interest_day_count must be at least 1"));
        }
        if self.fallback_daily.is_negative() {
            return Err(EngineError::invalid("fallback_daily must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeactivationCase {
    pub case_id: String,
    pub driver_id: String,
    pub platform: Platform,
    pub deactivation_date: NaiveDate,
    pub reactivation_date: Option<NaiveDate>,
    pub as_of_date: NaiveDate,
    pub params: PolicyParams,
    pub use_fallback: bool,
}

impl DeactivationCase {
    pub fn validate(&self) -> EngineResult<()> {
        self.params.validate()?;
        if let Some(re) = self.reactivation_date {
            if re < self.deactivation_date {
                return Err(EngineError::invalid(
                    "reactivation_date precedes deactivation_date",
                ));
            }
        }
        if self.as_of_date < self.deactivation_date {
            return Err(EngineError::invalid("as_of_date precedes deactivation_date"));
        }
        Ok(())
    }
}
