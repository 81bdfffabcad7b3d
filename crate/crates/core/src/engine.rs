//! Reference window, daily average, principal and interest.

use chrono::{Duration, NaiveDate};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, EngineResult};
use crate::money::{exact_serde, ExactCents, Money};
use crate::policy::{DeactivationCase, PolicyParams};
use crate::trip::Trip;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyTotal {
    pub date: NaiveDate,
    pub amount: Money,
}

/// Per-day earnings over the reference period. `window_end` is exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarningsWindow {
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub daily_totals: Vec<DailyTotal>,
    pub window_total: Money,
    pub trips_in_window: usize,
    /// The driver has no trips on this platform before the window opens.
    pub short_history: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LostWageEstimate {
    pub window: EarningsWindow,
    #[serde(with = "exact_serde")]
    pub daily_average_exact: ExactCents,
    pub deactivation_days: u32,
    pub principal: Money,
    pub interest: Money,
    pub total: Money,
    pub fallback_used: bool,
}

/// What the caller knows about the completeness of the trip data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DataStatus {
    /// The account's sync ended in failure.
    pub sync_failed: bool,
}

/// Buckets driver earnings into the `reference_days` local dates preceding
/// the deactivation date. Trips on other platforms, and trips outside the
/// window, are ignored. A trip counts on the local date its start falls on.
pub fn reference_window(case: &DeactivationCase, trips: &[Trip]) -> EarningsWindow {
    let params = &case.params;
    let days = params.reference_days as i64;
    let window_end = case.deactivation_date;
    let window_start = window_end - Duration::days(days);
    let mut totals = vec![Money::ZERO; params.reference_days as usize];
    let mut in_window = 0usize;
    let mut earliest: Option<NaiveDate> = None;

    for trip in trips.iter().filter(|t| t.platform == case.platform) {
        let local = trip.start_time.with_timezone(&params.case_timezone).date_naive();
        earliest = Some(earliest.map_or(local, |e| e.min(local)));
        let offset = (local - window_start).num_days();
        if (0..days).contains(&offset) {
            totals[offset as usize] += trip.earnings(params.include_tips);
            in_window += 1;
        }
    }

    let daily_totals: Vec<DailyTotal> = totals
        .into_iter()
        .enumerate()
        .map(|(i, amount)| DailyTotal { date: window_start + Duration::days(i as i64), amount })
        .collect();
    let window_total = daily_totals.iter().map(|d| d.amount).sum();

    EarningsWindow {
        window_start,
        window_end,
        daily_totals,
        window_total,
        trips_in_window: in_window,
        short_history: earliest.map_or(true, |e| e > window_start),
    }
}

/// `window_total / reference_days` as an exact rational. The divisor is the
/// full reference period even when the driver worked fewer days.
pub fn average_daily(window: &EarningsWindow, reference_days: u32) -> EngineResult<ExactCents> {
    if reference_days == 0 {
        return Err(EngineError::invalid("reference_days must be at least 1"));
    }
    Ok(BigRational::new(
        BigInt::from(window.window_total.cents()),
        BigInt::from(reference_days),
    ))
}

/// Whole days from deactivation until reactivation or the as-of date,
/// whichever is earlier.
pub fn deactivation_days(case: &DeactivationCase) -> u32 {
    let end = case
        .reactivation_date
        .map_or(case.as_of_date, |re| re.min(case.as_of_date));
    (end - case.deactivation_date).num_days().max(0) as u32
}

/// Simple interest on each lost day's wage, from that day until `as_of_date`.
///
/// Day `k` (0-based) of the deactivation accrues for
/// `as_of_date - (deactivation_date + k)` days, so the total day-weight is the
/// arithmetic series `n*D - n(n-1)/2` with `D = as_of_date - deactivation_date`.
pub fn interest_accrued(
    daily_average_exact: &ExactCents,
    deactivation_date: NaiveDate,
    deactivation_days: u32,
    as_of_date: NaiveDate,
    params: &PolicyParams,
) -> EngineResult<Money> {
    params.validate()?;
    if deactivation_days == 0 {
        return Ok(Money::ZERO);
    }
    let span = (as_of_date - deactivation_date).num_days();
    let n = deactivation_days as i64;
    if n > span {
        return Err(EngineError::invalid(format!(
            "as_of_date {as_of_date} precedes accrual day {}",
            deactivation_date + Duration::days(n - 1)
        )));
    }
    let day_weight = BigInt::from(n) * span - BigInt::from(n) * (n - 1) / 2;
    let factor = BigRational::new(
        BigInt::from(params.interest_rate) * day_weight,
        BigInt::from(10_000u32) * params.interest_day_count,
    );
    to_money(&(daily_average_exact * factor))
}

/// Full estimate with no knowledge of sync failures; fallback is used only
/// when the case asks for it.
pub fn lost_wage(case: &DeactivationCase, trips: &[Trip]) -> EngineResult<LostWageEstimate> {
    lost_wage_with(case, trips, DataStatus::default())
}

/// Full estimate. The statutory daily fallback replaces earnings when the
/// case requests it, or when the sync failed and no trip landed in the window.
pub fn lost_wage_with(
    case: &DeactivationCase,
    trips: &[Trip],
    status: DataStatus,
) -> EngineResult<LostWageEstimate> {
    case.validate()?;
    let params = &case.params;
    let window = reference_window(case, trips);
    let days = deactivation_days(case);
    let fallback_used = case.use_fallback || (status.sync_failed && window.trips_in_window == 0);

    let (daily_rate, principal) = if fallback_used {
        let principal = params
            .fallback_daily
            .checked_mul(days as i64)
            .ok_or_else(|| EngineError::invalid("fallback principal overflows"))?;
        (params.fallback_daily.to_exact(), principal)
    } else {
        let average = average_daily(&window, params.reference_days)?;
        let principal = to_money(&(&average * BigInt::from(days)))?;
        (average, principal)
    };

    let interest =
        interest_accrued(&daily_rate, case.deactivation_date, days, case.as_of_date, params)?;
    let total = principal
        .checked_add(interest)
        .ok_or_else(|| EngineError::invalid("total overflows"))?;

    Ok(LostWageEstimate {
        window,
        daily_average_exact: daily_rate,
        deactivation_days: days,
        principal,
        interest,
        total,
        fallback_used,
    })
}

fn to_money(value: &ExactCents) -> EngineResult<Money> {
    if value.is_zero() {
        return Ok(Money::ZERO);
    }
    Money::from_exact(value).ok_or_else(|| EngineError::invalid("amount overflows i64 cents"))
}
