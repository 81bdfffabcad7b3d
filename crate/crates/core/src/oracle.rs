//! Brute-force recomputation of a lost-wage estimate.
//!
//! Deliberately naive and independent of [`crate::engine`]: it walks every
//! window day, scans every trip for that day, steps through calendar days one
//! at a time to measure spans, and accrues interest one lost day at a time.
//! Used by tests and by the operator `oracle` command to cross-check the engine.

use chrono::{Duration, NaiveDate};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::engine::LostWageEstimate;
use crate::policy::DeactivationCase;
use crate::trip::Trip;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OracleEstimate {
    pub daily: Vec<(NaiveDate, i64)>,
    pub window_total: i64,
    pub deactivation_days: i64,
    pub principal: i64,
    pub interest: i64,
    pub total: i64,
    pub fallback_used: bool,
}

fn step_days(from: NaiveDate, to: NaiveDate) -> i64 {
    let mut n = 0;
    let mut d = from;
    while d < to {
        d = d.succ_opt().expect("date in range");
        n += 1;
    }
    n
}

fn nearest_even(value: &BigRational) -> BigInt {
    // Truncate toward zero, then adjust by comparing the leftover fraction to 1/2.
    let numer = value.numer();
    let denom = value.denom();
    let quotient = numer / denom;
    let leftover = BigRational::new(numer - &quotient * denom, denom.clone()).abs();
    let half = BigRational::new(1.into(), 2.into());
    let away = if numer.is_negative() { &quotient - 1 } else { &quotient + 1 };
    if leftover > half {
        away
    } else if leftover < half {
        quotient
    } else if (&quotient % 2u32).is_zero() {
        quotient
    } else {
        away
    }
}

fn as_i64(v: BigInt) -> i64 {
    i64::try_from(v).expect("oracle value fits in i64")
}

/// Recomputes the estimate. `sync_failed` mirrors the engine's data status.
pub fn brute_force(
    case: &DeactivationCase,
    trips: &[Trip],
    sync_failed: bool,
) -> Result<OracleEstimate, String> {
    let p = &case.params;
    if p.reference_days == 0 || p.interest_day_count == 0 {
        return Err("bad policy".into());
    }

    let start = case.deactivation_date - Duration::days(p.reference_days as i64);
    let mut daily = Vec::new();
    let mut window_total = 0i64;
    let mut trips_in_window = 0;
    let mut day = start;
    while day < case.deactivation_date {
        let mut sum = 0i64;
        for t in trips {
            if t.platform != case.platform {
                continue;
            }
            let local = t.start_time.with_timezone(&p.case_timezone).date_naive();
            if local == day {
                sum += t.driver_pay.cents() + t.bonus.cents();
                if p.include_tips {
                    sum += t.tips.cents();
                }
                trips_in_window += 1;
            }
        }
        daily.push((day, sum));
        window_total += sum;
        day = day.succ_opt().expect("date in range");
    }

    let mut end = case.as_of_date;
    if let Some(re) = case.reactivation_date {
        if re < end {
            end = re;
        }
    }
    let lost_days = step_days(case.deactivation_date, end);

    let fallback_used = case.use_fallback || (sync_failed && trips_in_window == 0);
    let daily_rate = if fallback_used {
        BigRational::from_integer(p.fallback_daily.cents().into())
    } else {
        BigRational::new(window_total.into(), (p.reference_days as i64).into())
    };

    let mut principal_exact = BigRational::zero();
    let mut interest_exact = BigRational::zero();
    for k in 0..lost_days {
        principal_exact += &daily_rate;
        let lost_on = case.deactivation_date + Duration::days(k);
        let span = step_days(lost_on, case.as_of_date);
        if span <= 0 {
            return Err(format!("as_of precedes accrual day {lost_on}"));
        }
        interest_exact += &daily_rate
            * BigRational::new(p.interest_rate.into(), 10_000.into())
            * BigRational::new(span.into(), (p.interest_day_count as i64).into());
    }

    let principal = as_i64(nearest_even(&principal_exact));
    let interest = as_i64(nearest_even(&interest_exact));
    Ok(OracleEstimate {
        daily,
        window_total,
        deactivation_days: lost_days,
        principal,
        interest,
        total: principal + interest,
        fallback_used,
    })
}

/// Field-by-field differences between an engine estimate and the oracle.
pub fn compare(engine: &LostWageEstimate, oracle: &OracleEstimate) -> Vec<String> {
    let mut diffs = Vec::new();
    let mut check = |name: &str, a: i64, b: i64| {
        if a != b {
            diffs.push(format!("{name}: engine {a} != oracle {b}"));
        }
    };
    check("window_total", engine.window.window_total.cents(), oracle.window_total);
    check("deactivation_days", engine.deactivation_days as i64, oracle.deactivation_days);
    check("principal", engine.principal.cents(), oracle.principal);
    check("interest", engine.interest.cents(), oracle.interest);
    check("total", engine.total.cents(), oracle.total);
    check("fallback_used", engine.fallback_used as i64, oracle.fallback_used as i64);
    check("window_len", engine.window.daily_totals.len() as i64, oracle.daily.len() as i64);
    for (e, (date, cents)) in engine.window.daily_totals.iter().zip(&oracle.daily) {
        if e.date != *date || e.amount.cents() != *cents {
            diffs.push(format!(
                "day {date}: engine {} {} != oracle {cents}",
                e.date,
                e.amount.cents()
            ));
        }
    }
    diffs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn nearest_even_matches_table() {
        let cases = [
            (r(5, 2), 2),
            (r(7, 2), 4),
            (r(-5, 2), -2),
            (r(-7, 2), -4),
            (r(-3, 4), -1),
            (r(3, 4), 1),
            (r(1, 4), 0),
            (r(558_000, 365), 1529),
        ];
        for (v, want) in cases {
            assert_eq!(nearest_even(&v), BigInt::from(want), "{v}");
        }
    }

    #[test]
    fn step_days_counts_calendar_days() {
        let a = NaiveDate::from_ymd_opt(2024, 2, 27).unwrap();
        let b = NaiveDate::from_ymd_opt(2024, 3, 2).unwrap();
        assert_eq!(step_days(a, b), 4);
        assert_eq!(step_days(b, a), 0);
    }
}
