//! Deterministic synthetic accounts.

use chrono::{Duration, FixedOffset, NaiveDate, TimeZone};
use chrono_tz::Tz;
use lostwage_core::{Coordinate, Money, Platform, Trip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sim::ConnectorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailMode {
    None,
    SyncFailure,
    /// Delivers only part of the history and never completes.
    Partial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectorAccount {
    pub connector_account_id: String,
    pub platform: Platform,
    /// Phone number or email the driver signs in with.
    pub credential_hint: String,
    pub trips: Vec<Trip>,
    pub fail_mode: FailMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripsPerDay {
    /// Probability that the driver works on a given day.
    pub active_probability: f64,
    pub min: u32,
    pub max: u32,
}

impl Default for TripsPerDay {
    fn default() -> Self {
        TripsPerDay { active_probability: 0.7, min: 1, max: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EarningsProfile {
    pub pay_min_cents: i64,
    pub pay_max_cents: i64,
    /// Platform retention of the tip-free rider price, in basis points.
    pub take_rate_bp_min: u32,
    pub take_rate_bp_max: u32,
    pub tip_probability: f64,
    pub tip_max_cents: i64,
    pub bonus_probability: f64,
    pub bonus_max_cents: i64,
}

impl Default for EarningsProfile {
    fn default() -> Self {
        EarningsProfile {
            pay_min_cents: 600,
            pay_max_cents: 4500,
            take_rate_bp_min: 1500,
            take_rate_bp_max: 4500,
            tip_probability: 0.4,
            tip_max_cents: 1000,
            bonus_probability: 0.05,
            bonus_max_cents: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    /// Inclusive.
    pub end: NaiveDate,
}

/// Shape of a synthetic population of connected accounts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub accounts: usize,
    /// Fraction of accounts on Uber; the rest are Lyft.
    pub platform_mix: f64,
    pub failure_rate: f64,
    #[serde(default)]
    pub partial_rate: f64,
    #[serde(default)]
    pub trips_per_day: TripsPerDay,
    #[serde(default)]
    pub earnings: EarningsProfile,
    pub date_range: DateRange,
    #[serde(default = "default_tz")]
    pub timezone: Tz,
}

fn default_tz() -> Tz {
    chrono_tz::America::Los_Angeles
}

/// `round(fraction * n)`, half away from zero.
pub fn exact_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).round() as usize
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConnectorError> {
        let bad = |m: &str| Err(ConnectorError::InvalidProfile(m.to_string()));
        for (name, f) in [
            ("platform_mix", self.platform_mix),
            ("failure_rate", self.failure_rate),
            ("partial_rate", self.partial_rate),
            ("trips_per_day.active_probability", self.trips_per_day.active_probability),
            ("earnings.tip_probability", self.earnings.tip_probability),
            ("earnings.bonus_probability", self.earnings.bonus_probability),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return bad(&format!("{name} must be within [0, 1]"));
            }
        }
        if exact_count(self.failure_rate, self.accounts) + exact_count(self.partial_rate, self.accounts)
            > self.accounts
        {
            return bad("failure_rate + partial_rate exceed the account count");
        }
        if self.trips_per_day.min > self.trips_per_day.max {
            return bad("trips_per_day.min exceeds max");
        }
        let e = &self.earnings;
        if e.pay_min_cents < 0 || e.pay_min_cents > e.pay_max_cents {
            return bad("earnings pay range is invalid");
        }
        if e.take_rate_bp_min > e.take_rate_bp_max || e.take_rate_bp_max >= 10_000 {
            return bad("earnings take rate range is invalid");
        }
        if e.tip_max_cents < 0 || e.bonus_max_cents < 0 {
            return bad("tip and bonus maxima must be non-negative");
        }
        if self.date_range.start > self.date_range.end {
            return bad("date_range.start is after date_range.end");
        }
        Ok(())
    }

    pub fn uber_count(&self) -> usize {
        exact_count(self.platform_mix, self.accounts)
    }

    pub fn failure_count(&self) -> usize {
        exact_count(self.failure_rate, self.accounts)
    }

    pub fn partial_count(&self) -> usize {
        exact_count(self.partial_rate, self.accounts)
    }
}

/// Generates the account population. Counts of Uber, failing and partial
/// accounts are exact roundings of the configured fractions; which accounts
/// get them is a seeded shuffle.
pub fn seed(profile: &ScenarioConfig) -> Result<Vec<ConnectorAccount>, ConnectorError> {
    profile.validate()?;
    let n = profile.accounts;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut modes = vec![FailMode::None; n];
    let failures = profile.failure_count();
    let partial = profile.partial_count();
    for &i in &order[..failures] {
        modes[i] = FailMode::SyncFailure;
    }
    for &i in &order[failures..failures + partial] {
        modes[i] = FailMode::Partial;
    }

    order.shuffle(&mut rng);
    let mut platforms = vec![Platform::Lyft; n];
    for &i in &order[..profile.uber_count()] {
        platforms[i] = Platform::Uber;
    }

    let mut accounts = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("ca-{:04}", i + 1);
        let credential_hint = if i % 3 == 2 {
            format!("driver{:04}@example.org", i + 1)
        } else {
            format!("+1206555{:04}", i + 1)
        };
        let mut trips = Vec::new();
        let mut day = profile.date_range.start;
        while day <= profile.date_range.end {
            let seq = trips.len();
            trips.extend(generate_day(&mut rng, profile, &id, platforms[i], day, seq));
            day += Duration::days(1);
        }
        accounts.push(ConnectorAccount {
            connector_account_id: id,
            platform: platforms[i],
            credential_hint,
            trips,
            fail_mode: modes[i],
        });
    }
    Ok(accounts)
}

/// One day of synthetic trips for an account, sorted by start time.
pub(crate) fn generate_day(
    rng: &mut ChaCha8Rng,
    profile: &ScenarioConfig,
    account_id: &str,
    platform: Platform,
    day: NaiveDate,
    seq_start: usize,
) -> Vec<Trip> {
    let tpd = &profile.trips_per_day;
    if !rng.gen_bool(tpd.active_probability) {
        return Vec::new();
    }
    let count = rng.gen_range(tpd.min..=tpd.max);
    // Minutes after local midnight; some shifts run past midnight.
    let mut minutes: Vec<i64> = (0..count).map(|_| rng.gen_range(300..26 * 60)).collect();
    minutes.sort_unstable();

    let e = &profile.earnings;
    let tz = profile.timezone;
    minutes
        .into_iter()
        .enumerate()
        .map(|(k, minute)| {
            let naive = day.and_hms_opt(0, 0, 0).unwrap() + Duration::minutes(minute);
            let local = tz
                .from_local_datetime(&naive)
                .earliest()
                .unwrap_or_else(|| tz.from_utc_datetime(&naive));
            let offset = FixedOffset::east_opt(
                (local.naive_local() - local.naive_utc()).num_seconds() as i32,
            )
            .unwrap();
            let start = local.with_timezone(&offset);
            let end = start + Duration::minutes(rng.gen_range(5..60));

            let pay = rng.gen_range(e.pay_min_cents..=e.pay_max_cents);
            let take_bp = rng.gen_range(e.take_rate_bp_min..=e.take_rate_bp_max) as i64;
            let rider_net = pay * 10_000 / (10_000 - take_bp);
            let tips = if rng.gen_bool(e.tip_probability) {
                rng.gen_range(0..=e.tip_max_cents)
            } else {
                0
            };
            let bonus = if rng.gen_bool(e.bonus_probability) {
                rng.gen_range(0..=e.bonus_max_cents)
            } else {
                0
            };

            let lat = 47_606_209 + rng.gen_range(-150_000..150_000);
            let lon = -122_332_071 + rng.gen_range(-150_000..150_000);
            let dlat = rng.gen_range(-60_000..60_000);
            let dlon = rng.gen_range(-60_000..60_000);
            Trip {
                trip_id: format!("{account_id}-t{:06}", seq_start + k + 1),
                account_id: account_id.to_string(),
                platform,
                start_time: start,
                end_time: end,
                start_lat: Coordinate::from_micro_degrees(lat),
                start_lon: Coordinate::from_micro_degrees(lon),
                end_lat: Coordinate::from_micro_degrees(lat + dlat),
                end_lon: Coordinate::from_micro_degrees(lon + dlon),
                driver_pay: Money::from_cents(pay),
                customer_charge: Money::from_cents(rider_net + tips),
                tips: Money::from_cents(tips),
                bonus: Money::from_cents(bonus),
            }
        })
        .collect()
}

#[cfg(test)]
pub(crate) fn test_profile(accounts: usize, failure_rate: f64) -> ScenarioConfig {
    ScenarioConfig {
        seed: 42,
        accounts,
        platform_mix: 78.0 / 143.0,
        failure_rate,
        partial_rate: 0.0,
        trips_per_day: TripsPerDay::default(),
        earnings: EarningsProfile::default(),
        date_range: DateRange {
            start: NaiveDate::from_ymd_opt(2024, 9, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2024, 12, 31).unwrap(),
        },
        timezone: default_tz(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deployment_scale_counts() {
        let accounts = seed(&test_profile(178, 0.20)).unwrap();
        assert_eq!(accounts.len(), 178);
        let failed = accounts.iter().filter(|a| a.fail_mode == FailMode::SyncFailure).count();
        // 0.20 * 178 = 35.6 -> 36
        assert_eq!(failed, 36);
        let uber = accounts.iter().filter(|a| a.platform == Platform::Uber).count();
        // 178 * 78/143 = 97.09 -> 97
        assert_eq!(uber, 97);
    }

    #[test]
    fn empty_profile() {
        assert!(seed(&test_profile(0, 0.2)).unwrap().is_empty());
    }

    #[test]
    fn same_seed_same_accounts() {
        let a = seed(&test_profile(20, 0.2)).unwrap();
        let b = seed(&test_profile(20, 0.2)).unwrap();
        assert_eq!(a, b);
        let mut other = test_profile(20, 0.2);
        other.seed = 7;
        assert_ne!(seed(&other).unwrap(), a);
    }

    #[test]
    fn trips_are_valid_sorted_and_unique() {
        for acct in seed(&test_profile(10, 0.0)).unwrap() {
            assert!(!acct.trips.is_empty());
            let mut ids = std::collections::HashSet::new();
            for w in acct.trips.windows(2) {
                assert!(w[0].start_time <= w[1].start_time);
            }
            for t in &acct.trips {
                t.validate().unwrap();
                assert!(ids.insert(t.trip_id.clone()));
                assert_eq!(t.platform, acct.platform);
                assert!(t.customer_charge > t.tips);
            }
        }
    }

    #[test]
    fn rejects_bad_fractions() {
        let mut p = test_profile(10, 1.5);
        assert!(matches!(seed(&p), Err(ConnectorError::InvalidProfile(_))));
        p.failure_rate = 0.6;
        p.partial_rate = 0.6;
        assert!(seed(&p).is_err());
        p.partial_rate = 0.0;
        p.trips_per_day.min = 9;
        p.trips_per_day.max = 2;
        assert!(seed(&p).is_err());
    }
}
