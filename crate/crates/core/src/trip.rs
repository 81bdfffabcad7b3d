use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::money::Money;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Platform {
    Uber,
    Lyft,
}

impl Platform {
    pub const ALL: [Platform; 2] = [Platform::Uber, Platform::Lyft];

    pub fn as_str(self) -> &'static str {
        match self {
            Platform::Uber => "UBER",
            Platform::Lyft => "LYFT",
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Platform {
    type Err = TripError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "UBER" => Ok(Platform::Uber),
            "LYFT" => Ok(Platform::Lyft),
            _ => Err(TripError::UnknownPlatform(s.to_string())),
        }
    }
}

/// A latitude or longitude held as integer micro-degrees (six decimal places).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coordinate(i32);

impl Coordinate {
    pub const fn from_micro_degrees(micro: i32) -> Self {
        Coordinate(micro)
    }

    pub fn micro_degrees(self) -> i32 {
        self.0
    }

    /// Rounds to the nearest micro-degree. Non-finite input is rejected.
    pub fn from_degrees(deg: f64) -> Option<Self> {
        if !deg.is_finite() || deg.abs() > 360.0 {
            return None;
        }
        Some(Coordinate((deg * 1e6).round() as i32))
    }

    pub fn degrees(self) -> f64 {
        self.0 as f64 / 1e6
    }
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:06}", abs / 1_000_000, abs % 1_000_000)
    }
}

impl FromStr for Coordinate {
    type Err = TripError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .parse::<f64>()
            .ok()
            .and_then(Coordinate::from_degrees)
            .ok_or_else(|| TripError::BadCoordinate(s.to_string()))
    }
}

impl Serialize for Coordinate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.degrees())
    }
}

impl<'de> Deserialize<'de> for Coordinate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let deg = f64::deserialize(d)?;
        Coordinate::from_degrees(deg)
            .ok_or_else(|| serde::de::Error::custom(format!("coordinate out of range: {deg}")))
    }
}

/// One completed ride.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trip {
    pub trip_id: String,
    pub account_id: String,
    pub platform: Platform,
    pub start_time: DateTime<FixedOffset>,
    pub end_time: DateTime<FixedOffset>,
    pub start_lat: Coordinate,
    pub start_lon: Coordinate,
    pub end_lat: Coordinate,
    pub end_lon: Coordinate,
    pub driver_pay: Money,
    pub customer_charge: Money,
    pub tips: Money,
    pub bonus: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TripError {
    #[error("trip id is empty")]
    EmptyId,
    #[error("trip {0}: end_time precedes start_time")]
    EndBeforeStart(String),
    #[error("trip {0}: latitude out of [-90, 90]")]
    LatitudeRange(String),
    #[error("trip {0}: longitude out of [-180, 180]")]
    LongitudeRange(String),
    #[error("trip {0}: negative {1}")]
    NegativeMoney(String, &'static str),
    #[error("unknown platform {0:?}")]
    UnknownPlatform(String),
    #[error("bad coordinate {0:?}")]
    BadCoordinate(String),
}

const LAT_MAX: i32 = 90_000_000;
const LON_MAX: i32 = 180_000_000;

impl Trip {
    /// Driver-received earnings: pay + bonus, plus tips unless excluded.
    pub fn earnings(&self, include_tips: bool) -> Money {
        let base = self.driver_pay + self.bonus;
        if include_tips {
            base + self.tips
        } else {
            base
        }
    }

    pub fn validate(&self) -> Result<(), TripError> {
        if self.trip_id.trim().is_empty() {
            return Err(TripError::EmptyId);
        }
        let id = || self.trip_id.clone();
        if self.end_time < self.start_time {
            return Err(TripError::EndBeforeStart(id()));
        }
        for lat in [self.start_lat, self.end_lat] {
            if lat.micro_degrees().abs() > LAT_MAX {
                return Err(TripError::LatitudeRange(id()));
            }
        }
        for lon in [self.start_lon, self.end_lon] {
            if lon.micro_degrees().abs() > LON_MAX {
                return Err(TripError::LongitudeRange(id()));
            }
        }
        for (amount, name) in [
            (self.driver_pay, "driver_pay"),
            (self.customer_charge, "customer_charge"),
            (self.tips, "tips"),
            (self.bonus, "bonus"),
        ] {
            if amount.is_negative() {
                return Err(TripError::NegativeMoney(id(), name));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use chrono::TimeZone;

    pub fn trip(id: &str, platform: Platform, start: DateTime<FixedOffset>, pay: i64) -> Trip {
        Trip {
            trip_id: id.to_string(),
            account_id: "acct-1".to_string(),
            platform,
            start_time: start,
            end_time: start + chrono::Duration::minutes(20),
            start_lat: Coordinate::from_micro_degrees(47_606_209),
            start_lon: Coordinate::from_micro_degrees(-122_332_071),
            end_lat: Coordinate::from_micro_degrees(47_620_422),
            end_lon: Coordinate::from_micro_degrees(-122_349_358),
            driver_pay: Money::from_cents(pay),
            customer_charge: Money::from_cents(pay * 4 / 3),
            tips: Money::ZERO,
            bonus: Money::ZERO,
        }
    }

    pub fn pacific(y: i32, m: u32, d: u32, h: u32) -> DateTime<FixedOffset> {
        FixedOffset::west_opt(8 * 3600)
            .unwrap()
            .with_ymd_and_hms(y, m, d, h, 0, 0)
            .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn coordinate_text_is_six_decimals() {
        let c = Coordinate::from_micro_degrees(-122_332_071);
        assert_eq!(c.to_string(), "-122.332071");
        assert_eq!(Coordinate::from_micro_degrees(-5).to_string(), "-0.000005");
        assert_eq!("-122.332071".parse::<Coordinate>().unwrap(), c);
        assert!("nan".parse::<Coordinate>().is_err());
    }

    #[test]
    fn validation_catches_each_violation() {
        let good = trip("t1", Platform::Uber, pacific(2024, 3, 1, 9), 1500);
        assert!(good.validate().is_ok());

        let mut t = good.clone();
        t.end_time = t.start_time - chrono::Duration::seconds(1);
        assert!(matches!(t.validate(), Err(TripError::EndBeforeStart(_))));

        let mut t = good.clone();
        t.start_lat = Coordinate::from_micro_degrees(90_000_001);
        assert!(matches!(t.validate(), Err(TripError::LatitudeRange(_))));

        let mut t = good.clone();
        t.end_lon = Coordinate::from_micro_degrees(-180_000_001);
        assert!(matches!(t.validate(), Err(TripError::LongitudeRange(_))));

        let mut t = good.clone();
        t.tips = Money::from_cents(-1);
        assert_eq!(t.validate(), Err(TripError::NegativeMoney("t1".into(), "tips")));

        let mut t = good;
        t.trip_id = " ".into();
        assert_eq!(t.validate(), Err(TripError::EmptyId));
    }

    #[test]
    fn json_shape() {
        let t = trip("t1", Platform::Lyft, pacific(2024, 3, 1, 9), 1500);
        let v = serde_json::to_value(&t).unwrap();
        assert_eq!(v["platform"], "LYFT");
        assert_eq!(v["driver_pay"], 1500);
        assert_eq!(v["start_time"], "2024-03-01T09:00:00-08:00");
        assert_eq!(v["start_lat"], 47.606209);
        let back: Trip = serde_json::from_value(v).unwrap();
        assert_eq!(back, t);
    }
}
