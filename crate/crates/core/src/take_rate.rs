//! Share of the rider price (net of tips) kept by the platform.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::trip::Trip;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TakeRate {
    /// No trip had a customer charge above its tips.
    Undefined,
    Rate {
        value: BigRational,
        /// The raw ratio fell outside [0, 1] and was clamped.
        clamped: bool,
    },
}

impl TakeRate {
    pub fn value(&self) -> Option<&BigRational> {
        match self {
            TakeRate::Undefined => None,
            TakeRate::Rate { value, .. } => Some(value),
        }
    }

    /// Percentage for display, to two decimals.
    pub fn percent(&self) -> Option<f64> {
        self.value()
            .and_then(|v| (v * BigInt::from(10_000)).round().to_integer().to_f64())
            .map(|bp| bp / 100.0)
    }
}

impl Serialize for TakeRate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            defined: bool,
            exact: Option<String>,
            percent: Option<f64>,
            clamped: bool,
        }
        let repr = match self {
            TakeRate::Undefined => Repr { defined: false, exact: None, percent: None, clamped: false },
            TakeRate::Rate { value, clamped } => Repr {
                defined: true,
                exact: Some(crate::money::format_exact(value)),
                percent: self.percent(),
                clamped: *clamped,
            },
        };
        repr.serialize(s)
    }
}

/// `(Σ(charge − tips) − Σ(pay + bonus)) / Σ(charge − tips)` over trips whose
/// charge exceeds their tips. Bonuses count as driver-received money.
pub fn take_rate(trips: &[Trip]) -> TakeRate {
    let mut rider_net = 0i128;
    let mut driver_received = 0i128;
    for t in trips.iter().filter(|t| t.customer_charge > t.tips) {
        rider_net += (t.customer_charge.cents() - t.tips.cents()) as i128;
        driver_received += (t.driver_pay.cents() + t.bonus.cents()) as i128;
    }
    if rider_net == 0 {
        return TakeRate::Undefined;
    }
    let raw = BigRational::new(
        BigInt::from(rider_net - driver_received),
        BigInt::from(rider_net),
    );
    if raw < BigRational::zero() {
        TakeRate::Rate { value: BigRational::zero(), clamped: true }
    } else if raw > BigRational::one() {
        TakeRate::Rate { value: BigRational::one(), clamped: true }
    } else {
        TakeRate::Rate { value: raw, clamped: false }
    }
}
