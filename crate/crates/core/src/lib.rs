//! Deterministic lost-wage computation for deactivated rideshare drivers.
//!
//! Everything in this crate is pure: no I/O, no clocks, no shared state.
//! Money is carried as integer cents and every intermediate quantity is an
//! exact rational; rounding happens once per reported figure, half-to-even.

pub mod engine;
pub mod error;
pub mod money;
pub mod oracle;
pub mod policy;
pub mod take_rate;
pub mod trip;

pub use engine::{
    average_daily, deactivation_days, interest_accrued, lost_wage, lost_wage_with,
    reference_window, DailyTotal, DataStatus, EarningsWindow, LostWageEstimate,
};
pub use error::{EngineError, EngineResult};
pub use money::{round_half_even, ExactCents, Money};
pub use policy::{DeactivationCase, PolicyParams};
pub use take_rate::{take_rate, TakeRate};
pub use trip::{Coordinate, Platform, Trip, TripError};

/// Version stamped into every generated report and audit entry.
pub const ENGINE_VERSION: &str = concat!("lostwage-engine/", env!("CARGO_PKG_VERSION"));

/// Footnote describing how interest is accrued, printed on every report.
pub const INTEREST_METHOD_NOTE: &str = "Interest is simple (non-compounding) annual interest, \
Actual/365 day count, accrued on each lost day's average earnings from that day until the \
as-of date, and rounded once to the cent (half-to-even).";
