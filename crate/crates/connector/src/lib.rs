//! A stand-in for the third-party payroll connector.
//!
//! [`scenario::seed`] builds synthetic platform accounts, and [`ConnectorSim`]
//! pushes their trip histories to a subscriber as signed webhook deliveries,
//! including sync failures, daily deltas and retries of unacknowledged
//! deliveries.

pub mod envelope;
pub mod scenario;
pub mod signature;
pub mod sim;
pub mod sink;

pub use envelope::{Delivery, EventKind, WebhookEnvelope};
pub use scenario::{seed, ConnectorAccount, FailMode, ScenarioConfig};
pub use sim::{ConnectorError, ConnectorSim, LatencyModel, LinkResult, DEFAULT_BATCH_SIZE};
pub use sink::{HttpSink, RecordingSink, WebhookSink};

pub const DELIVERY_ID_HEADER: &str = "X-Delivery-Id";
pub const SIGNATURE_HEADER: &str = "X-Signature";
