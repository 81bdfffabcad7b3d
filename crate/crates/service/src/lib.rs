//! The case-management service.
//!
//! Field representatives enroll drivers and link their platform accounts;
//! the connector pushes trips through [`ingestion::Ingestor`]; legal staff
//! open cases and pull reports through [`CaseService`], which refuses any
//! organization-side read of a driver's data unless that driver has an
//! active share consent. All state lives in one SQLite database.

pub mod app;
pub mod clock;
pub mod config;
pub mod connector_link;
pub mod error;
pub mod http;
pub mod ingestion;
pub mod model;
pub mod otp;
pub mod scenario;
pub mod service;
pub mod store;

pub use app::App;
pub use clock::{Clock, FixedClock, SystemClock};
pub use config::{ConsentMode, ServiceConfig};
pub use connector_link::{ConnectorClient, EmbeddedConnector, IngestSink, NoConnector};
pub use error::{ErrorCode, ServiceError, ServiceResult};
pub use ingestion::{IngestResult, Ingestor};
pub use model::*;
pub use otp::{FileOtpChannel, LogOtpChannel, MemoryOtpChannel, OtpChannel};
pub use service::{CaseService, CreateCase, OracleCheck, ParamsPatch, ReportFormat, ReportOptions, ReportOutput};
pub use store::Store;
