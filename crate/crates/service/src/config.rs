use std::path::{Path, PathBuf};

use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};

/// Environment variable naming the config file.
pub const CONFIG_ENV: &str = "LOSTWAGE_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConsentMode {
    /// Organization access only after the driver presses Share.
    #[default]
    OptIn,
    /// Share consent is recorded automatically when the driver verifies;
    /// the driver may revoke it like any other.
    OptOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    /// SQLite database file.
    pub database: PathBuf,
    pub bind: String,
    /// Shared secret for webhook signatures.
    pub webhook_secret: String,
    pub consent_mode: ConsentMode,
    /// Default case timezone for new cases.
    pub default_timezone: Tz,
    /// Where the embedded connector posts webhooks. Unset means in-process delivery.
    pub connector_endpoint: Option<String>,
    /// Lets drivers download reports on their own cases.
    pub driver_report_access: bool,
    /// Redact driver name and contact on reports unless the request says otherwise.
    pub redact_reports: bool,
    /// OTP delivery: `log`, or a file path to append codes to.
    pub otp_sink: String,
    /// Directory of static web assets to serve at `/`, if any.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            database: PathBuf::from("lostwage.db"),
            bind: "127.0.0.1:8080".into(),
            webhook_secret: "dev-secret-change-me".into(),
            consent_mode: ConsentMode::OptIn,
            default_timezone: chrono_tz::America::Los_Angeles,
            connector_endpoint: None,
            driver_report_access: false,
            redact_reports: false,
            otp_sink: "log".into(),
            static_dir: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> ServiceResult<Self> {
        toml::from_str(text).map_err(|e| ServiceError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> ServiceResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Validation(format!("config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative database paths are relative to the config file.
        if cfg.database.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.database = dir.join(&cfg.database);
            }
        }
        Ok(cfg)
    }

    /// Loads from an explicit path, else from `LOSTWAGE_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> ServiceResult<Self> {
        if let Some(p) = explicit {
            return Self::load(p);
        }
        match std::env::var_os(CONFIG_ENV) {
            Some(p) => Self::load(Path::new(&p)),
            None => Ok(Self::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_partial_toml() {
        let cfg = ServiceConfig::from_toml(
            "webhook_secret = \"s3\"\nconsent_mode = \"OPT_OUT\"\ndefault_timezone = \"America/New_York\"\n",
        )
        .unwrap();
        assert_eq!(cfg.webhook_secret, "s3");
        assert_eq!(cfg.consent_mode, ConsentMode::OptOut);
        assert_eq!(cfg.default_timezone, chrono_tz::America::New_York);
        assert_eq!(cfg.bind, "127.0.0.1:8080");
    }

    #[test]
    fn rejects_unknown_mode() {
        assert!(ServiceConfig::from_toml("consent_mode = \"MAYBE\"").is_err());
    }
}
