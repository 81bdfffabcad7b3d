//! One-time-code delivery. Real SMS and email vendors plug in behind
//! [`OtpChannel`]; the bundled channels log, append to a file, or keep codes
//! in memory for tests.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

pub trait OtpChannel: Send + Sync {
    fn name(&self) -> &str;
    fn send(&self, contact: &str, code: &str) -> Result<(), String>;
}

#[derive(Debug, Default)]
pub struct LogOtpChannel;

impl OtpChannel for LogOtpChannel {
    fn name(&self) -> &str {
        "log"
    }

    fn send(&self, contact: &str, code: &str) -> Result<(), String> {
        tracing::info!(contact, code, "verification code issued");
        Ok(())
    }
}

/// Appends `contact<TAB>code` lines to a file.
#[derive(Debug)]
pub struct FileOtpChannel {
    path: PathBuf,
    lock: Mutex<()>,
}

impl FileOtpChannel {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        FileOtpChannel { path: path.into(), lock: Mutex::new(()) }
    }
}

impl OtpChannel for FileOtpChannel {
    fn name(&self) -> &str {
        "file"
    }

    fn send(&self, contact: &str, code: &str) -> Result<(), String> {
        let _guard = self.lock.lock().unwrap();
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| e.to_string())?;
        writeln!(f, "{contact}\t{code}").map_err(|e| e.to_string())
    }
}

#[derive(Debug, Default)]
pub struct MemoryOtpChannel {
    sent: Mutex<HashMap<String, String>>,
}

impl MemoryOtpChannel {
    pub fn last_code(&self, contact: &str) -> Option<String> {
        self.sent.lock().unwrap().get(contact).cloned()
    }
}

impl OtpChannel for MemoryOtpChannel {
    fn name(&self) -> &str {
        "memory"
    }

    fn send(&self, contact: &str, code: &str) -> Result<(), String> {
        self.sent.lock().unwrap().insert(contact.to_string(), code.to_string());
        Ok(())
    }
}
