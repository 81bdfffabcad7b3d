use std::io::Write;

use chrono::{DateTime, Datelike, Timelike, Utc};
use lostwage_core::Trip;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zip::write::SimpleFileOptions;

use crate::document::{ReportDocument, ReportError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub case_id: String,
    pub engine_version: String,
    pub generated_at: DateTime<Utc>,
    pub files: Vec<ManifestEntry>,
}

fn entry(name: &str, data: &[u8]) -> ManifestEntry {
    ManifestEntry { name: name.to_string(), sha256: hex::encode(Sha256::digest(data)), bytes: data.len() }
}

/// `report.pdf`, `trips.csv` and `manifest.json` (SHA-256 of the other two).
pub fn render_zip(
    doc: &ReportDocument,
    trips: &[Trip],
    generated_at: DateTime<Utc>,
) -> Result<Vec<u8>, ReportError> {
    let pdf = crate::render_pdf(doc, generated_at)?;
    let csv = crate::render_csv(trips);
    let manifest = Manifest {
        case_id: doc.summary.case_id.clone(),
        engine_version: doc.engine_version.clone(),
        generated_at,
        files: vec![entry("report.pdf", &pdf), entry("trips.csv", &csv)],
    };
    let manifest = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");

    let zerr = |e: zip::result::ZipError| ReportError::Zip(e.to_string());
    let stamp = zip::DateTime::from_date_and_time(
        generated_at.year().clamp(1980, 2107) as u16,
        generated_at.month() as u8,
        generated_at.day() as u8,
        generated_at.hour() as u8,
        generated_at.minute() as u8,
        generated_at.second() as u8,
    )
    .unwrap_or_default();
    let options = SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated)
        .last_modified_time(stamp)
        .unix_permissions(0o644);

    let mut zip = zip::ZipWriter::new(std::io::Cursor::new(Vec::new()));
    for (name, data) in [("report.pdf", &pdf), ("trips.csv", &csv), ("manifest.json", &manifest)] {
        zip.start_file(name, options).map_err(zerr)?;
        zip.write_all(data).map_err(|e| ReportError::Zip(e.to_string()))?;
    }
    Ok(zip.finish().map_err(zerr)?.into_inner())
}
