//! Renders lost-wage estimates into the files handed to arbitration:
//! a PDF report, a raw trips CSV and a ZIP bundle with a hash manifest.

mod document;
pub mod pdf;
mod tables;
mod bundle;

pub use bundle::{render_zip, Manifest, ManifestEntry};
pub use document::{CaseSummary, ReportDocument, ReportError, ReportPreview};
pub use tables::{parse_csv, render_csv, CSV_COLUMNS};

/// Renders the PDF report. Bytes depend only on the document and `generated_at`.
pub fn render_pdf(
    doc: &ReportDocument,
    generated_at: chrono::DateTime<chrono::Utc>,
) -> Result<Vec<u8>, ReportError> {
    doc.validate()?;
    Ok(document::layout(doc, generated_at).to_bytes())
}
