use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use lostwage_core::money::format_exact;
use lostwage_core::{
    DeactivationCase, LostWageEstimate, Money, Platform, PolicyParams, INTEREST_METHOD_NOTE,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pdf::{wrap, Font, Page, PdfDocument};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("invalid report document: {0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("zip: {0}")]
    Zip(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case_id: String,
    pub driver_id: String,
    pub driver_name: String,
    /// `None` when redacted.
    pub driver_contact: Option<String>,
    pub platform: Platform,
    pub deactivation_date: NaiveDate,
    pub reactivation_date: Option<NaiveDate>,
    pub as_of_date: NaiveDate,
}

/// Everything printed on a report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportDocument {
    pub summary: CaseSummary,
    pub redacted: bool,
    pub params: PolicyParams,
    pub estimate: LostWageEstimate,
    pub engine_version: String,
}

fn initials(name: &str) -> String {
    let parts: Vec<String> = name
        .split_whitespace()
        .filter_map(|w| w.chars().next())
        .map(|c| format!("{}.", c.to_uppercase()))
        .collect();
    if parts.is_empty() {
        "[redacted]".to_string()
    } else {
        parts.join(" ")
    }
}

impl ReportDocument {
    pub fn new(
        case: &DeactivationCase,
        driver_name: &str,
        driver_contact: &str,
        estimate: LostWageEstimate,
        redact: bool,
    ) -> Self {
        let summary = CaseSummary {
            case_id: case.case_id.clone(),
            driver_id: case.driver_id.clone(),
            driver_name: if redact { initials(driver_name) } else { driver_name.to_string() },
            driver_contact: (!redact).then(|| driver_contact.to_string()),
            platform: case.platform,
            deactivation_date: case.deactivation_date,
            reactivation_date: case.reactivation_date,
            as_of_date: case.as_of_date,
        };
        ReportDocument {
            summary,
            redacted: redact,
            params: case.params.clone(),
            estimate,
            engine_version: lostwage_core::ENGINE_VERSION.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        let est = &self.estimate;
        let rows = est.window.daily_totals.len();
        if rows != self.params.reference_days as usize {
            return Err(ReportError::Invalid(format!(
                "{rows} window rows for a {}-day reference period",
                self.params.reference_days
            )));
        }
        let sum: Money = est.window.daily_totals.iter().map(|d| d.amount).sum();
        if sum != est.window.window_total {
            return Err(ReportError::Invalid("window total differs from daily rows".into()));
        }
        if est.principal.checked_add(est.interest) != Some(est.total) {
            return Err(ReportError::Invalid("total is not principal + interest".into()));
        }
        Ok(())
    }

    /// Daily average rounded to the cent for display.
    pub fn daily_average_display(&self) -> Money {
        Money::from_exact(&self.estimate.daily_average_exact).unwrap_or(Money::ZERO)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreviewDay {
    pub date: NaiveDate,
    pub amount_cents: i64,
}

/// The JSON rendition of a report; same numbers as the PDF.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportPreview {
    pub summary: CaseSummary,
    pub redacted: bool,
    pub params: PolicyParams,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub daily_totals: Vec<PreviewDay>,
    pub window_total_cents: i64,
    pub trips_in_window: usize,
    pub daily_average_exact: String,
    pub daily_average_cents: i64,
    pub deactivation_days: u32,
    pub principal_cents: i64,
    pub interest_cents: i64,
    pub total_cents: i64,
    pub fallback_used: bool,
    pub short_history: bool,
    pub interest_method: String,
    pub engine_version: String,
    pub generated_at: DateTime<Utc>,
}

impl ReportPreview {
    pub fn new(doc: &ReportDocument, generated_at: DateTime<Utc>) -> Self {
        let est = &doc.estimate;
        ReportPreview {
            summary: doc.summary.clone(),
            redacted: doc.redacted,
            params: doc.params.clone(),
            window_start: est.window.window_start,
            window_end: est.window.window_end,
            daily_totals: est
                .window
                .daily_totals
                .iter()
                .map(|d| PreviewDay { date: d.date, amount_cents: d.amount.cents() })
                .collect(),
            window_total_cents: est.window.window_total.cents(),
            trips_in_window: est.window.trips_in_window,
            daily_average_exact: format_exact(&est.daily_average_exact),
            daily_average_cents: doc.daily_average_display().cents(),
            deactivation_days: est.deactivation_days,
            principal_cents: est.principal.cents(),
            interest_cents: est.interest.cents(),
            total_cents: est.total.cents(),
            fallback_used: est.fallback_used,
            short_history: est.window.short_history,
            interest_method: INTEREST_METHOD_NOTE.to_string(),
            engine_version: doc.engine_version.clone(),
            generated_at,
        }
    }
}

const LEFT: f32 = 54.0;
const RIGHT: f32 = 558.0;
const TOP: f32 = 742.0;
const ROWS_PER_PAGE: usize = 52;

fn percent(bp: u32) -> String {
    format!("{}.{:02}%", bp / 100, bp % 100)
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

struct Cursor {
    page: Page,
    y: f32,
}

impl Cursor {
    fn new() -> Self {
        Cursor { page: Page::default(), y: TOP }
    }

    fn line(&mut self, size: f32, font: Font, text: impl Into<String>) {
        self.page.text(LEFT, self.y, size, font, text);
        self.y -= size + 5.0;
    }

    fn heading(&mut self, text: &str) {
        self.y -= 6.0;
        self.line(12.0, Font::Bold, text);
    }

    fn rule(&mut self) {
        self.page.rule(LEFT, RIGHT, self.y + 4.0);
        self.y -= 8.0;
    }
}

/// Builds the page layout for a report.
pub(crate) fn layout(doc: &ReportDocument, generated_at: DateTime<Utc>) -> PdfDocument {
    let s = &doc.summary;
    let p = &doc.params;
    let est = &doc.estimate;
    let w = &est.window;

    let mut first = Cursor::new();
    first.line(18.0, Font::Bold, "Lost Wage Report");
    first.line(
        10.0,
        Font::Regular,
        format!("Case {}  |  Platform {}  |  Prepared {}", s.case_id, s.platform, generated_at.format("%Y-%m-%d")),
    );
    first.rule();

    first.heading("Driver");
    first.line(10.0, Font::Regular, format!("Name: {}", s.driver_name));
    first.line(
        10.0,
        Font::Regular,
        format!("Contact: {}", s.driver_contact.as_deref().unwrap_or("[redacted]")),
    );
    first.line(10.0, Font::Regular, format!("Driver ID: {}", s.driver_id));

    first.heading("Deactivation");
    first.line(10.0, Font::Regular, format!("Deactivation date: {}", s.deactivation_date));
    first.line(
        10.0,
        Font::Regular,
        format!(
            "Reactivation date: {}",
            s.reactivation_date.map_or("not reactivated".to_string(), |d| d.to_string())
        ),
    );
    first.line(10.0, Font::Regular, format!("As-of date: {}", s.as_of_date));
    first.line(10.0, Font::Regular, format!("Days deactivated: {}", est.deactivation_days));

    first.heading("Policy parameters");
    let last_day = w.daily_totals.last().map_or(w.window_end, |d| d.date);
    first.line(
        10.0,
        Font::Regular,
        format!("Reference period: {} days ({} to {})", p.reference_days, w.window_start, last_day),
    );
    first.line(
        10.0,
        Font::Regular,
        format!("Interest rate: {} simple annual, {}-day year", percent(p.interest_rate), p.interest_day_count),
    );
    first.line(10.0, Font::Regular, format!("Statutory daily fallback: {}", p.fallback_daily));
    first.line(10.0, Font::Regular, format!("Case timezone: {}", p.case_timezone.name()));
    first.line(10.0, Font::Regular, format!("Tips counted as earnings: {}", yes_no(p.include_tips)));

    first.heading("Lost wage estimate");
    first.line(10.0, Font::Regular, format!("Reference period earnings: {}", w.window_total));
    first.line(10.0, Font::Regular, format!("Trips in reference period: {}", w.trips_in_window));
    first.line(
        10.0,
        Font::Regular,
        format!(
            "Average daily earnings: {} (exact {} cents)",
            doc.daily_average_display(),
            format_exact(&est.daily_average_exact)
        ),
    );
    first.line(10.0, Font::Regular, format!("Fallback rate applied: {}", yes_no(est.fallback_used)));
    first.line(11.0, Font::Bold, format!("Principal: {}", est.principal));
    first.line(11.0, Font::Bold, format!("Interest: {}", est.interest));
    first.line(11.0, Font::Bold, format!("Total: {}", est.total));

    let mut notes = Vec::new();
    if est.fallback_used {
        notes.push(format!(
            "Platform earnings were unavailable or not accepted; the statutory rate of {} per day \
             was applied for each day of deactivation.",
            p.fallback_daily
        ));
    }
    if w.short_history {
        notes.push(format!(
            "The driver's earnings history on this platform begins inside the reference period; \
             the average still divides by the full {} days.",
            p.reference_days
        ));
    }
    if !notes.is_empty() {
        first.heading("Notes");
        for note in notes {
            for line in wrap(&note, 100) {
                first.line(9.0, Font::Regular, line);
            }
        }
    }

    let mut pages = vec![first.page];
    for chunk in w.daily_totals.chunks(ROWS_PER_PAGE) {
        let mut c = Cursor::new();
        c.line(13.0, Font::Bold, "Daily earnings in the reference period");
        c.line(9.0, Font::Bold, "Date        Day   Earnings");
        c.rule();
        for day in chunk {
            c.line(
                8.0,
                Font::Regular,
                format!("{}  {}   {}", day.date, day.date.format("%a"), day.amount),
            );
        }
        pages.push(c.page);
    }

    let footnote = wrap(INTEREST_METHOD_NOTE, 120);
    let count = pages.len();
    for (i, page) in pages.iter_mut().enumerate() {
        let mut y = 30.0 + 9.0 * footnote.len() as f32;
        page.rule(LEFT, RIGHT, y + 8.0);
        for line in &footnote {
            page.text(LEFT, y, 7.0, Font::Regular, line.clone());
            y -= 9.0;
        }
        page.text(
            LEFT,
            y,
            7.0,
            Font::Regular,
            format!(
                "Generated {} by {}  |  Page {} of {}",
                generated_at.to_rfc3339_opts(SecondsFormat::Secs, true),
                doc.engine_version,
                i + 1,
                count
            ),
        );
    }

    PdfDocument {
        title: format!("Lost Wage Report {}", s.case_id),
        producer: doc.engine_version.clone(),
        creation_date: generated_at.format("D:%Y%m%d%H%M%SZ").to_string(),
        pages,
    }
}
