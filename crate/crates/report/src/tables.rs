//! Raw trip export. Money columns are integer cents; coordinates have six
//! decimals; timestamps are RFC 3339 with the trip's original UTC offset.

use chrono::{DateTime, SecondsFormat};
use lostwage_core::{Money, Trip};

use crate::document::ReportError;

pub const CSV_COLUMNS: [&str; 12] = [
    "trip_id",
    "platform",
    "start_time",
    "end_time",
    "start_lat",
    "start_lon",
    "end_lat",
    "end_lon",
    "driver_pay_cents",
    "customer_charge_cents",
    "tips_cents",
    "bonus_cents",
];

pub fn render_csv(trips: &[Trip]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("write to Vec");
    for t in trips {
        w.write_record([
            t.trip_id.clone(),
            t.platform.to_string(),
            t.start_time.to_rfc3339_opts(SecondsFormat::AutoSi, false),
            t.end_time.to_rfc3339_opts(SecondsFormat::AutoSi, false),
            t.start_lat.to_string(),
            t.start_lon.to_string(),
            t.end_lat.to_string(),
            t.end_lon.to_string(),
            t.driver_pay.cents().to_string(),
            t.customer_charge.cents().to_string(),
            t.tips.cents().to_string(),
            t.bonus.cents().to_string(),
        ])
        .expect("write to Vec");
    }
    w.into_inner().expect("flush Vec")
}

/// Reads a trips CSV back. The export has no account column, so the caller
/// supplies the account the rows belong to.
pub fn parse_csv(bytes: &[u8], account_id: &str) -> Result<Vec<Trip>, ReportError> {
    let err = |m: String| ReportError::Csv(m);
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = r.headers().map_err(|e| err(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_COLUMNS {
        return Err(err(format!("unexpected header {headers:?}")));
    }
    let mut trips = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let time = |i: usize| {
            DateTime::parse_from_rfc3339(field(i))
                .map_err(|e| err(format!("row {}: {}: {e}", line + 1, CSV_COLUMNS[i])))
        };
        let coord = |i: usize| {
            field(i).parse().map_err(|e| err(format!("row {}: {e}", line + 1)))
        };
        let cents = |i: usize| {
            field(i)
                .parse::<i64>()
                .map(Money::from_cents)
                .map_err(|e| err(format!("row {}: {}: {e}", line + 1, CSV_COLUMNS[i])))
        };
        trips.push(Trip {
            trip_id: field(0).to_string(),
            account_id: account_id.to_string(),
            platform: field(1).parse().map_err(|e| err(format!("row {}: {e}", line + 1)))?,
            start_time: time(2)?,
            end_time: time(3)?,
            start_lat: coord(4)?,
            start_lon: coord(5)?,
            end_lat: coord(6)?,
            end_lon: coord(7)?,
            driver_pay: cents(8)?,
            customer_charge: cents(9)?,
            tips: cents(10)?,
            bonus: cents(11)?,
        });
    }
    Ok(trips)
}
