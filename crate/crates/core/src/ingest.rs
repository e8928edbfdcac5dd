//! CSV ingestion and cleaning.
//!
//! Rows with a missing cell, a non-numeric value or an unparseable timestamp
//! are dropped (never imputed) and counted in a [`CleaningReport`]. Surviving
//! rows are sorted by timestamp; when a timestamp repeats, the row that came
//! first in the file wins.

use std::io::{Read, Write};

use chrono::{DateTime, SecondsFormat, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::{ParameterKind, PerParameter, SensorReading, SensorSeries};
use crate::error::{Error, Result};

/// Column names for the timestamp and each parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub timestamp: String,
    pub columns: PerParameter<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            timestamp: "timestamp".to_owned(),
            columns: PerParameter::from_fn(|p| p.name().to_owned()),
        }
    }
}

/// Audit trail of what cleaning removed. `rows_read` always equals
/// `rows_kept` plus the sum of the dropped counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub rows_dropped_missing: usize,
    pub rows_dropped_nonnumeric: usize,
    pub rows_dropped_bad_timestamp: usize,
    pub rows_dropped_glitch: usize,
    pub duplicate_timestamps_removed: usize,
}

impl CleaningReport {
    pub fn dropped(&self) -> usize {
        self.rows_dropped_missing
            + self.rows_dropped_nonnumeric
            + self.rows_dropped_bad_timestamp
            + self.rows_dropped_glitch
            + self.duplicate_timestamps_removed
    }

    pub fn is_balanced(&self) -> bool {
        self.rows_read == self.rows_kept + self.dropped()
    }

    /// Chains a later cleaning step onto this one. `next.rows_read` must equal
    /// `self.rows_kept`.
    pub fn then(self, next: CleaningReport) -> CleaningReport {
        debug_assert_eq!(self.rows_kept, next.rows_read);
        CleaningReport {
            rows_read: self.rows_read,
            rows_kept: next.rows_kept,
            rows_dropped_missing: self.rows_dropped_missing + next.rows_dropped_missing,
            rows_dropped_nonnumeric: self.rows_dropped_nonnumeric + next.rows_dropped_nonnumeric,
            rows_dropped_bad_timestamp: self.rows_dropped_bad_timestamp
                + next.rows_dropped_bad_timestamp,
            rows_dropped_glitch: self.rows_dropped_glitch + next.rows_dropped_glitch,
            duplicate_timestamps_removed: self.duplicate_timestamps_removed
                + next.duplicate_timestamps_removed,
        }
    }
}

/// Parses an RFC 3339 timestamp, normalised to UTC and truncated to whole seconds.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let t = DateTime::parse_from_rfc3339(s.trim())
        .ok()?
        .with_timezone(&Utc);
    t.with_nanosecond(0)
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

enum RowOutcome {
    Kept(SensorReading),
    Missing,
    NonNumeric,
    BadTimestamp,
}

fn parse_row(record: &csv::StringRecord, ts_col: usize, cols: &[usize; 5]) -> RowOutcome {
    let cell = |i: usize| record.get(i).map(str::trim).filter(|s| !s.is_empty());

    let Some(ts) = cell(ts_col) else {
        return RowOutcome::Missing;
    };
    let mut raw = [""; 5];
    for (slot, &c) in raw.iter_mut().zip(cols) {
        match cell(c) {
            Some(s) => *slot = s,
            None => return RowOutcome::Missing,
        }
    }
    let mut values = [0.0; 5];
    for (v, s) in values.iter_mut().zip(raw) {
        match s.parse::<f64>() {
            Ok(x) if x.is_finite() => *v = x,
            _ => return RowOutcome::NonNumeric,
        }
    }
    let Some(timestamp) = parse_timestamp(ts) else {
        return RowOutcome::BadTimestamp;
    };
    match SensorReading::new(timestamp, PerParameter::from_array(values)) {
        Ok(r) => RowOutcome::Kept(r),
        Err(_) => RowOutcome::NonNumeric,
    }
}

/// Parses a CSV sensor log into a sorted, de-duplicated series.
pub fn parse_csv<R: Read>(source: R, schema: &CsvSchema) -> Result<(SensorSeries, CleaningReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema {
                column: name.to_owned(),
            })
    };
    let ts_col = find(&schema.timestamp)?;
    let mut cols = [0usize; 5];
    for p in ParameterKind::ALL {
        cols[p.index()] = find(&schema.columns[p])?;
    }

    let mut report = CleaningReport::default();
    let mut kept = Vec::new();
    for record in reader.records() {
        let record = record?;
        report.rows_read += 1;
        match parse_row(&record, ts_col, &cols) {
            RowOutcome::Kept(r) => kept.push(r),
            RowOutcome::Missing => report.rows_dropped_missing += 1,
            RowOutcome::NonNumeric => report.rows_dropped_nonnumeric += 1,
            RowOutcome::BadTimestamp => report.rows_dropped_bad_timestamp += 1,
        }
    }

    // Stable sort keeps file order among equal timestamps, so dedup keeps the first.
    kept.sort_by_key(|r| r.timestamp);
    let before = kept.len();
    kept.dedup_by_key(|r| r.timestamp);
    report.duplicate_timestamps_removed = before - kept.len();
    report.rows_kept = kept.len();

    if kept.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok((SensorSeries::new(kept)?, report))
}

/// Inclusive plausibility interval per parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "PerParameter<(f64, f64)>",
    into = "PerParameter<(f64, f64)>"
)]
pub struct GlitchBounds(PerParameter<(f64, f64)>);

impl GlitchBounds {
    pub fn new(bounds: PerParameter<(f64, f64)>) -> Result<Self> {
        for (p, &(lo, hi)) in bounds.iter() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::config(
                    format!("glitch_bounds.{p}"),
                    format!("need finite min < max, got [{lo}, {hi}]"),
                ));
            }
        }
        Ok(GlitchBounds(bounds))
    }

    /// `[0, 3 × fixed]` for every parameter.
    pub fn from_fixed(fixed: &PerParameter<f64>) -> Result<Self> {
        GlitchBounds::new(fixed.map(|_, &f| (0.0, 3.0 * f)))
    }

    pub fn get(&self, p: ParameterKind) -> (f64, f64) {
        self.0[p]
    }

    pub fn contains(&self, reading: &SensorReading) -> bool {
        ParameterKind::ALL.into_iter().all(|p| {
            let (lo, hi) = self.0[p];
            let v = reading.values[p];
            lo <= v && v <= hi
        })
    }
}

impl TryFrom<PerParameter<(f64, f64)>> for GlitchBounds {
    type Error = Error;

    fn try_from(b: PerParameter<(f64, f64)>) -> Result<Self> {
        GlitchBounds::new(b)
    }
}

impl From<GlitchBounds> for PerParameter<(f64, f64)> {
    fn from(b: GlitchBounds) -> Self {
        b.0
    }
}

/// Removes readings with any value outside its plausibility interval.
///
/// The returned report is a delta: `rows_read` is the input length and only
/// `rows_dropped_glitch` is non-zero among the drop counters. The result may
/// be empty.
pub fn filter_glitches(
    series: SensorSeries,
    bounds: &GlitchBounds,
) -> (SensorSeries, CleaningReport) {
    let rows_read = series.len();
    let kept: Vec<_> = series
        .into_readings()
        .into_iter()
        .filter(|r| bounds.contains(r))
        .collect();
    let report = CleaningReport {
        rows_read,
        rows_kept: kept.len(),
        rows_dropped_glitch: rows_read - kept.len(),
        ..CleaningReport::default()
    };
    (SensorSeries::from_ordered(kept), report)
}

/// Parses, filters glitches and rejects an empty result.
pub fn load_clean<R: Read>(
    source: R,
    schema: &CsvSchema,
    bounds: &GlitchBounds,
) -> Result<(SensorSeries, CleaningReport)> {
    let (series, parsed) = parse_csv(source, schema)?;
    let (kept, delta) = filter_glitches(series, bounds);
    if kept.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok((kept, parsed.then(delta)))
}

/// Writes a series using the default column names.
pub fn write_csv<W: Write>(series: &SensorSeries, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let schema = CsvSchema::default();
    let mut header = vec![schema.timestamp.as_str()];
    header.extend(ParameterKind::ALL.map(|p| p.name()));
    w.write_record(&header)?;
    for r in series.readings() {
        let mut row = vec![format_timestamp(&r.timestamp)];
        row.extend(ParameterKind::ALL.map(|p| r.values[p].to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "timestamp,vibration,temperature,flow,pressure,current\n";

    fn parse(body: &str) -> Result<(SensorSeries, CleaningReport)> {
        parse_csv(format!("{HEADER}{body}").as_bytes(), &CsvSchema::default())
    }

    #[test]
    fn missing_cell_drops_row() {
        let (s, rep) = parse(
            "2024-01-01T00:00:00Z,1.0,50,2600,4.0,220\n\
             2024-01-01T00:01:00Z,1.1,51,2610,,221\n\
             2024-01-01T00:02:00Z,1.2,52,2620,4.2,222\n",
        )
        .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(rep.rows_dropped_missing, 1);
        assert_eq!(rep.rows_read, 3);
        assert!(rep.is_balanced());
    }

    #[test]
    fn duplicate_timestamp_keeps_first() {
        let (s, rep) = parse(
            "2024-01-01T00:00:00Z,1.0,50,2600,4.0,220\n\
             2024-01-01T00:00:00Z,9.0,59,2690,4.9,229\n\
             2024-01-01T00:01:00Z,1.2,52,2620,4.2,222\n",
        )
        .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(rep.duplicate_timestamps_removed, 1);
        assert_eq!(s.readings()[0].values.vibration, 1.0);
        assert!(rep.is_balanced());
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let (s, _) = parse(
            "2024-01-01T00:02:00Z,1.2,52,2620,4.2,222\n\
             2024-01-01T00:00:00Z,1.0,50,2600,4.0,220\n",
        )
        .unwrap();
        assert_eq!(s.readings()[0].values.vibration, 1.0);
    }

    #[test]
    fn non_numeric_and_bad_timestamp_are_counted() {
        let (s, rep) = parse(
            "2024-01-01T00:00:00Z,abc,50,2600,4.0,220\n\
             yesterday,1.0,50,2600,4.0,220\n\
             2024-01-01T00:02:00Z,1.0,NaN,2600,4.0,220\n\
             2024-01-01T00:03:00Z,1.0,50,2600,4.0,220\n",
        )
        .unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(rep.rows_dropped_nonnumeric, 2);
        assert_eq!(rep.rows_dropped_bad_timestamp, 1);
        assert!(rep.is_balanced());
    }

    #[test]
    fn missing_column_is_schema_error() {
        let err = parse_csv(
            "timestamp,vibration\n2024-01-01T00:00:00Z,1\n".as_bytes(),
            &CsvSchema::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema { column } if column == "temperature"));
    }

    #[test]
    fn all_rows_bad_is_empty_error() {
        assert!(matches!(parse("x,1,2,3,4,5\n"), Err(Error::EmptyData)));
    }

    #[test]
    fn custom_schema_and_offsets() {
        let csv = "time,v,t,f,p,c\n2024-01-01T02:00:00+02:00,1,50,2600,4,220\n";
        let schema = CsvSchema {
            timestamp: "time".into(),
            columns: PerParameter {
                vibration: "v".into(),
                temperature: "t".into(),
                flow: "f".into(),
                pressure: "p".into(),
                current: "c".into(),
            },
        };
        let (s, _) = parse_csv(csv.as_bytes(), &schema).unwrap();
        assert_eq!(
            format_timestamp(&s.readings()[0].timestamp),
            "2024-01-01T00:00:00Z"
        );
    }

    fn series_of(rows: &[[f64; 5]]) -> SensorSeries {
        let t0 = parse_timestamp("2024-01-01T00:00:00Z").unwrap();
        SensorSeries::new(
            rows.iter()
                .enumerate()
                .map(|(i, v)| {
                    SensorReading::new(
                        t0 + chrono::Duration::minutes(i as i64),
                        PerParameter::from_array(*v),
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    fn default_bounds() -> GlitchBounds {
        GlitchBounds::from_fixed(&PerParameter::from_array([5.0, 80.0, 2800.0, 6.0, 240.0]))
            .unwrap()
    }

    #[test]
    fn glitch_filter_drops_negative_and_implausible() {
        let s = series_of(&[
            [1.0, 50.0, 2600.0, 4.0, 220.0],
            [-1.0, 50.0, 2600.0, 4.0, 220.0],
            [1.0, 50.0, 2600.0, 50.0, 220.0],
        ]);
        let (kept, rep) = filter_glitches(s, &default_bounds());
        assert_eq!(kept.len(), 1);
        assert_eq!(rep.rows_dropped_glitch, 2);
        assert!(rep.is_balanced());
    }

    #[test]
    fn glitch_filter_identity_inside_bounds() {
        let s = series_of(&[
            [1.0, 50.0, 2600.0, 4.0, 220.0],
            [1.5, 60.0, 2700.0, 7.9, 300.0],
        ]);
        let (kept, rep) = filter_glitches(s.clone(), &default_bounds());
        assert_eq!(kept, s);
        assert_eq!(rep.rows_dropped_glitch, 0);
    }

    #[test]
    fn bounds_validation() {
        let mut b = PerParameter::from_fn(|_| (0.0, 1.0));
        b.flow = (2.0, 1.0);
        assert!(GlitchBounds::new(b).is_err());
    }

    #[test]
    fn write_then_parse_round_trip() {
        let s = series_of(&[
            [1.25, 50.5, 2600.125, 4.0, 220.0],
            [0.1, 0.2, 0.3, 0.4, 0.5],
        ]);
        let mut buf = Vec::new();
        write_csv(&s, &mut buf).unwrap();
        let (back, rep) = parse_csv(buf.as_slice(), &CsvSchema::default()).unwrap();
        assert_eq!(back, s);
        assert_eq!(rep.dropped(), 0);
    }
}
