//! Intraday trade ingestion: per-interval volume-weighted prices and the
//! closing-price arbitrage signal.
//!
//! Input columns: `interval_start,trade_time,price,volume`. Timestamps are
//! RFC 3339 or `YYYY-MM-DD HH:MM[:SS]`; interval starts must sit on a
//! quarter hour.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, NaiveDateTime, Timelike};
use serde::Serialize;

use crate::price::CUTOFF_FACTOR;
use crate::stats::{series_stats, Histogram, SeriesStats};

/// Intervals whose total volume does not exceed this are ignored for the
/// closing-price signal.
pub const MIN_VOLUME_MW: f64 = 500.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalSummary {
    pub start: NaiveDateTime,
    pub trades: usize,
    pub volume: f64,
    /// Volume-weighted average price.
    pub i_avg: f64,
    /// Price of the last trade.
    pub closing: f64,
}

impl IntervalSummary {
    /// `closing - 1.25·I_avg`; positive means an arbitrage opportunity.
    pub fn closing_excess(&self) -> f64 {
        self.closing - CUTOFF_FACTOR * self.i_avg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntradayReport {
    pub intervals: Vec<IntervalSummary>,
    pub skipped_rows: usize,
    /// Intervals dropped for zero total volume.
    pub empty_intervals: usize,
    pub i_avg_stats: SeriesStats,
    pub i_avg_histogram: Histogram,
    /// Positive closing excesses on intervals above [`MIN_VOLUME_MW`].
    pub excess: Vec<f64>,
    pub excess_histogram: Histogram,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    Column(&'static str),
}

fn parse_time(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_utc());
    }
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

struct Trade {
    at: NaiveDateTime,
    price: f64,
    volume: f64,
}

pub fn ingest_intraday<R: Read>(reader: R) -> Result<IntradayReport, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &'static str| headers.iter().position(|h| h == name).ok_or(IngestError::Column(name));
    let (ci, ct, cp, cv) = (col("interval_start")?, col("trade_time")?, col("price")?, col("volume")?);

    let mut by_interval: BTreeMap<NaiveDateTime, Vec<Trade>> = BTreeMap::new();
    let mut skipped = 0;
    for rec in rdr.records() {
        let Ok(rec) = rec else {
            skipped += 1;
            continue;
        };
        let start = rec.get(ci).and_then(parse_time);
        let at = rec.get(ct).and_then(parse_time);
        let price = rec.get(cp).and_then(|v| v.parse::<f64>().ok());
        let volume = rec.get(cv).and_then(|v| v.parse::<f64>().ok());
        match (start, at, price, volume) {
            (Some(start), Some(at), Some(price), Some(volume))
                if start.minute() % 15 == 0
                    && start.second() == 0
                    && price.is_finite()
                    && volume.is_finite()
                    && volume >= 0.0 =>
            {
                by_interval.entry(start).or_default().push(Trade { at, price, volume });
            }
            _ => skipped += 1,
        }
    }

    let mut intervals = Vec::new();
    let mut empty = 0;
    for (start, trades) in by_interval {
        let volume: f64 = trades.iter().map(|t| t.volume).sum();
        if volume <= 0.0 {
            empty += 1;
            continue;
        }
        let i_avg = trades.iter().map(|t| t.price * t.volume).sum::<f64>() / volume;
        // latest trade wins; among equal times the later row
        let closing = trades.iter().fold(&trades[0], |a, t| if t.at >= a.at { t } else { a }).price;
        intervals.push(IntervalSummary { start, trades: trades.len(), volume, i_avg, closing });
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} malformed intraday rows");
    }
    let prices: Vec<f64> = intervals.iter().map(|i| i.i_avg).collect();
    let excess: Vec<f64> = intervals
        .iter()
        .filter(|i| i.volume > MIN_VOLUME_MW)
        .map(IntervalSummary::closing_excess)
        .filter(|&d| d > 0.0)
        .collect();
    Ok(IntradayReport {
        skipped_rows: skipped,
        empty_intervals: empty,
        i_avg_stats: series_stats(&prices),
        i_avg_histogram: Histogram::freedman_diaconis(&prices),
        excess_histogram: Histogram::freedman_diaconis(&excess),
        excess,
        intervals,
    })
}

/// Per-interval table as CSV.
pub fn intervals_csv(report: &IntradayReport) -> String {
    let mut out = String::from("interval_start,trades,volume,i_avg,closing,closing_excess\n");
    for i in &report.intervals {
        out.push_str(&format!(
            "{},{},{:?},{:?},{:?},{:?}\n",
            i.start.format("%Y-%m-%d %H:%M:%S"),
            i.trades,
            i.volume,
            i.i_avg,
            i.closing,
            i.closing_excess()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(text: &str) -> IntradayReport {
        ingest_intraday(text.as_bytes()).unwrap()
    }

    #[test]
    fn single_trade_interval() {
        let r = ingest("interval_start,trade_time,price,volume\n2017-01-01 00:00,2016-12-31 23:10,40,600\n");
        let i = &r.intervals[0];
        assert_eq!((i.i_avg, i.closing), (40.0, 40.0));
        assert_eq!(i.closing_excess(), -10.0);
        assert!(r.excess.is_empty());
    }

    #[test]
    fn volume_weighted_mean() {
        let r = ingest(
            "interval_start,trade_time,price,volume\n\
             2017-01-01T00:15:00Z,2017-01-01T00:01:00Z,10,1\n\
             2017-01-01T00:15:00Z,2017-01-01T00:02:00Z,20,3\n",
        );
        assert_eq!(r.intervals[0].i_avg, 17.5);
        assert_eq!(r.intervals[0].closing, 20.0);
    }

    #[test]
    fn closing_uses_trade_time_not_row_order() {
        let r = ingest(
            "interval_start,trade_time,price,volume\n\
             2017-01-01 00:30,2017-01-01 00:10,90,300\n\
             2017-01-01 00:30,2017-01-01 00:05,10,300\n",
        );
        assert_eq!(r.intervals[0].closing, 90.0);
        // 90 - 1.25·50 > 0 on 600 MW
        assert_eq!(r.excess, vec![27.5]);
    }

    #[test]
    fn malformed_and_empty() {
        let r = ingest(
            "interval_start,trade_time,price,volume\n\
             2017-01-01 00:07,2017-01-01 00:00,1,1\n\
             not a time,2017-01-01 00:00,1,1\n\
             2017-01-01 00:00,2017-01-01 00:00,abc,1\n\
             2017-01-01 00:00,2017-01-01 00:00,5,-1\n\
             2017-01-01 00:45,2017-01-01 00:00,5,0\n",
        );
        assert_eq!(r.skipped_rows, 4);
        assert_eq!(r.empty_intervals, 1);
        assert!(r.intervals.is_empty());
    }

    #[test]
    fn missing_column_is_an_error() {
        assert!(matches!(ingest_intraday("a,b\n1,2\n".as_bytes()), Err(IngestError::Column("interval_start"))));
    }
}
