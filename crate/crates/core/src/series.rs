//! Daily price ingestion, log prices, date windows and summary statistics.

use std::collections::HashSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dated daily closes of one index, strictly increasing in date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub index_id: String,
    dates: Vec<NaiveDate>,
    close: Vec<f64>,
}

impl PriceSeries {
    /// Builds a series from unsorted rows. Rows are sorted by date; duplicate
    /// dates and non-positive or non-finite closes are rejected.
    pub fn from_rows(index_id: impl Into<String>, mut rows: Vec<(NaiveDate, f64)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptySeries);
        }
        for &(date, price) in &rows {
            if !(price > 0.0) || !price.is_finite() {
                return Err(Error::NonPositivePrice { date, price });
            }
        }
        rows.sort_by_key(|r| r.0);
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateDate(w[0].0));
        }
        let (dates, close) = rows.into_iter().unzip();
        Ok(Self {
            index_id: index_id.into(),
            dates,
            close,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn close(&self) -> &[f64] {
        &self.close
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn first_date(&self) -> NaiveDate {
        self.dates[0]
    }

    pub fn last_date(&self) -> NaiveDate {
        self.dates[self.dates.len() - 1]
    }

    /// Serializes back to the `date,close` CSV format. Prices use the
    /// shortest decimal representation that parses back to the same bits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 24);
        out.push_str("date,close\n");
        for (d, c) in self.dates.iter().zip(&self.close) {
            out.push_str(&format!("{},{}\n", d.format("%Y-%m-%d"), c));
        }
        out
    }
}

/// Natural logarithm of a price series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPriceSeries {
    pub index_id: String,
    pub dates: Vec<NaiveDate>,
    pub logp: Vec<f64>,
}

impl LogPriceSeries {
    pub fn len(&self) -> usize {
        self.logp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logp.is_empty()
    }
}

/// Count, mean and sample standard deviation (n - 1 denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

/// Parses a `date,close` CSV. Dates are ISO-8601 (`YYYY-MM-DD`). Line numbers
/// in errors are 1-based and count the header.
pub fn parse_csv(bytes: &[u8], index_id: &str) -> Result<PriceSeries> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::MalformedRow {
        line: 0,
        reason: format!("invalid UTF-8: {e}"),
    })?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text.lines().enumerate();

    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((i, l)) => break (i + 1, l),
            None => return Err(Error::EmptySeries),
        }
    };
    let cols: Vec<String> = header.1.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
    if cols != ["date", "close"] {
        return Err(Error::MalformedRow {
            line: header.0,
            reason: format!("expected header `date,close`, found `{}`", header.1.trim()),
        });
    }

    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in lines {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        let mut fields = l.split(',');
        let (Some(d), Some(c), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::MalformedRow {
                line,
                reason: "expected exactly two fields".into(),
            });
        };
        let date = NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d").map_err(|e| Error::MalformedRow {
            line,
            reason: format!("bad date `{}`: {e}", d.trim()),
        })?;
        let price: f64 = c.trim().parse().map_err(|_| Error::MalformedRow {
            line,
            reason: format!("bad close `{}`", c.trim()),
        })?;
        if !seen.insert(date) {
            return Err(Error::DuplicateDate(date));
        }
        rows.push((date, price));
    }
    PriceSeries::from_rows(index_id, rows)
}

pub fn log_prices(p: &PriceSeries) -> LogPriceSeries {
    LogPriceSeries {
        index_id: p.index_id.clone(),
        dates: p.dates.clone(),
        logp: p.close.iter().map(|c| c.ln()).collect(),
    }
}

/// Rows with `start <= date <= end`, order preserved.
pub fn slice_window(p: &PriceSeries, start: NaiveDate, end: NaiveDate) -> Result<PriceSeries> {
    if start > end {
        return Err(Error::DomainError(format!("window start {start} after end {end}")));
    }
    let lo = p.dates.partition_point(|d| *d < start);
    let hi = p.dates.partition_point(|d| *d <= end);
    if lo >= hi {
        return Err(Error::EmptySeries);
    }
    Ok(PriceSeries {
        index_id: p.index_id.clone(),
        dates: p.dates[lo..hi].to_vec(),
        close: p.close[lo..hi].to_vec(),
    })
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with the n - 1 denominator, two-pass.
pub fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Count, mean and sample std. A single observation has std 0.
pub fn summary_stats(x: &[f64]) -> Result<SeriesStats> {
    if x.is_empty() {
        return Err(Error::EmptySeries);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("summary_stats input"));
    }
    let std = if x.len() < 2 { 0.0 } else { sample_variance(x).sqrt() };
    Ok(SeriesStats {
        count: x.len(),
        mean: mean(x),
        std,
    })
}

/// Pearson correlation of two equal-length series.
pub fn cross_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::TooFewSamples { need: 2, got: a.len() });
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Daily log returns of two series restricted to their common dates.
pub fn aligned_returns(a: &PriceSeries, b: &PriceSeries) -> (Vec<f64>, Vec<f64>) {
    let (mut i, mut j) = (0, 0);
    let mut common = Vec::new();
    while i < a.len() && j < b.len() {
        match a.dates[i].cmp(&b.dates[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common.push((a.close[i].ln(), b.close[j].ln()));
                i += 1;
                j += 1;
            }
        }
    }
    common.windows(2).map(|w| (w[1].0 - w[0].0, w[1].1 - w[0].1)).unzip()
}
