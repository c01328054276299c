//! Rolling-median detrending of log prices.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{summary_stats, LogPriceSeries};

/// Rolling-median window length in business days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetrendConfig {
    filter_size: usize,
}

impl DetrendConfig {
    pub fn new(filter_size: usize) -> Result<Self> {
        if filter_size < 2 {
            return Err(Error::InvalidFilterSize(filter_size));
        }
        Ok(Self { filter_size })
    }

    pub fn filter_size(&self) -> usize {
        self.filter_size
    }
}

impl Default for DetrendConfig {
    fn default() -> Self {
        Self { filter_size: 252 }
    }
}

/// Log price minus its trailing rolling median, aligned to each window's last day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredSeries {
    pub index_id: String,
    pub filter_size: usize,
    pub dates: Vec<NaiveDate>,
    pub x: Vec<f64>,
}

impl FilteredSeries {
    /// Wraps an already detrended sequence (e.g. read back from CSV).
    pub fn from_values(index_id: impl Into<String>, dates: Vec<NaiveDate>, x: Vec<f64>) -> Result<Self> {
        if dates.len() != x.len() {
            return Err(Error::LengthMismatch(dates.len(), x.len()));
        }
        if x.is_empty() {
            return Err(Error::EmptySeries);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("filtered series"));
        }
        Ok(Self {
            index_id: index_id.into(),
            filter_size: 0,
            dates,
            x,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,x\n");
        for (d, v) in self.dates.iter().zip(&self.x) {
            out.push_str(&format!("{},{}\n", d.format("%Y-%m-%d"), v));
        }
        out
    }

    /// Reads the `date,x` format written by [`FilteredSeries::to_csv`].
    pub fn parse_csv(bytes: &[u8], index_id: &str) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::MalformedRow {
            line: 0,
            reason: e.to_string(),
        })?;
        let mut dates = Vec::new();
        let mut x = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') || (i == 0 && l.eq_ignore_ascii_case("date,x")) {
                continue;
            }
            let bad = |reason: String| Error::MalformedRow { line: i + 1, reason };
            let (d, v) = l.split_once(',').ok_or_else(|| bad("expected `date,x`".into()))?;
            dates.push(NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d").map_err(|e| bad(e.to_string()))?);
            x.push(v.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?);
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::DomainError("filtered series dates must be strictly increasing".into()));
        }
        Self::from_values(index_id, dates, x)
    }
}

/// Which dispersion calibrates the crossing level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdBasis {
    /// Sample std of the detrended series itself (the filtered column of the
    /// dataset summary).
    #[default]
    DetrendedLevel,
    /// Sample std of the one-day differences of the detrended series.
    DailyReturns,
}

fn median_of_sorted(w: &[f64]) -> f64 {
    let n = w.len();
    if n % 2 == 1 {
        w[n / 2]
    } else {
        0.5 * (w[n / 2 - 1] + w[n / 2])
    }
}

/// Trailing median over every full window of `f` values.
///
/// Keeps the window sorted and updates it by binary-search removal and
/// insertion, so each step costs a search plus a memmove of at most `f`.
pub fn rolling_median(v: &[f64], f: usize) -> Result<Vec<f64>> {
    if f < 2 {
        return Err(Error::InvalidFilterSize(f));
    }
    if v.len() < f {
        return Err(Error::WindowTooLarge { window: f, len: v.len() });
    }
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("rolling_median input"));
    }
    let mut window: Vec<f64> = v[..f].to_vec();
    window.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(v.len() - f + 1);
    out.push(median_of_sorted(&window));
    for j in f..v.len() {
        let old = v[j - f];
        let pos = window.partition_point(|w| w.total_cmp(&old).is_lt());
        window.remove(pos);
        let new = v[j];
        let ins = window.partition_point(|w| w.total_cmp(&new).is_lt());
        window.insert(ins, new);
        out.push(median_of_sorted(&window));
    }
    Ok(out)
}

/// Subtracts the trailing rolling median from the log prices. The first
/// `f - 1` observations are consumed by the first window.
pub fn detrend(lp: &LogPriceSeries, cfg: DetrendConfig) -> Result<FilteredSeries> {
    let f = cfg.filter_size();
    if lp.len() < f {
        return Err(Error::WindowTooLarge {
            window: f,
            len: lp.len(),
        });
    }
    let med = rolling_median(&lp.logp, f)?;
    let x = lp.logp[f - 1..].iter().zip(&med).map(|(l, m)| l - m).collect();
    Ok(FilteredSeries {
        index_id: lp.index_id.clone(),
        filter_size: f,
        dates: lp.dates[f - 1..].to_vec(),
        x,
    })
}

/// One-step differences `v[t] - v[t-1]`.
pub fn daily_returns(v: &[f64]) -> Result<Vec<f64>> {
    if v.len() < 2 {
        return Err(Error::EmptySeries);
    }
    Ok(v.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Crossing level calibrated as a sample standard deviation of the filtered series.
pub fn threshold_from_std(f: &FilteredSeries, basis: ThresholdBasis) -> Result<f64> {
    let std = match basis {
        ThresholdBasis::DetrendedLevel => {
            if f.len() < 2 {
                return Err(Error::EmptySeries);
            }
            summary_stats(&f.x)?.std
        }
        ThresholdBasis::DailyReturns => {
            let r = daily_returns(&f.x)?;
            if r.len() < 2 {
                return Err(Error::EmptySeries);
            }
            summary_stats(&r)?.std
        }
    };
    if std == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(std)
}
