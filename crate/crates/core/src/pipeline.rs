//! End-to-end analysis: detrending, hitting times, model fits and the three
//! sensitivity scans (filter size, crossing level, rolling window).

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detrend::{detrend, threshold_from_std, DetrendConfig, FilteredSeries, ThresholdBasis};
use crate::diagnostics::{build_report, FitReport, Interval, ReportMeta};
use crate::error::{Error, Result};
use crate::inverse_stats::{hitting_times, log_sample, HitConfig, HittingSample, LogHittingSample};
use crate::models::{HierarchicalModel, ModelKind, ModelSpec, PriorSpec};
use crate::sampler::{run_chains, SamplerConfig, Trace};
use crate::series::{aligned_returns, cross_correlation, log_prices, slice_window, summary_stats, PriceSeries, SeriesStats};

/// How the crossing level is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "value")]
pub enum RhoMode {
    /// The sample std of the filtered series (see [`ThresholdBasis`]).
    #[default]
    SampleStd,
    Explicit(f64),
    /// A multiple of the sample std.
    Scaled(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub filter_size: usize,
    pub rho: RhoMode,
    pub basis: ThresholdBasis,
    pub models: Vec<ModelKind>,
    pub sampler: SamplerConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            filter_size: 252,
            rho: RhoMode::SampleStd,
            basis: ThresholdBasis::DetrendedLevel,
            models: vec![ModelKind::StudentT, ModelKind::InverseGamma],
            sampler: SamplerConfig::default(),
        }
    }
}

/// Detrended series, calibrated crossing level and the hitting times.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub filtered: FilteredSeries,
    pub std: f64,
    pub rho: f64,
    pub hits: HittingSample,
}

pub fn prepare(series: &PriceSeries, filter_size: usize, rho: RhoMode, basis: ThresholdBasis) -> Result<Prepared> {
    let filtered = detrend(&log_prices(series), DetrendConfig::new(filter_size)?)?;
    let std = threshold_from_std(&filtered, basis)?;
    let rho = match rho {
        RhoMode::SampleStd => std,
        RhoMode::Explicit(r) => r,
        RhoMode::Scaled(s) => s * std,
    };
    let hits = hitting_times(&filtered.x, HitConfig::new(rho)?)?;
    Ok(Prepared {
        filtered,
        std,
        rho,
        hits,
    })
}

/// A fitted model with its trace and report.
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub report: FitReport,
    pub trace: Trace,
}

/// Keeps only positive observations (the Inverse Gamma support); returns the
/// filtered sample and the number of dropped values.
pub fn positive_part(x: &LogHittingSample) -> (LogHittingSample, usize) {
    let keep = |v: &[f64]| v.iter().copied().filter(|x| *x > 0.0).collect::<Vec<_>>();
    let out = LogHittingSample {
        x_plus: keep(&x.x_plus),
        x_minus: keep(&x.x_minus),
    };
    let dropped = x.x_plus.len() + x.x_minus.len() - out.x_plus.len() - out.x_minus.len();
    (out, dropped)
}

/// Identification carried into reports.
#[derive(Debug, Clone, PartialEq)]
pub struct FitLabel {
    pub index: String,
    pub rho: f64,
    pub filter_size: usize,
}

/// Fits one model to `ln tau` samples with data-driven priors. For the
/// Inverse Gamma model, `ln tau = 0` (a one-day hit) lies outside the support
/// and is dropped; the report records how many.
pub fn fit_log_sample(x: &LogHittingSample, kind: ModelKind, sampler: &SamplerConfig, label: &FitLabel) -> Result<ModelFit> {
    let (data, dropped) = match kind {
        ModelKind::StudentT => (x.clone(), 0),
        ModelKind::InverseGamma => positive_part(x),
    };
    let prior = PriorSpec::from_data(&data)?;
    let model = HierarchicalModel::new(&data, ModelSpec { kind, prior })?;
    let trace = run_chains(&model, sampler)?;
    let report = build_report(
        &trace,
        ReportMeta {
            index: label.index.clone(),
            model: kind,
            rho: label.rho,
            filter_size: label.filter_size,
            n_plus: data.x_plus.len(),
            n_minus: data.x_minus.len(),
            n_dropped: dropped,
        },
    )?;
    Ok(ModelFit { report, trace })
}

/// All requested model fits for one series; hitting times are extracted once
/// and shared by every model.
#[derive(Debug)]
pub struct IndexFit {
    pub prepared: Prepared,
    pub fits: Vec<(ModelKind, Result<ModelFit>)>,
}

pub fn fit_series(series: &PriceSeries, cfg: &AnalysisConfig) -> Result<IndexFit> {
    let prepared = prepare(series, cfg.filter_size, cfg.rho, cfg.basis)?;
    let x = log_sample(&prepared.hits)?;
    let label = FitLabel {
        index: series.index_id.clone(),
        rho: prepared.rho,
        filter_size: cfg.filter_size,
    };
    let fits = cfg
        .models
        .iter()
        .map(|&k| (k, fit_log_sample(&x, k, &cfg.sampler, &label)))
        .collect();
    Ok(IndexFit { prepared, fits })
}

/// Summary row of a scan grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanStats {
    pub rho: f64,
    pub n_plus: usize,
    pub n_minus: usize,
    pub d_mean: f64,
    pub d_std: f64,
    pub hdi94: Interval,
    pub ess: Option<f64>,
    pub rhat: Option<f64>,
    pub waic: Option<f64>,
    pub waic_se: Option<f64>,
}

impl From<&FitReport> for ScanStats {
    fn from(r: &FitReport) -> Self {
        Self {
            rho: r.meta.rho,
            n_plus: r.meta.n_plus,
            n_minus: r.meta.n_minus,
            d_mean: r.d_mean,
            d_std: r.d_std,
            hdi94: r.hdi94,
            ess: r.d_ess,
            rhat: r.max_rhat,
            waic: r.waic.map(|w| w.waic),
            waic_se: r.waic.map(|w| w.se),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum GridPoint {
    FilterSize(usize),
    RhoScale(f64),
    WindowEnd(i32),
}

impl GridPoint {
    pub fn label(&self) -> String {
        match self {
            GridPoint::FilterSize(f) => f.to_string(),
            GridPoint::RhoScale(s) => s.to_string(),
            GridPoint::WindowEnd(y) => y.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub index: String,
    pub grid: GridPoint,
    pub model: ModelKind,
    pub result: std::result::Result<ScanStats, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanOutcome {
    pub rows: Vec<ScanRow>,
    /// Grid points skipped before fitting, with the reason.
    pub notices: Vec<String>,
}

impl ScanOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.result.is_err()).count()
    }

    /// Long-format CSV: one row per grid point and model.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("index,grid,model,rho,n_plus,n_minus,d_mean,d_std,hdi_low,hdi_high,ess,rhat,waic,waic_se,error\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for r in &self.rows {
            let lead = format!("{},{},{}", r.index, r.grid.label(), r.model);
            match &r.result {
                Ok(s) => out.push_str(&format!(
                    "{lead},{},{},{},{},{},{},{},{},{},{},{},\n",
                    s.rho,
                    s.n_plus,
                    s.n_minus,
                    s.d_mean,
                    s.d_std,
                    s.hdi94.low,
                    s.hdi94.high,
                    opt(s.ess),
                    opt(s.rhat),
                    opt(s.waic),
                    opt(s.waic_se)
                )),
                Err(e) => out.push_str(&format!("{lead},,,,,,,,,,,,\"{}\"\n", e.replace('"', "'"))),
            }
        }
        out
    }

    /// Wide table for one model: rows are indices, columns grid points, cells
    /// the posterior mean of `d` (empty where the fit failed).
    pub fn pivot(&self, model: ModelKind) -> String {
        let mut grid: Vec<GridPoint> = Vec::new();
        let mut indices: Vec<String> = Vec::new();
        for r in self.rows.iter().filter(|r| r.model == model) {
            if !grid.contains(&r.grid) {
                grid.push(r.grid);
            }
            if !indices.contains(&r.index) {
                indices.push(r.index.clone());
            }
        }
        let mut out = String::from("index");
        for g in &grid {
            out.push(',');
            out.push_str(&g.label());
        }
        out.push('\n');
        for idx in &indices {
            out.push_str(idx);
            for g in &grid {
                out.push(',');
                let cell = self.rows.iter().find(|r| r.model == model && &r.index == idx && r.grid == *g);
                if let Some(ScanRow { result: Ok(s), .. }) = cell {
                    out.push_str(&format!("{:.3}", s.d_mean));
                }
            }
            out.push('\n');
        }
        out
    }
}

fn fit_point(series: &PriceSeries, filter_size: usize, rho: RhoMode, cfg: &AnalysisConfig, grid: GridPoint) -> Vec<ScanRow> {
    let row = |model, result| ScanRow {
        index: series.index_id.clone(),
        grid,
        model,
        result,
    };
    let prepared = prepare(series, filter_size, rho, cfg.basis).and_then(|p| {
        let x = log_sample(&p.hits)?;
        Ok((p, x))
    });
    match prepared {
        Err(e) => cfg.models.iter().map(|&m| row(m, Err(e.to_string()))).collect(),
        Ok((p, x)) => {
            let label = FitLabel {
                index: series.index_id.clone(),
                rho: p.rho,
                filter_size,
            };
            cfg.models
                .iter()
                .map(|&m| {
                    let r = fit_log_sample(&x, m, &cfg.sampler, &label).map(|f| ScanStats::from(&f.report));
                    row(m, r.map_err(|e| e.to_string()))
                })
                .collect()
        }
    }
}

/// Refits at each filter size with the crossing level `rho` held fixed.
pub fn scan_filter(series: &[PriceSeries], filters: &[usize], rho: &[RhoMode], cfg: &AnalysisConfig) -> Result<ScanOutcome> {
    if filters.is_empty() {
        return Err(Error::InvalidConfig("filter-size list is empty".into()));
    }
    if rho.len() != series.len() {
        return Err(Error::LengthMismatch(rho.len(), series.len()));
    }
    let jobs: Vec<(usize, usize)> = (0..series.len()).flat_map(|i| filters.iter().map(move |&f| (i, f))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, f)| fit_point(&series[i], f, rho[i], cfg, GridPoint::FilterSize(f)))
        .collect::<Vec<_>>()
        .concat();
    Ok(ScanOutcome {
        rows,
        notices: Vec::new(),
    })
}

/// Refits at `rho = scale * std` for each scale with the filter size fixed.
pub fn scan_rho(series: &[PriceSeries], scales: &[f64], cfg: &AnalysisConfig) -> Result<ScanOutcome> {
    if scales.is_empty() {
        return Err(Error::InvalidConfig("rho-scale list is empty".into()));
    }
    if let Some(s) = scales.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(Error::NonPositiveRho(*s));
    }
    let jobs: Vec<(usize, f64)> = (0..series.len()).flat_map(|i| scales.iter().map(move |&s| (i, s))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, s)| fit_point(&series[i], cfg.filter_size, RhoMode::Scaled(s), cfg, GridPoint::RhoScale(s)))
        .collect::<Vec<_>>()
        .concat();
    Ok(ScanOutcome {
        rows,
        notices: Vec::new(),
    })
}

/// A calendar window `[start, end]` (inclusive) labeled by its end year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub end_year: i32,
}

/// Rolling windows of `length` years advanced by `step` years, starting on
/// January 1 of the first data year. Window `k` spans January 1 of
/// `Y0 + k step` through January 1 of `Y0 + k step + length`, is labeled by
/// that end year, and is kept only if its end does not pass the last date.
pub fn rolling_windows(first: NaiveDate, last: NaiveDate, length: u32, step: u32) -> Result<Vec<Window>> {
    if length == 0 || step == 0 {
        return Err(Error::InvalidConfig("window length and step must be positive".into()));
    }
    let jan1 = |y: i32| NaiveDate::from_ymd_opt(y, 1, 1).expect("January 1 exists");
    let y0 = first.year();
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let start_year = y0 + (k * step) as i32;
        let end_year = start_year + length as i32;
        let end = jan1(end_year);
        if end > last {
            break;
        }
        out.push(Window {
            start: jan1(start_year),
            end,
            end_year,
        });
        k += 1;
    }
    Ok(out)
}

/// Refits on each rolling window with fixed filter size and crossing level.
/// Windows that do not fit in the data, or hold too few observations for the
/// filter, are skipped with a notice.
pub fn scan_window(series: &[PriceSeries], length: u32, step: u32, cfg: &AnalysisConfig) -> Result<ScanOutcome> {
    let mut notices = Vec::new();
    let mut jobs: Vec<(usize, Window, PriceSeries)> = Vec::new();
    for (i, s) in series.iter().enumerate() {
        let windows = rolling_windows(s.first_date(), s.last_date(), length, step)?;
        if windows.is_empty() {
            notices.push(format!(
                "{}: a {length}-year window does not fit in {} .. {}; skipped",
                s.index_id,
                s.first_date(),
                s.last_date()
            ));
        }
        for w in windows {
            match slice_window(s, w.start, w.end) {
                Ok(part) if part.len() > cfg.filter_size + 1 => jobs.push((i, w, part)),
                Ok(part) => notices.push(format!(
                    "{}: window ending {} has {} observations, too few for filter size {}; skipped",
                    s.index_id,
                    w.end_year,
                    part.len(),
                    cfg.filter_size
                )),
                Err(e) => notices.push(format!("{}: window ending {}: {e}; skipped", s.index_id, w.end_year)),
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|(_, w, part)| fit_point(part, cfg.filter_size, cfg.rho, cfg, GridPoint::WindowEnd(w.end_year)))
        .collect::<Vec<_>>()
        .concat();
    Ok(ScanOutcome { rows, notices })
}

/// Dataset summary: log-price moments before and after detrending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub index: String,
    pub raw: SeriesStats,
    pub filtered: SeriesStats,
}

impl DatasetRow {
    pub fn csv_header() -> &'static str {
        "index,raw_count,raw_mean,raw_std,filtered_count,filtered_mean,filtered_std"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.index, self.raw.count, self.raw.mean, self.raw.std, self.filtered.count, self.filtered.mean, self.filtered.std
        )
    }
}

pub fn dataset_row(series: &PriceSeries, filter_size: usize) -> Result<DatasetRow> {
    let lp = log_prices(series);
    let filtered = detrend(&lp, DetrendConfig::new(filter_size)?)?;
    Ok(DatasetRow {
        index: series.index_id.clone(),
        raw: summary_stats(&lp.logp)?,
        filtered: summary_stats(&filtered.x)?,
    })
}

/// Pairwise correlations of daily log returns on common dates, as CSV.
pub fn correlation_matrix(series: &[PriceSeries]) -> Result<String> {
    let mut out = String::from("index");
    for s in series {
        out.push(',');
        out.push_str(&s.index_id);
    }
    out.push('\n');
    for a in series {
        out.push_str(&a.index_id);
        for b in series {
            let (ra, rb) = aligned_returns(a, b);
            out.push(',');
            out.push_str(&cross_correlation(&ra, &rb)?.to_string());
        }
        out.push('\n');
    }
    Ok(out)
}

/// Monday-to-Friday dates starting at (or after) `start`.
pub fn business_dates(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// A price series with closes `exp(logp)` on consecutive business days.
pub fn series_from_log_prices(index_id: &str, start: NaiveDate, logp: &[f64]) -> Result<PriceSeries> {
    let rows = business_dates(start, logp.len())
        .into_iter()
        .zip(logp.iter().map(|l| l.exp()))
        .collect();
    PriceSeries::from_rows(index_id, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbm::simulate_log_path;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn quick() -> SamplerConfig {
        SamplerConfig {
            n_chains: 2,
            n_draw: 300,
            n_tune: 300,
            seed: 1,
            record_pointwise: true,
            ..SamplerConfig::default()
        }
    }

    fn synthetic(n: usize, seed: u64) -> PriceSeries {
        series_from_log_prices("SYN", d("2008-01-02"), &simulate_log_path(0.0, 0.01, 7.0, n, seed)).unwrap()
    }

    #[test]
    fn windows_for_thirteen_years() {
        let w = rolling_windows(d("2008-01-02"), d("2020-12-31"), 5, 1).unwrap();
        let years: Vec<i32> = w.iter().map(|w| w.end_year).collect();
        assert_eq!(years, (2013..=2020).collect::<Vec<_>>());
        assert_eq!(w[0].start, d("2008-01-01"));
        assert!(rolling_windows(d("2008-01-02"), d("2010-06-30"), 5, 1).unwrap().is_empty());
        assert_eq!(rolling_windows(d("2008-01-02"), d("2020-12-31"), 5, 2).unwrap().len(), 4);
    }

    #[test]
    fn business_days_skip_weekends() {
        let b = business_dates(d("2024-01-05"), 3);
        assert_eq!(b, vec![d("2024-01-05"), d("2024-01-08"), d("2024-01-09")]);
    }

    #[test]
    fn positive_part_drops_zero() {
        let x = LogHittingSample {
            x_plus: vec![0.0, 1.0, 2.0],
            x_minus: vec![0.0, 0.0, 0.5],
        };
        let (p, n) = positive_part(&x);
        assert_eq!(n, 3);
        assert_eq!(p.x_plus, vec![1.0, 2.0]);
        assert_eq!(p.x_minus, vec![0.5]);
    }

    #[test]
    fn prepare_uses_requested_rho() {
        let s = synthetic(600, 4);
        let a = prepare(&s, 100, RhoMode::SampleStd, ThresholdBasis::DetrendedLevel).unwrap();
        let b = prepare(&s, 100, RhoMode::Scaled(0.5), ThresholdBasis::DetrendedLevel).unwrap();
        let c = prepare(&s, 100, RhoMode::Explicit(0.01), ThresholdBasis::DetrendedLevel).unwrap();
        assert_eq!(a.filtered.len(), 501);
        assert_eq!(a.rho, a.std);
        assert!((b.rho - 0.5 * a.std).abs() < 1e-15);
        assert_eq!(c.rho, 0.01);
        // Smaller levels are reached from more anchors.
        assert!(b.hits.n_plus() >= a.hits.n_plus() && b.hits.n_minus() >= a.hits.n_minus());
    }

    #[test]
    fn both_models_share_hits() {
        let s = synthetic(700, 5);
        let cfg = AnalysisConfig {
            filter_size: 100,
            sampler: quick(),
            ..AnalysisConfig::default()
        };
        let fit = fit_series(&s, &cfg).unwrap();
        assert_eq!(fit.fits.len(), 2);
        let st = fit.fits[0].1.as_ref().unwrap();
        let ig = fit.fits[1].1.as_ref().unwrap();
        assert_eq!(st.report.meta.n_plus, fit.prepared.hits.n_plus());
        let ones = fit
            .prepared
            .hits
            .tau_plus
            .iter()
            .chain(&fit.prepared.hits.tau_minus)
            .filter(|t| **t == 1)
            .count();
        assert_eq!(ig.report.meta.n_dropped, ones);
        assert_eq!(
            ig.report.meta.n_plus + ig.report.meta.n_minus + ones,
            fit.prepared.hits.n_plus() + fit.prepared.hits.n_minus()
        );
    }

    #[test]
    fn rho_scan_isolates_failures() {
        let s = synthetic(500, 6);
        let cfg = AnalysisConfig {
            filter_size: 100,
            sampler: quick(),
            models: vec![ModelKind::StudentT],
            ..AnalysisConfig::default()
        };
        let out = scan_rho(&[s], &[0.5, 1.0, 500.0], &cfg).unwrap();
        assert_eq!(out.rows.len(), 3);
        assert_eq!(out.failures(), 1);
        let err = out.rows[2].result.as_ref().unwrap_err();
        assert!(err.contains("no uncensored hitting times"), "{err}");
        let n = |i: usize| out.rows[i].result.as_ref().unwrap().n_plus;
        assert!(n(1) < n(0));
        assert!(scan_rho(&[synthetic(300, 1)], &[0.0], &cfg).is_err());
        assert_eq!(out.pivot(ModelKind::StudentT).lines().count(), 2);
    }

    #[test]
    fn filter_scan_is_deterministic() {
        let s = synthetic(600, 7);
        let cfg = AnalysisConfig {
            filter_size: 100,
            sampler: quick(),
            models: vec![ModelKind::StudentT, ModelKind::InverseGamma],
            ..AnalysisConfig::default()
        };
        let a = scan_filter(std::slice::from_ref(&s), &[100, 120, 100], &[RhoMode::Explicit(0.02)], &cfg).unwrap();
        assert_eq!(a.rows.len(), 6);
        assert_eq!(a.rows[0], a.rows[4]);
        assert_eq!(a.rows[1], a.rows[5]);
        let b = scan_filter(&[s], &[100, 120, 100], &[RhoMode::Explicit(0.02)], &cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn window_scan_skips_with_notice() {
        let s = synthetic(400, 8);
        let cfg = AnalysisConfig {
            filter_size: 100,
            sampler: quick(),
            ..AnalysisConfig::default()
        };
        let out = scan_window(&[s], 5, 1, &cfg).unwrap();
        assert!(out.rows.is_empty());
        assert_eq!(out.notices.len(), 1);
    }

    #[test]
    fn dataset_row_counts() {
        let s = synthetic(3340, 9);
        let r = dataset_row(&s, 252).unwrap();
        assert_eq!((r.raw.count, r.filtered.count), (3340, 3089));
        assert!(r.csv_row().starts_with("SYN,3340,"));
        let m = correlation_matrix(&[s.clone(), s]).unwrap();
        assert!(m.lines().nth(1).unwrap().starts_with("SYN,1,1") || m.contains(",1\n"));
    }
}
