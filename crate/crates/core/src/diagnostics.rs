//! Posterior summaries and chain-quality diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::sampler::Trace;

/// Cohen's d with the pooled std weighted by `N - 1` on each side.
pub fn effect_size(mu_plus: f64, sigma_plus: f64, mu_minus: f64, sigma_minus: f64, n_plus: usize, n_minus: usize) -> Result<f64> {
    if n_plus + n_minus <= 2 {
        return Err(Error::DegenerateSampleSizes(n_plus, n_minus));
    }
    let (np, nm) = (n_plus as f64, n_minus as f64);
    let pooled = ((sigma_plus * sigma_plus * (np - 1.0) + sigma_minus * sigma_minus * (nm - 1.0)) / (np + nm - 2.0)).sqrt();
    Ok((mu_plus - mu_minus) / pooled)
}

/// Per-draw effect sizes, one series per chain.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectSizeDraws {
    pub chains: Vec<Vec<f64>>,
    pub n_plus: usize,
    pub n_minus: usize,
}

impl EffectSizeDraws {
    pub fn flat(&self) -> Vec<f64> {
        self.chains.concat()
    }

    pub fn len(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Indices of `(location+, scale+, location-, scale-)` in a draw.
fn location_scale_index(kind: ModelKind) -> [usize; 4] {
    match kind {
        ModelKind::StudentT => [0, 1, 3, 4],
        ModelKind::InverseGamma => [0, 1, 2, 3],
    }
}

pub fn effect_size_draws(trace: &Trace, n_plus: usize, n_minus: usize, kind: ModelKind) -> Result<EffectSizeDraws> {
    if n_plus + n_minus <= 2 {
        return Err(Error::DegenerateSampleSizes(n_plus, n_minus));
    }
    if trace.chains.iter().all(|c| c.n_draw == 0) {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    if trace.param_names.len() != kind.dim() {
        return Err(Error::LengthMismatch(trace.param_names.len(), kind.dim()));
    }
    let [a, b, c, d] = location_scale_index(kind);
    let mut chains = Vec::with_capacity(trace.chains.len());
    for ch in &trace.chains {
        let mut out = Vec::with_capacity(ch.n_draw);
        for i in 0..ch.n_draw {
            let p = ch.draw(i);
            let v = effect_size(p[a], p[b], p[c], p[d], n_plus, n_minus)?;
            if !v.is_finite() {
                return Err(Error::NonFinite("effect size"));
            }
            out.push(v);
        }
        chains.push(out);
    }
    Ok(EffectSizeDraws { chains, n_plus, n_minus })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

pub const MIN_HDI_SAMPLES: usize = 50;

/// Highest density interval: the narrowest window of `ceil(mass * n)`
/// consecutive order statistics.
pub fn hdi(samples: &[f64], mass: f64) -> Result<Interval> {
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::DomainError(format!("HDI mass must lie in (0, 1), got {mass}")));
    }
    if samples.len() < MIN_HDI_SAMPLES {
        return Err(Error::TooFewSamples {
            need: MIN_HDI_SAMPLES,
            got: samples.len(),
        });
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("HDI input"));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let k = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let mut best = 0;
    let mut width = f64::INFINITY;
    for i in 0..=n - k {
        let w = s[i + k - 1] - s[i];
        if w < width {
            width = w;
            best = i;
        }
    }
    Ok(Interval {
        low: s[best],
        high: s[best + k - 1],
    })
}

/// Fraction of samples strictly below `reference`.
pub fn prob_below(samples: &[f64], reference: f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    samples.iter().filter(|v| **v < reference).count() as f64 / samples.len() as f64
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64], m: f64) -> f64 {
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// Chains truncated to a common length, with their means and sample variances.
struct ChainMoments<'a> {
    chains: Vec<&'a [f64]>,
    means: Vec<f64>,
    vars: Vec<f64>,
    n: usize,
}

fn chain_moments<'a>(chains: &'a [Vec<f64>], min_chains: usize, what: &str) -> Result<ChainMoments<'a>> {
    if chains.len() < min_chains {
        return Err(Error::DegenerateChains(format!(
            "{what} needs at least {min_chains} chains, got {}",
            chains.len()
        )));
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 2 {
        return Err(Error::DegenerateChains(format!("{what} needs at least 2 draws per chain")));
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    if chains.iter().flat_map(|c| c.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("chain draws"));
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = chains.iter().zip(&means).map(|(c, m)| var(c, *m)).collect();
    if let Some(j) = vars.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::DegenerateChains(format!("chain {j} has zero variance")));
    }
    Ok(ChainMoments { chains, means, vars, n })
}

/// Potential scale reduction `sqrt(V / W)` with
/// `V = (n - 1) W / n + (m + 1) B / (m n)`.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    let cm = chain_moments(chains, 2, "Gelman-Rubin")?;
    let (m, n) = (cm.chains.len() as f64, cm.n as f64);
    let w = mean(&cm.vars);
    let b = n * var(&cm.means, mean(&cm.means));
    let v_hat = (n - 1.0) * w / n + (m + 1.0) * b / (m * n);
    Ok((v_hat / w).sqrt())
}

/// Lag-`t` autocovariance with divisor `n`.
fn autocov(x: &[f64], m: f64, t: usize) -> f64 {
    let n = x.len();
    x[..n - t].iter().zip(&x[t..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64
}

/// Multi-chain effective sample size with Geyer's initial positive sequence.
///
/// Autocorrelations combine within- and between-chain variance,
/// `rho_t = 1 - (W - mean_j acov_j(t)) / var_plus`, and are summed in
/// adjacent pairs until a pair turns non-positive. The result is capped at the
/// total number of draws.
pub fn ess(chains: &[Vec<f64>]) -> Result<f64> {
    let cm = chain_moments(chains, 1, "ESS")?;
    let (m, n) = (cm.chains.len(), cm.n);
    let nf = n as f64;
    let w = mean(&cm.vars);
    let b_over_n = if m > 1 { var(&cm.means, mean(&cm.means)) } else { 0.0 };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    let rho = |t: usize| -> f64 {
        let mean_acov = cm.chains.iter().zip(&cm.means).map(|(c, mu)| autocov(c, *mu, t)).sum::<f64>() / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };
    let mut sum_pairs = 0.0;
    let mut t = 0;
    while t + 1 < n {
        let even = if t == 0 { 1.0 } else { rho(t) };
        let pair = even + rho(t + 1);
        if !(pair > 0.0) {
            break;
        }
        sum_pairs += pair;
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = -1.0 + 2.0 * sum_pairs;
    if !(tau > 0.0) {
        return Ok(total);
    }
    Ok((total / tau).min(total))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waic {
    pub waic: f64,
    pub se: f64,
    pub lppd: f64,
    pub p_waic: f64,
    /// Number of observations (sum of weights).
    pub n_obs: f64,
}

/// WAIC from a `[draw][observation]` log-likelihood matrix.
pub fn waic<R: AsRef<[f64]>>(loglik: &[R]) -> Result<Waic> {
    let n_obs = loglik.first().map_or(0, |r| r.as_ref().len());
    waic_weighted(loglik, &vec![1.0; n_obs])
}

/// WAIC where column `i` stands for `weights[i]` identical observations.
/// Totals and the standard error are those of the expanded matrix.
pub fn waic_weighted<R: AsRef<[f64]>>(loglik: &[R], weights: &[f64]) -> Result<Waic> {
    let s = loglik.len();
    if s < 2 {
        return Err(Error::TooFewSamples { need: 2, got: s });
    }
    let k = weights.len();
    if k == 0 {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let mut max = vec![f64::NEG_INFINITY; k];
    for row in loglik {
        let row = row.as_ref();
        if row.len() != k {
            return Err(Error::LengthMismatch(row.len(), k));
        }
        for (m, v) in max.iter_mut().zip(row) {
            if !v.is_finite() {
                return Err(Error::NonFinite("pointwise log likelihood"));
            }
            *m = m.max(*v);
        }
    }
    let mut sum_exp = vec![0.0; k];
    let mut mean_ll = vec![0.0; k];
    let mut m2 = vec![0.0; k];
    for (r, row) in loglik.iter().enumerate() {
        let cnt = (r + 1) as f64;
        for i in 0..k {
            let v = row.as_ref()[i];
            sum_exp[i] += (v - max[i]).exp();
            let d = v - mean_ll[i];
            mean_ll[i] += d / cnt;
            m2[i] += d * (v - mean_ll[i]);
        }
    }
    let sf = s as f64;
    let mut contrib = Vec::with_capacity(k);
    let (mut lppd, mut p_waic) = (0.0, 0.0);
    for i in 0..k {
        let lppd_i = max[i] + (sum_exp[i] / sf).ln();
        let p_i = m2[i] / (sf - 1.0);
        lppd += weights[i] * lppd_i;
        p_waic += weights[i] * p_i;
        contrib.push(-2.0 * (lppd_i - p_i));
    }
    let n_obs: f64 = weights.iter().sum();
    let waic = -2.0 * (lppd - p_waic);
    let se = if n_obs > 1.0 {
        let c_mean = waic / n_obs;
        let ss: f64 = contrib
            .iter()
            .zip(weights)
            .map(|(c, w)| w * (c - c_mean) * (c - c_mean))
            .sum();
        (n_obs * ss / (n_obs - 1.0)).sqrt()
    } else {
        0.0
    };
    if !waic.is_finite() {
        return Err(Error::NonFinite("WAIC"));
    }
    Ok(Waic {
        waic,
        se,
        lppd,
        p_waic,
        n_obs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

/// Equal-width histogram used for plotting posterior densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub low: f64,
    pub width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(samples: &[f64], bins: usize) -> Self {
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let bins = bins.max(1);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![0u64; bins];
        for v in samples {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self { low: lo, width, counts }
    }
}

/// Identification of a fit in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub index: String,
    pub model: ModelKind,
    pub rho: f64,
    pub filter_size: usize,
    pub n_plus: usize,
    pub n_minus: usize,
    /// Observations left out of the fit (non-positive `ln tau` for the Inverse Gamma model).
    pub n_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(flatten)]
    pub meta: ReportMeta,
    pub d_mean: f64,
    pub d_std: f64,
    pub hdi94: Interval,
    pub prob_below_ref: f64,
    /// Undefined (absent) for a single chain.
    pub d_rhat: Option<f64>,
    pub d_ess: Option<f64>,
    pub waic: Option<Waic>,
    pub params: Vec<ParamSummary>,
    pub max_rhat: Option<f64>,
    pub n_chains: usize,
    pub n_draw: usize,
    pub divergences: usize,
    pub seed: u64,
    pub d_histogram: Histogram,
}

pub const HDI_MASS: f64 = 0.94;
const HIST_BINS: usize = 60;

impl FitReport {
    pub fn csv_header() -> &'static str {
        "index,rho,d_mean,d_std,ess,waic,waic_se"
    }

    pub fn csv_row(&self) -> String {
        let (w, se) = self
            .waic
            .map_or((String::new(), String::new()), |w| (w.waic.to_string(), w.se.to_string()));
        let ess = self.d_ess.map_or(String::new(), |e| e.to_string());
        format!(
            "{},{},{},{},{},{},{}",
            self.meta.index, self.meta.rho, self.d_mean, self.d_std, ess, w, se
        )
    }

    pub fn prob_above_ref(&self) -> f64 {
        1.0 - self.prob_below_ref
    }

    pub fn converged(&self, threshold: f64) -> bool {
        [self.max_rhat, self.d_rhat].iter().all(|r| r.is_none_or(|r| r < threshold))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::MalformedReport(e.to_string()))
    }
}

fn moments(x: &[f64]) -> (f64, f64) {
    let m = mean(x);
    (m, if x.len() > 1 { var(x, m).sqrt() } else { 0.0 })
}

/// R-hat, absent for a single chain. A degenerate (constant) chain yields
/// infinity so it can never pass as converged.
fn rhat_opt(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.len() < 2 {
        return None;
    }
    Some(gelman_rubin(chains).unwrap_or(f64::INFINITY))
}

/// Assembles effect-size summaries, per-parameter diagnostics and WAIC.
pub fn build_report(trace: &Trace, meta: ReportMeta) -> Result<FitReport> {
    let d = effect_size_draws(trace, meta.n_plus, meta.n_minus, meta.model)?;
    let flat = d.flat();
    let (d_mean, d_std) = moments(&flat);
    let hdi94 = hdi(&flat, HDI_MASS)?;
    let params: Vec<ParamSummary> = trace
        .param_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let chains = trace.param_chains(j);
            let (mean, sd) = moments(&chains.concat());
            ParamSummary {
                name: name.clone(),
                mean,
                sd,
                rhat: rhat_opt(&chains),
                ess: ess(&chains).ok(),
            }
        })
        .collect();
    let max_rhat = params.iter().filter_map(|p| p.rhat).reduce(f64::max);
    let waic = match trace.pointwise_matrix() {
        Some(rows) => Some(waic_weighted(&rows, &trace.pointwise_weights)?),
        None => None,
    };
    Ok(FitReport {
        d_mean,
        d_std,
        hdi94,
        prob_below_ref: prob_below(&flat, 0.0),
        d_rhat: rhat_opt(&d.chains),
        d_ess: ess(&d.chains).ok(),
        waic,
        params,
        max_rhat,
        n_chains: trace.chains.len(),
        n_draw: trace.config.n_draw,
        divergences: trace.n_divergent(),
        seed: trace.config.seed,
        d_histogram: Histogram::new(&flat, HIST_BINS),
        meta,
    })
}
