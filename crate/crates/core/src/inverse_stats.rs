//! First-hitting times of a detrended series at a symmetric crossing level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Crossing level, strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitConfig {
    rho: f64,
}

impl HitConfig {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::NonPositiveRho(rho));
        }
        Ok(Self { rho })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// Realized waiting times (business days) until the series first moved up
/// (`tau_plus`) or down (`tau_minus`) by at least `rho`, one entry per anchor
/// day where the level was reached. Anchors that never reach a level are only
/// counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingSample {
    pub rho: f64,
    pub tau_plus: Vec<u32>,
    pub tau_minus: Vec<u32>,
    pub censored_plus: usize,
    pub censored_minus: usize,
}

impl HittingSample {
    pub fn n_plus(&self) -> usize {
        self.tau_plus.len()
    }

    pub fn n_minus(&self) -> usize {
        self.tau_minus.len()
    }

    pub fn anchors(&self) -> usize {
        self.n_plus() + self.censored_plus
    }

    /// Two-column `side,tau` CSV preceded by a `#` comment with the censoring summary.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# rho={} n_plus={} n_minus={} censored_plus={} censored_minus={}\nside,tau\n",
            self.rho,
            self.n_plus(),
            self.n_minus(),
            self.censored_plus,
            self.censored_minus
        );
        for t in &self.tau_plus {
            out.push_str(&format!("plus,{t}\n"));
        }
        for t in &self.tau_minus {
            out.push_str(&format!("minus,{t}\n"));
        }
        out
    }
}

/// `x = ln(tau)` for both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHittingSample {
    pub x_plus: Vec<f64>,
    pub x_minus: Vec<f64>,
}

/// Hitting times of one anchor day; `None` marks a censored side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnchorHit {
    pub plus: Option<u32>,
    pub minus: Option<u32>,
}

/// For every anchor `t` with at least one later observation, the smallest
/// `d >= 1` with `x[t+d] - x[t] >= rho` (plus side) or `<= -rho` (minus side).
/// Results are in ascending anchor order.
pub fn anchor_hits(x: &[f64], cfg: HitConfig) -> Result<Vec<AnchorHit>> {
    if x.len() < 2 {
        return Err(Error::EmptySeries);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("hitting_times input"));
    }
    let rho = cfg.rho();
    Ok((0..x.len() - 1)
        .map(|t| {
            let mut hit = AnchorHit { plus: None, minus: None };
            for (d, v) in x[t + 1..].iter().enumerate() {
                let step = v - x[t];
                if hit.plus.is_none() && step >= rho {
                    hit.plus = Some(d as u32 + 1);
                }
                if hit.minus.is_none() && step <= -rho {
                    hit.minus = Some(d as u32 + 1);
                }
                if hit.plus.is_some() && hit.minus.is_some() {
                    break;
                }
            }
            hit
        })
        .collect())
}

/// Collects [`anchor_hits`] into the two realized samples and censoring counts.
pub fn hitting_times(x: &[f64], cfg: HitConfig) -> Result<HittingSample> {
    let hits = anchor_hits(x, cfg)?;
    Ok(HittingSample {
        rho: cfg.rho(),
        tau_plus: hits.iter().filter_map(|h| h.plus).collect(),
        tau_minus: hits.iter().filter_map(|h| h.minus).collect(),
        censored_plus: hits.iter().filter(|h| h.plus.is_none()).count(),
        censored_minus: hits.iter().filter(|h| h.minus.is_none()).count(),
    })
}

pub fn log_sample(h: &HittingSample) -> Result<LogHittingSample> {
    if h.tau_plus.is_empty() {
        return Err(Error::EmptySide("plus"));
    }
    if h.tau_minus.is_empty() {
        return Err(Error::EmptySide("minus"));
    }
    let ln = |v: &[u32]| v.iter().map(|&t| f64::from(t).ln()).collect();
    Ok(LogHittingSample {
        x_plus: ln(&h.tau_plus),
        x_minus: ln(&h.tau_minus),
    })
}
