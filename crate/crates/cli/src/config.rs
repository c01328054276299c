//! Run configuration: command-line flags layered over an optional TOML file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use gainloss::detrend::ThresholdBasis;
use gainloss::models::ModelKind;
use gainloss::pipeline::{AnalysisConfig, RhoMode};
use gainloss::sampler::SamplerConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    StudentT,
    #[value(alias = "inverse-gamma")]
    #[serde(alias = "inverse-gamma")]
    InvGamma,
    Both,
}

impl ModelChoice {
    pub fn kinds(self) -> Vec<ModelKind> {
        match self {
            ModelChoice::StudentT => vec![ModelKind::StudentT],
            ModelChoice::InvGamma => vec![ModelKind::InverseGamma],
            ModelChoice::Both => vec![ModelKind::StudentT, ModelKind::InverseGamma],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisChoice {
    Level,
    Returns,
}

impl From<BasisChoice> for ThresholdBasis {
    fn from(b: BasisChoice) -> Self {
        match b {
            BasisChoice::Level => ThresholdBasis::DetrendedLevel,
            BasisChoice::Returns => ThresholdBasis::DailyReturns,
        }
    }
}

/// Flags shared by `fit` and the scans.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Price CSV files (`date,close`), one per index; `-` reads standard input.
    pub inputs: Vec<PathBuf>,
    /// TOML file with the same keys as the flags (snake_case); flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Moving-median window in business days.
    #[arg(long)]
    pub filter_size: Option<usize>,
    /// Fixed crossing level; defaults to the sample std of the filtered series.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Series whose sample std calibrates rho.
    #[arg(long, value_enum)]
    pub basis: Option<BasisChoice>,
    #[arg(long, value_enum)]
    pub model: Option<ModelChoice>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub tune: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for JSON, CSV and trace outputs.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Exit successfully even when some R-hat reaches 1.2.
    #[arg(long)]
    pub allow_nonconverged: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub inputs: Option<Vec<PathBuf>>,
    pub filter_size: Option<usize>,
    pub rho: Option<f64>,
    pub basis: Option<BasisChoice>,
    pub model: Option<ModelChoice>,
    pub sampler: Option<SamplerConfig>,
    pub out_dir: Option<PathBuf>,
    pub allow_nonconverged: Option<bool>,
    pub filter_sizes: Option<Vec<usize>>,
    pub rho_scales: Option<Vec<f64>>,
    pub window_years: Option<u32>,
    pub step_years: Option<u32>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Defaults that differ between commands (the window scan uses its own
/// filter size and a fixed crossing level).
pub struct CommandDefaults {
    pub filter_size: usize,
    pub rho: Option<f64>,
}

impl Default for CommandDefaults {
    fn default() -> Self {
        Self {
            filter_size: 252,
            rho: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub inputs: Vec<PathBuf>,
    pub analysis: AnalysisConfig,
    pub out_dir: Option<PathBuf>,
    pub allow_nonconverged: bool,
}

pub fn resolve(args: &RunArgs, file: &FileConfig, defaults: CommandDefaults) -> Result<Resolved> {
    let inputs = if args.inputs.is_empty() {
        file.inputs.clone().unwrap_or_default()
    } else {
        args.inputs.clone()
    };
    if inputs.is_empty() {
        bail!("no input files given");
    }
    let mut sampler = file.sampler.unwrap_or_default();
    if let Some(c) = args.chains {
        sampler.n_chains = c;
    }
    if let Some(d) = args.draws {
        sampler.n_draw = d;
    }
    if let Some(t) = args.tune {
        sampler.n_tune = t;
    }
    if let Some(s) = args.seed {
        sampler.seed = s;
    }
    sampler.validate().context("sampler settings")?;
    let rho = match args.rho.or(file.rho).or(defaults.rho) {
        Some(r) if !(r > 0.0 && r.is_finite()) => bail!("--rho must be positive, got {r}"),
        Some(r) => RhoMode::Explicit(r),
        None => RhoMode::SampleStd,
    };
    let analysis = AnalysisConfig {
        filter_size: args.filter_size.or(file.filter_size).unwrap_or(defaults.filter_size),
        rho,
        basis: args.basis.or(file.basis).map(Into::into).unwrap_or_default(),
        models: args.model.or(file.model).unwrap_or(ModelChoice::Both).kinds(),
        sampler,
    };
    Ok(Resolved {
        inputs,
        analysis,
        out_dir: args.out_dir.clone().or_else(|| file.out_dir.clone()),
        allow_nonconverged: args.allow_nonconverged || file.allow_nonconverged.unwrap_or(false),
    })
}
