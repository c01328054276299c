//! Reference targets with closed-form posteriors, used to validate the sampler.

use crate::error::Result;

use super::LogDensity;

/// Independent Gaussian with per-coordinate means and variances.
#[derive(Debug, Clone)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Self {
        assert_eq!(mean.len(), var.len());
        Self { mean, var }
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }
}

impl LogDensity for DiagGaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn logp_grad(&self, z: &[f64], grad: &mut [f64]) -> Result<f64> {
        let mut lp = 0.0;
        for i in 0..z.len() {
            let d = z[i] - self.mean[i];
            lp -= 0.5 * d * d / self.var[i];
            grad[i] = -d / self.var[i];
        }
        Ok(lp)
    }
}

/// Zero-mean Gaussian given by its precision matrix (row-major).
#[derive(Debug, Clone)]
pub struct DenseGaussian {
    dim: usize,
    precision: Vec<f64>,
}

impl DenseGaussian {
    /// Builds the target from a 2x2 covariance; enough for correlation checks.
    pub fn from_cov_2d(cov: [[f64; 2]; 2]) -> Self {
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        let precision = vec![cov[1][1] / det, -cov[0][1] / det, -cov[1][0] / det, cov[0][0] / det];
        Self { dim: 2, precision }
    }
}

impl LogDensity for DenseGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn logp_grad(&self, z: &[f64], grad: &mut [f64]) -> Result<f64> {
        let n = self.dim;
        let mut lp = 0.0;
        for i in 0..n {
            let row: f64 = (0..n).map(|j| self.precision[i * n + j] * z[j]).sum();
            grad[i] = -row;
            lp -= 0.5 * z[i] * row;
        }
        Ok(lp)
    }
}

/// Normal likelihood with known std and a normal prior on the mean.
#[derive(Debug, Clone)]
pub struct NormalMean {
    pub data: Vec<f64>,
    pub sigma: f64,
    pub prior_mean: f64,
    pub prior_sd: f64,
}

impl NormalMean {
    /// Conjugate posterior `(mean, variance)` of the location.
    pub fn posterior(&self) -> (f64, f64) {
        let prec = 1.0 / self.prior_sd.powi(2) + self.data.len() as f64 / self.sigma.powi(2);
        let sum: f64 = self.data.iter().sum();
        let mean = (self.prior_mean / self.prior_sd.powi(2) + sum / self.sigma.powi(2)) / prec;
        (mean, 1.0 / prec)
    }
}

impl LogDensity for NormalMean {
    fn dim(&self) -> usize {
        1
    }

    fn logp_grad(&self, z: &[f64], grad: &mut [f64]) -> Result<f64> {
        let mu = z[0];
        let s2 = self.sigma * self.sigma;
        let p2 = self.prior_sd * self.prior_sd;
        let mut lp = -0.5 * (mu - self.prior_mean).powi(2) / p2;
        let mut g = -(mu - self.prior_mean) / p2;
        for x in &self.data {
            lp -= 0.5 * (x - mu).powi(2) / s2;
            g += (x - mu) / s2;
        }
        grad[0] = g;
        Ok(lp)
    }

    fn param_names(&self) -> Vec<String> {
        vec!["mu".into()]
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![self.prior_mean]
    }

    fn pointwise_len(&self) -> usize {
        self.data.len()
    }

    fn pointwise_loglik(&self, z: &[f64], out: &mut [f64]) {
        let c = -0.5 * (2.0 * std::f64::consts::PI).ln() - self.sigma.ln();
        for (o, x) in out.iter_mut().zip(&self.data) {
            *o = c - 0.5 * ((x - z[0]) / self.sigma).powi(2);
        }
    }
}
