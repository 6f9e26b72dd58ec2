use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `k` spherical Gaussians: component `i` is `N(means[i], variances[i]·I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

impl MixtureModel {
    pub const WEIGHT_TOLERANCE: f64 = 1e-9;

    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> Result<Self> {
        let m = MixtureModel {
            weights,
            means,
            variances,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.variances.len() != k {
            return Err(Error::param(
                "model",
                format!(
                    "{} weights, {} means, {} variances",
                    k,
                    self.means.len(),
                    self.variances.len()
                ),
            ));
        }
        let d = self.means[0].len();
        if d == 0 || self.means.iter().any(|m| m.len() != d) {
            return Err(Error::param("model", "means must share a positive dimension"));
        }
        if self.weights.iter().any(|w| !(*w > 0.0 && *w <= 1.0)) {
            return Err(Error::param("model", "weights must lie in (0, 1]"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > Self::WEIGHT_TOLERANCE {
            return Err(Error::param("model", format!("weights sum to {total}")));
        }
        if self.variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::param("model", "variances must be positive"));
        }
        if self.means.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::param("model", "means must be finite"));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// `ln η_i + ln N(x; μ_i, σ_i²I)` for every component.
    pub fn component_log_densities(&self, x: &[f64], out: &mut Vec<f64>) {
        let d = self.dim() as f64;
        out.clear();
        out.extend((0..self.k()).map(|i| {
            let var = self.variances[i];
            let sq: f64 = x.iter().zip(&self.means[i]).map(|(a, b)| (a - b) * (a - b)).sum();
            self.weights[i].ln() - 0.5 * d * (2.0 * PI * var).ln() - sq / (2.0 * var)
        }));
    }

    /// Log mixture density at `x`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut terms = Vec::with_capacity(self.k());
        self.component_log_densities(x, &mut terms);
        log_sum_exp(&terms)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let m: MixtureModel = serde_json::from_reader(BufReader::new(f))?;
        m.validate()?;
        Ok(m)
    }
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Mixture density at `x`, evaluated in log space.
pub fn gmm_density(model: &MixtureModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.dim() {
        return Err(Error::Representation(format!(
            "point of dimension {} for a {}-dimensional model",
            x.len(),
            model.dim()
        )));
    }
    Ok(model.log_density(x).exp())
}
