//! Weighted EM for spherical Gaussian mixtures.
//!
//! Points carry nonnegative weights so a large with-replacement sample can be
//! passed as multiplicities over distinct points. Reductions run over fixed
//! chunks and are summed in chunk order, so results do not depend on the
//! thread count.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{log_sum_exp, MixtureModel};
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once the summed absolute parameter change drops below this.
    pub tol: f64,
    pub seed: u64,
    pub max_restarts: usize,
    /// Variances or weights below this count as a collapsed component.
    pub collapse: f64,
}

impl EmOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        EmOptions {
            k,
            max_iter: 500,
            tol: 1e-6,
            seed,
            max_restarts: 8,
            collapse: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EmFit {
    pub model: MixtureModel,
    /// Weighted log-likelihood of the initial model and after every M-step.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
}

impl EmFit {
    /// Whether the trace never decreases by more than `slack` (relative).
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.log_likelihood
            .windows(2)
            .all(|w| w[1] >= w[0] - slack * w[0].abs().max(1.0))
    }
}

/// Weighted points, `dim` coordinates each.
#[derive(Debug, Clone)]
pub struct WeightedPoints {
    pub dim: usize,
    pub coords: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedPoints {
    pub fn new(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() != dim * weights.len() {
            return Err(Error::param("points", "coordinate count does not match dimension"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::param("weights", "weights must be finite and nonnegative"));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::param("weights", "total weight is zero"));
        }
        Ok(WeightedPoints {
            dim,
            coords,
            weights,
        })
    }

    /// Every record with weight one.
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let dim = vector_dim(data)?;
        let coords = (0..data.len())
            .flat_map(|i| data.vector(i).expect("vector record").iter().copied())
            .collect();
        Self::new(dim, coords, vec![1.0; data.len()])
    }

    /// Distinct feature vectors weighted by `counts` (indexed by feature
    /// class); classes with zero count are dropped.
    pub fn from_class_counts(data: &Dataset, counts: &[u64]) -> Result<Self> {
        let dim = vector_dim(data)?;
        let mut rep = vec![usize::MAX; data.value_key_count()];
        for (i, &k) in data.value_keys().iter().enumerate() {
            if rep[k as usize] == usize::MAX {
                rep[k as usize] = i;
            }
        }
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for (class, &c) in counts.iter().enumerate() {
            if c > 0 {
                coords.extend_from_slice(data.vector(rep[class]).expect("vector record"));
                weights.push(c as f64);
            }
        }
        Self::new(dim, coords, weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn vector_dim(data: &Dataset) -> Result<usize> {
    data.dim()
        .ok_or_else(|| Error::Representation("mixture fitting needs vector records".into()))
}

/// Fits `k` components to every record of `data` (equal weights).
pub fn em_fit(data: &Dataset, k: usize, max_iter: usize, tol: f64, seed: u64) -> Result<EmFit> {
    let opts = EmOptions {
        max_iter,
        tol,
        ..EmOptions::new(k, seed)
    };
    em_fit_weighted(&WeightedPoints::from_dataset(data)?, &opts)
}

/// Weighted EM with restart on component collapse.
pub fn em_fit_weighted(points: &WeightedPoints, opts: &EmOptions) -> Result<EmFit> {
    if opts.k == 0 {
        return Err(Error::param("k", "need at least one component"));
    }
    let support = points.weights.iter().filter(|&&w| w > 0.0).count();
    if support < opts.k {
        return Err(Error::param(
            "k",
            format!("{} components for {support} weighted points", opts.k),
        ));
    }
    let mut last = String::new();
    for restart in 0..=opts.max_restarts {
        let seed = rng::derive_seed(opts.seed, restart as u64);
        match run(points, opts, seed) {
            Ok(mut fit) => {
                fit.restarts = restart;
                return Ok(fit);
            }
            Err(why) => {
                log::debug!("EM restart {restart}: {why}");
                last = why;
            }
        }
    }
    Err(Error::EmFailure(format!(
        "{} restarts exhausted; last failure: {last}",
        opts.max_restarts
    )))
}

fn initialize(points: &WeightedPoints, k: usize, seed: u64) -> std::result::Result<MixtureModel, String> {
    let mut r = rng::rng(seed);
    let n = points.len();
    let total = points.total_weight();
    let pick = |r: &mut rng::Rng, mass: &[f64], sum: f64| -> usize {
        let mut u = r.random::<f64>() * sum;
        for (i, &w) in mass.iter().enumerate() {
            if u < w {
                return i;
            }
            u -= w;
        }
        mass.iter().rposition(|&w| w > 0.0).unwrap_or(n - 1)
    };
    let first = pick(&mut r, &points.weights, total);
    let mut means = vec![points.point(first).to_vec()];
    let sq = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
    let mut nearest: Vec<f64> = (0..n).map(|i| sq(points.point(i), &means[0])).collect();
    while means.len() < k {
        let mass: Vec<f64> = nearest.iter().zip(&points.weights).map(|(d, w)| d * w).collect();
        let sum: f64 = mass.iter().sum();
        if !(sum > 0.0) {
            return Err("fewer than k distinct points".into());
        }
        let next = pick(&mut r, &mass, sum);
        means.push(points.point(next).to_vec());
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq(points.point(i), &means[means.len() - 1]));
        }
    }
    let pooled = nearest
        .iter()
        .zip(&points.weights)
        .map(|(d, w)| d * w)
        .sum::<f64>()
        / (total * points.dim as f64);
    let var = if pooled > 0.0 {
        pooled
    } else {
        // every point sits on a mean; fall back to the overall spread
        let mut mean = vec![0.0; points.dim];
        for i in 0..n {
            for (m, x) in mean.iter_mut().zip(points.point(i)) {
                *m += points.weights[i] * x / total;
            }
        }
        (0..n).map(|i| points.weights[i] * sq(points.point(i), &mean)).sum::<f64>()
            / (total * points.dim as f64)
    };
    if !(var > 0.0) {
        return Err("all points coincide".into());
    }
    Ok(MixtureModel {
        weights: vec![1.0 / k as f64; k],
        means,
        variances: vec![var; k],
    })
}

struct EStep {
    log_likelihood: f64,
    resp: Vec<f64>,
}

fn e_step(points: &WeightedPoints, model: &MixtureModel) -> EStep {
    let k = model.k();
    let n = points.len();
    let mut resp = vec![0.0; n * k];
    let partial: Vec<f64> = resp
        .par_chunks_mut(CHUNK * k)
        .enumerate()
        .map(|(c, out)| {
            let mut terms = Vec::with_capacity(k);
            let mut ll = 0.0;
            for (j, row) in out.chunks_mut(k).enumerate() {
                let i = c * CHUNK + j;
                model.component_log_densities(points.point(i), &mut terms);
                let lse = log_sum_exp(&terms);
                for (r, t) in row.iter_mut().zip(&terms) {
                    *r = (t - lse).exp();
                }
                if points.weights[i] > 0.0 {
                    ll += points.weights[i] * lse;
                }
            }
            ll
        })
        .collect();
    EStep {
        log_likelihood: partial.iter().sum(),
        resp,
    }
}

fn m_step(points: &WeightedPoints, resp: &[f64], k: usize) -> MixtureModel {
    let d = points.dim;
    let n = points.len();
    let chunks = n.div_ceil(CHUNK);
    // per chunk: [N_k (k), Σ w r x (k·d)]
    let first: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; k + k * d];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let w = points.weights[i];
                let x = points.point(i);
                for j in 0..k {
                    let wr = w * resp[i * k + j];
                    acc[j] += wr;
                    for (a, xv) in acc[k + j * d..k + (j + 1) * d].iter_mut().zip(x) {
                        *a += wr * xv;
                    }
                }
            }
            acc
        })
        .collect();
    let mut acc = vec![0.0; k + k * d];
    for part in &first {
        for (a, p) in acc.iter_mut().zip(part) {
            *a += p;
        }
    }
    let nk: Vec<f64> = acc[..k].to_vec();
    let means: Vec<Vec<f64>> = (0..k)
        .map(|j| acc[k + j * d..k + (j + 1) * d].iter().map(|s| s / nk[j]).collect())
        .collect();
    let second: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; k];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let w = points.weights[i];
                let x = points.point(i);
                for j in 0..k {
                    let sq: f64 = x.iter().zip(&means[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                    acc[j] += w * resp[i * k + j] * sq;
                }
            }
            acc
        })
        .collect();
    let mut spread = vec![0.0; k];
    for part in &second {
        for (a, p) in spread.iter_mut().zip(part) {
            *a += p;
        }
    }
    let total: f64 = nk.iter().sum();
    MixtureModel {
        weights: nk.iter().map(|x| x / total).collect(),
        variances: (0..k).map(|j| spread[j] / (d as f64 * nk[j])).collect(),
        means,
    }
}

fn parameter_change(a: &MixtureModel, b: &MixtureModel) -> f64 {
    let w: f64 = a.weights.iter().zip(&b.weights).map(|(x, y)| (x - y).abs()).sum();
    let m: f64 = a
        .means
        .iter()
        .flatten()
        .zip(b.means.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .sum();
    let v: f64 = a.variances.iter().zip(&b.variances).map(|(x, y)| (x - y).abs()).sum();
    w + m + v
}

fn collapsed(model: &MixtureModel, threshold: f64) -> bool {
    model
        .weights
        .iter()
        .chain(&model.variances)
        .any(|x| !(x.is_finite() && *x >= threshold))
        || model.means.iter().flatten().any(|x| !x.is_finite())
}

fn run(points: &WeightedPoints, opts: &EmOptions, seed: u64) -> std::result::Result<EmFit, String> {
    let mut model = initialize(points, opts.k, seed)?;
    let mut trace = Vec::new();
    let mut estep = e_step(points, &model);
    trace.push(estep.log_likelihood);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let next = m_step(points, &estep.resp, opts.k);
        iterations += 1;
        if collapsed(&next, opts.collapse) {
            return Err(format!("component collapsed at iteration {iterations}"));
        }
        let change = parameter_change(&model, &next);
        model = next;
        estep = e_step(points, &model);
        trace.push(estep.log_likelihood);
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(EmFit {
        model,
        log_likelihood: trace,
        iterations,
        restarts: 0,
        converged,
    })
}
