//! Gaussian-mixture prior: records are drawn with probability close to a
//! spherical mixture density, so the fitted density stands in for `p̂`.

pub mod em;
pub mod model;

use serde::{Deserialize, Serialize};

pub use em::{em_fit, em_fit_weighted, EmFit, EmOptions, WeightedPoints};
pub use model::{gmm_density, log_sum_exp, MixtureModel};

use crate::balanced::sample_class_counts;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng;
use crate::sampler::ProbabilityMap;

pub const SOURCE: &str = "gmm";

/// Log-densities below this make the acceptance ratio meaningless in `f64`.
pub const LOG_DENSITY_FLOOR: f64 = -700.0;

/// `p̂(x) = N̂(x)` for every record; the sampler's floor is then the minimum
/// fitted density over the data.
pub fn estimate_probs_gmm(data: &Dataset, model: &MixtureModel) -> Result<ProbabilityMap> {
    let log_densities = log_densities(data, model)?;
    if let Some(&low) = log_densities.iter().min_by(|a, b| a.total_cmp(b)) {
        if low < LOG_DENSITY_FLOOR {
            return Err(Error::DensityUnderflow(low));
        }
    }
    ProbabilityMap::new(log_densities.iter().map(|l| l.exp()).collect(), SOURCE)
}

pub fn log_densities(data: &Dataset, model: &MixtureModel) -> Result<Vec<f64>> {
    let d = data
        .dim()
        .ok_or_else(|| Error::Representation("mixture densities need vector records".into()))?;
    if d != model.dim() {
        return Err(Error::Representation(format!(
            "{d}-dimensional records for a {}-dimensional model",
            model.dim()
        )));
    }
    Ok((0..data.len())
        .map(|i| model.log_density(data.vector(i).expect("vector record")))
        .collect())
}

/// Acceptance probability `exp(log τ̂ − log N̂(x))` per record.
pub fn acceptance_ratios(data: &Dataset, model: &MixtureModel) -> Result<Vec<f64>> {
    let l = log_densities(data, model)?;
    let tau = l.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(l.iter().map(|x| (tau - x).exp()).collect())
}

/// Draws `m` records with replacement and fits on their multiplicities.
pub fn fit_from_sample(data: &Dataset, m: u64, opts: &EmOptions) -> Result<EmFit> {
    if m == 0 {
        return Err(Error::param("m", "sample size must be at least 1"));
    }
    let mut r = rng::derive_rng(opts.seed, u64::MAX);
    let counts = sample_class_counts(data, m, &mut r);
    em_fit_weighted(&WeightedPoints::from_class_counts(data, &counts)?, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmPlan {
    pub epsilon: f64,
    pub delta: f64,
    pub tau: f64,
    pub eta_min: f64,
    pub d: usize,
    pub k: usize,
    pub c_prime: f64,
    pub c_t: f64,
    pub t: u64,
    pub m: u64,
}

/// `T = ⌈c_T·ln(1/(τε))⌉` and `m = ⌈C′d³(ln(k²T) + ln(1/δ)) / (η_min τ² ε²)⌉`.
pub fn plan_gmm(
    epsilon: f64,
    delta: f64,
    tau: f64,
    eta_min: f64,
    d: usize,
    k: usize,
    c_prime: f64,
    c_t: f64,
) -> Result<GmmPlan> {
    for (name, x) in [("epsilon", epsilon), ("delta", delta)] {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::param(name, format!("{x} is not in (0, 1)")));
        }
    }
    if !(eta_min > 0.0 && eta_min <= 1.0) {
        return Err(Error::param("eta_min", format!("{eta_min} is not in (0, 1]")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::param("tau", format!("{tau} is not positive")));
    }
    if d == 0 || k == 0 {
        return Err(Error::param("d", "dimension and component count must be positive"));
    }
    if !(c_prime > 0.0 && c_t > 0.0) {
        return Err(Error::param("c_prime", "constants must be positive"));
    }
    let t = (c_t * (1.0 / (tau * epsilon)).ln()).ceil().max(1.0);
    let kf = k as f64;
    let df = d as f64;
    let m = c_prime * df.powi(3) * ((kf * kf * t).ln() + (1.0 / delta).ln())
        / (eta_min * tau * tau * epsilon * epsilon);
    Ok(GmmPlan {
        epsilon,
        delta,
        tau,
        eta_min,
        d,
        k,
        c_prime,
        c_t,
        t: t as u64,
        m: m.ceil().max(1.0) as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationCheck {
    pub satisfied: bool,
    /// Smallest `‖μ_i − μ_j‖ / (max(σ_i, σ_j)·√ln(ρ_σ/η_min))` over pairs.
    pub worst_ratio: f64,
}

/// Pairwise mean separation `‖μ_i−μ_j‖ ≥ max(σ_i,σ_j)·√ln(ρ_σ/η_min)`,
/// with `ρ_σ` the ratio of largest to smallest standard deviation.
pub fn separation_check(model: &MixtureModel) -> SeparationCheck {
    let sd: Vec<f64> = model.variances.iter().map(|v| v.sqrt()).collect();
    let rho = sd.iter().copied().fold(0.0, f64::max) / sd.iter().copied().fold(f64::INFINITY, f64::min);
    let eta_min = model.weights.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = (rho / eta_min).ln().max(0.0).sqrt();
    let mut worst = f64::INFINITY;
    for i in 0..model.k() {
        for j in i + 1..model.k() {
            let dist: f64 = model.means[i]
                .iter()
                .zip(&model.means[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let need = sd[i].max(sd[j]) * scale;
            let ratio = if need > 0.0 { dist / need } else { f64::INFINITY };
            worst = worst.min(ratio);
        }
    }
    let satisfied = worst >= 1.0;
    if !satisfied {
        log::warn!(
            "fitted components are not well separated (worst ratio {worst:.3}); the uniformity bound does not apply"
        );
    }
    SeparationCheck {
        satisfied,
        worst_ratio: worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EntityLabels;
    use crate::sampler::{expected_trials_per_accept, induced_tv_to_uniform};

    #[test]
    fn planner_golden() {
        let p = plan_gmm(0.1, 0.1, 0.01, 0.2, 2, 2, 1.0, 1.0).unwrap();
        assert_eq!(p.t, 7);
        assert_eq!(p.m, 225_391_585);
    }

    #[test]
    fn planner_scaling() {
        let base = plan_gmm(0.1, 0.1, 0.01, 0.2, 2, 2, 1.0, 1.0).unwrap();
        let smaller_tau = plan_gmm(0.1, 0.1, 0.005, 0.2, 2, 2, 1.0, 1.0).unwrap();
        assert!(smaller_tau.m > base.m);
        // doubling d with T fixed multiplies the bound by exactly 8
        let f = |d: usize| {
            let t = 7.0f64;
            (d as f64).powi(3) * ((4.0 * t).ln() + 10f64.ln()) / (0.2 * 1e-4 * 1e-2)
        };
        assert_eq!(f(4) / f(2), 8.0);
        let doubled = plan_gmm(0.1, 0.1, 0.01, 0.2, 4, 2, 1.0, 1.0).unwrap();
        assert_eq!(doubled.t, base.t);
        assert!(doubled.m.abs_diff(8 * base.m) <= 8);
        assert!(plan_gmm(0.1, 0.1, 0.0, 0.2, 2, 2, 1.0, 1.0).is_err());
        assert!(plan_gmm(1.1, 0.1, 0.01, 0.2, 2, 2, 1.0, 1.0).is_err());
    }

    #[test]
    fn single_point_accepts_everything() {
        let d = Dataset::from_vectors(2, [1.0, 1.0].repeat(5), vec![0.0; 5]).unwrap();
        let m = MixtureModel::new(vec![1.0], vec![vec![1.0, 1.0]], vec![0.5]).unwrap();
        let map = estimate_probs_gmm(&d, &m).unwrap();
        assert!(map.values().iter().all(|&p| p == map.values()[0]));
        assert_eq!(expected_trials_per_accept(&d, &map).unwrap(), 1.0);
    }

    #[test]
    fn underflow_is_reported() {
        let d = Dataset::from_vectors(1, vec![0.0, 1e4], vec![0.0; 2]).unwrap();
        let m = MixtureModel::new(vec![1.0], vec![vec![0.0]], vec![1.0]).unwrap();
        assert!(matches!(estimate_probs_gmm(&d, &m), Err(Error::DensityUnderflow(_))));
    }

    #[test]
    fn true_density_counts_give_uniform_entities() {
        // counts exactly proportional to the density → induced distribution uniform
        let m = MixtureModel::new(vec![0.5, 0.5], vec![vec![-4.0], vec![4.0]], vec![1.0, 1.0]).unwrap();
        let mut xs = Vec::new();
        let mut labels = Vec::new();
        let grid: Vec<f64> = (-12..=12).map(|i| i as f64 * 0.5).collect();
        let unit = grid.iter().map(|x| gmm_density(&m, &[*x]).unwrap()).fold(f64::INFINITY, f64::min);
        for (e, x) in grid.iter().enumerate() {
            let copies = (gmm_density(&m, &[*x]).unwrap() / unit).round() as usize;
            for _ in 0..copies {
                xs.push(*x);
                labels.push(e as u32);
            }
        }
        let n = xs.len();
        let d = Dataset::from_vectors(1, xs, vec![0.0; n])
            .unwrap()
            .with_labels(EntityLabels::from_indices(labels))
            .unwrap();
        let map = estimate_probs_gmm(&d, &m).unwrap();
        // rounding copies to integers is the only error source
        assert!(induced_tv_to_uniform(&d, &map).unwrap() < 0.05);
    }

    #[test]
    fn separation_gate() {
        let far = MixtureModel::new(vec![0.5, 0.5], vec![vec![-5.0], vec![5.0]], vec![1.0, 1.0]).unwrap();
        assert!(separation_check(&far).satisfied);
        let near = MixtureModel::new(vec![0.5, 0.5], vec![vec![-0.2], vec![0.2]], vec![1.0, 1.0]).unwrap();
        assert!(!separation_check(&near).satisfied);
    }
}
