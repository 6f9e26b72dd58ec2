//! Planner formulas solved for the accuracy parameter at a given sample
//! size. These give the theoretical-bound columns of the figure data.

/// Smallest `ε` whose balanced plan fits in `m` samples.
pub fn balanced_epsilon(m: f64, delta: f64, eta: f64, entities: f64, a: f64) -> f64 {
    let log_e = entities.ln().max(0.0);
    let mut eps = 1.0;
    for _ in 0..200 {
        let inner = if log_e > 0.0 {
            (log_e / (eps * eta)).ln().max(0.0)
        } else {
            0.0
        };
        let next = (a / (eta * eta * m) * (log_e * inner + (1.0 / delta).ln())).sqrt();
        if (next - eps).abs() <= 1e-12 * eps {
            return next;
        }
        eps = next;
    }
    eps
}

/// Loss gap `α` reachable with a total budget of `m` pairs over `q` blocks
/// and `s` candidates per block.
pub fn lsh_alpha(m: f64, delta: f64, candidates: f64, q: f64, a: f64) -> f64 {
    (a * q * (candidates.ln() + (2.0 * q / delta).ln()) / m).sqrt()
}

/// `ε` of the mixture planner at `m` samples (with `T` depending on `ε`).
pub fn gmm_epsilon(m: f64, delta: f64, tau: f64, eta_min: f64, d: f64, k: f64, c_prime: f64, c_t: f64) -> f64 {
    let mut eps = 0.1;
    for _ in 0..200 {
        let t = (c_t * (1.0 / (tau * eps)).ln()).ceil().max(1.0);
        let next = (c_prime * d.powi(3) * ((k * k * t).ln() + (1.0 / delta).ln()) / (eta_min * tau * tau * m)).sqrt();
        if (next - eps).abs() <= 1e-12 * eps {
            return next;
        }
        eps = next;
    }
    eps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balanced::plan_sample_size;
    use crate::gmm::plan_gmm;
    use crate::lsh::plan_lsh_budget;

    #[test]
    fn inverse_of_balanced_planner() {
        let plan = plan_sample_size(0.1, 0.1, 0.1, Some(10), 1.0).unwrap();
        let eps = balanced_epsilon(plan.m as f64, 0.1, 0.1, 10.0, 1.0);
        assert!((eps - 0.1).abs() < 1e-6, "{eps}");
    }

    #[test]
    fn inverse_of_lsh_planner() {
        let m = plan_lsh_budget(0.2, 0.1, 4, 10, 1.0).unwrap();
        assert!((lsh_alpha(m as f64, 0.1, 4.0, 10.0, 1.0) - 0.2).abs() < 1e-4);
    }

    #[test]
    fn inverse_of_gmm_planner() {
        let plan = plan_gmm(0.1, 0.1, 0.01, 0.2, 2, 2, 1.0, 1.0).unwrap();
        let eps = gmm_epsilon(plan.m as f64, 0.1, 0.01, 0.2, 2.0, 2.0, 1.0, 1.0);
        assert!((eps - 0.1).abs() < 1e-6, "{eps}");
    }
}
