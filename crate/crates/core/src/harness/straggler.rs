//! Outage-driven straggler probability with `v` extra edge connections.

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{name} must lie in [0, 1], got {p}"
        )))
    }
}

/// Probability that the cloud and all `v` extra edge nodes are out: `p_cloud · p_edge^v`.
pub fn straggler_probability(p_cloud: f64, p_edge: f64, v: u32) -> Result<f64> {
    check_probability("p_cloud", p_cloud)?;
    check_probability("p_edge", p_edge)?;
    let v = i32::try_from(v).map_err(|_| Error::invalid("v is too large"))?;
    Ok(p_cloud * p_edge.powi(v))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StragglerEstimate {
    pub analytic: f64,
    pub simulated: f64,
    pub trials: u64,
    /// Binomial standard error of `simulated` under the analytic probability.
    pub sigma: f64,
}

impl StragglerEstimate {
    /// `|simulated - analytic|` in units of `sigma`; 0 when both are exact.
    pub fn z_score(&self) -> f64 {
        let diff = (self.simulated - self.analytic).abs();
        if self.sigma > 0.0 {
            diff / self.sigma
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Simulates independent outages of the cloud and `v` edge nodes.
pub fn simulate_straggler(
    p_cloud: f64,
    p_edge: f64,
    v: u32,
    trials: u64,
    seed_value: u64,
) -> Result<StragglerEstimate> {
    let analytic = straggler_probability(p_cloud, p_edge, v)?;
    if trials == 0 {
        return Err(Error::invalid("Monte Carlo needs at least one trial"));
    }
    let mut rng = seed::rng(seed_value);
    let hits = (0..trials)
        .filter(|_| rng.random::<f64>() < p_cloud && (0..v).all(|_| rng.random::<f64>() < p_edge))
        .count() as u64;
    let n = trials as f64;
    Ok(StragglerEstimate {
        analytic,
        simulated: hits as f64 / n,
        trials,
        sigma: (analytic * (1.0 - analytic) / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_examples() {
        assert_eq!(straggler_probability(0.3, 0.5, 2).unwrap(), 0.075);
        assert_eq!(straggler_probability(0.3, 0.5, 0).unwrap(), 0.3);
        let p = straggler_probability(0.3, 0.3, 2).unwrap();
        assert!((p - 0.027).abs() < 1e-15);
        assert!((0.3 / p - 11.111_111_111).abs() < 1e-6);
        assert!(straggler_probability(1.2, 0.5, 1).is_err());
    }

    #[test]
    fn simulation_agrees() {
        let e = simulate_straggler(0.3, 0.5, 2, 100_000, 4).unwrap();
        assert!(e.z_score() < 3.0, "{e:?}");
        let certain = simulate_straggler(1.0, 1.0, 3, 10, 4).unwrap();
        assert_eq!(certain.simulated, 1.0);
        assert_eq!(certain.z_score(), 0.0);
    }
}
