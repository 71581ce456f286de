//! Oracle suites run by `incfl verify`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::ina::{aggregate_routed, flat_aggregate, make_user_packet, AggregationMode};
use crate::latency::{evaluate_assignment, Assignment, Protocol};
use crate::model::{CloudNode, EdgeNode, Topology, UserProfile};
use crate::router::{
    brute_force_optimal, randomized_round, solve_lp, FractionalAssignment, LP_TOLERANCE_S,
};
use crate::seed;

use super::straggler::simulate_straggler;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Random topology with up to `max_users` users and `max_edges` edges, capacities in 0.5–4 Gbps.
pub fn random_small_instance(
    rng: &mut ChaCha8Rng,
    max_users: usize,
    max_edges: usize,
) -> Result<Topology> {
    let k = rng.random_range(1..=max_users);
    let m = rng.random_range(0..=max_edges);
    let edges = (0..m)
        .map(|_| EdgeNode {
            position: [0.0, 0.0],
            fronthaul_bps: rng.random_range(0.5e9..2e9),
            backhaul_bps: rng.random_range(0.5e9..2e9),
        })
        .collect();
    let reach = (0..k)
        .map(|_| (1..=m).filter(|_| rng.random_bool(0.6)).collect())
        .collect();
    let up = rng.random_range(1e9..4e9);
    Topology::new(
        vec![UserProfile::default(); k],
        edges,
        CloudNode {
            uplink_bps: up,
            downlink_bps: up,
        },
        reach,
    )
}

fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Two-level aggregation against the flat weighted mean.
pub fn check_grouping_equivalence(root: u64, instances: usize) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for i in 0..instances {
        let mut rng = seed::derived_rng(root, &[1, i as u64]);
        let k = rng.random_range(1..=200usize);
        let nodes = rng.random_range(1..=9usize);
        let d = rng.random_range(1..=64usize);
        let mode = if rng.random_bool(0.5) {
            AggregationMode::Primal
        } else {
            AggregationMode::PrimalDual
        };
        let prev: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let packets = (0..k)
            .map(|_| {
                let payload = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
                make_user_packet(mode, rng.random_range(1..1000), payload)
            })
            .collect::<Result<Vec<_>>>()?;
        let assignment =
            Assignment::from_nodes((0..k).map(|_| rng.random_range(0..nodes)).collect());
        let partition_of: Vec<usize> = (0..k).map(|_| rng.random_range(0..2)).collect();
        let routed = aggregate_routed(&prev, &packets, &assignment, &partition_of, nodes, mode)?;
        let flat = flat_aggregate(&prev, &packets, mode)?;
        worst = worst.max(max_rel_err(&routed.model.psi, &flat.psi));
    }
    Ok(CheckOutcome {
        name: "ina_grouping_equivalence",
        passed: worst <= 1e-9,
        detail: format!("{instances} instances, max relative error {worst:.3e}"),
    })
}

/// Summary of the relaxation / exhaustive / rounded comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichStats {
    pub instances: usize,
    pub violations: usize,
    /// Mean of `rounded / optimum - 1`.
    pub mean_rounding_gap: f64,
}

pub fn sandwich_stats(root: u64, instances: usize) -> Result<SandwichStats> {
    const D: f64 = 1.856e9;
    let mut violations = 0;
    let mut gap = 0.0;
    for i in 0..instances {
        let mut rng = seed::derived_rng(root, &[2, i as u64]);
        let topo = random_small_instance(&mut rng, 8, 2)?;
        let users: Vec<usize> = (0..topo.num_users()).collect();
        let inc = solve_lp(&topo, &users, D, Protocol::Inc)?;
        let non_inc = solve_lp(&topo, &users, D, Protocol::NonInc)?;
        let (_, opt) = brute_force_optimal(&topo, &users, D, Protocol::Inc)?;
        let rounded = randomized_round(&inc.assignment, seed::derive(root, &[3, i as u64]))?;
        let t_round = evaluate_assignment(&rounded, &topo, D, Protocol::Inc)?.t_up;
        let ok = inc.lower_bound <= opt + LP_TOLERANCE_S
            && opt <= t_round
            && inc.lower_bound <= non_inc.lower_bound + LP_TOLERANCE_S;
        violations += usize::from(!ok);
        gap += t_round / opt - 1.0;
    }
    Ok(SandwichStats {
        instances,
        violations,
        mean_rounding_gap: gap / instances as f64,
    })
}

pub fn check_sandwich(root: u64, instances: usize) -> Result<CheckOutcome> {
    let s = sandwich_stats(root, instances)?;
    Ok(CheckOutcome {
        name: "lp_ilp_sandwich",
        passed: s.violations == 0,
        detail: format!(
            "{} instances, {} violations, mean rounding gap {:.4}",
            s.instances, s.violations, s.mean_rounding_gap
        ),
    })
}

/// Node frequencies of rounding the row `(0.7, 0.1, 0.2)`.
pub fn check_rounding_frequencies(root: u64, trials: usize) -> Result<CheckOutcome> {
    let probs = [0.7, 0.1, 0.2];
    let row = FractionalAssignment::new(vec![0], 3, probs.to_vec())?;
    let mut counts = [0usize; 3];
    for t in 0..trials {
        let a = randomized_round(&row, seed::derive(root, &[4, t as u64]))?;
        counts[a.nodes()[0]] += 1;
    }
    let n = trials as f64;
    let z: Vec<f64> = probs
        .iter()
        .zip(counts)
        .map(|(&p, c)| (c as f64 / n - p).abs() / (p * (1.0 - p) / n).sqrt())
        .collect();
    Ok(CheckOutcome {
        name: "rounding_frequencies",
        passed: z.iter().all(|&z| z <= 3.0),
        detail: format!("{trials} trials, counts {counts:?}, z-scores {z:.2?}"),
    })
}

pub fn check_straggler(root: u64, trials: u64) -> Result<CheckOutcome> {
    let e = simulate_straggler(0.3, 0.5, 2, trials, seed::derive(root, &[5]))?;
    Ok(CheckOutcome {
        name: "straggler_monte_carlo",
        passed: e.analytic == 0.075 && e.z_score() <= 3.0,
        detail: format!(
            "analytic {}, simulated {:.5}, z {:.2}",
            e.analytic,
            e.simulated,
            e.z_score()
        ),
    })
}

pub fn run_verification(root: u64) -> Result<VerifyReport> {
    Ok(VerifyReport {
        checks: vec![
            check_grouping_equivalence(root, 1000)?,
            check_sandwich(root, 100)?,
            check_rounding_frequencies(root, 10_000)?,
            check_straggler(root, 100_000)?,
        ],
    })
}
