//! Routing of user models to the cloud or to edge nodes.
//!
//! Minimizing the slowest node's latency over binary assignments is a
//! makespan-type problem and NP-hard. The router solves its linear
//! relaxation ([`solve_lp`]), which also gives a lower bound `y†`, and then
//! rounds the fractional assignment row by row ([`randomized_round`]).
//! [`brute_force_optimal`] enumerates small instances exactly and serves as
//! the oracle for both.

mod flow;
mod lp;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use lp::{solve_lp, LP_TOLERANCE_S};

use crate::error::{Error, Result};
use crate::latency::{evaluate_assignment, node_curves, Assignment, Protocol};
use crate::model::{Topology, CLOUD};
use crate::seed;

const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Largest `(M+1)^K` accepted by [`brute_force_optimal`].
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Relaxed routing matrix: one row per user, one column per node (0 = cloud).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalAssignment {
    users: Vec<usize>,
    num_nodes: usize,
    values: Vec<f64>,
}

impl FractionalAssignment {
    pub fn new(users: Vec<usize>, num_nodes: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != users.len() * num_nodes {
            return Err(Error::invalid("fractional assignment has the wrong shape"));
        }
        let a = FractionalAssignment {
            users,
            num_nodes,
            values,
        };
        a.check_rows()?;
        Ok(a)
    }

    /// Embeds a binary assignment.
    pub fn from_assignment(a: &Assignment, num_nodes: usize) -> Self {
        let mut values = vec![0.0; a.len() * num_nodes];
        for (i, &m) in a.nodes().iter().enumerate() {
            values[i * num_nodes + m] = 1.0;
        }
        FractionalAssignment {
            users: a.users().to_vec(),
            num_nodes,
            values,
        }
    }

    fn check_rows(&self) -> Result<()> {
        for i in 0..self.users.len() {
            let row = self.row(i);
            if row
                .iter()
                .any(|&v| !(0.0..=1.0 + ROW_SUM_TOLERANCE).contains(&v))
            {
                return Err(Error::invalid(format!(
                    "row {i} has entries outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::invalid(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(())
    }

    pub fn users(&self) -> &[usize] {
        &self.users
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_nodes..(i + 1) * self.num_nodes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.num_nodes)
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Number of rows with more than one nonzero entry.
    pub fn fractional_rows(&self) -> usize {
        self.rows()
            .filter(|r| r.iter().any(|&v| v > 0.0 && v < 1.0))
            .count()
    }

    /// Fractional number of users per node.
    pub fn loads(&self) -> Vec<f64> {
        let mut loads = vec![0.0; self.num_nodes];
        for row in self.rows() {
            for (l, &v) in loads.iter_mut().zip(row) {
                *l += v;
            }
        }
        loads
    }

    pub fn respects(&self, topology: &Topology) -> bool {
        self.users.iter().zip(self.rows()).all(|(&k, row)| {
            row.iter()
                .enumerate()
                .all(|(m, &v)| v == 0.0 || topology.can_reach(k, m))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpResult {
    pub protocol: Protocol,
    /// Optimal relaxed latency `y†`, a lower bound on any binary routing.
    pub lower_bound: f64,
    pub assignment: FractionalAssignment,
    /// Edge-to-cloud forwarding time per edge node `1..=M` (index `m - 1`).
    pub gamma: Vec<f64>,
    /// Fractional load per node id.
    pub loads: Vec<f64>,
}

/// Cumulative selection intervals `(node, lo, hi)` of one row, skipping zero entries.
pub fn rounding_intervals(row: &[f64]) -> Vec<(usize, f64, f64)> {
    let mut acc = 0.0;
    row.iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(m, &p)| {
            let lo = acc;
            acc += p;
            (m, lo, acc)
        })
        .collect()
}

fn pick(row: &[f64], u: f64) -> usize {
    let intervals = rounding_intervals(row);
    intervals
        .iter()
        .find(|&&(_, _, hi)| u <= hi)
        .or(intervals.last())
        .map_or(CLOUD, |&(m, _, _)| m)
}

/// Samples a binary assignment: row `k` picks node `m` with probability `a_km`.
///
/// A binary input is returned unchanged. Rows are drawn independently, in
/// order, from a stream seeded by `seed`.
pub fn randomized_round(fractional: &FractionalAssignment, seed_value: u64) -> Result<Assignment> {
    fractional.check_rows()?;
    let rows = fractional.rows();
    let nodes: Vec<usize> = if fractional.is_binary() {
        rows.map(|r| r.iter().position(|&v| v == 1.0).unwrap_or(CLOUD))
            .collect()
    } else {
        let mut rng = seed::rng(seed_value);
        rows.map(|r| {
            if let Some(m) = r.iter().position(|&v| v == 1.0) {
                m
            } else {
                pick(r, rng.random::<f64>())
            }
        })
        .collect()
    };
    Assignment::new(fractional.users().to_vec(), nodes)
}

/// Exhaustive search over all reachability-respecting assignments.
///
/// Ties go to the lexicographically smallest node vector (users in the given
/// order, node ids compared numerically).
pub fn brute_force_optimal(
    topology: &Topology,
    users: &[usize],
    model_bits: f64,
    protocol: Protocol,
) -> Result<(Assignment, f64)> {
    if users.is_empty() {
        return Err(Error::invalid("exhaustive search needs at least one user"));
    }
    let combinations = (topology.num_nodes() as f64).powi(users.len() as i32);
    if combinations > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge {
            combinations,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let curves = node_curves(topology, model_bits, protocol);
    let options: Vec<&[usize]> = users.iter().map(|&k| topology.reachable(k)).collect();
    let mut choice = vec![0usize; users.len()];
    let mut loads = vec![0usize; topology.num_nodes()];
    for opts in &options {
        loads[opts[0]] += 1;
    }
    let eval = |loads: &[usize]| {
        curves
            .iter()
            .zip(loads)
            .map(|(c, &l)| c.latency(l as f64))
            .fold(0.0, f64::max)
    };
    let mut best_value = eval(&loads);
    let mut best = choice.clone();
    'outer: loop {
        // odometer, last user fastest
        let mut i = users.len();
        loop {
            if i == 0 {
                break 'outer;
            }
            i -= 1;
            loads[options[i][choice[i]]] -= 1;
            if choice[i] + 1 < options[i].len() {
                choice[i] += 1;
                loads[options[i][choice[i]]] += 1;
                break;
            }
            choice[i] = 0;
            loads[options[i][0]] += 1;
        }
        let value = eval(&loads);
        if value < best_value {
            best_value = value;
            best.clone_from(&choice);
        }
    }
    let nodes = best.iter().zip(&options).map(|(&c, o)| o[c]).collect();
    let assignment = Assignment::new(users.to_vec(), nodes)?;
    Ok((assignment, best_value))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxBound {
    /// `2 ln K / y† + 3`.
    pub ratio: f64,
    /// Whether `y† > ln K`, the regime where the guarantee is stated.
    pub assumption_holds: bool,
}

/// High-probability approximation ratio of rounding for `k` users and relaxed optimum `y†`.
pub fn approx_bound(k: usize, lower_bound: f64) -> Result<ApproxBound> {
    if k < 2 {
        return Err(Error::invalid(
            "the rounding bound needs at least two users",
        ));
    }
    if !(lower_bound > 0.0) {
        return Err(Error::invalid("the relaxed optimum must be positive"));
    }
    let ln_k = (k as f64).ln();
    Ok(ApproxBound {
        ratio: 2.0 * ln_k / lower_bound + 3.0,
        assumption_holds: lower_bound > ln_k,
    })
}

/// Every user on the cloud uplink.
pub fn only_cloud_assignment(k: usize) -> Assignment {
    Assignment::from_nodes(vec![CLOUD; k])
}

/// Diagnostics of one relax-and-round routing.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingOutcome {
    pub lp: LpResult,
    pub assignment: Assignment,
    /// Latency of the first rounding (the single-shot algorithm).
    pub first_trial_t_up: f64,
    /// Best latency over all trials; equals `first_trial_t_up` for one trial.
    pub t_up: f64,
    pub trials: usize,
}

/// Relaxes, then rounds `trials` times with derived seeds and keeps the best.
pub fn relax_and_round(
    topology: &Topology,
    users: &[usize],
    model_bits: f64,
    protocol: Protocol,
    seed_value: u64,
    trials: usize,
) -> Result<RoutingOutcome> {
    let lp = solve_lp(topology, users, model_bits, protocol)?;
    let trials = trials.max(1);
    let mut best: Option<(Assignment, f64)> = None;
    let mut first = 0.0;
    for t in 0..trials {
        let a = randomized_round(&lp.assignment, seed::derive(seed_value, &[t as u64]))?;
        let t_up = evaluate_assignment(&a, topology, model_bits, protocol)?.t_up;
        if t == 0 {
            first = t_up;
        }
        if best.as_ref().is_none_or(|(_, b)| t_up < *b) {
            best = Some((a, t_up));
        }
    }
    let (assignment, t_up) = best.expect("at least one trial");
    Ok(RoutingOutcome {
        lp,
        assignment,
        first_trial_t_up: first,
        t_up,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CloudNode, EdgeNode, UserProfile};

    const D: f64 = 1.856e9;

    pub(crate) fn two_user_instance() -> Topology {
        Topology::new(
            vec![UserProfile::default(); 2],
            vec![EdgeNode {
                position: [0.0, 0.0],
                fronthaul_bps: 1e9,
                backhaul_bps: 1e9,
            }],
            CloudNode {
                uplink_bps: 2e9,
                downlink_bps: 2e9,
            },
            vec![vec![0, 1]; 2],
        )
        .unwrap()
    }

    #[test]
    fn single_user_on_cloud() {
        let topo = Topology::star(
            1,
            CloudNode {
                uplink_bps: 2e9,
                downlink_bps: 2e9,
            },
        )
        .unwrap();
        let lp = solve_lp(&topo, &[0], D, Protocol::Inc).unwrap();
        assert!((lp.lower_bound - 0.928).abs() < 1e-9);
        assert!(lp.assignment.is_binary());
    }

    #[test]
    fn two_user_relaxation() {
        let topo = two_user_instance();
        let lp = solve_lp(&topo, &[0, 1], D, Protocol::Inc).unwrap();
        assert!((lp.lower_bound - 1.4848).abs() < 1e-9, "{}", lp.lower_bound);
        assert!((lp.loads[0] - 1.6).abs() < 1e-9);
        assert!((lp.loads[1] - 0.4).abs() < 1e-9);
        assert!((lp.gamma[0] - 0.4 * 1.856).abs() < 1e-9);
        assert!(lp.assignment.respects(&topo));
        // exactly one user is split
        assert_eq!(lp.assignment.fractional_rows(), 1);
    }

    #[test]
    fn two_user_exhaustive() {
        let topo = two_user_instance();
        let (a, t) = brute_force_optimal(&topo, &[0, 1], D, Protocol::Inc).unwrap();
        assert_eq!(a.nodes(), &[0, 0]);
        assert!((t - 1.856).abs() < 1e-12);
        let via_eval = evaluate_assignment(&a, &topo, D, Protocol::Inc)
            .unwrap()
            .t_up;
        assert_eq!(t, via_eval);
    }

    #[test]
    fn exhaustive_single_user_picks_cheapest() {
        let topo = two_user_instance().subset(&[0]).unwrap();
        let (a, t) = brute_force_optimal(&topo, &[0], D, Protocol::Inc).unwrap();
        assert_eq!(a.nodes(), &[0]);
        assert!((t - 0.928).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_guard() {
        let topo = Topology::star(
            30,
            CloudNode {
                uplink_bps: 1.0,
                downlink_bps: 1.0,
            },
        )
        .unwrap();
        // 1^30 is tiny, so the star is fine
        assert!(
            brute_force_optimal(&topo, &(0..30).collect::<Vec<_>>(), 1.0, Protocol::Inc).is_ok()
        );
        let big = Topology::new(
            vec![UserProfile::default(); 30],
            vec![EdgeNode {
                position: [0.0, 0.0],
                fronthaul_bps: 1.0,
                backhaul_bps: 1.0,
            }],
            CloudNode {
                uplink_bps: 1.0,
                downlink_bps: 1.0,
            },
            vec![vec![0, 1]; 30],
        )
        .unwrap();
        assert!(matches!(
            brute_force_optimal(&big, &(0..30).collect::<Vec<_>>(), 1.0, Protocol::Inc),
            Err(Error::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn intervals_follow_cumulative_construction() {
        let iv = rounding_intervals(&[0.7, 0.1, 0.2]);
        assert_eq!(iv[0], (0, 0.0, 0.7));
        assert_eq!(iv[1].0, 1);
        assert!((iv[1].1 - 0.7).abs() < 1e-15 && (iv[1].2 - 0.8).abs() < 1e-15);
        assert!((iv[2].1 - 0.8).abs() < 1e-15 && (iv[2].2 - 1.0).abs() < 1e-15);
        assert_eq!(pick(&[0.7, 0.1, 0.2], 0.7), 0);
        assert_eq!(pick(&[0.7, 0.1, 0.2], 0.75), 1);
        assert_eq!(pick(&[0.7, 0.1, 0.2], 0.81), 2);
        assert_eq!(pick(&[0.0, 1.0], 0.0), 1);
    }

    #[test]
    fn binary_input_is_returned_unchanged() {
        let a = Assignment::new(vec![3, 5, 8], vec![2, 0, 1]).unwrap();
        let f = FractionalAssignment::from_assignment(&a, 3);
        assert!(f.is_binary());
        assert_eq!(randomized_round(&f, 99).unwrap(), a);
    }

    #[test]
    fn bad_rows_rejected() {
        assert!(FractionalAssignment::new(vec![0], 2, vec![0.5, 0.4]).is_err());
        assert!(FractionalAssignment::new(vec![0], 2, vec![0.5]).is_err());
        let bogus = FractionalAssignment {
            users: vec![0],
            num_nodes: 2,
            values: vec![0.9, 0.2],
        };
        assert!(randomized_round(&bogus, 1).is_err());
    }

    #[test]
    fn rounding_is_pure() {
        let f =
            FractionalAssignment::new(vec![0, 1], 3, vec![0.7, 0.1, 0.2, 0.3, 0.3, 0.4]).unwrap();
        assert_eq!(
            randomized_round(&f, 5).unwrap(),
            randomized_round(&f, 5).unwrap()
        );
    }

    #[test]
    fn approx_bound_formula() {
        let b = approx_bound(2, 1e12).unwrap();
        assert!((b.ratio - 3.0).abs() < 1e-9);
        // K = e² is not an integer; K = 7 and 8 bracket it
        let lo = approx_bound(7, 2.0).unwrap();
        let hi = approx_bound(8, 2.0).unwrap();
        assert!(lo.ratio < 5.0 && hi.ratio > 5.0);
        assert!((lo.ratio - (7f64.ln() + 3.0)).abs() < 1e-12);
        assert!(lo.assumption_holds);
        assert!(!hi.assumption_holds);
        assert!(approx_bound(100, 10.0).unwrap().assumption_holds);
        assert!(approx_bound(1, 1.0).is_err());
        assert!(approx_bound(5, 0.0).is_err());
    }

    #[test]
    fn only_cloud_latency() {
        let topo = Topology::star(
            500,
            CloudNode {
                uplink_bps: 2e9,
                downlink_bps: 2e9,
            },
        )
        .unwrap();
        let t = evaluate_assignment(&only_cloud_assignment(500), &topo, D, Protocol::Inc)
            .unwrap()
            .t_up;
        assert!((t - 464.0).abs() < 1e-9);
        let t = evaluate_assignment(&only_cloud_assignment(1), &topo, D, Protocol::Inc)
            .unwrap()
            .t_up;
        assert!((t - 0.928).abs() < 1e-12);
    }
}
