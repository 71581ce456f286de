//! Linear relaxation of the routing problem.
//!
//! Relaxing `a_km` to `[0, 1]` turns routing into: find the smallest deadline
//! `y` such that every user's unit of demand can be shipped to reachable nodes
//! without node `m` exceeding its load capacity `C_m(y)` (the inverse of its
//! latency curve). `C_m` is increasing in `y`, so feasibility is monotone and
//! the optimum is found by bisection. Each feasibility check is a
//! transportation problem; users with identical reachability sets are
//! collapsed into one supply vertex, which keeps the flow network tiny.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::latency::{node_curves, Protocol};
use crate::model::Topology;

use super::flow::{ArcId, FlowNetwork};
use super::{FractionalAssignment, LpResult};

/// Absolute tolerance on the optimal deadline, in seconds.
pub const LP_TOLERANCE_S: f64 = 1e-9;

const MAX_BISECTIONS: usize = 400;
const SNAP: f64 = 1e-10;
/// Allowed relative excess of the recovered assignment over the bracket (flow round-off).
const RECOVERY_RTOL: f64 = 1e-10;

struct Group<'a> {
    reach: &'a [usize],
    /// Positions in the caller's user list.
    members: Vec<usize>,
}

fn group_users<'a>(topology: &'a Topology, users: &[usize]) -> Vec<Group<'a>> {
    let mut by_reach: BTreeMap<&[usize], Vec<usize>> = BTreeMap::new();
    for (i, &k) in users.iter().enumerate() {
        by_reach.entry(topology.reachable(k)).or_default().push(i);
    }
    by_reach
        .into_iter()
        .map(|(reach, members)| Group { reach, members })
        .collect()
}

struct Transport {
    net: FlowNetwork,
    arcs: Vec<Vec<(usize, ArcId)>>,
    demand: f64,
}

fn transport(groups: &[Group], capacities: &[f64]) -> Transport {
    let g = groups.len();
    let n = capacities.len();
    let (source, sink) = (0, 1 + g + n);
    let mut net = FlowNetwork::new(g + n + 2);
    let mut arcs = Vec::with_capacity(g);
    let mut demand = 0.0;
    for (gi, group) in groups.iter().enumerate() {
        let size = group.members.len() as f64;
        demand += size;
        net.add_arc(source, 1 + gi, size);
        arcs.push(
            group
                .reach
                .iter()
                .map(|&m| (m, net.add_arc(1 + gi, 1 + g + m, size)))
                .collect(),
        );
    }
    for (m, &cap) in capacities.iter().enumerate() {
        net.add_arc(1 + g + m, sink, cap);
    }
    Transport { net, arcs, demand }
}

fn solve_transport(groups: &[Group], capacities: &[f64]) -> (Transport, bool) {
    let mut t = transport(groups, capacities);
    let sink = 1 + groups.len() + capacities.len();
    let shipped = t.net.max_flow(0, sink);
    let feasible = shipped >= t.demand * (1.0 - 1e-12);
    (t, feasible)
}

/// Splits a group's flow among its users so that at most one user straddles
/// each boundary between consecutive nodes; every other user gets a 0/1 row.
fn spread_group(flows: &[(usize, f64)], members: &[usize], num_nodes: usize, values: &mut [f64]) {
    let total: f64 = flows.iter().map(|&(_, f)| f).sum();
    let scale = members.len() as f64 / total;
    let mut user = 0;
    let mut room = 1.0;
    for &(m, f) in flows {
        let mut left = f * scale;
        while left > SNAP && user < members.len() {
            let take = left.min(room);
            values[members[user] * num_nodes + m] += take;
            left -= take;
            room -= take;
            if room <= SNAP {
                user += 1;
                room = 1.0;
            }
        }
    }
    for &i in members {
        let row = &mut values[i * num_nodes..(i + 1) * num_nodes];
        for v in row.iter_mut() {
            if *v < SNAP {
                *v = 0.0;
            }
        }
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|v| *v /= sum);
        }
    }
}

/// Solves the relaxed routing program for `users` (indices into `topology`).
pub fn solve_lp(
    topology: &Topology,
    users: &[usize],
    model_bits: f64,
    protocol: Protocol,
) -> Result<LpResult> {
    if users.is_empty() {
        return Err(Error::invalid("relaxation needs at least one user"));
    }
    if !(model_bits > 0.0) {
        return Err(Error::invalid("model size must be positive"));
    }
    if let Some(&bad) = users.iter().find(|&&k| k >= topology.num_users()) {
        return Err(Error::invalid(format!("unknown user {bad}")));
    }
    let curves = node_curves(topology, model_bits, protocol);
    let groups = group_users(topology, users);
    let capacities = |y: f64| curves.iter().map(|c| c.capacity(y)).collect::<Vec<_>>();

    // everyone on the cloud is always feasible
    let mut hi = curves[0].latency(users.len() as f64);
    let mut lo = 0.0;
    let mut converged = false;
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= LP_TOLERANCE_S * 1e-3 {
            converged = true;
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            converged = true;
            break;
        }
        if solve_transport(&groups, &capacities(mid)).1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if !converged {
        return Err(Error::Solver(format!(
            "bracket [{lo}, {hi}] wider than tolerance"
        )));
    }

    let (t, feasible) = solve_transport(&groups, &capacities(hi));
    if !feasible {
        return Err(Error::Solver(format!(
            "deadline {hi} reported infeasible after bisection"
        )));
    }
    let num_nodes = topology.num_nodes();
    let mut values = vec![0.0; users.len() * num_nodes];
    for (group, arcs) in groups.iter().zip(&t.arcs) {
        let flows: Vec<(usize, f64)> = arcs.iter().map(|&(m, a)| (m, t.net.flow(a))).collect();
        spread_group(&flows, &group.members, num_nodes, &mut values);
    }
    let assignment = FractionalAssignment::new(users.to_vec(), num_nodes, values)?;
    let loads = assignment.loads();
    let recovered = curves
        .iter()
        .zip(&loads)
        .map(|(c, &l)| c.latency(l))
        .fold(0.0, f64::max);
    if recovered > hi + LP_TOLERANCE_S.max(hi * RECOVERY_RTOL) {
        return Err(Error::Solver(format!(
            "recovered assignment has latency {recovered}, above bracket {hi}"
        )));
    }
    let lower_bound = hi;
    let gamma = curves[1..]
        .iter()
        .zip(&loads[1..])
        .map(|(c, &l)| c.forwarding(l))
        .collect();
    Ok(LpResult {
        protocol,
        lower_bound,
        assignment,
        gamma,
        loads,
    })
}
