//! Per-iteration communication latency of a routing assignment.
//!
//! Rates are never free variables here: every node splits its uplink capacity
//! equally among the users it serves, which is the latency-optimal allocation
//! for a fixed assignment. A node serving `L` users therefore finishes after
//! `D*L/B_fr + gamma(L)` seconds, where `gamma` is the edge-to-cloud forwarding
//! time (zero for the cloud itself).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Topology, CLOUD};

/// Whether edge nodes aggregate before forwarding (INC) or relay every model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Inc,
    NonInc,
}

/// Integral routing: each listed user sends to exactly one node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    users: Vec<usize>,
    nodes: Vec<usize>,
}

impl Assignment {
    pub fn new(users: Vec<usize>, nodes: Vec<usize>) -> Result<Self> {
        if users.len() != nodes.len() {
            return Err(Error::invalid("assignment needs one node per user"));
        }
        Ok(Assignment { users, nodes })
    }

    /// Assignment over users `0..nodes.len()`.
    pub fn from_nodes(nodes: Vec<usize>) -> Self {
        Assignment {
            users: (0..nodes.len()).collect(),
            nodes,
        }
    }

    pub fn users(&self) -> &[usize] {
        &self.users
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.users.iter().copied().zip(self.nodes.iter().copied())
    }

    /// Number of users per node, indexed by node id.
    pub fn loads(&self, num_nodes: usize) -> Vec<usize> {
        let mut loads = vec![0; num_nodes];
        for &m in &self.nodes {
            loads[m] += 1;
        }
        loads
    }

    /// Dense `K x (M+1)` 0/1 matrix, rows in user order.
    pub fn to_matrix(&self, num_nodes: usize) -> Vec<Vec<u8>> {
        self.nodes
            .iter()
            .map(|&m| {
                let mut row = vec![0; num_nodes];
                row[m] = 1;
                row
            })
            .collect()
    }

    pub fn validate(&self, topology: &Topology) -> Result<()> {
        for (user, node) in self.iter() {
            if user >= topology.num_users() {
                return Err(Error::invalid(format!("unknown user {user}")));
            }
            if !topology.can_reach(user, node) {
                return Err(Error::Unreachable { user, node });
            }
        }
        Ok(())
    }
}

/// Uplink rate of each assigned user, in assignment order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateAllocation {
    pub rates_bps: Vec<f64>,
}

/// Latency of a node as a function of its (possibly fractional) load.
///
/// `per_user` is the fronthaul time of one model, `forward` the backhaul time
/// of one model. Under INC an edge forwards a single aggregate, so the
/// forwarding term saturates at one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCurve {
    pub per_user: f64,
    pub forward: f64,
    pub protocol: Protocol,
}

impl NodeCurve {
    pub fn for_node(topology: &Topology, node: usize, model_bits: f64, protocol: Protocol) -> Self {
        if node == CLOUD {
            NodeCurve {
                per_user: model_bits / topology.cloud().uplink_bps,
                forward: 0.0,
                protocol,
            }
        } else {
            let edge = topology.edge(node);
            NodeCurve {
                per_user: model_bits / edge.fronthaul_bps,
                forward: model_bits / edge.backhaul_bps,
                protocol,
            }
        }
    }

    pub fn forwarding(&self, load: f64) -> f64 {
        match self.protocol {
            Protocol::Inc => self.forward.min(self.forward * load),
            Protocol::NonInc => self.forward * load,
        }
    }

    pub fn latency(&self, load: f64) -> f64 {
        if load <= 0.0 {
            return 0.0;
        }
        self.per_user * load + self.forwarding(load)
    }

    /// Largest load this node can finish within `deadline` seconds.
    pub fn capacity(&self, deadline: f64) -> f64 {
        if deadline <= 0.0 {
            return 0.0;
        }
        let unit = self.per_user + self.forward;
        match self.protocol {
            Protocol::Inc if deadline > unit => (deadline - self.forward) / self.per_user,
            _ => deadline / unit,
        }
    }
}

pub fn node_curves(topology: &Topology, model_bits: f64, protocol: Protocol) -> Vec<NodeCurve> {
    (0..topology.num_nodes())
        .map(|m| NodeCurve::for_node(topology, m, model_bits, protocol))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    /// Broadcast time `D / W_d`.
    pub t_down: f64,
    /// Uplink latency per node id (index 0 is the cloud); 0 for idle nodes.
    pub node_uplink: Vec<f64>,
    /// Edge-to-cloud forwarding time per node id; always 0 for the cloud.
    pub edge_to_cloud: Vec<f64>,
    /// Slowest node.
    pub t_up: f64,
}

/// Splits each node's uplink capacity equally among its users.
pub fn equal_rate_allocation(assignment: &Assignment, topology: &Topology) -> RateAllocation {
    let loads = assignment.loads(topology.num_nodes());
    let rates_bps = assignment
        .nodes()
        .iter()
        .map(|&m| {
            let cap = if m == CLOUD {
                topology.cloud().uplink_bps
            } else {
                topology.edge(m).fronthaul_bps
            };
            cap / loads[m] as f64
        })
        .collect();
    RateAllocation { rates_bps }
}

pub fn evaluate_assignment(
    assignment: &Assignment,
    topology: &Topology,
    model_bits: f64,
    protocol: Protocol,
) -> Result<LatencyReport> {
    assignment.validate(topology)?;
    let loads = assignment.loads(topology.num_nodes());
    let curves = node_curves(topology, model_bits, protocol);
    let node_uplink: Vec<f64> = curves
        .iter()
        .zip(&loads)
        .map(|(c, &l)| c.latency(l as f64))
        .collect();
    let edge_to_cloud = curves
        .iter()
        .zip(&loads)
        .map(|(c, &l)| if l == 0 { 0.0 } else { c.forwarding(l as f64) })
        .collect();
    let t_up = node_uplink.iter().copied().fold(0.0, f64::max);
    Ok(LatencyReport {
        t_down: model_bits / topology.cloud().downlink_bps,
        node_uplink,
        edge_to_cloud,
        t_up,
    })
}

/// Slowest node's latency when `loads` users are served per node.
pub fn uplink_latency_for_loads(curves: &[NodeCurve], loads: &[f64]) -> f64 {
    curves
        .iter()
        .zip(loads)
        .map(|(c, &l)| c.latency(l))
        .fold(0.0, f64::max)
}
