//! In-network aggregation (INA) message algebra.
//!
//! Users emit a weighted packet `(weight, payload)`. An edge node merges the
//! packets of one scheduling partition into a single message carrying the
//! total weight and the weighted mean. The cloud merges direct packets and
//! edge messages per partition, then combines partitions into the new global
//! model `psi' = z * psi + sum(w * x) / sum(w)`, where `z = 1` for the
//! primal-dual method and `z = 0` for the primal method.
//!
//! Means are carried as [`Wide`] values, so the two-level merge reproduces
//! the flat weighted mean to well below `f64` resolution.

mod wide;
pub mod wire;

use serde::{Deserialize, Serialize};

pub use wide::Wide;

use crate::error::{Error, Result};
use crate::latency::{Assignment, Protocol};
use crate::model::CLOUD;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// FedAvg-style: users send local models weighted by sample count.
    Primal,
    /// CoCoA-style: users send dual-induced updates with unit weight.
    PrimalDual,
}

impl AggregationMode {
    /// The `z` coefficient on the previous global model.
    pub fn z(self) -> f64 {
        match self {
            AggregationMode::Primal => 0.0,
            AggregationMode::PrimalDual => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMessage {
    pub mode: AggregationMode,
    pub weight: f64,
    pub payload: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMessage {
    pub mode: AggregationMode,
    /// Sum of constituent packet weights.
    pub weight: f64,
    /// Weight-normalized mean of constituent payloads.
    pub mean: Vec<Wide>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionAggregate {
    pub mode: AggregationMode,
    pub weight: f64,
    pub mean: Vec<Wide>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalModel {
    pub mode: AggregationMode,
    pub psi: Vec<f64>,
}

/// Builds user `k`'s packet: `(n_k, w_k)` for primal, `(1, dv_k)` for primal-dual.
pub fn make_user_packet(
    mode: AggregationMode,
    samples: u64,
    payload: Vec<f64>,
) -> Result<LocalMessage> {
    if samples == 0 {
        return Err(Error::invalid(
            "a user with no samples cannot produce a packet",
        ));
    }
    let weight = match mode {
        AggregationMode::Primal => samples as f64,
        AggregationMode::PrimalDual => 1.0,
    };
    Ok(LocalMessage {
        mode,
        weight,
        payload,
    })
}

/// Running weighted sum over packets or messages.
struct Accumulator {
    mode: AggregationMode,
    weight: f64,
    sum: Vec<Wide>,
}

impl Accumulator {
    fn new(mode: AggregationMode, dim: usize) -> Self {
        Accumulator {
            mode,
            weight: 0.0,
            sum: vec![Wide::ZERO; dim],
        }
    }

    fn check(&self, mode: AggregationMode, dim: usize) -> Result<()> {
        if mode != self.mode {
            return Err(Error::MixedMode);
        }
        if dim != self.sum.len() {
            return Err(Error::DimensionMismatch {
                expected: self.sum.len(),
                got: dim,
            });
        }
        Ok(())
    }

    fn add_packet(&mut self, p: &LocalMessage) -> Result<()> {
        self.check(p.mode, p.payload.len())?;
        if !(p.weight > 0.0 && p.weight.is_finite()) {
            return Err(Error::invalid(format!(
                "packet weight must be positive, got {}",
                p.weight
            )));
        }
        self.weight += p.weight;
        for (s, &x) in self.sum.iter_mut().zip(&p.payload) {
            *s += Wide::product(x, p.weight);
        }
        Ok(())
    }

    fn add_mean(&mut self, mode: AggregationMode, weight: f64, mean: &[Wide]) -> Result<()> {
        self.check(mode, mean.len())?;
        self.weight += weight;
        for (s, &x) in self.sum.iter_mut().zip(mean) {
            *s += x.mul_f64(weight);
        }
        Ok(())
    }

    fn mean(self) -> (f64, Vec<Wide>) {
        let w = self.weight;
        (w, self.sum.into_iter().map(|s| s.div_f64(w)).collect())
    }
}

fn finish(prev: &[f64], mode: AggregationMode, mean: Vec<Wide>) -> Result<GlobalModel> {
    let psi: Vec<f64> = match mode {
        AggregationMode::Primal => mean.into_iter().map(Wide::to_f64).collect(),
        AggregationMode::PrimalDual => {
            if prev.len() != mean.len() {
                return Err(Error::DimensionMismatch {
                    expected: mean.len(),
                    got: prev.len(),
                });
            }
            prev.iter()
                .zip(mean)
                .map(|(&p, m)| (Wide::from(p) + m).to_f64())
                .collect()
        }
    };
    if psi.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("aggregated model has non-finite entries"));
    }
    Ok(GlobalModel { mode, psi })
}

/// Star-topology aggregation: every packet reaches the cloud individually.
pub fn flat_aggregate(
    prev: &[f64],
    packets: &[LocalMessage],
    mode: AggregationMode,
) -> Result<GlobalModel> {
    let first = packets.first().ok_or(Error::EmptyAggregate("no packets"))?;
    let mut acc = Accumulator::new(mode, first.payload.len());
    for p in packets {
        acc.add_packet(p)?;
    }
    finish(prev, mode, acc.mean().1)
}

/// Merges the packets an edge node received for one partition.
pub fn edge_aggregate<'a>(
    packets: impl IntoIterator<Item = &'a LocalMessage>,
) -> Result<EdgeMessage> {
    let mut packets = packets.into_iter().peekable();
    let first = packets
        .peek()
        .ok_or(Error::EmptyAggregate("edge received no packets"))?;
    let mut acc = Accumulator::new(first.mode, first.payload.len());
    for p in packets {
        acc.add_packet(p)?;
    }
    let mode = acc.mode;
    let (weight, mean) = acc.mean();
    Ok(EdgeMessage { mode, weight, mean })
}

impl EdgeMessage {
    /// Pairwise merge of two messages, as if one node had received both packet sets.
    pub fn merge(&self, other: &EdgeMessage) -> Result<EdgeMessage> {
        let mut acc = Accumulator::new(self.mode, self.mean.len());
        acc.add_mean(self.mode, self.weight, &self.mean)?;
        acc.add_mean(other.mode, other.weight, &other.mean)?;
        let (weight, mean) = acc.mean();
        Ok(EdgeMessage {
            mode: self.mode,
            weight,
            mean,
        })
    }

    pub fn mean_f64(&self) -> Vec<f64> {
        self.mean.iter().map(|x| x.to_f64()).collect()
    }
}

/// Cloud-side merge of one partition: direct packets plus edge messages.
pub fn cloud_merge(direct: &[LocalMessage], edges: &[EdgeMessage]) -> Result<PartitionAggregate> {
    let (mode, dim) = match (direct.first(), edges.first()) {
        (Some(p), _) => (p.mode, p.payload.len()),
        (None, Some(e)) => (e.mode, e.mean.len()),
        (None, None) => {
            return Err(Error::EmptyAggregate(
                "cloud received nothing for this partition",
            ))
        }
    };
    let mut acc = Accumulator::new(mode, dim);
    for p in direct {
        acc.add_packet(p)?;
    }
    for e in edges {
        acc.add_mean(e.mode, e.weight, &e.mean)?;
    }
    let (weight, mean) = acc.mean();
    Ok(PartitionAggregate { mode, weight, mean })
}

impl PartitionAggregate {
    pub fn mean_f64(&self) -> Vec<f64> {
        self.mean.iter().map(|x| x.to_f64()).collect()
    }
}

/// Combines the non-empty partition aggregates into the new global model.
pub fn global_update(
    prev: &[f64],
    partitions: &[PartitionAggregate],
    mode: AggregationMode,
) -> Result<GlobalModel> {
    let first = partitions
        .first()
        .ok_or(Error::EmptyAggregate("every partition is empty"))?;
    let mut acc = Accumulator::new(mode, first.mean.len());
    for p in partitions {
        acc.add_mean(p.mode, p.weight, &p.mean)?;
    }
    finish(prev, mode, acc.mean().1)
}

/// What the cloud received during one two-level aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutedAggregation {
    pub model: GlobalModel,
    pub partitions: Vec<PartitionAggregate>,
    /// Messages received at the cloud (direct packets plus edge messages).
    pub cloud_messages: usize,
    pub edge_messages: Vec<(usize, usize, EdgeMessage)>,
}

/// Runs the full INA pipeline: packets are grouped by `(partition, node)`,
/// merged at their edge node, merged per partition at the cloud, and combined.
///
/// `packets[i]` belongs to the i-th user of `assignment`; `partition_of[i]`
/// is its scheduling partition (0 or 1).
pub fn aggregate_routed(
    prev: &[f64],
    packets: &[LocalMessage],
    assignment: &Assignment,
    partition_of: &[usize],
    num_nodes: usize,
    mode: AggregationMode,
) -> Result<RoutedAggregation> {
    if packets.len() != assignment.len() || partition_of.len() != assignment.len() {
        return Err(Error::invalid(
            "packets, assignment and partitions must have equal length",
        ));
    }
    let num_parts = partition_of.iter().copied().max().map_or(0, |p| p + 1);
    // buckets[j][m] holds indices of packets of partition j routed to node m
    let mut buckets = vec![vec![Vec::new(); num_nodes]; num_parts];
    for (i, (&m, &j)) in assignment.nodes().iter().zip(partition_of).enumerate() {
        if m >= num_nodes {
            return Err(Error::invalid(format!("node {m} out of range")));
        }
        buckets[j][m].push(i);
    }

    let mut partitions = Vec::new();
    let mut edge_messages = Vec::new();
    let mut cloud_messages = 0;
    for (j, nodes) in buckets.iter().enumerate() {
        let direct: Vec<LocalMessage> = nodes[CLOUD].iter().map(|&i| packets[i].clone()).collect();
        let mut edges = Vec::new();
        for (m, members) in nodes.iter().enumerate().skip(1) {
            if members.is_empty() {
                continue;
            }
            let msg = edge_aggregate(members.iter().map(|&i| &packets[i]))?;
            edges.push(msg.clone());
            edge_messages.push((j, m, msg));
        }
        if direct.is_empty() && edges.is_empty() {
            continue;
        }
        cloud_messages += direct.len() + edges.len();
        partitions.push(cloud_merge(&direct, &edges)?);
    }
    let model = global_update(prev, &partitions, mode)?;
    Ok(RoutedAggregation {
        model,
        partitions,
        cloud_messages,
        edge_messages,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudLoad {
    pub models: usize,
    pub bits: f64,
}

impl CloudLoad {
    pub fn bytes(&self) -> f64 {
        self.bits / 8.0
    }
}

/// Models (and bits) arriving at the cloud for one aggregation of `assignment`.
///
/// With INC each loaded edge forwards one aggregate; otherwise every user's
/// model is relayed.
pub fn cloud_load_metrics(
    assignment: &Assignment,
    num_nodes: usize,
    model_bits: f64,
    protocol: Protocol,
) -> CloudLoad {
    let models = match protocol {
        Protocol::NonInc => assignment.len(),
        Protocol::Inc => {
            let loads = assignment.loads(num_nodes);
            loads[CLOUD] + loads[1..].iter().filter(|&&l| l > 0).count()
        }
    };
    CloudLoad {
        models,
        bits: models as f64 * model_bits,
    }
}
