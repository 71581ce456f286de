//! Network topology, model sizes and local computation times.
//!
//! Units are SI throughout: capacities in bits/s, sizes in bits, times in
//! seconds, distances in meters. Decimal prefixes are used for conversions
//! (1 MB = 8e6 bits, 1 Gbps = 1e9 bits/s).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Node id of the cloud server. Edge nodes are numbered `1..=M`.
pub const CLOUD: usize = 0;

pub const BITS_PER_MEGABYTE: f64 = 8.0e6;
pub const BITS_PER_SECOND_PER_GBPS: f64 = 1.0e9;

pub fn megabytes_to_bits(mb: f64) -> f64 {
    mb * BITS_PER_MEGABYTE
}

pub fn gbps_to_bps(gbps: f64) -> f64 {
    gbps * BITS_PER_SECOND_PER_GBPS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Number of model parameters.
    pub parameters: u64,
    pub codeword_bits: u32,
    /// Explicit model size in bits; wins over the parameter count when set.
    pub override_size_bits: Option<f64>,
}

impl ModelSpec {
    pub fn new(parameters: u64, codeword_bits: u32) -> Result<Self> {
        let spec = ModelSpec {
            parameters,
            codeword_bits,
            override_size_bits: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_size_bits(mut self, bits: f64) -> Result<Self> {
        self.override_size_bits = Some(bits);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.parameters < 1 {
            return Err(Error::invalid("model must have at least one parameter"));
        }
        if self.codeword_bits < 1 {
            return Err(Error::invalid("codeword length must be at least one bit"));
        }
        if let Some(bits) = self.override_size_bits {
            if !(bits > 0.0 && bits.is_finite()) {
                return Err(Error::invalid(format!(
                    "model size override {bits} must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// Size of one model message in bits: the override when present, else
/// `(d + 1) * codeword_bits` (the extra slot carries the aggregation weight).
pub fn model_size_bits(spec: &ModelSpec) -> f64 {
    match spec.override_size_bits {
        Some(bits) => bits,
        None => (spec.parameters as f64 + 1.0) * f64::from(spec.codeword_bits),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    /// Local sample count `n_k`.
    pub samples: u64,
    pub cycles_per_sample: f64,
    /// CPU frequency in cycles/s.
    pub cpu_hz: f64,
    pub position: [f64; 2],
}

impl Default for UserProfile {
    fn default() -> Self {
        UserProfile {
            samples: 1,
            cycles_per_sample: 1.0e9,
            cpu_hz: 1.0e9,
            position: [0.0, 0.0],
        }
    }
}

impl UserProfile {
    fn validate(&self) -> Result<()> {
        if self.samples < 1 {
            return Err(Error::invalid("user must hold at least one sample"));
        }
        if !(self.cycles_per_sample > 0.0 && self.cpu_hz > 0.0) {
            return Err(Error::invalid(
                "cycles per sample and CPU frequency must be positive",
            ));
        }
        Ok(())
    }
}

/// Local training time over `local_iterations` passes: `L * c_k * n_k / f_k`.
pub fn compute_time(profile: &UserProfile, local_iterations: u32) -> f64 {
    f64::from(local_iterations) * profile.cycles_per_sample * profile.samples as f64
        / profile.cpu_hz
}

/// Link capacities applied uniformly to every edge node, plus the cloud links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeCapacities {
    pub edge_fronthaul_bps: f64,
    pub edge_backhaul_bps: f64,
    pub cloud_uplink_bps: f64,
    pub cloud_downlink_bps: f64,
}

impl NodeCapacities {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("edge fronthaul", self.edge_fronthaul_bps),
            ("edge backhaul", self.edge_backhaul_bps),
            ("cloud uplink", self.cloud_uplink_bps),
            ("cloud downlink", self.cloud_downlink_bps),
        ];
        for (name, value) in all {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} capacity must be positive, got {value}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeNode {
    pub position: [f64; 2],
    pub fronthaul_bps: f64,
    pub backhaul_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudNode {
    pub uplink_bps: f64,
    pub downlink_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    users: Vec<UserProfile>,
    edges: Vec<EdgeNode>,
    cloud: CloudNode,
    /// Per user, the sorted node ids it may send to. Always starts with [`CLOUD`].
    reachability: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(
        users: Vec<UserProfile>,
        edges: Vec<EdgeNode>,
        cloud: CloudNode,
        reachability: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::invalid("topology needs at least one user"));
        }
        if reachability.len() != users.len() {
            return Err(Error::invalid("one reachability set per user is required"));
        }
        for user in &users {
            user.validate()?;
        }
        if !(cloud.uplink_bps > 0.0 && cloud.downlink_bps > 0.0) {
            return Err(Error::invalid("cloud capacities must be positive"));
        }
        for (m, edge) in edges.iter().enumerate() {
            if !(edge.fronthaul_bps > 0.0 && edge.backhaul_bps > 0.0) {
                return Err(Error::invalid(format!(
                    "edge {} capacities must be positive",
                    m + 1
                )));
            }
        }
        let mut normalized = Vec::with_capacity(reachability.len());
        for (k, mut set) in reachability.into_iter().enumerate() {
            set.push(CLOUD);
            set.sort_unstable();
            set.dedup();
            if let Some(&bad) = set.iter().find(|&&m| m > edges.len()) {
                return Err(Error::invalid(format!("user {k} lists unknown node {bad}")));
            }
            normalized.push(set);
        }
        Ok(Topology {
            users,
            edges,
            cloud,
            reachability: normalized,
        })
    }

    /// `k` default users attached only to the cloud.
    pub fn star(k: usize, cloud: CloudNode) -> Result<Self> {
        Topology::new(
            vec![UserProfile::default(); k],
            Vec::new(),
            cloud,
            vec![vec![CLOUD]; k],
        )
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Number of nodes including the cloud (`M + 1`).
    pub fn num_nodes(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn users(&self) -> &[UserProfile] {
        &self.users
    }

    pub fn edges(&self) -> &[EdgeNode] {
        &self.edges
    }

    /// Edge node `m`, `1 <= m <= M`.
    pub fn edge(&self, m: usize) -> &EdgeNode {
        &self.edges[m - 1]
    }

    pub fn cloud(&self) -> &CloudNode {
        &self.cloud
    }

    pub fn reachable(&self, user: usize) -> &[usize] {
        &self.reachability[user]
    }

    pub fn can_reach(&self, user: usize, node: usize) -> bool {
        self.reachability[user].binary_search(&node).is_ok()
    }

    /// Replaces the user profiles, keeping positions and reachability.
    pub fn with_profiles(
        mut self,
        profiles: impl IntoIterator<Item = UserProfile>,
    ) -> Result<Self> {
        let profiles: Vec<_> = profiles.into_iter().collect();
        if profiles.len() != self.users.len() {
            return Err(Error::invalid("profile count must match user count"));
        }
        for (user, mut profile) in self.users.iter_mut().zip(profiles) {
            profile.validate()?;
            profile.position = user.position;
            *user = profile;
        }
        Ok(self)
    }

    /// The sub-topology restricted to `users`, in the given order.
    pub fn subset(&self, users: &[usize]) -> Result<Topology> {
        if let Some(&bad) = users.iter().find(|&&k| k >= self.users.len()) {
            return Err(Error::invalid(format!("unknown user {bad}")));
        }
        Ok(Topology {
            users: users.iter().map(|&k| self.users[k]).collect(),
            edges: self.edges.clone(),
            cloud: self.cloud,
            reachability: users
                .iter()
                .map(|&k| self.reachability[k].clone())
                .collect(),
        })
    }
}

/// Layout of a regular edge deployment inside a square area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub area_side_m: f64,
    pub rows: usize,
    pub cols: usize,
    pub coverage_radius_m: f64,
}

impl GridSpec {
    /// Edge positions at the cell centers of a `rows x cols` grid.
    pub fn edge_positions(&self) -> Vec<[f64; 2]> {
        let (dx, dy) = (
            self.area_side_m / self.cols as f64,
            self.area_side_m / self.rows as f64,
        );
        (0..self.rows)
            .flat_map(|r| {
                (0..self.cols).map(move |c| [(c as f64 + 0.5) * dx, (r as f64 + 0.5) * dy])
            })
            .collect()
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Places edge nodes on a regular grid and `k` users uniformly over the part
/// of the area covered by at least one edge disk. With no edge nodes the users
/// are uniform over the whole area and reach only the cloud.
pub fn build_grid_topology(
    grid: &GridSpec,
    k: usize,
    capacities: &NodeCapacities,
    seed: u64,
) -> Result<Topology> {
    if !(grid.area_side_m > 0.0 && grid.area_side_m.is_finite()) {
        return Err(Error::invalid("area side must be positive"));
    }
    if !(grid.coverage_radius_m > 0.0) {
        return Err(Error::invalid("coverage radius must be positive"));
    }
    if k < 1 {
        return Err(Error::invalid("at least one user is required"));
    }
    capacities.validate()?;

    let side = grid.area_side_m;
    let radius = grid.coverage_radius_m;
    let centers = if grid.rows == 0 || grid.cols == 0 {
        Vec::new()
    } else {
        grid.edge_positions()
    };
    let edges: Vec<EdgeNode> = centers
        .iter()
        .map(|&position| EdgeNode {
            position,
            fronthaul_bps: capacities.edge_fronthaul_bps,
            backhaul_bps: capacities.edge_backhaul_bps,
        })
        .collect();

    let mut rng = seed::rng(seed);
    let mut users = Vec::with_capacity(k);
    let mut reachability = Vec::with_capacity(k);
    while users.len() < k {
        let p = [rng.random::<f64>() * side, rng.random::<f64>() * side];
        let mut reach = vec![CLOUD];
        reach.extend(
            centers
                .iter()
                .enumerate()
                .filter(|(_, &c)| distance(p, c) <= radius)
                .map(|(m, _)| m + 1),
        );
        if !centers.is_empty() && reach.len() == 1 {
            continue;
        }
        users.push(UserProfile {
            position: p,
            ..UserProfile::default()
        });
        reachability.push(reach);
    }

    Topology::new(
        users,
        edges,
        CloudNode {
            uplink_bps: capacities.cloud_uplink_bps,
            downlink_bps: capacities.cloud_downlink_bps,
        },
        reachability,
    )
}

/// Power-law local computation time truncated to `[t_min, t_max]`,
/// with density proportional to `t^-beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeTimeDist {
    pub t_min: f64,
    pub t_max: f64,
    pub beta: f64,
}

impl ComputeTimeDist {
    pub fn new(t_min: f64, t_max: f64, beta: f64) -> Result<Self> {
        let dist = ComputeTimeDist { t_min, t_max, beta };
        dist.validate()?;
        Ok(dist)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_min > 0.0 && self.t_min <= self.t_max && self.t_max.is_finite()) {
            return Err(Error::invalid(format!(
                "compute-time bounds must satisfy 0 < t_min <= t_max, got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!(
                "power-law exponent must exceed 1, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    fn tail_ratio(&self) -> f64 {
        (self.t_max / self.t_min).powf(1.0 - self.beta)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t <= self.t_min {
            return 0.0;
        }
        if t >= self.t_max {
            return 1.0;
        }
        (1.0 - (t / self.t_min).powf(1.0 - self.beta)) / (1.0 - self.tail_ratio())
    }

    /// Inverse CDF; `quantile(0) = t_min`, `quantile(1) = t_max`.
    pub fn quantile(&self, u: f64) -> f64 {
        if self.t_min == self.t_max {
            return self.t_min;
        }
        let u = u.clamp(0.0, 1.0);
        if u == 1.0 {
            return self.t_max;
        }
        let t = self.t_min * (1.0 - u * (1.0 - self.tail_ratio())).powf(1.0 / (1.0 - self.beta));
        t.clamp(self.t_min, self.t_max)
    }
}

/// `k` i.i.d. draws from `dist`, reproducible per seed.
pub fn sample_compute_times(k: usize, dist: &ComputeTimeDist, seed: u64) -> Result<Vec<f64>> {
    dist.validate()?;
    let mut rng = seed::rng(seed);
    Ok((0..k).map(|_| dist.quantile(rng.random::<f64>())).collect())
}
