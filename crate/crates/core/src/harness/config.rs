//! TOML experiment configuration.
//!
//! Capacities are written in Gbps and model sizes in MB (decimal units) and
//! converted to bits on load. Any numeric field marked as a sweep accepts
//! either a scalar or a list.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fl::{LossSpec, SyntheticRidge};
use crate::ina::AggregationMode;
use crate::model::{
    gbps_to_bps, megabytes_to_bits, ComputeTimeDist, GridSpec, ModelSpec, NodeCapacities,
};
use crate::scheduler::Scheme;

/// A scalar or a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(xs) => xs.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    /// Side of the square deployment area.
    pub area_m: f64,
    /// Edge-node grid as `[rows, cols]`; `[0, 0]` means no edge nodes.
    pub grid: [usize; 2],
    pub radius_m: f64,
    /// Number of users, or a sweep over it.
    pub users: OneOrMany<usize>,
    pub fronthaul_gbps: f64,
    pub backhaul_gbps: f64,
    pub cloud_uplink_gbps: f64,
    pub cloud_downlink_gbps: f64,
}

impl TopologyConfig {
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            area_side_m: self.area_m,
            rows: self.grid[0],
            cols: self.grid[1],
            coverage_radius_m: self.radius_m,
        }
    }

    pub fn capacities(&self) -> NodeCapacities {
        NodeCapacities {
            edge_fronthaul_bps: gbps_to_bps(self.fronthaul_gbps),
            edge_backhaul_bps: gbps_to_bps(self.backhaul_gbps),
            cloud_uplink_bps: gbps_to_bps(self.cloud_uplink_gbps),
            cloud_downlink_bps: gbps_to_bps(self.cloud_downlink_gbps),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Parameter count `d`.
    pub parameters: u64,
    #[serde(default = "default_codeword_bits")]
    pub codeword_bits: u32,
    /// Explicit model size, overriding `parameters × codeword_bits`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_mb: Option<f64>,
}

fn default_codeword_bits() -> u32 {
    32
}

impl ModelConfig {
    pub fn spec(&self) -> Result<ModelSpec> {
        let spec = ModelSpec::new(self.parameters, self.codeword_bits)?;
        match self.size_mb {
            Some(mb) => spec.with_size_bits(megabytes_to_bits(mb)),
            None => Ok(spec),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeConfig {
    pub t_min_s: f64,
    pub t_max_s: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_beta() -> f64 {
    1.55
}

impl ComputeConfig {
    pub fn dist(&self) -> ComputeTimeDist {
        ComputeTimeDist {
            t_min: self.t_min_s,
            t_max: self.t_max_s,
            beta: self.beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub scheme: Scheme,
    /// Explicit fast-window width; takes precedence over `quantile`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_t_s: Option<f64>,
    #[serde(default = "default_quantile")]
    pub quantile: f64,
    /// Threshold used only for regime reporting.
    #[serde(default = "default_eps0")]
    pub epsilon0: f64,
}

fn default_quantile() -> f64 {
    0.8
}

fn default_eps0() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMode {
    OnlyCloud,
    NonIncLb,
    IncAlg,
    IncLb,
}

impl RoutingMode {
    pub const ALL: [RoutingMode; 4] = [
        RoutingMode::OnlyCloud,
        RoutingMode::NonIncLb,
        RoutingMode::IncAlg,
        RoutingMode::IncLb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoutingMode::OnlyCloud => "only_cloud",
            RoutingMode::NonIncLb => "non_inc_lb",
            RoutingMode::IncAlg => "inc_alg",
            RoutingMode::IncLb => "inc_lb",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingConfig {
    pub modes: Vec<RoutingMode>,
    /// Roundings per partition; the best one is kept.
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_trials() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StragglerConfig {
    pub p_cloud: f64,
    pub p_edge: OneOrMany<f64>,
    pub v: OneOrMany<u32>,
    /// Monte Carlo trials per point; 0 skips the simulation.
    #[serde(default)]
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlExperimentConfig {
    pub modes: Vec<AggregationMode>,
    pub data: SyntheticRidge,
    pub xi: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    pub local_steps: usize,
    pub rounds: usize,
    /// Write the first round's packets to `ina_trace.bin`.
    #[serde(default)]
    pub trace: bool,
}

fn default_eta() -> f64 {
    0.02
}

impl FlExperimentConfig {
    pub fn loss(&self) -> LossSpec {
        LossSpec { xi: self.xi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_id")]
    pub experiment: String,
    pub seed: u64,
    pub topology: TopologyConfig,
    pub model: ModelConfig,
    pub compute: ComputeConfig,
    pub schedule: ScheduleConfig,
    pub routing: RoutingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub straggler: Option<StragglerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fl: Option<FlExperimentConfig>,
}

fn default_id() -> String {
    "run".to_owned()
}

fn check(ok: bool, path: &str, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(path, message()))
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    check(v > 0.0 && v.is_finite(), path, || {
        format!("must be positive, got {v}")
    })
}

fn probability(path: &str, p: f64) -> Result<()> {
    check((0.0..=1.0).contains(&p), path, || {
        format!("must lie in [0, 1], got {p}")
    })
}

fn nonempty<T>(path: &str, xs: &[T]) -> Result<()> {
    check(!xs.is_empty(), path, || "list must not be empty".to_owned())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The §VII-style default setup: 3×3 grid on 500 m, 150 m cells, 1 Gbps edges, 2 Gbps cloud, 232 MB model.
    pub fn reference() -> Self {
        ExperimentConfig {
            experiment: "reference".to_owned(),
            seed: 2021,
            topology: TopologyConfig {
                area_m: 500.0,
                grid: [3, 3],
                radius_m: 150.0,
                users: OneOrMany::One(1000),
                fronthaul_gbps: 1.0,
                backhaul_gbps: 1.0,
                cloud_uplink_gbps: 2.0,
                cloud_downlink_gbps: 2.0,
            },
            model: ModelConfig {
                parameters: 60_419_944,
                codeword_bits: 32,
                size_mb: Some(232.0),
            },
            compute: ComputeConfig {
                t_min_s: 0.2,
                t_max_s: 80.0,
                beta: default_beta(),
            },
            schedule: ScheduleConfig {
                scheme: Scheme::Bipartition,
                delta_t_s: None,
                quantile: default_quantile(),
                epsilon0: default_eps0(),
            },
            routing: RoutingConfig {
                modes: RoutingMode::ALL.to_vec(),
                trials: 1,
            },
            straggler: Some(StragglerConfig {
                p_cloud: 0.3,
                p_edge: OneOrMany::Many(vec![0.5, 0.3]),
                v: OneOrMany::Many(vec![0, 1, 2, 3, 4]),
                trials: 100_000,
            }),
            fl: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.topology;
        positive("topology.area_m", t.area_m)?;
        positive("topology.radius_m", t.radius_m)?;
        check(
            (t.grid[0] == 0) == (t.grid[1] == 0),
            "topology.grid",
            || "rows and cols must both be zero or both positive".to_owned(),
        )?;
        let users = t.users.values();
        nonempty("topology.users", &users)?;
        check(users.iter().all(|&k| k >= 1), "topology.users", || {
            "every K must be at least 1".to_owned()
        })?;
        positive("topology.fronthaul_gbps", t.fronthaul_gbps)?;
        positive("topology.backhaul_gbps", t.backhaul_gbps)?;
        positive("topology.cloud_uplink_gbps", t.cloud_uplink_gbps)?;
        positive("topology.cloud_downlink_gbps", t.cloud_downlink_gbps)?;

        check(self.model.parameters >= 1, "model.parameters", || {
            "must be at least 1".to_owned()
        })?;
        check(self.model.codeword_bits >= 1, "model.codeword_bits", || {
            "must be at least 1".to_owned()
        })?;
        if let Some(mb) = self.model.size_mb {
            positive("model.size_mb", mb)?;
        }

        let c = &self.compute;
        check(
            c.t_min_s > 0.0 && c.t_min_s.is_finite(),
            "compute.t_min_s",
            || format!("must be positive, got {}", c.t_min_s),
        )?;
        check(
            c.t_max_s >= c.t_min_s && c.t_max_s.is_finite(),
            "compute.t_max_s",
            || format!("must be at least t_min_s, got {}", c.t_max_s),
        )?;
        check(c.beta > 1.0 && c.beta.is_finite(), "compute.beta", || {
            format!("must exceed 1, got {}", c.beta)
        })?;

        let s = &self.schedule;
        if let Some(dt) = s.delta_t_s {
            check(dt >= 0.0 && dt.is_finite(), "schedule.delta_t_s", || {
                format!("must be nonnegative, got {dt}")
            })?;
        }
        check(
            s.quantile > 0.0 && s.quantile <= 1.0,
            "schedule.quantile",
            || format!("must lie in (0, 1], got {}", s.quantile),
        )?;
        check(
            s.epsilon0 > 0.0 && s.epsilon0 < 1.0,
            "schedule.epsilon0",
            || format!("must lie in (0, 1), got {}", s.epsilon0),
        )?;

        nonempty("routing.modes", &self.routing.modes)?;
        check(self.routing.trials >= 1, "routing.trials", || {
            "must be at least 1".to_owned()
        })?;

        if let Some(st) = &self.straggler {
            probability("straggler.p_cloud", st.p_cloud)?;
            let p_edge = st.p_edge.values();
            nonempty("straggler.p_edge", &p_edge)?;
            for p in p_edge {
                probability("straggler.p_edge", p)?;
            }
            nonempty("straggler.v", &st.v.values())?;
        }

        if let Some(fl) = &self.fl {
            nonempty("fl.modes", &fl.modes)?;
            positive("fl.xi", fl.xi)?;
            positive("fl.eta", fl.eta)?;
            check(fl.local_steps >= 1, "fl.local_steps", || {
                "must be at least 1".to_owned()
            })?;
            check(fl.data.dim >= 1, "fl.data.dim", || {
                "must be at least 1".to_owned()
            })?;
            check(fl.data.users >= 1, "fl.data.users", || {
                "must be at least 1".to_owned()
            })?;
            check(
                fl.data.samples_per_user >= 1,
                "fl.data.samples_per_user",
                || "must be at least 1".to_owned(),
            )?;
            check(fl.data.noise >= 0.0, "fl.data.noise", || {
                "must be nonnegative".to_owned()
            })?;
        }
        Ok(())
    }

    /// Returns a copy with the dotted key `param` set to `value` (TOML syntax).
    pub fn with_override(&self, param: &str, value: &str) -> Result<Self> {
        let mut tree: toml::Value =
            toml::Value::try_from(self).map_err(|e| Error::config(param, e.to_string()))?;
        let mut parsed: Option<toml::Value> = format!("x = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("x"))
            .or_else(|| Some(toml::Value::String(value.to_owned())));
        let mut node = &mut tree;
        let mut parts = param.split('.').peekable();
        while let Some(key) = parts.next() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::config(param, format!("`{key}` is not inside a table")))?;
            if parts.peek().is_none() {
                let value = match (table.get(key), parsed.take()) {
                    (Some(toml::Value::Float(_)), Some(toml::Value::Integer(i))) => {
                        toml::Value::Float(i as f64)
                    }
                    (_, v) => v.expect("set once"),
                };
                table.insert(key.to_owned(), value);
                break;
            }
            node = table
                .get_mut(key)
                .ok_or_else(|| Error::config(param, format!("no section `{key}`")))?;
        }
        let config: ExperimentConfig = tree
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(param, e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_roundtrips() {
        let c = ExperimentConfig::reference();
        c.validate().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn field_paths_in_errors() {
        let mut c = ExperimentConfig::reference();
        c.topology.radius_m = -1.0;
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("topology.radius_m"), "{err}");
        let mut c = ExperimentConfig::reference();
        c.routing.modes.clear();
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("routing.modes"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = ExperimentConfig::reference()
            .to_toml()
            .replace("[compute]", "[compute]\nbogus = 1");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn overrides() {
        let c = ExperimentConfig::reference();
        let d = c.with_override("topology.users", "[10, 20]").unwrap();
        assert_eq!(d.topology.users.values(), vec![10, 20]);
        let d = c.with_override("schedule.scheme", "s0").unwrap();
        assert_eq!(d.schedule.scheme, Scheme::S0);
        let d = c.with_override("model.size_mb", "88").unwrap();
        assert_eq!(d.model.size_mb, Some(88.0));
        assert!(c.with_override("nope.users", "1").is_err());
        assert!(c.with_override("compute.beta", "0.5").is_err());
    }
}
