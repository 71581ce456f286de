use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fl::{self, Dataset, FlConfig, FlState, Routing};
use crate::ina::{cloud_load_metrics, wire, AggregationMode};
use crate::latency::{evaluate_assignment, Assignment, Protocol};
use crate::model::{build_grid_topology, model_size_bits, sample_compute_times, Topology, CLOUD};
use crate::router::{approx_bound, relax_and_round, solve_lp, LpResult};
use crate::scheduler::{
    baseline_schedule, bipartition_schedule, delta_t_for_quantile, ScheduleResult, Scheme,
};
use crate::seed;

use super::config::{ExperimentConfig, FlExperimentConfig, RoutingMode};
use super::csvout::{fmt_g9, fmt_opt, write_csv};
use super::straggler::{simulate_straggler, straggler_probability};

pub const RESULT_HEADER: [&str; 18] = [
    "experiment_id",
    "K",
    "model_bits",
    "scheme",
    "routing_mode",
    "T_down_s",
    "T_cp_max_s",
    "T_up_s",
    "T_total_s",
    "lp_lower_bound_s",
    "cloud_rx_models",
    "cloud_rx_bytes",
    "approx_bound_ratio",
    "seed",
    "p1_users",
    "p1_start_s",
    "t_up_p1_s",
    "t_up_p2_s",
];

/// One (sweep point, routing mode) outcome.
///
/// Uplink and lower-bound columns add up the per-partition values, so the
/// bounds of each partition carry over to the row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment_id: String,
    pub k: usize,
    pub model_bits: f64,
    pub scheme: Scheme,
    pub routing_mode: RoutingMode,
    pub t_down: f64,
    pub t_cp_max: f64,
    pub t_up: f64,
    pub t_total: f64,
    /// Relaxed INC latency summed over partitions.
    pub lp_lower_bound: Option<f64>,
    /// Models arriving at the cloud; fractional for relaxed modes.
    pub cloud_rx_models: f64,
    pub cloud_rx_bytes: f64,
    /// Largest rounding bound among partitions with at least two users.
    pub approx_bound_ratio: Option<f64>,
    pub seed: u64,
    pub p1_users: usize,
    pub p1_start: f64,
    pub t_up_p1: f64,
    pub t_up_p2: f64,
}

impl ResultRow {
    pub fn record(&self) -> Vec<String> {
        vec![
            self.experiment_id.clone(),
            self.k.to_string(),
            fmt_g9(self.model_bits),
            self.scheme.as_str().to_owned(),
            self.routing_mode.as_str().to_owned(),
            fmt_g9(self.t_down),
            fmt_g9(self.t_cp_max),
            fmt_g9(self.t_up),
            fmt_g9(self.t_total),
            fmt_opt(self.lp_lower_bound),
            fmt_g9(self.cloud_rx_models),
            fmt_g9(self.cloud_rx_bytes),
            fmt_opt(self.approx_bound_ratio),
            self.seed.to_string(),
            self.p1_users.to_string(),
            fmt_g9(self.p1_start),
            fmt_g9(self.t_up_p1),
            fmt_g9(self.t_up_p2),
        ]
    }

    /// Re-derives the total from the component columns.
    pub fn recompute_total(&self) -> f64 {
        match self.scheme {
            Scheme::S0 | Scheme::S1 => self.t_down + self.t_cp_max + self.t_up,
            Scheme::Bipartition => {
                (self.p1_start + self.t_up_p1).max(self.t_down + self.t_cp_max) + self.t_up_p2
            }
        }
    }
}

/// Everything computed for one user partition.
struct PartitionRoutes {
    users: Vec<usize>,
    inc_lp: LpResult,
    non_inc_lp: Option<LpResult>,
    rounded: Option<(Assignment, f64)>,
    only_cloud_t_up: f64,
    ratio: Option<f64>,
}

impl PartitionRoutes {
    fn compute(
        topology: &Topology,
        users: Vec<usize>,
        bits: f64,
        modes: &[RoutingMode],
        seed_value: u64,
        trials: usize,
    ) -> Result<Self> {
        let inc_lp = solve_lp(topology, &users, bits, Protocol::Inc)?;
        let non_inc_lp = if modes.contains(&RoutingMode::NonIncLb) {
            Some(solve_lp(topology, &users, bits, Protocol::NonInc)?)
        } else {
            None
        };
        let rounded = if modes.contains(&RoutingMode::IncAlg) {
            let outcome =
                relax_and_round(topology, &users, bits, Protocol::Inc, seed_value, trials)?;
            Some((outcome.assignment, outcome.t_up))
        } else {
            None
        };
        let only_cloud = Assignment::new(users.clone(), vec![CLOUD; users.len()])?;
        let only_cloud_t_up = evaluate_assignment(&only_cloud, topology, bits, Protocol::Inc)?.t_up;
        let ratio = if users.len() >= 2 {
            Some(approx_bound(users.len(), inc_lp.lower_bound)?.ratio)
        } else {
            None
        };
        Ok(PartitionRoutes {
            users,
            inc_lp,
            non_inc_lp,
            rounded,
            only_cloud_t_up,
            ratio,
        })
    }

    fn t_up(&self, mode: RoutingMode) -> f64 {
        match mode {
            RoutingMode::OnlyCloud => self.only_cloud_t_up,
            RoutingMode::NonIncLb => {
                self.non_inc_lp
                    .as_ref()
                    .expect("computed for this mode")
                    .lower_bound
            }
            RoutingMode::IncAlg => self.rounded.as_ref().expect("computed for this mode").1,
            RoutingMode::IncLb => self.inc_lp.lower_bound,
        }
    }

    fn cloud_models(&self, mode: RoutingMode, topology: &Topology, bits: f64) -> f64 {
        match mode {
            RoutingMode::OnlyCloud | RoutingMode::NonIncLb => self.users.len() as f64,
            RoutingMode::IncAlg => {
                let (a, _) = self.rounded.as_ref().expect("computed for this mode");
                cloud_load_metrics(a, topology.num_nodes(), bits, Protocol::Inc).models as f64
            }
            RoutingMode::IncLb => {
                let loads = &self.inc_lp.loads;
                loads[CLOUD] + loads[1..].iter().map(|&l| l.min(1.0)).sum::<f64>()
            }
        }
    }
}

/// Fast-window width for a config: the explicit value or the configured quantile.
pub fn resolve_delta_t(config: &ExperimentConfig) -> Result<f64> {
    match config.schedule.delta_t_s {
        Some(dt) => Ok(dt),
        None => delta_t_for_quantile(&config.compute.dist(), config.schedule.quantile),
    }
}

/// Computes the rows of one sweep point (one value of `K`).
pub fn run_point(config: &ExperimentConfig, point: usize, k: usize) -> Result<Vec<ResultRow>> {
    let root = config.seed;
    let topology = build_grid_topology(
        &config.topology.grid_spec(),
        k,
        &config.topology.capacities(),
        seed::derive(root, &[point as u64, 0]),
    )?;
    let times = sample_compute_times(
        k,
        &config.compute.dist(),
        seed::derive(root, &[point as u64, 1]),
    )?;
    let bits = model_size_bits(&config.model.spec()?);
    let cloud = *topology.cloud();
    let t_down = bits / cloud.downlink_bps;
    let modes = &config.routing.modes;
    let trials = config.routing.trials;
    let scheme = config.schedule.scheme;
    let delta_t = resolve_delta_t(config)?;

    let parts: Vec<Vec<usize>> = match scheme {
        Scheme::S0 | Scheme::S1 => vec![(0..k).collect()],
        Scheme::Bipartition => {
            let t_min = times.iter().copied().fold(f64::INFINITY, f64::min);
            let (p1, p2): (Vec<usize>, Vec<usize>) =
                (0..k).partition(|&i| times[i] <= t_min + delta_t);
            [p1, p2].into_iter().filter(|p| !p.is_empty()).collect()
        }
    };
    let routes = parts
        .into_iter()
        .enumerate()
        .map(|(j, users)| {
            PartitionRoutes::compute(
                &topology,
                users,
                bits,
                modes,
                seed::derive(root, &[point as u64, 2, j as u64]),
                trials,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let lp_lower_bound: f64 = routes.iter().map(|r| r.inc_lp.lower_bound).sum();
    let ratio = routes.iter().filter_map(|r| r.ratio).reduce(f64::max);

    modes
        .iter()
        .map(|&mode| {
            let lookup = |users: &[usize]| {
                routes
                    .iter()
                    .find(|r| r.users == users)
                    .map(|r| r.t_up(mode))
                    .ok_or_else(|| Error::invalid("scheduler asked for an unknown partition"))
            };
            let schedule: ScheduleResult = match scheme {
                Scheme::S0 | Scheme::S1 => {
                    let all: Vec<usize> = (0..k).collect();
                    baseline_schedule(
                        scheme,
                        &times,
                        lookup(&all)?,
                        bits,
                        cloud.uplink_bps,
                        cloud.downlink_bps,
                    )?
                }
                Scheme::Bipartition => bipartition_schedule(&times, delta_t, t_down, lookup)?,
            };
            let models: f64 = routes
                .iter()
                .map(|r| r.cloud_models(mode, &topology, bits))
                .sum();
            let t_up = match scheme {
                Scheme::Bipartition => schedule.t_up_p1 + schedule.t_up_p2,
                _ => schedule.t_up_p1,
            };
            Ok(ResultRow {
                experiment_id: config.experiment.clone(),
                k,
                model_bits: bits,
                scheme,
                routing_mode: mode,
                t_down: schedule.t_down,
                t_cp_max: schedule.t_cp_max,
                t_up,
                t_total: schedule.total,
                lp_lower_bound: Some(lp_lower_bound),
                cloud_rx_models: models,
                cloud_rx_bytes: models * bits / 8.0,
                approx_bound_ratio: ratio,
                seed: root,
                p1_users: schedule.p1.len(),
                p1_start: schedule.p1_start,
                t_up_p1: schedule.t_up_p1,
                t_up_p2: schedule.t_up_p2,
            })
        })
        .collect()
}

/// All result rows, in sweep order then routing-mode order.
pub fn compute_rows(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let points = config.topology.users.values();
    let rows = points
        .par_iter()
        .enumerate()
        .map(|(i, &k)| run_point(config, i, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub const STRAGGLER_HEADER: [&str; 8] = [
    "p_cloud",
    "p_edge",
    "v",
    "analytic",
    "reduction",
    "simulated",
    "sigma",
    "trials",
];

#[derive(Debug, Clone, PartialEq)]
pub struct StragglerRow {
    pub p_cloud: f64,
    pub p_edge: f64,
    pub v: u32,
    pub analytic: f64,
    /// `p_cloud / P_s`: improvement over having no extra edge.
    pub reduction: f64,
    pub simulated: Option<f64>,
    pub sigma: Option<f64>,
    pub trials: u64,
}

impl StragglerRow {
    pub fn record(&self) -> Vec<String> {
        vec![
            fmt_g9(self.p_cloud),
            fmt_g9(self.p_edge),
            self.v.to_string(),
            fmt_g9(self.analytic),
            fmt_g9(self.reduction),
            fmt_opt(self.simulated),
            fmt_opt(self.sigma),
            self.trials.to_string(),
        ]
    }
}

pub fn compute_straggler_rows(config: &ExperimentConfig) -> Result<Vec<StragglerRow>> {
    let Some(st) = &config.straggler else {
        return Ok(Vec::new());
    };
    let points: Vec<(f64, u32)> = st
        .p_edge
        .values()
        .into_iter()
        .flat_map(|p| st.v.values().into_iter().map(move |v| (p, v)))
        .collect();
    points
        .par_iter()
        .enumerate()
        .map(|(i, &(p_edge, v))| {
            let analytic = straggler_probability(st.p_cloud, p_edge, v)?;
            let sim = if st.trials > 0 {
                Some(simulate_straggler(
                    st.p_cloud,
                    p_edge,
                    v,
                    st.trials,
                    seed::derive(config.seed, &[200, i as u64]),
                )?)
            } else {
                None
            };
            Ok(StragglerRow {
                p_cloud: st.p_cloud,
                p_edge,
                v,
                analytic,
                reduction: if analytic > 0.0 {
                    st.p_cloud / analytic
                } else {
                    f64::INFINITY
                },
                simulated: sim.map(|s| s.simulated),
                sigma: sim.map(|s| s.sigma),
                trials: st.trials,
            })
        })
        .collect()
}

pub const FL_HEADER: [&str; 6] = [
    "mode",
    "round",
    "primal_objective",
    "dual_objective",
    "duality_gap",
    "psi_max_abs_diff_vs_star",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FlRow {
    pub mode: AggregationMode,
    pub round: usize,
    pub primal_objective: f64,
    pub dual_objective: Option<f64>,
    /// Largest entry-wise difference between in-network and star-routed models.
    pub psi_diff_vs_star: f64,
}

impl FlRow {
    pub fn record(&self) -> Vec<String> {
        let mode = match self.mode {
            AggregationMode::Primal => "primal",
            AggregationMode::PrimalDual => "primal_dual",
        };
        vec![
            mode.to_owned(),
            self.round.to_string(),
            fmt_g9(self.primal_objective),
            fmt_opt(self.dual_objective),
            fmt_opt(self.dual_objective.map(|d| self.primal_objective - d)),
            fmt_g9(self.psi_diff_vs_star),
        ]
    }
}

/// Routing of the FL users: relax-and-round per scheduling partition on a grid topology.
pub fn fl_routing(config: &ExperimentConfig, users: usize) -> Result<Routing> {
    let root = config.seed;
    let topology = build_grid_topology(
        &config.topology.grid_spec(),
        users,
        &config.topology.capacities(),
        seed::derive(root, &[101]),
    )?;
    let times = sample_compute_times(users, &config.compute.dist(), seed::derive(root, &[102]))?;
    let t_min = times.iter().copied().fold(f64::INFINITY, f64::min);
    let delta_t = resolve_delta_t(config)?;
    let bits = model_size_bits(&config.model.spec()?);
    let (p1, p2): (Vec<usize>, Vec<usize>) = (0..users).partition(|&i| times[i] <= t_min + delta_t);
    let mut order = Vec::with_capacity(users);
    let mut nodes = Vec::with_capacity(users);
    let mut partition_of = Vec::with_capacity(users);
    for (j, part) in [p1, p2]
        .into_iter()
        .enumerate()
        .filter(|(_, p)| !p.is_empty())
    {
        let outcome = relax_and_round(
            &topology,
            &part,
            bits,
            Protocol::Inc,
            seed::derive(root, &[103, j as u64]),
            1,
        )?;
        order.extend_from_slice(outcome.assignment.users());
        nodes.extend_from_slice(outcome.assignment.nodes());
        partition_of.extend(std::iter::repeat_n(j, part.len()));
    }
    Ok(Routing {
        assignment: Assignment::new(order, nodes)?,
        partition_of,
        num_nodes: topology.num_nodes(),
    })
}

fn fl_config(fl: &FlExperimentConfig, mode: AggregationMode) -> FlConfig {
    FlConfig {
        mode,
        loss: fl.loss(),
        eta: fl.eta,
        local_steps: fl.local_steps,
    }
}

/// Trains every configured mode with in-network routing and with a star, side by side.
pub fn compute_fl_rows(config: &ExperimentConfig) -> Result<Vec<FlRow>> {
    let Some(fl) = &config.fl else {
        return Ok(Vec::new());
    };
    let data = fl.data.generate(seed::derive(config.seed, &[100]))?;
    let routing = fl_routing(config, data.num_users())?;
    let star = Routing::star(data.num_users());
    let mut rows = Vec::new();
    for &mode in &fl.modes {
        let cfg = fl_config(fl, mode);
        let mut routed = FlState::new(mode, &data);
        let mut flat = routed.clone();
        rows.push(fl_row(mode, 0, &routed, &flat, &data, &cfg)?);
        for t in 0..fl.rounds {
            let round_seed = seed::derive(config.seed, &[104, t as u64]);
            routed = fl::run_fl_round(&routed, &data, &cfg, &routing, round_seed)?.state;
            flat = fl::run_fl_round(&flat, &data, &cfg, &star, round_seed)?.state;
            rows.push(fl_row(mode, t + 1, &routed, &flat, &data, &cfg)?);
        }
    }
    Ok(rows)
}

fn fl_row(
    mode: AggregationMode,
    round: usize,
    routed: &FlState,
    flat: &FlState,
    data: &Dataset,
    cfg: &FlConfig,
) -> Result<FlRow> {
    let rec = fl::record(round, routed, data, &cfg.loss)?;
    let diff = routed
        .psi
        .iter()
        .zip(&flat.psi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(FlRow {
        mode,
        round,
        primal_objective: rec.primal_objective,
        dual_objective: rec.dual_objective,
        psi_diff_vs_star: diff,
    })
}

fn write_ina_trace(config: &ExperimentConfig, fl: &FlExperimentConfig, path: &Path) -> Result<()> {
    let data = fl.data.generate(seed::derive(config.seed, &[100]))?;
    let routing = fl_routing(config, data.num_users())?;
    let mode = fl.modes[0];
    let state = FlState::new(mode, &data);
    let out = fl::run_fl_round(
        &state,
        &data,
        &fl_config(fl, mode),
        &routing,
        seed::derive(config.seed, &[104, 0]),
    )?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let packets = out.packets.iter().map(wire::TracePacket::from);
    let edges = out
        .aggregation
        .edge_messages
        .iter()
        .map(|(_, _, m)| wire::TracePacket::from(m));
    for p in packets.chain(edges) {
        wire::write_packet(&mut w, &p).map_err(|e| Error::io(path, e))?;
    }
    std::io::Write::flush(&mut w).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub straggler: Vec<StragglerRow>,
    pub fl: Vec<FlRow>,
}

/// Runs the experiment and writes `results.csv` (plus `straggler.csv`,
/// `fl_trace.csv` and `ina_trace.bin` when configured) into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let output = ExperimentOutput {
        rows: compute_rows(config)?,
        straggler: compute_straggler_rows(config)?,
        fl: compute_fl_rows(config)?,
    };
    write_csv(
        &out_dir.join("results.csv"),
        &RESULT_HEADER,
        output.rows.iter().map(ResultRow::record),
    )?;
    if config.straggler.is_some() {
        write_csv(
            &out_dir.join("straggler.csv"),
            &STRAGGLER_HEADER,
            output.straggler.iter().map(StragglerRow::record),
        )?;
    }
    if let Some(fl) = &config.fl {
        write_csv(
            &out_dir.join("fl_trace.csv"),
            &FL_HEADER,
            output.fl.iter().map(FlRow::record),
        )?;
        if fl.trace {
            write_ina_trace(config, fl, &out_dir.join("ina_trace.bin"))?;
        }
    }
    let resolved = out_dir.join("config.resolved.toml");
    fs::write(&resolved, config.to_toml()).map_err(|e| Error::io(&resolved, e))?;
    Ok(output)
}

/// Runs one copy of the config per override value and concatenates the result rows.
pub fn run_sweep(
    config: &ExperimentConfig,
    param: &str,
    values: &[String],
) -> Result<Vec<ResultRow>> {
    if values.is_empty() {
        return Err(Error::config(param, "sweep needs at least one value"));
    }
    let configs = values
        .iter()
        .map(|v| {
            let mut c = config.with_override(param, v)?;
            c.experiment = format!("{param}={v}");
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = configs
        .par_iter()
        .map(compute_rows)
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_csv(path, &RESULT_HEADER, rows.iter().map(ResultRow::record))
}
