//! Desk-scale federated training on ridge regression.
//!
//! The loss is fixed to `l_i(a) = ½(a - y_i)²` with regularizer
//! `ξ·r(w) = (ξ/2)‖w‖²`, so both conjugates are closed-form:
//!
//! ```text
//! P(w) = (1/n) Σ ½(x_i·w - y_i)² + (ξ/2)‖w‖²
//! D(α) = (1/n) Σ (α_i y_i - ½α_i²) - (ξ/2)‖v‖²,   v = Xα / (ξn)
//! ```
//!
//! Primal rounds run local SGD and average models weighted by sample count.
//! Primal-dual rounds run exact coordinate ascent on each user's block of
//! `α`, send `Δv_k`, and the cloud adds the mean of the `Δv_k` to `v`, which
//! corresponds to `α_k += h_k / K`.

mod data;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use data::{Dataset, SyntheticRidge, UserData};

use crate::error::{Error, Result};
use crate::ina::{
    aggregate_routed, make_user_packet, AggregationMode, LocalMessage, RoutedAggregation,
};
use crate::latency::Assignment;
use crate::seed;

use data::dot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    /// Regularization strength `ξ`.
    pub xi: f64,
}

impl LossSpec {
    pub fn new(xi: f64) -> Result<Self> {
        let s = LossSpec { xi };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.xi > 0.0 && self.xi.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "ξ must be positive, got {}",
                self.xi
            )))
        }
    }

    /// Smoothness constant `1/μ` of the squared loss.
    pub fn smoothness(&self) -> f64 {
        1.0
    }
}

fn check_dim(data: &Dataset, len: usize) -> Result<()> {
    if len == data.dim() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: len,
        })
    }
}

fn half_norm_sq(v: &[f64]) -> f64 {
    0.5 * dot(v, v)
}

pub fn primal_objective(w: &[f64], data: &Dataset, loss: &LossSpec) -> Result<f64> {
    check_dim(data, w.len())?;
    let n = data.total_samples() as f64;
    let fit: f64 = data
        .samples()
        .map(|(x, y)| 0.5 * (dot(x, w) - y).powi(2))
        .sum();
    Ok(fit / n + loss.xi * half_norm_sq(w))
}

pub fn primal_gradient(w: &[f64], data: &Dataset, loss: &LossSpec) -> Result<Vec<f64>> {
    check_dim(data, w.len())?;
    let n = data.total_samples() as f64;
    let mut g: Vec<f64> = w.iter().map(|&wi| loss.xi * wi).collect();
    for (x, y) in data.samples() {
        let r = (dot(x, w) - y) / n;
        g.iter_mut().zip(x).for_each(|(gi, xi)| *gi += r * xi);
    }
    Ok(g)
}

/// Dual variables, one block per user, plus the shared primal image `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub alpha: Vec<Vec<f64>>,
    pub v: Vec<f64>,
}

impl DualState {
    pub fn zeros(data: &Dataset) -> Self {
        DualState {
            alpha: data.users().iter().map(|u| vec![0.0; u.len()]).collect(),
            v: vec![0.0; data.dim()],
        }
    }

    /// Recomputes `v = Xα / (ξn)` from scratch.
    pub fn v_from_alpha(&self, data: &Dataset, loss: &LossSpec) -> Vec<f64> {
        let scale = 1.0 / (loss.xi * data.total_samples() as f64);
        let mut v = vec![0.0; data.dim()];
        for (u, a) in data.users().iter().zip(&self.alpha) {
            for (x, &ai) in u.features.iter().zip(a) {
                v.iter_mut()
                    .zip(x)
                    .for_each(|(vj, xj)| *vj += scale * ai * xj);
            }
        }
        v
    }
}

pub fn dual_objective(state: &DualState, data: &Dataset, loss: &LossSpec) -> Result<f64> {
    loss.validate()?;
    if state.alpha.len() != data.num_users() {
        return Err(Error::DimensionMismatch {
            expected: data.num_users(),
            got: state.alpha.len(),
        });
    }
    let n = data.total_samples() as f64;
    let mut sum = 0.0;
    for (u, a) in data.users().iter().zip(&state.alpha) {
        if a.len() != u.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                got: a.len(),
            });
        }
        sum += u
            .targets
            .iter()
            .zip(a)
            .map(|(&y, &ai)| ai * y - 0.5 * ai * ai)
            .sum::<f64>();
    }
    let v = state.v_from_alpha(data, loss);
    Ok(sum / n - loss.xi * half_norm_sq(&v))
}

/// `steps` SGD iterations on one user's share of the regularized loss.
pub fn local_sgd_update(
    w_start: &[f64],
    user: &UserData,
    loss: &LossSpec,
    eta: f64,
    steps: usize,
    seed_value: u64,
) -> Result<Vec<f64>> {
    if !(eta > 0.0) {
        return Err(Error::invalid(format!(
            "step size must be positive, got {eta}"
        )));
    }
    if steps == 0 {
        return Err(Error::invalid("at least one local step is required"));
    }
    if user.is_empty() {
        return Err(Error::invalid("user has no samples"));
    }
    let mut rng = seed::rng(seed_value);
    let mut w = w_start.to_vec();
    for _ in 0..steps {
        let i = rng.random_range(0..user.len());
        let x = &user.features[i];
        if x.len() != w.len() {
            return Err(Error::DimensionMismatch {
                expected: w.len(),
                got: x.len(),
            });
        }
        let r = dot(x, &w) - user.targets[i];
        for (wj, xj) in w.iter_mut().zip(x) {
            *wj -= eta * (r * xj + loss.xi * *wj);
        }
    }
    Ok(w)
}

/// Result of one user's local dual ascent.
#[derive(Debug, Clone, PartialEq)]
pub struct DualUpdate {
    /// Change to the user's dual block.
    pub h: Vec<f64>,
    /// `X_k h / (ξn)`.
    pub delta_v: Vec<f64>,
}

/// Exact coordinate ascent on user `k`'s block with every other block held fixed.
pub fn local_dual_update(
    state: &DualState,
    k: usize,
    data: &Dataset,
    loss: &LossSpec,
    steps: usize,
    seed_value: u64,
) -> Result<DualUpdate> {
    loss.validate()?;
    let user = data
        .users()
        .get(k)
        .ok_or_else(|| Error::invalid(format!("unknown user {k}")))?;
    let alpha = &state.alpha[k];
    check_dim(data, state.v.len())?;
    let xi_n = loss.xi * data.total_samples() as f64;
    let mut h = vec![0.0; user.len()];
    let mut delta_v = vec![0.0; data.dim()];
    let mut rng = seed::rng(seed_value);
    for _ in 0..steps {
        let i = rng.random_range(0..user.len());
        let x = &user.features[i];
        let xu: f64 = x
            .iter()
            .zip(state.v.iter().zip(&delta_v))
            .map(|(xj, (v, dv))| xj * (v + dv))
            .sum();
        let delta = (user.targets[i] - alpha[i] - h[i] - xu) / (1.0 + dot(x, x) / xi_n);
        h[i] += delta;
        delta_v
            .iter_mut()
            .zip(x)
            .for_each(|(dv, xj)| *dv += delta * xj / xi_n);
    }
    Ok(DualUpdate { h, delta_v })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlConfig {
    pub mode: AggregationMode,
    pub loss: LossSpec,
    /// SGD step size (primal mode only).
    pub eta: f64,
    pub local_steps: usize,
}

/// Global training state carried between rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct FlState {
    pub mode: AggregationMode,
    /// The broadcast model: `w` for primal, `v` for primal-dual.
    pub psi: Vec<f64>,
    /// Dual blocks, present in primal-dual mode.
    pub alpha: Option<Vec<Vec<f64>>>,
}

impl FlState {
    pub fn new(mode: AggregationMode, data: &Dataset) -> Self {
        FlState {
            mode,
            psi: vec![0.0; data.dim()],
            alpha: match mode {
                AggregationMode::Primal => None,
                AggregationMode::PrimalDual => Some(DualState::zeros(data).alpha),
            },
        }
    }

    pub fn dual_state(&self) -> Option<DualState> {
        self.alpha.as_ref().map(|alpha| DualState {
            alpha: alpha.clone(),
            v: self.psi.clone(),
        })
    }
}

/// Where each user's packet travels: node per user and scheduling partition per user.
#[derive(Debug, Clone, PartialEq)]
pub struct Routing {
    pub assignment: Assignment,
    pub partition_of: Vec<usize>,
    pub num_nodes: usize,
}

impl Routing {
    /// Every user straight to the cloud in one partition.
    pub fn star(k: usize) -> Self {
        Routing {
            assignment: Assignment::from_nodes(vec![0; k]),
            partition_of: vec![0; k],
            num_nodes: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub primal_objective: f64,
    pub dual_objective: Option<f64>,
}

impl RoundRecord {
    pub fn duality_gap(&self) -> Option<f64> {
        self.dual_objective.map(|d| self.primal_objective - d)
    }
}

#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub state: FlState,
    pub aggregation: RoutedAggregation,
    pub packets: Vec<LocalMessage>,
}

/// One broadcast, local update, routed aggregation cycle.
///
/// Local updates depend only on the broadcast state and `derive(seed, [k])`,
/// so the result is independent of execution order and of the routing.
pub fn run_fl_round(
    state: &FlState,
    data: &Dataset,
    config: &FlConfig,
    routing: &Routing,
    seed_value: u64,
) -> Result<RoundOutput> {
    if config.mode != state.mode {
        return Err(Error::MixedMode);
    }
    check_dim(data, state.psi.len())?;
    let users = routing.assignment.users();
    let mut seen = vec![false; data.num_users()];
    for &k in users {
        if k >= seen.len() || std::mem::replace(&mut seen[k], true) {
            return Err(Error::invalid(format!(
                "routing lists user {k} twice or out of range"
            )));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::invalid("routing must cover every user"));
    }
    let k_total = data.num_users() as f64;
    let mode = config.mode;

    let (packets, new_alpha) = match mode {
        AggregationMode::Primal => {
            let packets = users
                .par_iter()
                .map(|&k| {
                    let user = data.user(k);
                    let w = local_sgd_update(
                        &state.psi,
                        user,
                        &config.loss,
                        config.eta,
                        config.local_steps,
                        seed::derive(seed_value, &[k as u64]),
                    )?;
                    make_user_packet(mode, user.len() as u64, w)
                })
                .collect::<Result<Vec<_>>>()?;
            (packets, None)
        }
        AggregationMode::PrimalDual => {
            let dual = state.dual_state().ok_or(Error::MixedMode)?;
            let updates = users
                .par_iter()
                .map(|&k| {
                    local_dual_update(
                        &dual,
                        k,
                        data,
                        &config.loss,
                        config.local_steps,
                        seed::derive(seed_value, &[k as u64]),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let mut alpha = dual.alpha;
            let mut packets = Vec::with_capacity(users.len());
            for (&k, u) in users.iter().zip(updates) {
                alpha[k]
                    .iter_mut()
                    .zip(&u.h)
                    .for_each(|(a, h)| *a += h / k_total);
                packets.push(make_user_packet(
                    mode,
                    data.user(k).len() as u64,
                    u.delta_v,
                )?);
            }
            (packets, Some(alpha))
        }
    };

    let aggregation = aggregate_routed(
        &state.psi,
        &packets,
        &routing.assignment,
        &routing.partition_of,
        routing.num_nodes,
        mode,
    )?;
    let state = FlState {
        mode,
        psi: aggregation.model.psi.clone(),
        alpha: new_alpha,
    };
    Ok(RoundOutput {
        state,
        aggregation,
        packets,
    })
}

/// Objective values at the current state.
pub fn record(
    round: usize,
    state: &FlState,
    data: &Dataset,
    loss: &LossSpec,
) -> Result<RoundRecord> {
    let primal = primal_objective(&state.psi, data, loss)?;
    let dual = state
        .dual_state()
        .map(|d| dual_objective(&d, data, loss))
        .transpose()?;
    Ok(RoundRecord {
        round,
        primal_objective: primal,
        dual_objective: dual,
    })
}

/// Runs `rounds` rounds with a fixed routing; the trace starts with round 0.
pub fn train(
    data: &Dataset,
    config: &FlConfig,
    routing: &Routing,
    rounds: usize,
    seed_value: u64,
) -> Result<(FlState, Vec<RoundRecord>)> {
    let mut state = FlState::new(config.mode, data);
    let mut trace = vec![record(0, &state, data, &config.loss)?];
    for t in 0..rounds {
        state = run_fl_round(
            &state,
            data,
            config,
            routing,
            seed::derive(seed_value, &[t as u64]),
        )?
        .state;
        trace.push(record(t + 1, &state, data, &config.loss)?);
    }
    Ok((state, trace))
}
