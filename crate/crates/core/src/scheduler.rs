//! Per-iteration user scheduling.
//!
//! `s0` waits for the slowest user and then aggregates everyone. `s1`
//! collects models one at a time as they arrive. The bipartition scheme
//! aggregates the fast users (`P1`) as soon as they are done and the rest
//! (`P2`) once the slowest user has finished and `P1`'s upload is over.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ComputeTimeDist;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    S0,
    S1,
    Bipartition,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::S0 => "s0",
            Scheme::S1 => "s1",
            Scheme::Bipartition => "bipartition",
        }
    }
}

/// Which scheduling regime a set of compute times falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Spread of compute times is at most `ε0·T^u`: waiting for everyone costs little.
    Dense,
    /// Consecutive completions are at least one single-model upload apart.
    Dispersed,
    /// Neither; the bipartition scheme targets this case.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleResult {
    pub scheme: Scheme,
    /// Fast partition; for `s0`/`s1` it holds every user.
    pub p1: Vec<usize>,
    pub p2: Vec<usize>,
    pub t_down: f64,
    pub t_cp_min: f64,
    pub t_cp_max: f64,
    /// Width of the fast window, for the bipartition scheme.
    pub delta_t: Option<f64>,
    /// When `P1`'s upload starts.
    pub p1_start: f64,
    pub t_up_p1: f64,
    /// When `P2`'s upload starts; equals `total` when `P2` is empty.
    pub p2_start: f64,
    pub t_up_p2: f64,
    pub total: f64,
    /// `s1` only: whether consecutive completions are at least `D/W^u` apart.
    pub gap_condition: Option<bool>,
    /// Bipartition only: `P1` came out empty and the schedule fell back to `s0`.
    pub degraded: bool,
}

impl ScheduleResult {
    /// Completion time of `P1`'s aggregation.
    pub fn t_p1(&self) -> f64 {
        self.p1_start + self.t_up_p1
    }

    /// Re-derives the total from the component fields.
    pub fn recompute_total(&self) -> f64 {
        match self.scheme {
            Scheme::S0 | Scheme::S1 => self.t_down + self.t_cp_max + self.t_up_p1,
            Scheme::Bipartition if self.degraded => self.t_down + self.t_cp_max + self.t_up_p2,
            Scheme::Bipartition if self.p2.is_empty() => self.t_p1(),
            Scheme::Bipartition => self.t_p1().max(self.t_down + self.t_cp_max) + self.t_up_p2,
        }
    }
}

fn extent(compute_times: &[f64]) -> Result<(f64, f64)> {
    if compute_times.is_empty() {
        return Err(Error::invalid("no compute times to schedule"));
    }
    if let Some(bad) = compute_times
        .iter()
        .find(|t| !(t.is_finite() && **t >= 0.0))
    {
        return Err(Error::invalid(format!(
            "compute time {bad} is not a finite nonnegative number"
        )));
    }
    let min = compute_times.iter().copied().fold(f64::INFINITY, f64::min);
    let max = compute_times
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((min, max))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {v}")))
    }
}

/// Whether sorted completion times are pairwise at least `single_upload` apart.
pub fn gap_condition(compute_times: &[f64], single_upload: f64) -> bool {
    let mut sorted = compute_times.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).all(|w| w[1] - w[0] >= single_upload)
}

/// Schedules every user at once (`s0`) or one by one (`s1`).
///
/// `t_up` is the uplink latency of routing all users together; `s1` ignores
/// it and charges a single model upload `model_bits / w_u` instead.
pub fn baseline_schedule(
    scheme: Scheme,
    compute_times: &[f64],
    t_up: f64,
    model_bits: f64,
    w_u: f64,
    w_d: f64,
) -> Result<ScheduleResult> {
    let (t_min, t_max) = extent(compute_times)?;
    positive("model size", model_bits)?;
    positive("cloud uplink", w_u)?;
    positive("cloud downlink", w_d)?;
    let t_down = model_bits / w_d;
    let (t_up, gap) = match scheme {
        Scheme::S0 => (t_up, None),
        Scheme::S1 => {
            let single = model_bits / w_u;
            (single, Some(gap_condition(compute_times, single)))
        }
        Scheme::Bipartition => {
            return Err(Error::invalid(
                "use bipartition_schedule for the bipartition scheme",
            ));
        }
    };
    if !(t_up >= 0.0) {
        return Err(Error::invalid("uplink latency must be nonnegative"));
    }
    let p1_start = t_down + t_max;
    let total = p1_start + t_up;
    Ok(ScheduleResult {
        scheme,
        p1: (0..compute_times.len()).collect(),
        p2: Vec::new(),
        t_down,
        t_cp_min: t_min,
        t_cp_max: t_max,
        delta_t: None,
        p1_start,
        t_up_p1: t_up,
        p2_start: total,
        t_up_p2: 0.0,
        total,
        gap_condition: gap,
        degraded: false,
    })
}

/// Runs the two-partition schedule.
///
/// `route` returns the uplink latency for a set of user indices (positions in
/// `compute_times`); it is called once for `P1` and once for a nonempty `P2`.
pub fn bipartition_schedule<F>(
    compute_times: &[f64],
    delta_t: f64,
    t_down: f64,
    mut route: F,
) -> Result<ScheduleResult>
where
    F: FnMut(&[usize]) -> Result<f64>,
{
    let (t_min, t_max) = extent(compute_times)?;
    if !(delta_t >= 0.0 && delta_t.is_finite()) {
        return Err(Error::invalid(format!(
            "Δt must be finite and nonnegative, got {delta_t}"
        )));
    }
    if !(t_down >= 0.0) {
        return Err(Error::invalid("downlink latency must be nonnegative"));
    }
    let cutoff = t_min + delta_t;
    let (p1, p2): (Vec<usize>, Vec<usize>) =
        (0..compute_times.len()).partition(|&k| compute_times[k] <= cutoff);

    if p1.is_empty() {
        let t_up = route(&p2)?;
        let p2_start = t_down + t_max;
        return Ok(ScheduleResult {
            scheme: Scheme::Bipartition,
            p1,
            p2,
            t_down,
            t_cp_min: t_min,
            t_cp_max: t_max,
            delta_t: Some(delta_t),
            p1_start: p2_start,
            t_up_p1: 0.0,
            p2_start,
            t_up_p2: t_up,
            total: p2_start + t_up,
            gap_condition: None,
            degraded: true,
        });
    }

    let p1_start = t_down + cutoff;
    let t_up_p1 = route(&p1)?;
    let t_p1 = p1_start + t_up_p1;
    let (p2_start, t_up_p2) = if p2.is_empty() {
        (t_p1, 0.0)
    } else {
        (t_p1.max(t_down + t_max), route(&p2)?)
    };
    Ok(ScheduleResult {
        scheme: Scheme::Bipartition,
        p1,
        p2,
        t_down,
        t_cp_min: t_min,
        t_cp_max: t_max,
        delta_t: Some(delta_t),
        p1_start,
        t_up_p1,
        p2_start,
        t_up_p2,
        total: p2_start + t_up_p2,
        gap_condition: None,
        degraded: false,
    })
}

/// Upper bound on the bipartition schedule's iteration time.
///
/// `ε2` bounds `T^u(P2)` and `ε3` bounds `Δt`, both relative to `t_up_full`.
pub fn bipartition_bound(
    t_min: f64,
    t_max: f64,
    t_down: f64,
    t_up_full: f64,
    eps2: f64,
    eps3: f64,
) -> f64 {
    t_down + (t_min + (1.0 + eps2 + eps3) * t_up_full).max(t_max + eps2 * t_up_full)
}

/// Measured `(ε1, ε2, ε3)` of a bipartition schedule against full-set routing latency.
pub fn measured_epsilons(result: &ScheduleResult, t_up_full: f64) -> (f64, f64, f64) {
    let k = (result.p1.len() + result.p2.len()) as f64;
    (
        result.p2.len() as f64 / k,
        result.t_up_p2 / t_up_full,
        result.delta_t.unwrap_or(0.0) / t_up_full,
    )
}

/// `Δt` that places the `q`-quantile of the distribution at the end of the fast window.
pub fn delta_t_for_quantile(dist: &ComputeTimeDist, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("quantile {q} outside [0, 1]")));
    }
    dist.validate()?;
    Ok(dist.quantile(q) - dist.t_min)
}

pub fn classify_regime(
    compute_times: &[f64],
    t_up: f64,
    single_upload: f64,
    eps0: f64,
) -> Result<Regime> {
    let (t_min, t_max) = extent(compute_times)?;
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(Error::invalid(format!("ε0 must lie in (0, 1), got {eps0}")));
    }
    Ok(if t_max - t_min <= eps0 * t_up {
        Regime::Dense
    } else if gap_condition(compute_times, single_upload) {
        Regime::Dispersed
    } else {
        Regime::Mixed
    })
}
