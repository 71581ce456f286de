//! Long-format series for external plotting, one CSV per figure.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::sample_compute_times;
use crate::scheduler::Scheme;
use crate::seed;

use super::config::{ExperimentConfig, OneOrMany, RoutingMode};
use super::csvout::{fmt_g9, write_csv};
use super::experiment::{compute_rows, compute_straggler_rows, resolve_delta_t};

pub const PLOT_HEADER: [&str; 4] = ["figure", "series", "x", "y"];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub figure: &'static str,
    pub series: String,
    pub x: f64,
    pub y: f64,
}

impl PlotPoint {
    fn record(&self) -> Vec<String> {
        vec![
            self.figure.to_owned(),
            self.series.clone(),
            fmt_g9(self.x),
            fmt_g9(self.y),
        ]
    }
}

/// Sweep points used by the latency and traffic figures.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotPlan {
    pub users: Vec<usize>,
    /// Users in the compute-time figure.
    pub cdf_users: usize,
    /// Users in the model-size figure.
    pub size_users: usize,
    pub sizes_mb: Vec<f64>,
}

impl Default for PlotPlan {
    fn default() -> Self {
        PlotPlan {
            users: vec![1000, 2000, 3000, 4000, 5000],
            cdf_users: 500,
            size_users: 1000,
            sizes_mb: vec![528.0, 232.0, 88.0, 33.0],
        }
    }
}

/// Empirical and analytic CDF of local compute times, plus the fast-window count.
pub fn compute_time_figure(config: &ExperimentConfig, users: usize) -> Result<Vec<PlotPoint>> {
    let dist = config.compute.dist();
    let mut times = sample_compute_times(users, &dist, seed::derive(config.seed, &[300]))?;
    times.sort_by(f64::total_cmp);
    let n = times.len() as f64;
    let mut out: Vec<PlotPoint> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| PlotPoint {
            figure: "fig2",
            series: "empirical_cdf".into(),
            x: t,
            y: (i + 1) as f64 / n,
        })
        .collect();
    let ratio = dist.t_max / dist.t_min;
    out.extend((0..=100).map(|i| {
        let t = dist.t_min * ratio.powf(i as f64 / 100.0);
        PlotPoint {
            figure: "fig2",
            series: "analytic_cdf".into(),
            x: t,
            y: dist.cdf(t),
        }
    }));
    let cutoff = times[0] + resolve_delta_t(config)?;
    out.push(PlotPoint {
        figure: "fig2",
        series: "fast_users".into(),
        x: cutoff,
        y: times.iter().filter(|&&t| t <= cutoff).count() as f64,
    });
    Ok(out)
}

/// Writes `fig2.csv` … `fig7.csv` into `out_dir`.
pub fn write_plot_data(base: &ExperimentConfig, plan: &PlotPlan, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let emit = |name: &str, points: &[PlotPoint]| {
        write_csv(
            &out_dir.join(format!("{name}.csv")),
            &PLOT_HEADER,
            points.iter().map(PlotPoint::record),
        )
    };

    emit("fig2", &compute_time_figure(base, plan.cdf_users)?)?;

    let mut sweep = base.clone();
    sweep.topology.users = OneOrMany::Many(plan.users.clone());
    sweep.schedule.scheme = Scheme::Bipartition;
    sweep.routing.modes = RoutingMode::ALL.to_vec();
    let rows = compute_rows(&sweep)?;
    let fig4: Vec<PlotPoint> = rows
        .iter()
        .map(|r| PlotPoint {
            figure: "fig4",
            series: r.routing_mode.as_str().into(),
            x: r.k as f64,
            y: r.t_total,
        })
        .collect();
    emit("fig4", &fig4)?;

    let fig6: Vec<PlotPoint> = rows
        .iter()
        .filter(|r| r.routing_mode != RoutingMode::IncLb)
        .flat_map(|r| {
            let mode = r.routing_mode.as_str();
            [
                PlotPoint {
                    figure: "fig6",
                    series: format!("{mode}/bytes"),
                    x: r.k as f64,
                    y: r.cloud_rx_bytes,
                },
                PlotPoint {
                    figure: "fig6",
                    series: format!("{mode}/models"),
                    x: r.k as f64,
                    y: r.cloud_rx_models,
                },
            ]
        })
        .collect();
    emit("fig6", &fig6)?;

    let mut fig5 = Vec::new();
    for &mb in &plan.sizes_mb {
        for scheme in [Scheme::S0, Scheme::Bipartition] {
            let mut c = base.clone();
            c.topology.users = OneOrMany::One(plan.size_users);
            c.model.size_mb = Some(mb);
            c.schedule.scheme = scheme;
            c.routing.modes = vec![
                RoutingMode::OnlyCloud,
                RoutingMode::NonIncLb,
                RoutingMode::IncAlg,
            ];
            fig5.extend(compute_rows(&c)?.into_iter().map(|r| PlotPoint {
                figure: "fig5",
                series: format!("{}/{}", r.routing_mode.as_str(), scheme.as_str()),
                x: mb,
                y: r.t_total,
            }));
        }
    }
    emit("fig5", &fig5)?;

    let fig7: Vec<PlotPoint> = compute_straggler_rows(base)?
        .into_iter()
        .map(|r| PlotPoint {
            figure: "fig7",
            series: format!("p_edge={}", fmt_g9(r.p_edge)),
            x: f64::from(r.v),
            y: r.analytic,
        })
        .collect();
    emit("fig7", &fig7)
}
