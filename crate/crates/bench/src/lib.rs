//! Fixtures shared by the benchmarks.

use incfl::harness::ExperimentConfig;
use incfl::model::{build_grid_topology, CloudNode, EdgeNode, UserProfile};
use incfl::{AggregationMode, LocalMessage, Topology};

/// Bits of the reference model.
pub const MODEL_BITS: f64 = 1.856e9;

/// Reference 3×3 grid with `k` users.
pub fn grid_topology(k: usize) -> Topology {
    let config = ExperimentConfig::reference();
    build_grid_topology(
        &config.topology.grid_spec(),
        k,
        &config.topology.capacities(),
        1,
    )
    .expect("reference topology")
}

/// `k` primal packets of dimension `d` with deterministic contents.
pub fn packets(k: usize, d: usize) -> Vec<LocalMessage> {
    (0..k)
        .map(|u| {
            let payload = (0..d)
                .map(|j| ((u * 31 + j * 7) % 97) as f64 / 97.0 - 0.5)
                .collect();
            incfl::ina::make_user_packet(AggregationMode::Primal, 1 + (u % 50) as u64, payload)
                .expect("valid packet")
        })
        .collect()
}

/// Eight users over three edges, small enough for exhaustive search.
pub fn small_topology() -> Topology {
    let edge = |gbps: f64| EdgeNode {
        position: [0.0, 0.0],
        fronthaul_bps: gbps * 1e9,
        backhaul_bps: gbps * 1e9,
    };
    let reach = (0..8)
        .map(|u| (1..=3).filter(|m| (u + m) % 3 != 0).collect())
        .collect();
    Topology::new(
        vec![UserProfile::default(); 8],
        vec![edge(1.0), edge(1.5), edge(0.8)],
        CloudNode {
            uplink_bps: 2e9,
            downlink_bps: 2e9,
        },
        reach,
    )
    .expect("valid topology")
}
