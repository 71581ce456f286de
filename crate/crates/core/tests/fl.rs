use incfl::fl::{self, FlConfig, FlState, LossSpec, Routing, SyntheticRidge};
use incfl::{seed, AggregationMode, Assignment};

#[test]
fn primal_dual_training_keeps_v_consistent_and_gap_shrinking() {
    let data = SyntheticRidge {
        dim: 8,
        users: 10,
        samples_per_user: 30,
        noise: 0.1,
    }
    .generate(5)
    .unwrap();
    let loss = LossSpec::new(0.05).unwrap();
    let cfg = FlConfig {
        mode: AggregationMode::PrimalDual,
        loss,
        eta: 0.02,
        local_steps: 300,
    };
    let routing = Routing {
        assignment: Assignment::from_nodes((0..10).map(|u| u % 3).collect()),
        partition_of: (0..10).map(|u| usize::from(u >= 6)).collect(),
        num_nodes: 3,
    };
    let mut state = FlState::new(cfg.mode, &data);
    let mut last_gap = f64::INFINITY;
    for t in 0..15u64 {
        state = fl::run_fl_round(&state, &data, &cfg, &routing, seed::derive(6, &[t]))
            .unwrap()
            .state;
        let dual = state.dual_state().unwrap();
        let v = dual.v_from_alpha(&data, &loss);
        for (a, b) in v.iter().zip(&state.psi) {
            assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
        let gap = fl::record(t as usize, &state, &data, &loss)
            .unwrap()
            .duality_gap()
            .unwrap();
        assert!(
            gap >= 0.0 && gap <= last_gap,
            "round {t}: {gap} after {last_gap}"
        );
        last_gap = gap;
    }
}

#[test]
fn routing_must_cover_every_user_once() {
    let data = SyntheticRidge {
        dim: 4,
        users: 3,
        samples_per_user: 5,
        noise: 0.1,
    }
    .generate(1)
    .unwrap();
    let cfg = FlConfig {
        mode: AggregationMode::Primal,
        loss: LossSpec::new(0.1).unwrap(),
        eta: 0.01,
        local_steps: 5,
    };
    let state = FlState::new(cfg.mode, &data);
    let partial = Routing {
        assignment: Assignment::new(vec![0, 1], vec![0, 0]).unwrap(),
        partition_of: vec![0, 0],
        num_nodes: 1,
    };
    assert!(fl::run_fl_round(&state, &data, &cfg, &partial, 0).is_err());
    let doubled = Routing {
        assignment: Assignment::new(vec![0, 1, 1], vec![0, 0, 0]).unwrap(),
        partition_of: vec![0, 0, 0],
        num_nodes: 1,
    };
    assert!(fl::run_fl_round(&state, &data, &cfg, &doubled, 0).is_err());
}
