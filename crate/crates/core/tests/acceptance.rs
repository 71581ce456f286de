//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Oracles live in this file: latency curves, capacity inversion, the
//! Hall-condition value of the routing relaxation, exact weighted means and
//! the ridge normal equations are all recomputed here without the library.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use incfl::fl::{self, FlConfig, FlState, LossSpec, Routing, SyntheticRidge};
use incfl::harness::{self, ExperimentConfig, OneOrMany, RoutingMode};
use incfl::ina::{aggregate_routed, make_user_packet};
use incfl::latency::evaluate_assignment;
use incfl::model::{build_grid_topology, CloudNode, EdgeNode, UserProfile};
use incfl::router::{brute_force_optimal, randomized_round, solve_lp};
use incfl::scheduler::{baseline_schedule, bipartition_schedule};
use incfl::{seed, AggregationMode, Assignment, Protocol, Scheme, Topology};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

const D: f64 = 1.856e9;
const W: f64 = 2e9;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- criterion 1

fn worked_times(k: usize, fast: usize) -> Vec<f64> {
    (0..k)
        .map(|i| {
            if i < fast {
                0.2 + 2.8 * i as f64 / (fast - 1) as f64
            } else {
                80.0 - 70.0 * (i - fast) as f64 / (k - fast) as f64
            }
        })
        .collect()
}

fn worked_examples() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for (k, fast, want_s0, want_sb) in [(500, 401, 544.928, 467.928), (50, 40, 127.328, 90.208)] {
        let star = Topology::star(
            k,
            CloudNode {
                uplink_bps: W,
                downlink_bps: W,
            },
        )
        .unwrap();
        let route = |users: &[usize]| {
            let a = Assignment::new(users.to_vec(), vec![0; users.len()])?;
            Ok(evaluate_assignment(&a, &star, D, Protocol::Inc)?.t_up)
        };
        let times = worked_times(k, fast);
        let all: Vec<usize> = (0..k).collect();
        let s0 = baseline_schedule(Scheme::S0, &times, route(&all).unwrap(), D, W, W).unwrap();
        let sb = bipartition_schedule(&times, 2.8, D / W, route).unwrap();
        ok &= (s0.total - want_s0).abs() <= 1e-6
            && (sb.total - want_sb).abs() <= 1e-6
            && sb.p1.len() == fast;
        lines.push(format!(
            "K={k}: s0 {:.6} sb {:.6} (t_P1 {:.6})",
            s0.total,
            sb.total,
            sb.t_p1()
        ));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(1);
    outcome(ok, format!("{}; {elapsed:.2?}", lines.join(", ")))
}

// ---------------------------------------------------------------- criterion 2

/// Payload values on a 2^-20 grid and integer weights keep every weighted
/// sum exact in f64, so the oracle mean is correctly rounded.
fn grouping_equivalence() -> Outcome {
    let instances = 1000;
    let mut worst = 0.0f64;
    for i in 0..instances {
        let mut rng = seed::derived_rng(11, &[i]);
        let k = rng.random_range(1..=200usize);
        let m = rng.random_range(0..=8usize);
        let d = rng.random_range(1..=64usize);
        let mode = if i % 2 == 0 {
            AggregationMode::Primal
        } else {
            AggregationMode::PrimalDual
        };
        let grid = |rng: &mut rand_chacha::ChaCha8Rng| {
            f64::from(rng.random_range(-10_000_000i32..10_000_000)) / 1_048_576.0
        };
        let prev: Vec<f64> = (0..d).map(|_| grid(&mut rng)).collect();
        let samples: Vec<u64> = (0..k).map(|_| rng.random_range(1..=1000)).collect();
        let payloads: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..d).map(|_| grid(&mut rng)).collect())
            .collect();
        let nodes: Vec<usize> = (0..k).map(|_| rng.random_range(0..=m)).collect();
        let parts: Vec<usize> = (0..k).map(|_| rng.random_range(0..2)).collect();

        let weights: Vec<f64> = samples
            .iter()
            .map(|&n| {
                if mode == AggregationMode::Primal {
                    n as f64
                } else {
                    1.0
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let oracle: Vec<f64> = (0..d)
            .map(|j| {
                let mean = (0..k).map(|u| weights[u] * payloads[u][j]).sum::<f64>() / total;
                if mode == AggregationMode::Primal {
                    mean
                } else {
                    prev[j] + mean
                }
            })
            .collect();

        let packets: Vec<_> = samples
            .iter()
            .zip(&payloads)
            .map(|(&n, p)| make_user_packet(mode, n, p.clone()).unwrap())
            .collect();
        let routed = aggregate_routed(
            &prev,
            &packets,
            &Assignment::from_nodes(nodes),
            &parts,
            m + 1,
            mode,
        )
        .unwrap();
        let scale = oracle
            .iter()
            .fold(0.0f64, |a, x| a.max(x.abs()))
            .max(f64::MIN_POSITIVE);
        let err = routed
            .model
            .psi
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / scale;
        worst = worst.max(err);
    }
    outcome(
        worst <= 1e-9,
        format!("{instances} instances, max relative error {worst:.2e}"),
    )
}

// ---------------------------------------------------------------- criterion 3

/// Latency of a node serving `load` users, written out from the model.
fn node_latency(topo: &Topology, m: usize, load: f64, protocol: Protocol) -> f64 {
    if load <= 0.0 {
        return 0.0;
    }
    if m == 0 {
        return D * load / topo.cloud().uplink_bps;
    }
    let e = topo.edge(m);
    let back = match protocol {
        Protocol::Inc => (D / e.backhaul_bps).min(D * load / e.backhaul_bps),
        Protocol::NonInc => D * load / e.backhaul_bps,
    };
    D * load / e.fronthaul_bps + back
}

/// Largest load meeting `y`, by bisection on the load.
fn node_capacity(topo: &Topology, m: usize, y: f64, protocol: Protocol, k: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, k + 1.0);
    if node_latency(topo, m, hi, protocol) <= y {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if node_latency(topo, m, mid, protocol) <= y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Relaxed optimum via Hall's condition: the worst node set `N` (always with
/// the cloud) whose capacities must absorb every user reaching only `N`.
fn hall_value(topo: &Topology, protocol: Protocol) -> f64 {
    let m = topo.num_edges();
    let k = topo.num_users() as f64;
    let mut best = 0.0f64;
    for mask in 0u32..(1 << m) {
        let in_set = |node: usize| node == 0 || mask & (1 << (node - 1)) != 0;
        let demand = (0..topo.num_users())
            .filter(|&u| topo.reachable(u).iter().all(|&n| in_set(n)))
            .count() as f64;
        if demand == 0.0 {
            continue;
        }
        let nodes: Vec<usize> = (0..=m).filter(|&n| in_set(n)).collect();
        let supply = |y: f64| {
            nodes
                .iter()
                .map(|&n| node_capacity(topo, n, y, protocol, k))
                .sum::<f64>()
        };
        let (mut lo, mut hi) = (0.0, D * k / topo.cloud().uplink_bps);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if supply(mid) >= demand {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        best = best.max(hi);
    }
    best
}

fn random_instance(rng: &mut rand_chacha::ChaCha8Rng) -> Topology {
    let k = rng.random_range(1..=8usize);
    let m = rng.random_range(0..=2usize);
    let edges = (0..m)
        .map(|_| EdgeNode {
            position: [0.0, 0.0],
            fronthaul_bps: rng.random_range(0.3e9..3e9),
            backhaul_bps: rng.random_range(0.3e9..3e9),
        })
        .collect();
    let reach = (0..k)
        .map(|_| (1..=m).filter(|_| rng.random_bool(0.5)).collect())
        .collect();
    let up = rng.random_range(0.5e9..4e9);
    Topology::new(
        vec![UserProfile::default(); k],
        edges,
        CloudNode {
            uplink_bps: up,
            downlink_bps: up,
        },
        reach,
    )
    .unwrap()
}

fn optimization_sandwich() -> Outcome {
    let start = Instant::now();
    let instances = 200;
    let tol = 1e-9;
    let (mut violations, mut hall_misses) = (0, 0);
    let mut gap = 0.0;
    for i in 0..instances {
        let mut rng = seed::derived_rng(33, &[i]);
        let topo = random_instance(&mut rng);
        let users: Vec<usize> = (0..topo.num_users()).collect();
        let inc = solve_lp(&topo, &users, D, Protocol::Inc).unwrap();
        let non_inc = solve_lp(&topo, &users, D, Protocol::NonInc).unwrap();
        let (_, opt) = brute_force_optimal(&topo, &users, D, Protocol::Inc).unwrap();
        let rounded = randomized_round(&inc.assignment, seed::derive(34, &[i])).unwrap();
        let t_round = evaluate_assignment(&rounded, &topo, D, Protocol::Inc)
            .unwrap()
            .t_up;
        if !(inc.lower_bound <= opt + tol
            && opt <= t_round + tol
            && inc.lower_bound <= non_inc.lower_bound + tol)
        {
            violations += 1;
        }
        for (lp, protocol) in [(&inc, Protocol::Inc), (&non_inc, Protocol::NonInc)] {
            if (lp.lower_bound - hall_value(&topo, protocol)).abs() > 1e-9 {
                hall_misses += 1;
            }
        }
        gap += t_round / opt - 1.0;
    }
    let elapsed = start.elapsed();
    outcome(
        violations == 0 && hall_misses == 0 && elapsed < Duration::from_secs(60),
        format!(
            "{instances} instances, {violations} sandwich violations, {hall_misses} LP/Hall mismatches, mean rounding gap {:.4}; {elapsed:.2?}",
            gap / instances as f64
        ),
    )
}

// ---------------------------------------------------------------- criterion 4

fn rounding_bound() -> Outcome {
    let reference = ExperimentConfig::reference();
    let mut lines = Vec::new();
    let mut ok = true;
    for k in [100usize, 1000] {
        let topo = build_grid_topology(
            &reference.topology.grid_spec(),
            k,
            &reference.topology.capacities(),
            44,
        )
        .unwrap();
        let users: Vec<usize> = (0..k).collect();
        let lp = solve_lp(&topo, &users, D, Protocol::Inc).unwrap();
        let y = lp.lower_bound;
        let bound = (2.0 * (k as f64).ln() / y + 3.0) * y;
        let trials = 1000;
        let within = (0..trials)
            .filter(|&t| {
                let a = randomized_round(&lp.assignment, seed::derive(45, &[k as u64, t])).unwrap();
                evaluate_assignment(&a, &topo, D, Protocol::Inc)
                    .unwrap()
                    .t_up
                    <= bound
            })
            .count();
        let frac = within as f64 / trials as f64;
        ok &= frac >= 1.0 - 1.0 / k as f64;
        lines.push(format!(
            "K={k}: y†={y:.3}, bound {bound:.3}, {within}/{trials} within"
        ));
    }
    outcome(ok, lines.join("; "))
}

// ---------------------------------------------------------------- criterion 5

fn figure_level() -> Outcome {
    let start = Instant::now();
    let mut config = ExperimentConfig::reference();
    config.topology.users = OneOrMany::One(5000);
    let rows = harness::compute_rows(&config).unwrap();
    let row = |mode| rows.iter().find(|r| r.routing_mode == mode).unwrap();
    let cloud = row(RoutingMode::OnlyCloud);
    let non_inc = row(RoutingMode::NonIncLb);
    let alg = row(RoutingMode::IncAlg);
    let lb = row(RoutingMode::IncLb);
    let cloud_err = (cloud.t_total - 4645.0).abs() / 4645.0;
    let traffic_ratio = non_inc.cloud_rx_bytes / alg.cloud_rx_bytes;
    let alg_gap = alg.t_total / lb.t_total - 1.0;
    let elapsed = start.elapsed();
    let ok = cloud_err <= 0.02
        && non_inc.cloud_rx_bytes == 1.16e12
        && traffic_ratio >= 5.0
        && alg_gap <= 0.01
        && elapsed < Duration::from_secs(300);
    outcome(
        ok,
        format!(
            "only-cloud {:.1} s ({:.2}% off 4645), non-INC LB {:.1} s, non-INC ingress {:.4e} B, INC ingress {:.4e} B ({traffic_ratio:.2}x lower), INC-alg {:.1} s vs INC-LB {:.1} s (+{:.2}%); {elapsed:.2?}",
            cloud.t_total,
            100.0 * cloud_err,
            non_inc.t_total,
            non_inc.cloud_rx_bytes,
            alg.cloud_rx_bytes,
            alg.t_total,
            lb.t_total,
            100.0 * alg_gap
        ),
    )
}

// ---------------------------------------------------------------- criterion 6

fn straggler() -> Outcome {
    let exact = harness::straggler_probability(0.3, 0.5, 2).unwrap();
    let trials = 100_000u64;
    let mut rng = seed::rng(66);
    let hits = (0..trials)
        .filter(|_| rng.random_bool(0.3) && rng.random_bool(0.5) && rng.random_bool(0.5))
        .count() as f64;
    let sigma = (0.075f64 * 0.925 / trials as f64).sqrt();
    let own_z = (hits / trials as f64 - 0.075).abs() / sigma;
    let lib = harness::simulate_straggler(0.3, 0.5, 2, trials, 67).unwrap();
    outcome(
        exact == 0.075 && own_z <= 3.0 && lib.z_score() <= 3.0,
        format!(
            "P = {exact}, library Monte Carlo {:.5} (z {:.2}), independent Monte Carlo {:.5} (z {own_z:.2})",
            lib.simulated,
            lib.z_score(),
            hits / trials as f64
        ),
    )
}

// ---------------------------------------------------------------- criterion 7

fn ridge_optimum(data: &fl::Dataset, xi: f64) -> (Vec<f64>, f64) {
    let d = data.dim();
    let n = data.total_samples() as f64;
    let mut a = DMatrix::<f64>::identity(d, d) * xi;
    let mut b = DVector::<f64>::zeros(d);
    for (x, y) in data.samples() {
        let x = DVector::from_column_slice(x);
        a += &x * x.transpose() / n;
        b += &x * (y / n);
    }
    let w = a.lu().solve(&b).expect("regularized system is nonsingular");
    let w: Vec<f64> = w.iter().copied().collect();
    let fit: f64 = data
        .samples()
        .map(|(x, y)| 0.5 * (x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - y).powi(2))
        .sum::<f64>()
        / n;
    let value = fit + 0.5 * xi * w.iter().map(|v| v * v).sum::<f64>();
    (w, value)
}

fn random_routing(k: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Routing {
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(rng);
    let num_nodes = rng.random_range(1..=10);
    let nodes = (0..k).map(|_| rng.random_range(0..num_nodes)).collect();
    Routing {
        assignment: Assignment::new(order, nodes).unwrap(),
        partition_of: (0..k).map(|_| rng.random_range(0..2)).collect(),
        num_nodes,
    }
}

fn fl_training() -> Outcome {
    let data = SyntheticRidge {
        dim: 16,
        users: 20,
        samples_per_user: 50,
        noise: 0.1,
    }
    .generate(77)
    .unwrap();
    let xi = 0.01;
    let loss = LossSpec::new(xi).unwrap();
    let (_, p_star) = ridge_optimum(&data, xi);
    let mut rng = seed::rng(78);
    let routings: Vec<Routing> = std::iter::once(Routing::star(20))
        .chain((0..4).map(|_| random_routing(20, &mut rng)))
        .collect();

    let mut ok = true;
    let mut notes = Vec::new();
    for mode in [AggregationMode::Primal, AggregationMode::PrimalDual] {
        let cfg = FlConfig {
            mode,
            loss,
            eta: 0.02,
            local_steps: 500,
        };
        let mut states: Vec<FlState> = routings.iter().map(|_| FlState::new(mode, &data)).collect();
        let mut bit_stable = true;
        let mut gaps = Vec::new();
        let mut v_drift = 0.0f64;
        for t in 0..50u64 {
            for (s, r) in states.iter_mut().zip(&routings) {
                *s = fl::run_fl_round(s, &data, &cfg, r, seed::derive(79, &[t]))
                    .unwrap()
                    .state;
            }
            let bits = |s: &FlState| s.psi.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            bit_stable &= states.iter().all(|s| bits(s) == bits(&states[0]));
            if let Some(dual) = states[0].dual_state() {
                let rec = fl::record(0, &states[0], &data, &loss).unwrap();
                gaps.push(rec.duality_gap().unwrap());
                let v = dual.v_from_alpha(&data, &loss);
                v_drift = v_drift.max(
                    v.iter()
                        .zip(&dual.v)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max),
                );
            }
        }
        let p = fl::primal_objective(&states[0].psi, &data, &loss).unwrap();
        let close = (p - p_star).abs() <= 1e-3;
        let gap_ok = gaps.iter().all(|&g| g >= 0.0) && gaps.windows(2).all(|w| w[1] <= w[0]);
        ok &= close && bit_stable && gap_ok && v_drift <= 1e-9;
        let mut note = format!("{mode:?}: P-P*={:.2e}, bit-stable {bit_stable}", p - p_star);
        if mode == AggregationMode::PrimalDual {
            note += &format!(
                ", gap {:.2e}->{:.2e} monotone {gap_ok}, v drift {v_drift:.1e}",
                gaps[0],
                gaps[gaps.len() - 1]
            );
        }
        notes.push(note);
    }

    let mut worst_fd = 0.0f64;
    for i in 0..20 {
        let mut rng = seed::derived_rng(80, &[i]);
        let w: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g = fl::primal_gradient(&w, &data, &loss).unwrap();
        for j in 0..16 {
            let h = 1e-5;
            let (mut plus, mut minus) = (w.clone(), w.clone());
            plus[j] += h;
            minus[j] -= h;
            let fd = (fl::primal_objective(&plus, &data, &loss).unwrap()
                - fl::primal_objective(&minus, &data, &loss).unwrap())
                / (2.0 * h);
            worst_fd = worst_fd.max((fd - g[j]).abs() / g[j].abs().max(1.0));
        }
    }
    ok &= worst_fd <= 1e-6;
    notes.push(format!("finite-difference rel err {worst_fd:.1e}"));
    outcome(ok, notes.join("; "))
}

// ---------------------------------------------------------------- criterion 8

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let mut config = ExperimentConfig::reference();
    config.topology.users = OneOrMany::Many(vec![300, 900]);
    config.straggler.as_mut().unwrap().trials = 20_000;
    config.fl = ExperimentConfig::from_toml(
        &fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../configs/fl_ridge.toml"
        ))
        .unwrap(),
    )
    .unwrap()
    .fl;
    config.fl.as_mut().unwrap().rounds = 5;
    let dir = tempfile::tempdir().unwrap();
    let runs = [("a", 0usize), ("b", 0), ("c", 1), ("d", 3)];
    let mut outputs = Vec::new();
    for (name, threads) in runs {
        let out = dir.path().join(name);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| harness::run_experiment(&config, &out))
            .unwrap();
        outputs.push(read_dir_bytes(&out));
    }
    let identical = outputs.iter().all(|o| o == &outputs[0]);
    let names: Vec<&str> = outputs[0].iter().map(|(n, _)| n.as_str()).collect();
    outcome(
        identical,
        format!(
            "{} runs (1, 3 and default threads), files {names:?}",
            runs.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 worked-example exactness", worked_examples),
        ("2 aggregation grouping equivalence", grouping_equivalence),
        ("3 optimization sandwich", optimization_sandwich),
        ("4 rounding bound", rounding_bound),
        ("5 figure-level reproduction", figure_level),
        ("6 straggler formula", straggler),
        ("7 federated training", fl_training),
        ("8 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!result.passed);
        println!(
            "criterion {name}: {} ({})",
            if result.passed { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
