//! Acceptance suite: one check per criterion, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`) so the lines always reach the
//! terminal: `cargo test --release --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use meanfield_lab::chaos::{chaos_sweep, empirical_law_gaps};
use meanfield_lab::engine::{solve_final, solve_n_particle, sup_moment, SimConfig};
use meanfield_lab::fields::{
    validate_geometry, AttractionRepulsion, BuiltinField, Cbo, FieldSpec, LeaderFollower, MeanReversion, Objective,
};
use meanfield_lab::meanfield::fixed_point;
use meanfield_lab::oracle::{hungarian, transport_lp_bruteforce};
use meanfield_lab::sampler::{InitSampler, ProbeSampler, StrategyInit};
use meanfield_lab::state::{state_cost_matrix, w_product};
use meanfield_lab::strategy::{bl_norm, w1_strategy};
use meanfield_lab::transport::CostMatrix;
use meanfield_lab::{AgentState, Ensemble, MixedStrategy, PureStrategySpace};

type Outcome = Result<String, String>;

struct Criterion {
    number: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { number: 1, name: "metric oracle equivalence", budget: secs(10), run: metric_oracles },
        Criterion { number: 2, name: "simplex confinement", budget: secs(60), run: simplex_confinement },
        Criterion { number: 3, name: "worker-count invariance", budget: secs(30), run: worker_invariance },
        Criterion { number: 4, name: "OU closed-form moments", budget: secs(60), run: ou_moments },
        Criterion { number: 5, name: "a-priori moment stability", budget: secs(60), run: moment_stability },
        Criterion { number: 6, name: "mean-field contraction", budget: secs(120), run: contraction },
        Criterion { number: 7, name: "propagation of chaos", budget: secs(600), run: propagation_of_chaos },
        Criterion { number: 8, name: "coupling null test", budget: secs(10), run: coupling_null },
        Criterion { number: 9, name: "empirical-law convergence", budget: secs(120), run: empirical_law },
        Criterion { number: 10, name: "geometric-condition validator", budget: secs(5), run: geometry_validator },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.number.to_string() == *f || c.name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = started.elapsed();
        let in_budget = elapsed <= c.budget;
        let (ok, detail) = match outcome {
            Ok(d) => (in_budget, d),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({}; {:.1}s of {}s budget)",
            c.number,
            c.name,
            if ok { "PASS" } else { "FAIL" },
            detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn two_strategies() -> PureStrategySpace {
    PureStrategySpace::new(vec!["leader".into(), "follower".into()], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
}

fn leader_follower(theta: f64) -> BuiltinField {
    BuiltinField::new(FieldSpec::LeaderFollower(LeaderFollower::default()), theta, 2).unwrap()
}

fn standard_init() -> InitSampler {
    InitSampler::gaussian(vec![0.0], 1.0, StrategyInit::Uniform)
}

fn random_space(rng: &mut ChaCha8Rng, m: usize) -> PureStrategySpace {
    // Euclidean distances between random points in the plane form a metric.
    let pts: Vec<(f64, f64)> = (0..m).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    let dist = (0..m)
        .map(|i| (0..m).map(|j| ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt()).collect())
        .collect();
    PureStrategySpace::new((0..m).map(|i| format!("u{i}")).collect(), dist).unwrap()
}

fn random_strategy(rng: &mut ChaCha8Rng, m: usize) -> MixedStrategy {
    let w: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = w.iter().sum();
    let mut w: Vec<f64> = w.iter().map(|x| x / total).collect();
    let rest: f64 = w[1..].iter().sum();
    w[0] = 1.0 - rest;
    MixedStrategy::new(w).unwrap()
}

fn random_ensemble(rng: &mut ChaCha8Rng, n: usize, space: &PureStrategySpace) -> Ensemble {
    Ensemble::new(
        (0..n)
            .map(|_| {
                let x = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                AgentState::new(x, random_strategy(rng, space.len())).unwrap()
            })
            .collect(),
    )
    .unwrap()
}

/// `BL(a - b)` for probability vectors equals `max_s W1` under the cost
/// `min((1 - s) d, 2 s)`, a concave function of `s`; ternary search with the
/// brute-force transport oracle.
fn bl_oracle(space: &PureStrategySpace, a: &[f64], b: &[f64]) -> f64 {
    let m = space.len();
    let value = |s: f64| {
        let cost = CostMatrix::from_fn(m, m, |i, j| ((1.0 - s) * space.dist(i, j)).min(2.0 * s)).unwrap();
        transport_lp_bruteforce(&cost, a, b).unwrap()
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..120 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if value(m1) < value(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    value(0.5 * (lo + hi))
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    let mut counts = [0usize; 4];
    for k in 0..200 {
        let err = match k % 4 {
            0 => {
                // W1 between mixed strategies vs polytope enumeration.
                let m = rng.random_range(2..=6);
                let space = random_space(&mut rng, m);
                let (a, b) = (random_strategy(&mut rng, m), random_strategy(&mut rng, m));
                let cost = CostMatrix::from_fn(m, m, |i, j| space.dist(i, j)).unwrap();
                let oracle = transport_lp_bruteforce(&cost, a.weights(), b.weights()).unwrap();
                (w1_strategy(&space, &a, &b).unwrap() - oracle).abs()
            }
            1 => {
                // W_p between small ensembles of different sizes.
                let m = rng.random_range(2..=3);
                let space = random_space(&mut rng, m);
                let (n1, n2) = (rng.random_range(1..=6), rng.random_range(1..=6));
                let (e1, e2) = (random_ensemble(&mut rng, n1, &space), random_ensemble(&mut rng, n2, &space));
                let p = 1 + (k / 4) as u32 % 2;
                let cost = state_cost_matrix(p, &e1, &e2, &space).unwrap();
                let oracle = transport_lp_bruteforce(&cost, &vec![1.0 / n1 as f64; n1], &vec![1.0 / n2 as f64; n2])
                    .unwrap()
                    .powf(1.0 / p as f64);
                (w_product(p, &e1, &e2, &space).unwrap() - oracle).abs()
            }
            2 => {
                // W_p between equal-size ensembles vs the assignment oracle.
                let m = rng.random_range(2..=3);
                let space = random_space(&mut rng, m);
                let n = rng.random_range(1..=64);
                let (e1, e2) = (random_ensemble(&mut rng, n, &space), random_ensemble(&mut rng, n, &space));
                let p = 1 + (k / 4) as u32 % 2;
                let cost = state_cost_matrix(p, &e1, &e2, &space).unwrap();
                let oracle = (hungarian(&cost).unwrap().0 / n as f64).powf(1.0 / p as f64);
                (w_product(p, &e1, &e2, &space).unwrap() - oracle).abs()
            }
            _ => {
                // BL norm of a difference of strategies.
                let m = rng.random_range(2..=4);
                let space = random_space(&mut rng, m);
                let (a, b) = (random_strategy(&mut rng, m), random_strategy(&mut rng, m));
                let diff: Vec<f64> = a.weights().iter().zip(b.weights()).map(|(x, y)| x - y).collect();
                (bl_norm(&space, &diff).unwrap() - bl_oracle(&space, a.weights(), b.weights())).abs()
            }
        };
        counts[k % 4] += 1;
        worst = worst.max(err);
    }
    check(
        worst <= 1e-9,
        format!(
            "200 instances (W1 {} / W_p enum {} / W_p assignment {} / BL {}), worst discrepancy {worst:.2e}",
            counts[0], counts[1], counts[2], counts[3]
        ),
    )
}

fn simplex_confinement() -> Outcome {
    let theta = 0.01;
    let f = leader_follower(theta);
    let cfg = SimConfig::new(64, 2000.0 * theta / 2.0, 2000, 11);
    let init = standard_init().sample_ensemble(cfg.seed, 64, 2).unwrap();
    let bundle = solve_n_particle(&init, &f, &cfg).map_err(|e| e.to_string())?;
    let mut checked = 0usize;
    let mut violations = 0usize;
    for i in 0..bundle.paths() {
        for k in 1..bundle.times().len() {
            checked += 1;
            if MixedStrategy::new(bundle.strategy(i, k).to_vec()).is_err() {
                violations += 1;
            }
        }
    }
    check(
        violations == 0 && checked == 128_000,
        format!("{violations} violations in {checked} agent-steps"),
    )
}

fn worker_invariance() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{
            "schema_version": 1,
            "space": {"labels": ["leader", "follower"], "dist": [[0, 1], [1, 0]]},
            "field": {"variant": "leader_follower", "params": {}},
            "theta": 0.5,
            "sim": {"agents": 128, "horizon": 1.0, "steps": 200},
            "init": {"position": {"mean": [0.0, 0.0], "std": 1.0}, "strategy": {"kind": "uniform"}},
            "experiment": {"kind": "simulate"},
            "seed": 5
        }"#,
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for threads in [1, 4, 8] {
        let out = dir.path().join(format!("run{threads}.csv"));
        let code = meanfield_lab::cli::run([
            "meanfield-lab",
            "--threads",
            &threads.to_string(),
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        if code != 0 {
            return Err(format!("simulate exited with {code} at {threads} threads"));
        }
        outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    check(
        outputs[0] == outputs[1] && outputs[0] == outputs[2],
        format!("CSVs of {} bytes at 1/4/8 workers, identical: {}", outputs[0].len(), outputs[0] == outputs[1] && outputs[0] == outputs[2]),
    )
}

fn ou_moments() -> Outcome {
    // v = -x, sigma = sqrt(2) * 0.5, no strategy coupling: independent OU agents.
    let c: f64 = 0.5;
    let spec = FieldSpec::StrategyMeanReversion(MeanReversion {
        noise: 2.0_f64.sqrt() * c,
        drift_rate: 1.0,
        ..MeanReversion::default()
    });
    let f = BuiltinField::new(spec, 0.5, 2).unwrap();
    let x0 = 1.0;
    let n = 10_000;
    let cfg = SimConfig::new(n, 1.0, 1000, 4);
    let init = InitSampler::gaussian(vec![x0], 0.0, StrategyInit::Uniform).sample_ensemble(cfg.seed, n, 2).unwrap();
    let last = solve_final(&init, &f, &cfg).map_err(|e| e.to_string())?;
    let xs: Vec<f64> = last.iter().map(|s| s.position[0]).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let want_mean = (-1.0_f64).exp() * x0;
    let want_var = c * c * (1.0 - (-2.0_f64).exp());
    let (em, ev) = ((mean - want_mean).abs() / want_mean, (var - want_var).abs() / want_var);
    check(
        em < 0.02 && ev < 0.03,
        format!("mean {mean:.5} vs {want_mean:.5} ({:.2}%), variance {var:.5} vs {want_var:.5} ({:.2}%)", em * 100.0, ev * 100.0),
    )
}

fn moment_stability() -> Outcome {
    let space = two_strategies();
    let f = leader_follower(0.5);
    let init = standard_init();
    let mut ratios = Vec::new();
    for n in [16usize, 64, 256] {
        // Pool repetitions so every N averages over 4096 agent paths.
        let reps = 4096 / n;
        let (mut moment, mut initial) = (0.0, 0.0);
        for rep in 0..reps {
            let cfg = SimConfig::new(n, 1.0, 100, 1000 + rep as u64);
            let start = init.sample_ensemble(cfg.seed, n, 2).unwrap();
            let bundle = solve_n_particle(&start, &f, &cfg).map_err(|e| e.to_string())?;
            moment += sup_moment(&bundle, 2, &space).unwrap();
            initial += start.iter().map(|s| s.position.iter().map(|x| x * x).sum::<f64>()).sum::<f64>() / n as f64;
        }
        ratios.push(moment / reps as f64 / (1.0 + initial / reps as f64));
    }
    let hi = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
    let spread = (hi - lo) / lo;
    check(spread < 0.2, format!("ratios {ratios:.4?} for N = 16/64/256, spread {:.2}%", spread * 100.0))
}

fn coupled_reversion(theta: f64) -> BuiltinField {
    let spec = FieldSpec::StrategyMeanReversion(MeanReversion {
        target: Some(vec![0.8, 0.2]),
        tau: Some(1.0),
        coupling: 0.5,
        drift_rate: 1.0,
        drift_coupling: 0.5,
        noise: 0.5,
    });
    BuiltinField::new(spec, theta, 2).unwrap()
}

fn contraction() -> Outcome {
    let space = two_strategies();
    let f = coupled_reversion(0.5);
    let cfg = SimConfig::new(512, 1.0, 100, 21);
    let (_, report) = fixed_point(&f, &standard_init(), &space, &cfg, 1e-3, 10).map_err(|e| e.to_string())?;
    let g = &report.gaps;
    let decreasing = g.windows(2).all(|w| w[1] < w[0]);
    check(
        decreasing && report.converged && report.iterations <= 10,
        format!("gaps {}, converged in {} iterations", sci(g), report.iterations),
    )
}

fn propagation_of_chaos() -> Outcome {
    let space = two_strategies();
    let f = leader_follower(0.5);
    let init = standard_init();
    let grid = [8usize, 16, 32, 64, 128];
    let law_cfg = SimConfig::new(4 * 128, 1.0, 200, 31);
    let (law, _) = fixed_point(&f, &init, &space, &law_cfg, 1e-3, 20).map_err(|e| e.to_string())?;
    let sweep = chaos_sweep(&f, &law_cfg, &init, &law, &space, &grid, 64, 32).map_err(|e| e.to_string())?;
    let errs: Vec<f64> = sweep.results.iter().map(|r| r.err).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let halved = errs[4] <= errs[0] / 2.0;
    let failures: usize = sweep.results.iter().map(|r| r.failures).sum();
    check(
        decreasing && halved && failures == 0,
        format!(
            "mean err {} for N = {grid:?}, err(128)/err(8) = {:.3}, slope {:.3}",
            sci(&errs),
            errs[4] / errs[0],
            sweep.slope.unwrap_or(f64::NAN)
        ),
    )
}

fn coupling_null() -> Outcome {
    let space = two_strategies();
    let spec = FieldSpec::StrategyMeanReversion(MeanReversion { noise: 0.5, ..MeanReversion::default() });
    let f = BuiltinField::new(spec, 0.5, 2).unwrap();
    let init = standard_init();
    let cfg = SimConfig::new(64, 1.0, 50, 41);
    let (law, _) = fixed_point(&f, &init, &space, &cfg, 1e-9, 5).map_err(|e| e.to_string())?;
    let sweep = chaos_sweep(&f, &cfg, &init, &law, &space, &[8, 16, 32, 64], 8, 42).map_err(|e| e.to_string())?;
    let all_zero = sweep.cells.iter().all(|c| c.err == Some(0.0));
    check(
        all_zero && sweep.slope.is_none(),
        format!("{} cells, all exactly zero: {all_zero}, slope reported as undefined", sweep.cells.len()),
    )
}

fn empirical_law() -> Outcome {
    let space = two_strategies();
    let f = coupled_reversion(0.5);
    let init = standard_init();
    let cfg = SimConfig::new(256, 1.0, 50, 51);
    let (law, _) = fixed_point(&f, &init, &space, &cfg, 1e-6, 10).map_err(|e| e.to_string())?;
    let mut good = 0;
    let mut rows = Vec::new();
    for seed in 0..10u64 {
        let gaps = empirical_law_gaps(&f, &cfg, &init, &law, &space, &[16, 64, 256], 4096, 600 + seed)
            .map_err(|e| e.to_string())?;
        if gaps.windows(2).all(|w| w[1] < w[0]) {
            good += 1;
        }
        rows.push(gaps);
    }
    let mean: Vec<f64> = (0..3).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).collect();
    check(good >= 9, format!("{good}/10 seeds decreasing; mean W2 {mean:.4?} for N = 16/64/256"))
}

fn geometry_validator() -> Outcome {
    let theta = 0.5;
    let broken = BuiltinField::new(
        FieldSpec::StrategyMeanReversion(MeanReversion { tau: Some(theta / 2.0), ..MeanReversion::default() }),
        theta,
        3,
    )
    .unwrap();
    let report = validate_geometry(&broken, &ProbeSampler::new(1, 3), 10_000, 61).unwrap();
    let vertex = report
        .counterexample
        .as_ref()
        .is_some_and(|v| v.strategy.iter().filter(|&&w| w == 1.0).count() == 1 && v.margin < 0.0);
    let builtins = [
        (FieldSpec::LeaderFollower(LeaderFollower::default()), 2),
        (
            FieldSpec::AttractionRepulsion(AttractionRepulsion {
                attraction: 1.0,
                repulsion: 0.5,
                length: 0.5,
                noise: 0.2,
                tau: None,
                radius: 1.0,
            }),
            3,
        ),
        (
            FieldSpec::StrategyMeanReversion(MeanReversion { coupling: 0.5, ..MeanReversion::default() }),
            3,
        ),
        (
            FieldSpec::CboStyle(Cbo {
                alpha: 10.0,
                drift: 1.0,
                noise: 0.5,
                objective: Objective::Rastrigin { center: vec![1.0] },
                tau: None,
                coupling: 1.0,
            }),
            3,
        ),
    ];
    let mut passes = Vec::new();
    for (spec, m) in builtins {
        let name = spec.name();
        let f = BuiltinField::new(spec, theta, m).unwrap();
        let r = validate_geometry(&f, &ProbeSampler::new(1, m), 10_000, 62).unwrap();
        passes.push((name, r.passed));
    }
    let all = passes.iter().all(|p| p.1);
    check(
        !report.passed && vertex && all,
        format!(
            "broken field: {} failures, worst margin {:.3} at strategy {:?}; builtins over 1e4 samples: {passes:?}",
            report.failures,
            report.worst_margin,
            report.counterexample.as_ref().map(|v| v.strategy.as_slice()).unwrap_or_default()
        ),
    )
}
