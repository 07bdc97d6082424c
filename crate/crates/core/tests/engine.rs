use meanfield_lab::engine::{solve_final, solve_n_particle, step, sup_moment, SimConfig};
use meanfield_lab::fields::{BuiltinField, FieldSpec, LeaderFollower, MeanReversion};
use meanfield_lab::rng::BrownianSource;
use meanfield_lab::sampler::{InitSampler, StrategyInit};
use meanfield_lab::{AgentState, Ensemble, MixedStrategy, PureStrategySpace};

fn ou(noise: f64) -> BuiltinField {
    let spec = FieldSpec::StrategyMeanReversion(MeanReversion { noise, ..MeanReversion::default() });
    BuiltinField::new(spec, 1.0, 2).unwrap()
}

#[test]
fn mirrored_leader_follower_pair_stays_mirrored() {
    let spec = FieldSpec::LeaderFollower(LeaderFollower { noise: 0.0, ..LeaderFollower::default() });
    let f = BuiltinField::new(spec, 0.5, 2).unwrap();
    let lambda = MixedStrategy::new(vec![0.3, 0.7]).unwrap();
    let mut e = Ensemble::new(vec![
        AgentState::new(vec![1.2, -0.4], lambda.clone()).unwrap(),
        AgentState::new(vec![-1.2, 0.4], lambda).unwrap(),
    ])
    .unwrap();
    for _ in 0..50 {
        e = step(&e, &f, &[0.0; 4], 0.1).unwrap();
        let (a, b) = (&e.states()[0], &e.states()[1]);
        for (p, q) in a.position.iter().zip(&b.position) {
            assert_eq!(*p, -*q);
        }
        assert_eq!(a.strategy, b.strategy);
    }
    // Confinement wins over the bounded attraction: the pair contracts.
    assert!(e.states()[0].position[0].abs() < 1.2);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let f = BuiltinField::new(FieldSpec::LeaderFollower(LeaderFollower::default()), 0.5, 2).unwrap();
    let init = InitSampler::gaussian(vec![0.0, 1.0], 1.0, StrategyInit::Uniform).sample_ensemble(3, 40, 2).unwrap();
    let cfg = SimConfig::new(40, 1.0, 50, 17);
    let runs: Vec<_> = [1, 4, 8]
        .iter()
        .map(|&t| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
            pool.install(|| solve_n_particle(&init, &f, &cfg).unwrap())
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn strategies_never_leave_the_simplex() {
    let spec = FieldSpec::LeaderFollower(LeaderFollower { radius: 0.3, ..LeaderFollower::default() });
    let f = BuiltinField::new(spec, 0.05, 2).unwrap();
    // dt = theta: the largest admissible step.
    let cfg = SimConfig::new(100, 50.0, 1000, 2);
    let init = InitSampler::gaussian(vec![0.0], 2.0, StrategyInit::Uniform).sample_ensemble(1, 100, 2).unwrap();
    let b = solve_n_particle(&init, &f, &cfg).unwrap();
    let mut count = 0;
    for i in 0..b.paths() {
        for k in 0..b.times().len() {
            MixedStrategy::new(b.strategy(i, k).to_vec()).unwrap();
            count += 1;
        }
    }
    assert!(count >= 100_000);
}

#[test]
fn ou_sup_moment_is_stable_under_refinement() {
    let space = PureStrategySpace::uniform(2, 1.0).unwrap();
    let f = ou(0.5);
    let init = InitSampler::gaussian(vec![1.0], 0.5, StrategyInit::Uniform).sample_ensemble(5, 2000, 2).unwrap();
    let coarse = solve_n_particle(&init, &f, &SimConfig::new(2000, 1.0, 100, 6)).unwrap();
    let fine = solve_n_particle(&init, &f, &SimConfig::new(2000, 1.0, 200, 6)).unwrap();
    let (a, b) = (sup_moment(&coarse, 2, &space).unwrap(), sup_moment(&fine, 2, &space).unwrap());
    assert!((a - b).abs() / b < 0.1, "{a} vs {b}");
}

#[test]
fn ou_mean_error_shrinks_with_dt() {
    // Common random numbers: coarse increments are sums of the finest ones.
    let (n, x0, horizon, finest) = (100_000usize, 1.0, 1.0, 64usize);
    let f = ou(0.5);
    let src = BrownianSource::new(8);
    let fine_dt = horizon / finest as f64;
    let mut fine = vec![0.0; n * finest];
    for i in 0..n {
        for k in 0..finest {
            src.increments(i, k, fine_dt, &mut fine[i * finest + k..i * finest + k + 1]);
        }
    }
    let exact = (-horizon).exp() * x0;
    let init = Ensemble::new(vec![AgentState::new(vec![x0], MixedStrategy::barycenter(2)).unwrap(); n]).unwrap();
    let mut errors = Vec::new();
    for steps in [8usize, 16, 32, 64] {
        let group = finest / steps;
        let dt = horizon / steps as f64;
        let mut e = init.clone();
        for k in 0..steps {
            let noise: Vec<f64> =
                (0..n).map(|i| fine[i * finest + k * group..i * finest + (k + 1) * group].iter().sum()).collect();
            e = step(&e, &f, &noise, dt).unwrap();
        }
        let mean = e.mean_position()[0];
        errors.push((mean - exact).abs());
    }
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
}

#[test]
fn zero_field_gives_constant_bundle() {
    let spec = FieldSpec::StrategyMeanReversion(MeanReversion {
        drift_rate: 0.0,
        target: Some(vec![0.5, 0.5]),
        ..MeanReversion::default()
    });
    let f = BuiltinField::new(spec, 1.0, 2).unwrap();
    let init = Ensemble::new(vec![AgentState::new(vec![0.3], MixedStrategy::barycenter(2)).unwrap(); 3]).unwrap();
    let final_state = solve_final(&init, &f, &SimConfig::new(3, 1.0, 20, 0)).unwrap();
    assert_eq!(final_state, init);
}
