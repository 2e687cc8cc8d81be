#![allow(dead_code)]


use multiduel_core::dueling::{
    play_round, DuelingPolicy, GpSparring, IndSelfSparring, KernelSelfSparring, Sparring,
};
use multiduel_core::env::{ArmIndex, FeedbackMechanism, LinkFunction, PreferenceEnvironment};
use multiduel_core::gp::{GpPosterior, Kernel};
use multiduel_core::mab::{BetaState, Exp3State, ThompsonPolicy, Ucb1State};
use multiduel_core::runner::{
    self, AlgorithmConfig, AlgorithmKind, EnvironmentSpec, ExperimentConfig, RegretTrace,
};
use multiduel_core::RandomSource;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::SeedableRng;

pub const CASES: u32 = 1000;

pub struct Property {
    pub name: &'static str,
    pub check: fn(u32) -> Result<(), String>,
}

pub fn properties() -> Vec<Property> {
    macro_rules! props {
        ($($f:ident),* $(,)?) => { vec![$(Property { name: stringify!($f), check: $f }),*] };
    }
    props![
        env_preference_antisymmetric_and_bounded,
        env_equal_utilities_are_a_coin_flip,
        env_feedback_shapes,
        env_regret_nonnegative_and_additive,
        env_gamma_linear_is_one,
        env_feedback_seed_determinism,
        mab_beta_mass_conservation,
        mab_posterior_mean_monotone,
        mab_exp3_probabilities_normalised,
        gp_matches_dense_oracle,
        gp_variance_bounded_and_monotone,
        gp_grid_covariance_symmetric_psd,
        gp_mean_shrinks_with_noise,
        gp_draws_reproducible,
        dueling_select_cardinality,
        dueling_update_conservation,
        dueling_two_slot_regret_matches_pairwise_form,
        runner_trace_monotone_and_deterministic,
        runner_aggregate_symmetric,
    ]
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases)
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

pub fn link() -> impl Strategy<Value = LinkFunction> {
    prop_oneof![Just(LinkFunction::Linear), Just(LinkFunction::Logit)]
}

pub fn utility_env() -> impl Strategy<Value = PreferenceEnvironment> {
    (prop::collection::vec(0.0..=1.0f64, 1..12), link())
        .prop_map(|(u, l)| PreferenceEnvironment::from_utilities(u, l).unwrap())
}

/// Random consistent matrix in which arm 0 weakly beats everyone.
pub fn matrix_env() -> impl Strategy<Value = PreferenceEnvironment> {
    (2..10usize)
        .prop_flat_map(|k| prop::collection::vec(-0.5..=0.5f64, k * k))
        .prop_map(|raw| {
            let k = (raw.len() as f64).sqrt() as usize;
            let mut p = vec![vec![0.5; k]; k];
            for i in 0..k {
                for j in i + 1..k {
                    let phi = if i == 0 {
                        raw[i * k + j].abs()
                    } else {
                        raw[i * k + j]
                    };
                    p[i][j] = 0.5 + phi;
                    p[j][i] = 0.5 - phi;
                }
            }
            PreferenceEnvironment::from_matrix(p).unwrap()
        })
}

pub fn any_env() -> impl Strategy<Value = PreferenceEnvironment> {
    prop_oneof![utility_env(), matrix_env()]
}

pub fn mechanism() -> impl Strategy<Value = FeedbackMechanism> {
    prop_oneof![
        Just(FeedbackMechanism::AllPairs),
        Just(FeedbackMechanism::WinnerOnly),
        Just(FeedbackMechanism::SinglePair)
    ]
}

fn env_and_selection() -> impl Strategy<Value = (PreferenceEnvironment, Vec<usize>)> {
    any_env().prop_flat_map(|env| {
        let k = env.num_arms();
        (Just(env), prop::collection::vec(0..k, 1..7))
    })
}

fn arms(raw: &[usize]) -> Vec<ArmIndex> {
    raw.iter().copied().map(ArmIndex).collect()
}

fn env_preference_antisymmetric_and_bounded(cases: u32) -> Result<(), String> {
    run(cases, any_env(), |env| {
        let k = env.num_arms();
        for i in 0..k {
            for j in 0..k {
                let a = env.preference(ArmIndex(i), ArmIndex(j)).unwrap();
                let b = env.preference(ArmIndex(j), ArmIndex(i)).unwrap();
                prop_assert_eq!(a + b, 0.0);
                prop_assert!(a.abs() <= 0.5);
            }
            prop_assert!(
                env.preference(ArmIndex(env.best_arm().get()), ArmIndex(i))
                    .unwrap()
                    >= 0.0
            );
        }
        Ok(())
    })
}

fn env_equal_utilities_are_a_coin_flip(cases: u32) -> Result<(), String> {
    run(cases, (0.0..=1.0f64, link()), |(u, l)| {
        prop_assert_eq!(l.win_probability(u, u), 0.5);
        let env = PreferenceEnvironment::from_utilities(vec![u, u, u], l).unwrap();
        prop_assert_eq!(env.win_probability(ArmIndex(0), ArmIndex(2)).unwrap(), 0.5);
        Ok(())
    })
}

fn env_feedback_shapes(cases: u32) -> Result<(), String> {
    run(
        cases,
        (env_and_selection(), mechanism(), any::<u64>()),
        |((env, sel), mech, seed)| {
            let chosen = arms(&sel);
            let m = chosen.len();
            let mut rng = RandomSource::seed_from_u64(seed);
            let fb = env.sample_feedback(&chosen, mech, &mut rng).unwrap();
            let expected = match mech {
                FeedbackMechanism::AllPairs => m * (m - 1),
                FeedbackMechanism::WinnerOnly => 2 * (m - 1),
                FeedbackMechanism::SinglePair => {
                    if m >= 2 {
                        2
                    } else {
                        0
                    }
                }
            };
            prop_assert_eq!(fb.observed_count(), expected);
            for j in 0..m {
                prop_assert_eq!(fb.get(j, j), None);
                for k in 0..m {
                    if let (Some(a), Some(b)) = (fb.get(j, k), fb.get(k, j)) {
                        prop_assert_eq!(a as u8 + b as u8, 1);
                    }
                }
            }
            Ok(())
        },
    )
}

fn env_regret_nonnegative_and_additive(cases: u32) -> Result<(), String> {
    let strategy = any_env().prop_flat_map(|env| {
        let k = env.num_arms();
        (
            Just(env),
            prop::collection::vec(0..k, 0..6),
            prop::collection::vec(0..k, 0..6),
        )
    });
    run(cases, strategy, |(env, a, b)| {
        let (a, b) = (arms(&a), arms(&b));
        let ra = env.instantaneous_regret(&a).unwrap();
        let rb = env.instantaneous_regret(&b).unwrap();
        let union: Vec<_> = a.iter().chain(&b).copied().collect();
        let ru = env.instantaneous_regret(&union).unwrap();
        prop_assert!(ra >= 0.0 && rb >= 0.0);
        prop_assert!((ru - (ra + rb)).abs() <= 1e-12);
        Ok(())
    })
}

fn env_gamma_linear_is_one(cases: u32) -> Result<(), String> {
    run(cases, prop::collection::vec(0.0..=1.0f64, 3..12), |u| {
        let env = PreferenceEnvironment::from_utilities(u.clone(), LinkFunction::Linear).unwrap();
        let gamma = env.gamma_lower_bound();
        let n = u.len();
        let has_triple = (0..n).any(|i| {
            (0..n)
                .any(|j| (0..n).any(|k| i != j && j != k && i != k && u[i] > u[j] && u[j] >= u[k]))
        });
        if has_triple {
            prop_assert!((gamma - 1.0).abs() <= 1e-12, "gamma = {}", gamma);
        } else {
            prop_assert!(gamma.is_infinite());
        }
        Ok(())
    })
}

fn env_feedback_seed_determinism(cases: u32) -> Result<(), String> {
    run(
        cases,
        (env_and_selection(), mechanism(), any::<u64>()),
        |((env, sel), mech, seed)| {
            let chosen = arms(&sel);
            let draw = |seed| {
                let mut rng = RandomSource::seed_from_u64(seed);
                (0..5)
                    .map(|_| env.sample_feedback(&chosen, mech, &mut rng).unwrap())
                    .collect::<Vec<_>>()
            };
            prop_assert_eq!(draw(seed), draw(seed));
            Ok(())
        },
    )
}

fn beta_updates() -> impl Strategy<Value = (usize, f64, Vec<(usize, bool)>)> {
    (1..10usize, 0.1..5.0f64).prop_flat_map(|(k, eta)| {
        (
            Just(k),
            Just(eta),
            prop::collection::vec((0..k, any::<bool>()), 0..60),
        )
    })
}

fn mab_beta_mass_conservation(cases: u32) -> Result<(), String> {
    run(cases, beta_updates(), |(k, eta, updates)| {
        let mut state = BetaState::new(k);
        let mut credited = vec![0usize; k];
        for (arm, win) in updates {
            state.update(ArmIndex(arm), if win { 1.0 } else { 0.0 }, eta);
            credited[arm] += 1;
            for i in 0..k {
                let mass = state.successes()[i] + state.failures()[i];
                prop_assert!((mass - eta * credited[i] as f64).abs() <= 1e-9 * (1.0 + mass));
                prop_assert!(state.successes()[i] >= 0.0 && state.failures()[i] >= 0.0);
            }
        }
        Ok(())
    })
}

fn mab_posterior_mean_monotone(cases: u32) -> Result<(), String> {
    run(cases, beta_updates(), |(k, eta, updates)| {
        let mut state = BetaState::new(k);
        for (arm, win) in updates {
            let before = state.posterior_mean(ArmIndex(arm));
            state.update(ArmIndex(arm), if win { 1.0 } else { 0.0 }, eta);
            let after = state.posterior_mean(ArmIndex(arm));
            if win {
                prop_assert!(after >= before);
            } else {
                prop_assert!(after <= before);
            }
        }
        Ok(())
    })
}

fn mab_exp3_probabilities_normalised(cases: u32) -> Result<(), String> {
    let strategy = (1..8usize, 0.01..=1.0f64).prop_flat_map(|(k, g)| {
        (
            Just(k),
            Just(g),
            prop::collection::vec((0..k, 0.0..=1.0f64), 0..200),
        )
    });
    run(cases, strategy, |(k, gamma, updates)| {
        let mut state = Exp3State::new(k, gamma);
        for (arm, reward) in updates {
            state.update(ArmIndex(arm), reward);
            let p = state.probabilities();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|&x| x >= gamma / k as f64 - 1e-15));
        }
        Ok(())
    })
}

/// Random GP instance: dimension, observations, query points.
#[derive(Debug, Clone)]
pub struct GpCase {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub queries: Vec<Vec<f64>>,
}

pub fn gp_case(max_obs: usize) -> impl Strategy<Value = GpCase> {
    (1..=2usize, 0..=max_obs).prop_flat_map(|(dim, t)| {
        let point = prop::collection::vec(0.0..=1.0f64, dim);
        (
            Just(dim),
            prop::collection::vec(point.clone(), t),
            prop::collection::vec(prop_oneof![Just(0.0), Just(1.0)], t),
            prop::collection::vec(point, 1..5),
        )
            .prop_map(|(dim, points, values, queries)| GpCase {
                dim,
                points,
                values,
                queries,
            })
    })
}

pub fn fit_gp(case: &GpCase, noise_variance: f64, grid: Vec<Vec<f64>>) -> GpPosterior {
    let mut gp = GpPosterior::new(
        Kernel::squared_exponential(0.2, case.dim),
        noise_variance,
        grid,
    )
    .unwrap();
    for (x, &y) in case.points.iter().zip(&case.values) {
        gp.observe(x, y).unwrap();
    }
    gp
}

/// Largest absolute deviation between the library posterior and the dense oracle.
pub fn oracle_deviation(case: &GpCase) -> f64 {
    let gp = fit_gp(case, 0.025, Vec::new());
    let mut worst: f64 = 0.0;
    for q in case.queries.iter().chain(&case.points) {
        let p = gp.posterior_at(q).unwrap();
        let (mean, var) = oracle::dense_posterior(&case.points, &case.values, q, 0.2, 0.025);
        worst = worst
            .max((p.mean - mean).abs())
            .max((p.variance - var.max(0.0)).abs());
    }
    worst
}

fn gp_matches_dense_oracle(cases: u32) -> Result<(), String> {
    run(cases, gp_case(20), |case| {
        let dev = oracle_deviation(&case);
        prop_assert!(dev <= 1e-9, "deviation {}", dev);
        Ok(())
    })
}

fn gp_variance_bounded_and_monotone(cases: u32) -> Result<(), String> {
    run(cases, gp_case(20), |case| {
        let mut gp = GpPosterior::new(
            Kernel::squared_exponential(0.2, case.dim),
            0.025,
            case.queries.clone(),
        )
        .unwrap();
        let mut last: Vec<f64> = gp
            .posterior_on_grid()
            .unwrap()
            .iter()
            .map(|p| p.variance)
            .collect();
        for (x, &y) in case.points.iter().zip(&case.values) {
            gp.observe(x, y).unwrap();
            let now: Vec<f64> = gp
                .posterior_on_grid()
                .unwrap()
                .iter()
                .map(|p| p.variance)
                .collect();
            for (a, b) in now.iter().zip(&last) {
                prop_assert!((0.0..=1.0).contains(a));
                prop_assert!(*a <= b + 1e-12, "variance rose from {} to {}", b, a);
            }
            last = now;
        }
        Ok(())
    })
}

fn gp_grid_covariance_symmetric_psd(cases: u32) -> Result<(), String> {
    run(cases, gp_case(20), |case| {
        let gp = fit_gp(&case, 0.025, case.queries.clone());
        let (_, cov) = gp.posterior_grid().unwrap();
        prop_assert_eq!(&cov, &cov.transpose());
        prop_assert!(gp.grid_sampler().is_ok());
        Ok(())
    })
}

fn gp_mean_shrinks_with_noise(cases: u32) -> Result<(), String> {
    run(cases, gp_case(20), |case| {
        let y_norm = case.values.iter().map(|y| y * y).sum::<f64>().sqrt();
        let mut last_bound = f64::INFINITY;
        for noise in [0.025, 1.0, 100.0] {
            let gp = fit_gp(&case, noise, Vec::new());
            for q in &case.queries {
                let k_norm = case
                    .points
                    .iter()
                    .map(|p| oracle::se_kernel(p, q, 0.2).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let bound = k_norm * y_norm / noise;
                let mean = gp.posterior_at(q).unwrap().mean;
                prop_assert!(mean.abs() <= bound + 1e-12);
                prop_assert!(bound <= last_bound || k_norm * y_norm == 0.0);
            }
            last_bound = case.points.len() as f64 * y_norm / noise;
        }
        Ok(())
    })
}

fn gp_draws_reproducible(cases: u32) -> Result<(), String> {
    run(cases, (gp_case(10), any::<u64>()), |(case, seed)| {
        let gp = fit_gp(&case, 0.025, case.queries.clone());
        let a = gp
            .sample_function(&mut RandomSource::seed_from_u64(seed))
            .unwrap();
        let b = gp
            .sample_function(&mut RandomSource::seed_from_u64(seed))
            .unwrap();
        prop_assert_eq!(a, b);
        Ok(())
    })
}

fn line_gp(k: usize) -> GpPosterior {
    let grid = (0..k).map(|i| vec![i as f64 / k as f64]).collect();
    GpPosterior::new(Kernel::squared_exponential(0.2, 1), 0.025, grid).unwrap()
}

fn policy_for(kind: u8, k: usize, m: usize) -> Box<dyn DuelingPolicy> {
    match kind % 6 {
        0 => Box::new(IndSelfSparring::new(k, m, 1.0)),
        1 => Box::new(KernelSelfSparring::new(line_gp(k), m)),
        2 => Box::new(Sparring::new((0..m).map(|_| Ucb1State::new(k)).collect())),
        3 => Box::new(Sparring::new(
            (0..m).map(|_| Exp3State::new(k, 0.1)).collect(),
        )),
        4 => Box::new(Sparring::new(
            (0..m).map(|_| ThompsonPolicy::new(k, 1.0)).collect(),
        )),
        _ => Box::new(GpSparring::new(line_gp(k), m, 0.2)),
    }
}

fn dueling_select_cardinality(cases: u32) -> Result<(), String> {
    let strategy = (
        utility_env(),
        1..6usize,
        any::<u8>(),
        mechanism(),
        any::<u64>(),
    );
    run(cases, strategy, |(env, m, kind, mech, seed)| {
        let mut policy = policy_for(kind, env.num_arms(), m);
        let (mut prng, mut erng) = runner::rng_pair(seed);
        for t in 1..=3 {
            let rec = play_round(&mut policy, &env, mech, t, &mut prng, &mut erng).unwrap();
            prop_assert_eq!(rec.chosen.len(), m);
            prop_assert!(rec.chosen.iter().all(|a| a.get() < env.num_arms()));
        }
        Ok(())
    })
}

fn dueling_update_conservation(cases: u32) -> Result<(), String> {
    let strategy = (any_env(), 1..6usize, 0.1..5.0f64, mechanism(), any::<u64>());
    run(cases, strategy, |(env, m, eta, mech, seed)| {
        let mut policy = IndSelfSparring::new(env.num_arms(), m, eta);
        let (mut prng, mut erng) = runner::rng_pair(seed);
        let mass = |p: &IndSelfSparring| -> f64 {
            p.state()
                .successes()
                .iter()
                .chain(p.state().failures())
                .sum()
        };
        for t in 1..=5 {
            let before = mass(&policy);
            let rec = play_round(&mut policy, &env, mech, t, &mut prng, &mut erng).unwrap();
            let added = mass(&policy) - before;
            let expected = eta * rec.feedback.observed_count() as f64;
            prop_assert!((added - expected).abs() <= 1e-9 * (1.0 + mass(&policy)));
        }
        Ok(())
    })
}

fn dueling_two_slot_regret_matches_pairwise_form(cases: u32) -> Result<(), String> {
    run(cases, (any_env(), any::<u64>()), |(env, seed)| {
        let mut policy = IndSelfSparring::new(env.num_arms(), 2, 3.5);
        let (mut prng, mut erng) = runner::rng_pair(seed);
        let best = env.best_arm();
        for t in 1..=10 {
            let rec = play_round(
                &mut policy,
                &env,
                FeedbackMechanism::SinglePair,
                t,
                &mut prng,
                &mut erng,
            )
            .unwrap();
            let pairwise = env.preference(best, rec.chosen[0]).unwrap()
                + env.preference(best, rec.chosen[1]).unwrap();
            prop_assert_eq!(rec.regret, pairwise);
            prop_assert_eq!(rec.feedback.observed_count(), 2);
        }
        Ok(())
    })
}

fn small_config() -> impl Strategy<Value = ExperimentConfig> {
    let names = prop_oneof![
        Just("1good"),
        Just("2good"),
        Just("6good"),
        Just("arith"),
        Just("geom")
    ];
    let kinds = prop_oneof![
        Just(AlgorithmKind::IndSelfsparring),
        Just(AlgorithmKind::Multisparring),
    ];
    (
        names,
        link(),
        kinds,
        1..5usize,
        mechanism(),
        1..40usize,
        any::<u64>(),
    )
        .prop_map(|(name, link, kind, m, mech, horizon, seed)| {
            let mut c = ExperimentConfig::new(
                EnvironmentSpec::Synthetic {
                    name: name.into(),
                    link,
                },
                AlgorithmConfig::new(kind, m, mech),
                horizon,
                2,
            );
            c.base_seed = seed;
            c
        })
}

fn runner_trace_monotone_and_deterministic(cases: u32) -> Result<(), String> {
    run(cases, small_config(), |config| {
        let trace = runner::run_single(&config, 1).unwrap();
        prop_assert_eq!(trace.len(), config.horizon);
        let mut acc = 0.0;
        for (inst, cum) in trace.instantaneous.iter().zip(&trace.cumulative) {
            prop_assert!(*inst >= 0.0);
            acc += inst;
            prop_assert_eq!(acc, *cum);
        }
        prop_assert!(trace.cumulative.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(&trace, &runner::run_single(&config, 1).unwrap());
        Ok(())
    })
}

fn runner_aggregate_symmetric(cases: u32) -> Result<(), String> {
    let traces = (1..20usize)
        .prop_flat_map(|len| prop::collection::vec(prop::collection::vec(0.0..1.0f64, len), 1..8));
    run(cases, (traces, small_config()), |(raw, config)| {
        let mut traces: Vec<RegretTrace> = raw
            .into_iter()
            .map(RegretTrace::from_instantaneous)
            .collect();
        let forward = runner::aggregate(&config, &traces);
        traces.reverse();
        let backward = runner::aggregate(&config, &traces);
        prop_assert_eq!(&forward, &backward);
        prop_assert!(forward.std.iter().all(|&s| s >= 0.0));
        prop_assert!(forward.mean.windows(2).all(|w| w[0] <= w[1]));
        Ok(())
    })
}
