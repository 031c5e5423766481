use nmq_core::control::{integrate_heun, ControlTrajectory};
use nmq_core::kernels::Rates;
use nmq_core::*;

fn measured(m: f64) -> ReservoirParams {
    ReservoirParams {
        measurement_strength: m,
        efficiency: 1.0,
        ..Default::default()
    }
}

fn rate_free(t_max: f64, dt: f64) -> CoefficientTable {
    CoefficientTable::constant(Rates::default(), t_max, dt).unwrap()
}

#[test]
fn measured_z_is_a_martingale() {
    let p = measured(0.05);
    let table = rate_free(10.0, 0.01);
    let s0 = BlochState::reference_initial();
    let cfg = IntegratorConfig::new(0.005, 10.0, 31);
    let n = 2000;
    let stats = run_ensemble(
        &p,
        &table,
        &s0,
        &cfg,
        &ZeroControl,
        n,
        ModeFlag::NonMarkovian,
    )
    .unwrap();
    let k = stats.times.len() - 1;
    let se = (stats.var_z[k] / n as f64).sqrt();
    let miss = (stats.mean_z[k] - s0.z).abs();
    assert!(miss <= 4.0 * se, "|mean z(T) - z0| = {miss}, SE = {se}");
}

#[test]
fn purity_stays_near_one_without_dissipation() {
    let p = measured(0.05);
    let table = rate_free(10.0, 1e-4);
    let s0 = BlochState::reference_initial();
    for index in 0..4 {
        let cfg = IntegratorConfig::new(1e-4, 10.0, 8).with_index(index);
        let r = simulate(&p, &table, &s0, &cfg, &ZeroControl, ModeFlag::NonMarkovian).unwrap();
        let worst = r
            .states
            .iter()
            .map(|s| (1.0 - s.norm()).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 5e-3, "trajectory {index}: {worst}");
    }
}

#[test]
fn unmeasured_paths_converge_at_first_order() {
    let p = ReservoirParams {
        omega_c: 0.5,
        kbt: 10.0,
        measurement_strength: 0.0,
        ..Default::default()
    };
    let table = build_coefficient_table(&p, &TableConfig::new(5.0, 0.01)).unwrap();
    let s0 = BlochState::reference_initial();
    let fine = 2.5e-4;
    let times: Vec<f64> = (0..=20_000).map(|k| k as f64 * fine).collect();
    let reference = integrate_heun(
        &p,
        &table,
        &s0,
        &ControlTrajectory::zeros(times),
        fine,
        ModeFlag::NonMarkovian,
    )
    .unwrap();

    let error = |dt: f64| {
        let cfg = IntegratorConfig::new(dt, 5.0, 1);
        let r = simulate(&p, &table, &s0, &cfg, &ZeroControl, ModeFlag::NonMarkovian).unwrap();
        let stride = (dt / fine).round() as usize;
        r.states
            .iter()
            .enumerate()
            .map(|(k, s)| (*s - reference[k * stride]).norm())
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (error(0.01), error(0.005));
    assert!(e1 <= 0.1, "error at dt=0.01: {e1}");
    let ratio = e1 / e2;
    assert!((1.7..=2.3).contains(&ratio), "halving ratio {ratio}");
}

#[test]
fn ensembles_ignore_the_thread_count() {
    let p = ReservoirParams {
        omega_c: 0.5,
        kbt: 10.0,
        ..Default::default()
    };
    let table = build_coefficient_table(&p, &TableConfig::new(3.0, 0.01)).unwrap();
    let s0 = BlochState::reference_initial();
    let cfg = IntegratorConfig::new(0.01, 3.0, 99);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                run_ensemble(
                    &p,
                    &table,
                    &s0,
                    &cfg,
                    &ZeroControl,
                    300,
                    ModeFlag::NonMarkovian,
                )
                .unwrap()
            })
    };
    let one = run(1);
    for threads in [2, 4, 7] {
        let many = run(threads);
        assert_eq!(one, many, "{threads} threads");
        assert!(one
            .mean_lambda
            .iter()
            .zip(&many.mean_lambda)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }
    let again = simulate(
        &p,
        &table,
        &s0,
        &cfg.with_index(17),
        &ZeroControl,
        ModeFlag::NonMarkovian,
    )
    .unwrap();
    let first = simulate(
        &p,
        &table,
        &s0,
        &cfg.with_index(17),
        &ZeroControl,
        ModeFlag::NonMarkovian,
    )
    .unwrap();
    assert_eq!(again, first);
}

#[test]
fn doubling_the_ensemble_halves_the_variance_of_its_mean() {
    let p = ReservoirParams {
        omega_c: 0.5,
        kbt: 10.0,
        ..Default::default()
    };
    let table = build_coefficient_table(&p, &TableConfig::new(2.0, 0.01)).unwrap();
    let s0 = BlochState::reference_initial();
    let repeats = 600;
    let spread = |n: usize, seed_base: u64| {
        let finals: Vec<f64> = (0..repeats)
            .map(|r| {
                let cfg = IntegratorConfig::new(0.01, 2.0, seed_base + r as u64);
                run_ensemble(
                    &p,
                    &table,
                    &s0,
                    &cfg,
                    &ZeroControl,
                    n,
                    ModeFlag::NonMarkovian,
                )
                .unwrap()
                .final_mean_lambda()
            })
            .collect();
        let mean = finals.iter().sum::<f64>() / repeats as f64;
        finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64
    };
    let ratio = spread(64, 10_000) / spread(32, 20_000);
    assert!((0.4..=0.6).contains(&ratio), "variance ratio {ratio}");
}

#[test]
fn reject_policy_keeps_states_physical() {
    let p = measured(0.05);
    let table = rate_free(2.0, 0.01);
    let cfg = IntegratorConfig {
        clamp_policy: ClampPolicy::RejectStep,
        ..IntegratorConfig::new(0.01, 2.0, 4)
    };
    let r = simulate(
        &p,
        &table,
        &BlochState::reference_initial(),
        &cfg,
        &ZeroControl,
        ModeFlag::NonMarkovian,
    )
    .unwrap();
    assert!(r.states.iter().all(|s| s.norm() <= 1.0));
}
