use nmq_core::*;

fn preset() -> (ReservoirParams, CoefficientTable) {
    let p = ReservoirParams {
        omega_c: 0.5,
        kbt: 10.0,
        measurement_strength: 0.05,
        efficiency: 1.0,
        ..Default::default()
    };
    let table = build_coefficient_table(&p, &TableConfig::new(15.0, 0.01)).unwrap();
    (p, table)
}

#[test]
fn preset_sweep_converges_and_descends() {
    let (p, table) = preset();
    let oc = OCConfig::default();
    let res = forward_backward_sweep(
        &p,
        &table,
        &BlochState::reference_initial(),
        &oc,
        ModeFlag::NonMarkovian,
    )
    .unwrap();
    assert!(res.converged && res.iterations <= 500);
    assert!(res.residual <= oc.tol);
    assert!(res.cost < res.zero_control_cost);
    assert_eq!(res.history[0], res.zero_control_cost);
    assert!(res.history.last().unwrap() <= &res.history[0]);
    assert!(res.hamiltonian_gradient() <= oc.tol * (1.0 + res.max_costate()));
}

#[test]
fn preset_gradient_matches_finite_differences() {
    let (p, table) = preset();
    let err = gradient_check(
        &p,
        &table,
        &BlochState::reference_initial(),
        &OCConfig::default(),
        1e-5,
        ModeFlag::NonMarkovian,
    )
    .unwrap();
    assert!(err <= 1e-3, "{err}");
}

#[test]
fn larger_terminal_weight_never_misses_by_more() {
    let (p, table) = preset();
    let s0 = BlochState::reference_initial();
    let misses: Vec<f64> = [0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|&theta| {
            let oc = OCConfig {
                theta,
                ..Default::default()
            };
            let res = forward_backward_sweep(&p, &table, &s0, &oc, ModeFlag::NonMarkovian).unwrap();
            assert!(res.converged, "theta={theta}");
            res.terminal_error()
        })
        .collect();
    assert!(misses.windows(2).all(|w| w[1] <= w[0]), "{misses:?}");
}

#[test]
fn markovian_sweep_also_descends() {
    let (p, table) = preset();
    let res = forward_backward_sweep(
        &p,
        &table,
        &BlochState::reference_initial(),
        &OCConfig::default(),
        ModeFlag::Markovian,
    )
    .unwrap();
    assert!(res.converged);
    assert!(res.cost < res.zero_control_cost);
}
