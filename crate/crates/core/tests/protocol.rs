use zsense_core::estimator::{
    combine_two_point, EstimatorConfig, PropagatorEstimator, StencilPlan, StencilVariant,
};
use zsense_core::lattice::{
    free_propagator_exact, Boundary, CorrelatorOracle, Couplings, FockBasis, LatticeModel,
    LatticeSpec, ResourceCaps,
};
use zsense_core::linalg::{dot, C64};
use zsense_core::sensor::{
    evolve_schedule, parity_expectation, prepare_field, prepare_joint_state, FieldPreparation,
    KickPulse, NoiseModel, PreparationKind, Protocol, ProtocolSystem, SensorLayout,
    SensorPreparation, SourceSchedule,
};
use zsense_core::state::QuantumState;

fn model(n: usize, m0sq: f64, lambda: f64, n_max: usize) -> LatticeModel {
    let spec = LatticeSpec::new(n, Boundary::Periodic, 1.0).unwrap();
    let c = Couplings::new(m0sq, lambda).unwrap();
    LatticeModel::build(
        spec,
        c,
        FockBasis::adapted(n_max, &spec, &c),
        &ResourceCaps::default(),
    )
    .unwrap()
}

#[test]
fn free_ghz_parity_oscillates() {
    let m = model(3, 1.0, 0.0, 5);
    let field = prepare_field(&m, FieldPreparation::Vacuum, &ResourceCaps::default()).unwrap();
    for n in 1..=3 {
        let layout = SensorLayout::new((0..n).collect(), 3.1, 3).unwrap();
        let proto = Protocol::new(ProtocolSystem::new(&m, layout).unwrap(), &field).unwrap();
        for &tau in &[0.0, 0.37, 1.9] {
            let rec = proto
                .run(
                    &SensorPreparation::ghz(),
                    &SourceSchedule::empty(0, 0.0, tau),
                    &NoiseModel::NONE,
                )
                .unwrap();
            let expected = libm::cos(n as f64 * 3.1 * tau);
            assert!((rec.value - expected).abs() < 1e-10, "n={n} tau={tau}");
        }
    }
}

#[test]
fn product_state_has_zero_parity() {
    let m = model(2, 1.0, 0.3, 4);
    let field = prepare_field(&m, FieldPreparation::Vacuum, &ResourceCaps::default()).unwrap();
    let layout = SensorLayout::new(vec![0, 1], 2.0, 2).unwrap();
    let joint = prepare_joint_state(
        &field,
        &layout,
        &SensorPreparation::new(PreparationKind::ProductDown),
    )
    .unwrap();
    assert_eq!(parity_expectation(&joint, &layout), 0.0);
    let ghz = prepare_joint_state(&field, &layout, &SensorPreparation::ghz()).unwrap();
    assert!((parity_expectation(&ghz, &layout) - 1.0).abs() < 1e-12);
}

#[test]
fn full_evolution_agrees_with_branch_overlaps() {
    let m = model(3, 0.8, 0.5, 5);
    let field = prepare_field(&m, FieldPreparation::Vacuum, &ResourceCaps::default()).unwrap();
    let layout = SensorLayout::new(vec![0, 2], 2.5, 3).unwrap();
    let system = ProtocolSystem::new(&m, layout.clone()).unwrap();
    let sched = SourceSchedule {
        id: 7,
        t0: 0.0,
        pulses: vec![
            KickPulse::ramsey(0, 0.2, 0.3),
            KickPulse::ramsey(2, 0.9, -0.2),
        ],
        readout_time: 1.7,
    };
    for noise in [
        NoiseModel::NONE,
        NoiseModel::global(3.0),
        NoiseModel::local(1.5),
    ] {
        for prep in [
            SensorPreparation::ghz(),
            SensorPreparation::new(PreparationKind::NeelDfsPlus),
            SensorPreparation::ghz().with_eps(0.1),
        ] {
            let joint = prepare_joint_state(&field, &layout, &prep).unwrap();
            let (out, _) = evolve_schedule(&system, &joint, &sched, &noise).unwrap();
            let full = parity_expectation(&out, &layout);
            let proto = Protocol::new(system.clone(), &field).unwrap();
            let fast = proto.run(&prep, &sched, &noise).unwrap().value;
            assert!(
                (full - fast).abs() < 1e-10,
                "{prep:?} {noise:?}: {full} vs {fast}"
            );
        }
    }
}

#[test]
fn unitarity_and_stationarity() {
    let m = model(3, 1.0, 0.5, 5);
    let field = prepare_field(&m, FieldPreparation::Vacuum, &ResourceCaps::default()).unwrap();
    let layout = SensorLayout::new(vec![1], 1.0, 3).unwrap();
    let system = ProtocolSystem::new(&m, layout.clone()).unwrap();
    let joint = prepare_joint_state(
        &field,
        &layout,
        &SensorPreparation::new(PreparationKind::ProductDown),
    )
    .unwrap();

    let (out, _) = evolve_schedule(
        &system,
        &joint,
        &SourceSchedule::empty(0, 0.0, 2.3),
        &NoiseModel::NONE,
    )
    .unwrap();
    let a = joint.as_pure().unwrap();
    let b = out.as_pure().unwrap();
    assert!((dot(&a.amps, &b.amps).norm() - 1.0).abs() < 1e-10);

    let sched = SourceSchedule {
        id: 0,
        t0: 0.0,
        pulses: vec![
            KickPulse::ramsey(1, 0.5, 0.4),
            KickPulse::ramsey(1, 1.0, 0.9),
        ],
        readout_time: 2.0,
    };
    let (out, _) = evolve_schedule(&system, &joint, &sched, &NoiseModel::NONE).unwrap();
    assert!((out.as_pure().unwrap().norm() - 1.0).abs() < 1e-10);

    let zero = SourceSchedule {
        id: 0,
        t0: 0.0,
        pulses: vec![KickPulse::ramsey(1, 0.5, 0.0)],
        readout_time: 2.0,
    };
    let (with_zero, _) = evolve_schedule(&system, &joint, &zero, &NoiseModel::NONE).unwrap();
    let (plain, _) = evolve_schedule(
        &system,
        &joint,
        &SourceSchedule::empty(0, 0.0, 2.0),
        &NoiseModel::NONE,
    )
    .unwrap();
    let d: f64 = with_zero
        .as_pure()
        .unwrap()
        .amps
        .iter()
        .zip(&plain.as_pure().unwrap().amps)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    assert!(d.sqrt() < 1e-12);
}

#[test]
fn same_site_kicks_compose() {
    let m = model(2, 1.0, 0.4, 6);
    let field = prepare_field(&m, FieldPreparation::Vacuum, &ResourceCaps::default()).unwrap();
    let layout = SensorLayout::new(vec![0], 1.0, 2).unwrap();
    let system = ProtocolSystem::new(&m, layout.clone()).unwrap();
    let joint = prepare_joint_state(&field, &layout, &SensorPreparation::ghz()).unwrap();
    let split = SourceSchedule {
        id: 0,
        t0: 0.0,
        pulses: vec![
            KickPulse::ramsey(0, 0.4, 0.13),
            KickPulse::ramsey(0, 0.4, 0.21),
        ],
        readout_time: 1.0,
    };
    let merged = SourceSchedule {
        pulses: vec![KickPulse::ramsey(0, 0.4, 0.34)],
        ..split.clone()
    };
    let (a, _) = evolve_schedule(&system, &joint, &split, &NoiseModel::NONE).unwrap();
    let (b, _) = evolve_schedule(&system, &joint, &merged, &NoiseModel::NONE).unwrap();
    let d: f64 = a
        .as_pure()
        .unwrap()
        .amps
        .iter()
        .zip(&b.as_pure().unwrap().amps)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    assert!(d.sqrt() < 1e-13);
}

#[test]
fn single_kick_linear_response() {
    // On the kicked branch ⟨Ω|e^{−i𝖩φ_k} φ_T e^{i𝖩φ_k}|Ω⟩ = +i𝖩⟨[φ_T, φ_k]⟩ + O(𝖩²);
    // for a free field the commutator is a c-number, so up to Fock truncation the
    // response is exactly linear.
    let m = model(3, 1.0, 0.0, 8);
    let caps = ResourceCaps::default();
    let field = prepare_field(&m, FieldPreparation::Vacuum, &caps).unwrap();
    let oracle = CorrelatorOracle::new(&m, &caps).unwrap();
    let layout = SensorLayout::new(vec![0], 1.0, 3).unwrap();
    let system = ProtocolSystem::new(&m, layout.clone()).unwrap();
    let joint = prepare_joint_state(
        &field,
        &layout,
        &SensorPreparation::new(PreparationKind::ProductDown),
    )
    .unwrap();
    let (tk, tr) = (0.3, 1.4);
    let ordered = oracle.vacuum(&[(tr, 1), (tk, 0)]).unwrap();
    // ⟨[φ_T, φ_k]⟩ = W − W* = 2i Im W with W = ⟨φ_T φ_k⟩ (T later).
    let expected_slope = -2.0 * ordered.im;
    for j in [1e-3, 2e-3] {
        let sched = SourceSchedule {
            id: 0,
            t0: 0.0,
            pulses: vec![KickPulse::ramsey(0, tk, j)],
            readout_time: tr,
        };
        let (out, _) = evolve_schedule(&system, &joint, &sched, &NoiseModel::NONE).unwrap();
        let v = &out.as_pure().unwrap().amps[..m.field_dim()];
        let phi1 = m.phi(1).expectation(v).re;
        assert!(
            (phi1 / j - expected_slope).abs() < 1e-9,
            "j={j}: {}",
            phi1 / j - expected_slope
        );
    }
}

#[test]
fn neel_minus_mirrors_neel_plus() {
    let m = model(3, 1.0, 0.5, 5);
    let caps = ResourceCaps::default();
    let field = prepare_field(&m, FieldPreparation::Vacuum, &caps).unwrap();
    let layout = SensorLayout::new(vec![0, 1], 1.7, 3).unwrap();
    let proto = Protocol::new(ProtocolSystem::new(&m, layout).unwrap(), &field).unwrap();
    let plan = StencilPlan::uniform(vec![(0.2, 0), (0.9, 1)], 0.1, StencilVariant::DfsReal);
    for sched in zsense_core::estimator::build_source_sets(&plan).unwrap() {
        let plus = proto
            .run(
                &SensorPreparation::new(PreparationKind::NeelDfsPlus),
                &sched,
                &NoiseModel::NONE,
            )
            .unwrap();
        let minus = proto
            .run(
                &SensorPreparation::new(PreparationKind::NeelDfsMinus),
                &sched,
                &NoiseModel::NONE,
            )
            .unwrap();
        assert!((plus.value + minus.value).abs() < 1e-12);
    }
}

#[test]
fn free_two_point_stencil_matches_mode_sum() {
    let m = model(4, 1.0, 0.0, 8);
    let caps = ResourceCaps::default();
    let field = prepare_field(&m, FieldPreparation::Vacuum, &caps).unwrap();
    let est = PropagatorEstimator::new(&m, &field, EstimatorConfig::default());
    for &(t, x) in &[(0.5, 1usize), (1.0, 0), (0.0, 2)] {
        let exact = free_propagator_exact(&m.spec, 1.0, t, x as i64).unwrap();
        let plan = StencilPlan::uniform(vec![(0.0, 0), (t, x)], 0.05, StencilVariant::GhzPhased);
        let raw = est.estimate(&plan).unwrap();
        let rich = est.estimate_richardson(&plan).unwrap();
        assert!(
            (raw.value - exact).norm() < 5e-3 * exact.norm(),
            "raw {t},{x}: {} vs {exact}",
            raw.value
        );
        assert!(
            (rich.value - exact).norm() < 1e-3 * exact.norm(),
            "rich {t},{x}: {} vs {exact}",
            rich.value
        );
        assert!((raw.value - exact).norm() > 10.0 * (rich.value - exact).norm());

        // The paper-sign alternating sum sees +Re(e^{iθ}Δ).
        let groups = est.records(&plan).unwrap();
        let (theta, recs) = &groups[0];
        let alt = combine_two_point(recs, (0.05, 0.05)).unwrap();
        let target = (C64::new(0.0, *theta).exp() * exact).re;
        assert!((alt - target).abs() < 5e-3 * exact.norm());
    }
}

#[test]
fn dfs_variants_match_mode_sum() {
    let m = model(4, 1.0, 0.0, 8);
    let caps = ResourceCaps::default();
    let field = prepare_field(&m, FieldPreparation::Vacuum, &caps).unwrap();
    let est = PropagatorEstimator::new(&m, &field, EstimatorConfig::default());
    for &(t1, t2) in &[(0.0, 0.8), (1.2, 0.3)] {
        let exact = free_propagator_exact(&m.spec, 1.0, t1 - t2, 1).unwrap();
        let e = est.estimate_dfs(&[(t1, 0), (t2, 1)], 0.05).unwrap();
        assert!(
            (e.value - exact).norm() < 1e-3 * exact.norm(),
            "{t1},{t2}: {} vs {exact}",
            e.value
        );
    }
}

#[test]
fn gibbs_field_state_is_mixture() {
    let m = model(2, 1.0, 0.5, 5);
    let st = prepare_field(
        &m,
        FieldPreparation::Gibbs { beta: 1.0 },
        &ResourceCaps::default(),
    )
    .unwrap();
    assert!(matches!(st, QuantumState::Mixed(_)));
    st.validate().unwrap();
}
