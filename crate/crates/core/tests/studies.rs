use orbitforge::potential::{make_double_well, make_duffing, make_pendulum, Potential};
use orbitforge::solve::SolverConfig;
use orbitforge::studies::*;
use orbitforge::verify::VerifyConfig;

// the verification thresholds are set for M = 2048
fn config(p: &Potential) -> SolverConfig {
    SolverConfig { segments: 2048, ..SolverConfig::for_family(p) }
}

fn run(p: &Potential, c: f64) -> FamilyRun {
    run_family(p, c, &config(p), &VerifyConfig::for_potential(p)).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn double_well_brake_pipeline() {
    let p = make_double_well(5.0, 2).unwrap();
    let r = run(&p, 0.1);
    assert_eq!(r.orbit.class.class.name(), "brake");
    assert!(rel(r.m_c, 1.6205735398892531) < 1e-4, "{}", r.m_c);
    assert!(r.report.passed.all(), "{:?}", r.report);
    assert!(r.agreement.relative_gap < 1e-3);
}

#[test]
fn duffing_reports_the_full_homoclinic_action() {
    let p = make_duffing(2).unwrap();
    let r = run(&p, 0.0);
    assert_eq!(r.orbit.class.class.name(), "homoclinic");
    assert!(rel(r.m_c, 2.0 * 2f64.sqrt() / 3.0) < 1e-2, "{}", r.m_c);
    assert!(r.report.passed.all(), "{:?}", r.report);
}

#[test]
fn pendulum_kink_pipeline() {
    let p = make_pendulum(2).unwrap();
    let r = run(&p, 0.0);
    assert_eq!(r.orbit.class.class.name(), "heteroclinic");
    assert!(rel(r.m_c, 4.0 / std::f64::consts::PI) < 1e-2, "{}", r.m_c);
    assert!(r.report.passed.all(), "{:?}", r.report);
}

#[test]
fn double_well_ladder_converges() {
    let p = make_double_well(5.0, 2).unwrap();
    let s = sweep_and_converge(&p, &SweepConfig::double_well_ladder(&p)).unwrap();
    assert_eq!(s.rows.len(), 4);
    assert_eq!(s.limit_class, "heteroclinic");
    for r in &s.rows {
        assert!(r.error.is_none(), "{r:?}");
        let m = r.m_c.unwrap();
        assert!(m > 0.0 && m <= 3.0);
        assert_eq!(r.verified, Some(true), "{r:?}");
    }
    // Sup distances on [-3, 3] from 1-D brake orbits integrated from their
    // turning points (rtol 1e-12) against tanh(sqrt(2) t). The exact ladder
    // is not monotone on this window: the distance only starts to shrink once
    // the half-period outgrows the window, below c ~ 0.0125. Within the 10%
    // slack it still counts as nonincreasing.
    let oracle = [1.7431, 1.8257, 1.8089, 1.6895];
    for (r, d) in s.rows.iter().zip(oracle) {
        let got = r.position_distance.unwrap();
        assert!((got - d).abs() < 5e-3, "c={}: {got} vs {d}", r.c);
    }
    assert!(s.monotone);
}

#[test]
fn sweeps_are_reproducible() {
    let p = make_double_well(5.0, 2).unwrap();
    let mut cfg = SweepConfig::double_well_ladder(&p);
    cfg.c_sequence = vec![0.2, 0.1];
    cfg.solver.segments = 256;
    let a = sweep_and_converge(&p, &cfg).unwrap();
    let b = sweep_and_converge(&p, &cfg).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.m_c.unwrap().to_bits(), y.m_c.unwrap().to_bits());
        assert_eq!(x.position_distance.unwrap().to_bits(), y.position_distance.unwrap().to_bits());
    }
}

#[test]
fn pendulum_generators_span_the_lattice() {
    let p = make_pendulum(2).unwrap();
    let cfg = config(&p);
    let r = pendulum_multiplicity(&p, 0.0, 4, &cfg, &VerifyConfig::for_potential(&p)).unwrap();
    assert_eq!(r.generators, vec![vec![1, 0], vec![0, 1]]);
    assert!(r.spans);
    assert_eq!(r.index, Some(1));
    for o in &r.orbits {
        assert_eq!(o.class, "heteroclinic");
        assert!(o.report.passed.all(), "{:?}", o.report);
        assert!(rel(o.value, 4.0 / std::f64::consts::PI) < 1e-2);
    }
}

#[test]
fn pendulum_brake_generators() {
    let p = make_pendulum(2).unwrap();
    let cfg = SolverConfig::for_family(&p);
    let r = pendulum_multiplicity(&p, 0.3, 4, &cfg, &VerifyConfig::for_potential(&p)).unwrap();
    assert!(r.spans, "{:?}", r.generators);
    assert_eq!(r.generators.len(), 2);
    for o in &r.orbits {
        assert_eq!(o.class, "brake");
        // the orbit stays between neighbouring cells
        assert!(o.path.coords().iter().all(|x| (-1.0..=2.0).contains(x)));
    }
    assert!(r.max_displacement <= 1.0);
}

#[test]
fn one_dimensional_pendulum_has_one_generator() {
    let p = make_pendulum(1).unwrap();
    let cfg = SolverConfig::for_family(&p);
    let r = pendulum_multiplicity(&p, 0.0, 2, &cfg, &VerifyConfig::for_potential(&p)).unwrap();
    assert_eq!(r.generators, vec![vec![1]]);
    assert!(r.spans);
}
