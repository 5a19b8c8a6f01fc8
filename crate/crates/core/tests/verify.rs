use orbitforge::action::{action, DiscretePath};
use orbitforge::classify::ConnectingOrbit;
use orbitforge::potential::{build_partition, make_double_well, make_duffing, make_pendulum, LabelingRule, Potential};
use orbitforge::solve::{minimize_time_domain, SolverConfig};
use orbitforge::verify::*;
use orbitforge::Error;

fn minimizer(p: &Potential, c: f64, segments: usize) -> (DiscretePath, ConnectingOrbit) {
    let part = build_partition(p, c, LabelingRule::default_for(p)).unwrap();
    let mut cfg = SolverConfig::for_family(p);
    cfg.segments = segments;
    let r = minimize_time_domain(p, &part, c, &cfg).unwrap();
    assert!(r.converged);
    let orbit = ConnectingOrbit::build(&r.path, p, &part).unwrap();
    (r.path, orbit)
}

#[test]
fn zero_energy_minimizers_pass_every_check() {
    for p in [make_double_well(5.0, 2).unwrap(), make_pendulum(2).unwrap(), make_duffing(2).unwrap()] {
        let (_, orbit) = minimizer(&p, 0.0, 2048);
        let rep = full_report(&orbit, &p, &VerifyConfig::default());
        assert!(rep.passed.all(), "{}: {rep:?}", p.family().name());
        assert_eq!(rep.shoot_pos_err, None);
    }
}

#[test]
fn brake_orbits_survive_shooting() {
    let dw = make_double_well(5.0, 2).unwrap();
    let pe = make_pendulum(2).unwrap();
    let (_, orbit) = minimizer(&dw, 0.5, 2048);
    let rep = full_report(&orbit, &dw, &VerifyConfig::default());
    assert_eq!(rep.class, "brake");
    assert!(rep.passed.all(), "{rep:?}");
    assert!(rep.symmetry_res < 1e-12);

    // the pendulum well is stiffer: dt = 1e-4 misses the drift threshold,
    // the adapted step does not
    let (_, orbit) = minimizer(&pe, 0.5, 2048);
    let rep = full_report(&orbit, &pe, &VerifyConfig::default());
    assert_eq!(rep.class, "brake");
    assert_eq!((rep.passed.shoot, rep.passed.drift), (Some(true), Some(false)), "{rep:?}");
    let rep = full_report(&orbit, &pe, &VerifyConfig::for_potential(&pe));
    assert!(rep.passed.all(), "{rep:?}");
}

#[test]
fn integrator_drift_is_second_order_without_secular_growth() {
    let p = make_double_well(5.0, 1).unwrap();
    let x0 = (1.0 - 0.5f64.sqrt()).sqrt();
    let period = 2.0 * 1.7811503961193502;
    let drift = |dt: f64, periods: f64| shoot(&p, &[x0], &[0.0], periods * period, dt).unwrap().energy_drift;
    let (one, ten) = (drift(1e-3, 1.0), drift(1e-3, 10.0));
    assert!(ten < 1.5 * one, "{one} {ten}");
    let ratio = drift(2e-3, 10.0) / ten;
    assert!((3.0..5.0).contains(&ratio), "{ratio}");
}

#[test]
fn energy_deviation_is_second_order() {
    let p = make_double_well(5.0, 2).unwrap();
    let (_, coarse) = minimizer(&p, 0.0, 1024);
    let (_, fine) = minimizer(&p, 0.0, 2048);
    let (a, b) = (energy_profile(&coarse.base, &p, 0.0).unwrap(), energy_profile(&fine.base, &p, 0.0).unwrap());
    assert!(b <= 1e-3);
    assert!(observed_order(a, b, 2.0) >= 1.8, "{a} {b}");
}

#[test]
fn random_subintervals_are_equipartitioned() {
    let p = make_double_well(5.0, 2).unwrap();
    let (_, orbit) = minimizer(&p, 0.1, 2048);
    let j = action(&orbit.base, &p, 0.1).unwrap().total;
    for seed in 0..4 {
        let r = equip_res(&orbit.base, &p, 0.1, 8, seed).unwrap() * j.max(1.0);
        assert!(r <= 1e-4 * j, "{r}");
    }
}

#[test]
fn perturbed_path_fails_the_identities() {
    let p = make_double_well(5.0, 2).unwrap();
    let (path, orbit) = minimizer(&p, 0.0, 2048);
    let mut bent = path.clone();
    let (t0, t1) = (path.grid().t_minus(), path.grid().t_plus());
    for k in 0..bent.n_nodes() {
        let s = (bent.times()[k] - t0) / (t1 - t0);
        bent.point_mut(k)[1] += 0.1 * (std::f64::consts::PI * s).sin();
    }
    let part = build_partition(&p, 0.0, LabelingRule::NearestWell).unwrap();
    let good = full_report(&orbit, &p, &VerifyConfig::default());
    let bad = report_path(&bent, &p, &part, &VerifyConfig::default());
    assert!(good.passed.el && good.passed.equip);
    assert!(!bad.passed.el && !bad.passed.equip, "{bad:?}");
}

#[test]
fn shooting_needs_a_brake_orbit() {
    let p = make_double_well(5.0, 2).unwrap();
    let (_, orbit) = minimizer(&p, 0.0, 256);
    assert!(matches!(crosscheck_brake(&orbit, &p, 1e-3), Err(Error::Precondition(_))));
}

#[test]
fn constant_path_reports_unknown() {
    let p = make_double_well(5.0, 2).unwrap();
    let part = build_partition(&p, 0.0, LabelingRule::NearestWell).unwrap();
    let grid = orbitforge::action::TimeGrid::uniform(0.0, 1.0, 33).unwrap();
    let path = DiscretePath::straight(grid, &[-1.0, 0.0], &[-1.0, 0.0]).unwrap();
    let rep = report_path(&path, &p, &part, &VerifyConfig::default());
    assert_eq!(rep.class, "unknown");
    assert_eq!((rep.energy_dev, rep.equip_res, rep.el_res), (0.0, 0.0, 0.0));
}
