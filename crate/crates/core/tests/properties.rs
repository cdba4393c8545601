use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use soie::dynamics::{
    closed_loop_matrices, simulate_coupled_pair, simulate_design_model, AgentConfig, ConnectionSpec, ControllerKind,
    SimConfig,
};
use soie::linalg::{frobenius, is_hurwitz};
use soie::metrics::{paired_test, pearson_r, rms_tracking_error, TestKind};
use soie::moments::{lyapunov_steady_state, noise_inputs, propagate_moments, StateMoments};
use soie::pso::{pso_minimize, PsoConfig};
use soie::signalgen::{Channel, NoiseSpec, SeededStream, TargetSpec};
use soie::soie::{cost_for_lambda, DesignConfig};

fn short_target() -> TargetSpec {
    TargetSpec::new(18.5, 2.031, 1.093, 3.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stationary_covariance_matches_lyapunov(
        lambda in 0.05f64..1.0,
        k in 0.0f64..40.0,
        sens_std in 0.01f64..1.0,
        hap_std in 0.0f64..0.5,
        motor in 0.0f64..0.05,
    ) {
        let agent = AgentConfig {
            motor_std: motor,
            ..AgentConfig::new(lambda, NoiseSpec::from_degrees(1.0, sens_std).unwrap()).unwrap()
        };
        let conn = ConnectionSpec::spring(k).unwrap();
        let haptic = NoiseSpec::from_degrees(0.5, hap_std).unwrap();
        let (a_bar, _) = closed_loop_matrices(&agent, &conn);
        prop_assume!(is_hurwitz(&a_bar));
        let horizon = 40.0 / -soie::linalg::spectral_abscissa(&a_bar);
        let traj = propagate_moments(&agent, &conn, haptic, StateMoments::zero(), 0.01, horizon.max(1.0)).unwrap();
        let (_, w) = noise_inputs(&agent, &conn, haptic);
        let lyap = lyapunov_steady_state(&a_bar, &w).unwrap();
        let rel = frobenius(&(traj.last().unwrap().p - lyap)) / frobenius(&lyap);
        prop_assert!(rel < 1e-6, "relative error {rel}");
    }

    #[test]
    fn cost_grows_with_own_noise(lambda in 0.05f64..1.0, bias in 0.0f64..6.0, extra in 0.1f64..2.0) {
        let cfg = DesignConfig { horizon: 2.0, ..DesignConfig::default() };
        let haptic = cfg.haptic(0.0);
        let lo = cost_for_lambda(NoiseSpec::from_degrees(bias, 0.05).unwrap(), haptic, lambda, &cfg).unwrap();
        let hi = cost_for_lambda(NoiseSpec::from_degrees(bias + extra, 0.05).unwrap(), haptic, lambda, &cfg).unwrap();
        prop_assert!(hi > lo);
        let hi_std = cost_for_lambda(NoiseSpec::from_degrees(bias, 0.05 + extra).unwrap(), haptic, lambda, &cfg).unwrap();
        prop_assert!(hi_std > lo);
    }

    #[test]
    fn pearson_is_affine_invariant(
        xs in prop::collection::vec(-10.0f64..10.0, 8..60),
        a in 0.1f64..5.0,
        b in -5.0f64..5.0,
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ys: Vec<f64> = xs.iter().map(|x| { let e: f64 = StandardNormal.sample(&mut rng); 0.5 * x + e }).collect();
        let r = pearson_r(&xs, &ys);
        prop_assume!(r.is_ok());
        let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let r2 = pearson_r(&scaled, &ys).unwrap();
        prop_assert!((r.unwrap() - r2).abs() < 1e-9);
        let flipped: Vec<f64> = xs.iter().map(|x| -a * x + b).collect();
        prop_assert!((pearson_r(&flipped, &ys).unwrap() + r2).abs() < 1e-9);
    }

    #[test]
    fn rms_error_ignores_time_reversal(pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..200)) {
        let (q, s): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let fwd = rms_tracking_error(&q, &s, 0.01).unwrap();
        let rq: Vec<f64> = q.iter().rev().copied().collect();
        let rs: Vec<f64> = s.iter().rev().copied().collect();
        let back = rms_tracking_error(&rq, &rs, 0.01).unwrap();
        prop_assert!((fwd - back).abs() <= 1e-12 * fwd.max(1.0));
    }

    #[test]
    fn mean_error_scales_with_bias(lambda in 0.1f64..1.0, bias in 0.5f64..5.0, c in 0.1f64..4.0) {
        let agent = |b: f64| AgentConfig::new(lambda, NoiseSpec::from_degrees(b, 0.0).unwrap()).unwrap();
        let conn = ConnectionSpec::spring(17.32).unwrap();
        let sim = SimConfig::default();
        let s = SeededStream::new(1, 0, Channel::Sensing);
        let hap = |b: f64| NoiseSpec::from_degrees(b, 0.0).unwrap();
        let base = simulate_design_model(&agent(bias), &conn, hap(0.3 * bias), &short_target(), &sim, s).unwrap();
        let scaled = simulate_design_model(&agent(c * bias), &conn, hap(0.3 * c * bias), &short_target(), &sim, s).unwrap();
        let (e0, e1) = (base.agents[0].error(), scaled.agents[0].error());
        let peak = e0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in e0.iter().zip(&e1) {
            prop_assert!((c * a - b).abs() <= 1e-9 * c * peak.max(1e-12));
        }
    }

    #[test]
    fn zero_stiffness_decouples_bit_exactly(
        l1 in 0.05f64..1.0, l2 in 0.05f64..1.0, b1 in -7.0f64..7.0, b2 in -7.0f64..7.0, seed in 0u64..1000,
    ) {
        let a1 = AgentConfig::new(l1, NoiseSpec::from_degrees(b1, 0.05).unwrap()).unwrap();
        let a2 = AgentConfig::new(l2, NoiseSpec::from_degrees(b2, 0.05).unwrap()).unwrap();
        let s = SeededStream::new(seed, 2, Channel::Sensing);
        let sim = SimConfig::default();
        let pair = simulate_coupled_pair(&a1, &a2, &ConnectionSpec::none(), &short_target(), &sim, s).unwrap();
        for (i, a) in [a1, a2].iter().enumerate() {
            let solo = simulate_design_model(a, &ConnectionSpec::none(), NoiseSpec::zero(), &short_target(), &sim, s.for_agent(i as u8)).unwrap();
            prop_assert_eq!(&pair.agents[i].q, &solo.agents[0].q);
        }
    }

    #[test]
    fn interaction_torques_are_opposite(
        l1 in 0.05f64..1.0, l2 in 0.05f64..1.0, b1 in -7.0f64..7.0, b2 in -7.0f64..7.0,
        k in 0.0f64..40.0, d in 0.0f64..0.3, seed in 0u64..1000,
    ) {
        let a1 = AgentConfig::new(l1, NoiseSpec::from_degrees(b1, 0.05).unwrap()).unwrap();
        let a2 = AgentConfig::new(l2, NoiseSpec::from_degrees(b2, 0.05).unwrap()).unwrap()
            .with_controller(ControllerKind::Fixed(l2));
        let conn = ConnectionSpec::new(k, d).unwrap();
        let rec = simulate_coupled_pair(&a1, &a2, &conn, &short_target(), &SimConfig::default(), SeededStream::new(seed, 0, Channel::Sensing)).unwrap();
        for (t1, t2) in rec.agents[0].tau.iter().zip(&rec.agents[1].tau) {
            prop_assert_eq!(*t1, -*t2);
        }
    }

    #[test]
    fn pso_stays_in_bounds(lo in prop::collection::vec(-10.0f64..0.0, 1..4), width in 0.01f64..5.0, seed in 0u64..100) {
        let bounds: Vec<(f64, f64)> = lo.iter().map(|l| (*l, l + width)).collect();
        let mut cfg = PsoConfig::new(bounds.clone(), seed);
        cfg.particles = 8;
        cfg.iterations = 15;
        // Minimum outside the box drives particles into the walls.
        let r = pso_minimize(|x| x.iter().map(|v| (v - 100.0).powi(2)).sum(), &cfg).unwrap();
        for (x, (l, h)) in r.x.iter().zip(&bounds) {
            prop_assert!(*x >= *l && *x <= *h);
        }
    }
}

/// Under the null, paired t-test p-values are uniform (Kolmogorov-Smirnov, α = 0.01).
#[test]
fn t_test_p_values_are_uniform_under_null() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let m = 400;
    let mut ps: Vec<f64> = (0..m)
        .map(|_| {
            let x: Vec<f64> = (0..12).map(|_| StandardNormal.sample(&mut rng)).collect();
            let y: Vec<f64> = (0..12).map(|_| StandardNormal.sample(&mut rng)).collect();
            paired_test(&x, &y, TestKind::T).unwrap().p
        })
        .collect();
    ps.sort_by(f64::total_cmp);
    let d = ps
        .iter()
        .enumerate()
        .map(|(i, p)| ((i + 1) as f64 / m as f64 - p).max(p - i as f64 / m as f64))
        .fold(0.0, f64::max);
    let critical = 1.63 / (m as f64).sqrt();
    assert!(d < critical, "KS statistic {d} exceeds {critical}");
}

/// Halving the sample interval changes deterministic design-model errors by O(dt).
#[test]
fn halving_dt_changes_errors_by_order_dt() {
    let agent = AgentConfig::new(0.3, NoiseSpec::from_degrees(3.0, 0.0).unwrap()).unwrap();
    let conn = ConnectionSpec::spring(17.32).unwrap();
    let hap = NoiseSpec::from_degrees(1.0, 0.0).unwrap();
    let s = SeededStream::new(0, 0, Channel::Sensing);
    let run = |dt: f64| {
        let sim = SimConfig::default().with_dt(dt);
        simulate_design_model(&agent, &conn, hap, &short_target(), &sim, s).unwrap()
    };
    let coarse = run(0.01);
    let fine = run(0.005);
    let rms = |r: &soie::dynamics::TrialRecord| rms_tracking_error(&r.agents[0].q, &r.agents[0].eta, r.dt).unwrap();
    let diff = (rms(&coarse) - rms(&fine)).abs();
    assert!(diff < 0.01 * rms(&coarse) + 1e-9, "difference {diff}");
}
