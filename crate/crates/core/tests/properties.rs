use proptest::prelude::*;

use pilotwave::config::RunConfig;
use pilotwave::detection::{
    apply_selective_detection, BinGeometry, DetectionEvent, Histogram, SelectiveFilter, Side,
};
use pilotwave::guidance::{ballistic_x, com_path, com_velocity_closed_form, velocity_y};
use pilotwave::integrator::{integrate_pair, IntegratorSettings};
use pilotwave::params::{ExperimentParams, Statistics};
use pilotwave::potential::{q_cm, quantum_force_cm};
use pilotwave::sampler::{sample_pair, SamplerMode, SamplerSpec};
use pilotwave::state::{sigma_t, total_wavefunction, PairConfiguration};

fn statistics() -> impl Strategy<Value = Statistics> {
    prop_oneof![Just(Statistics::Bosonic), Just(Statistics::Fermionic)]
}

fn params() -> impl Strategy<Value = ExperimentParams> {
    (0.5f64..2.0, 0.5f64..3.0, 1.0f64..10.0, 2.0f64..20.0, -0.5f64..0.5, statistics()).prop_map(
        |(mass, sigma0, slit_y, kx, ky, statistics)| ExperimentParams {
            mass,
            sigma0,
            slit_y,
            kx,
            ky,
            statistics,
            ..Default::default()
        },
    )
}

/// A configuration within a few widths of the packets at time `t`.
fn configuration() -> impl Strategy<Value = (ExperimentParams, PairConfiguration)> {
    (params(), 0.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_map(
        |(p, frac, a, b, c, d)| {
            let t = frac * p.arrival_time();
            let reach = p.slit_y + 3.0 * sigma_t(&p, t).norm();
            let (x1, x2) = ballistic_x(&p, t);
            (p, PairConfiguration::new(x1 + c, a * reach, x2 + d, b * reach, t))
        },
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #[test]
    fn reflection_and_exchange_symmetry((p, c) in configuration()) {
        let psi = total_wavefunction(&p, &c);
        prop_assert_eq!(total_wavefunction(&p, &c.reflected()), psi);
        let swapped = total_wavefunction(&p, &c.exchanged());
        prop_assert!((swapped - p.statistics.sign() * psi).norm() <= 1e-12 * psi.norm().max(1e-300));
    }

    #[test]
    fn velocities_are_odd_under_reflection((p, c) in configuration()) {
        if let (Ok(v), Ok(m)) = (velocity_y(&p, &c), velocity_y(&p, &c.reflected())) {
            prop_assert!(rel(v.vy1, -m.vy1) <= 1e-12);
            prop_assert!(rel(v.vy2, -m.vy2) <= 1e-12);
        }
    }

    #[test]
    fn width_grows_monotonically(p in params(), t in 0.0f64..100.0, dt in 1e-6f64..10.0) {
        prop_assert!(sigma_t(&p, t + dt).norm() > sigma_t(&p, t).norm());
        prop_assert_eq!(sigma_t(&p, 0.0).norm(), p.sigma0);
    }

    #[test]
    fn com_energy_is_conserved(p in params(), y0 in -3.0f64..3.0, t in 0.0f64..200.0) {
        let kinetic = |t: f64| {
            let v = com_velocity_closed_form(&p, com_path(&p, y0, t), t);
            0.5 * p.mass * v * v
        };
        let start = q_cm(&p, y0, 0.0) + kinetic(0.0);
        let now = q_cm(&p, y0, t) + kinetic(t);
        prop_assert!((now - start).abs() <= 1e-10 * start.max(1e-300));
    }

    #[test]
    fn force_is_minus_gradient_at_fixed_start(p in params(), y0 in 0.05f64..3.0, t in 0.0f64..100.0) {
        let r = p.spread_rate();
        // Potential as a function of the current ordinate, start held fixed.
        let q = |y: f64| p.mass * y0.powi(4) * r * r / (2.0 * y * y);
        let y = com_path(&p, y0, t);
        let h = 1e-4 * y;
        let grad = (q(y + h) - q(y - h)) / (2.0 * h);
        prop_assert!(rel(quantum_force_cm(&p, y0, t), -grad) <= 1e-6);
        prop_assert!(rel(q(y), q_cm(&p, y0, t)) <= 1e-12);
    }

    #[test]
    fn sampler_is_a_function_of_seed_and_index(seed in any::<u64>(), index in 0u64..1_000_000) {
        let p = ExperimentParams::default();
        for mode in [SamplerMode::PinnedCom, SamplerMode::SpreadCom, SamplerMode::Unconstrained] {
            let spec = SamplerSpec { mode, seed, y0_sigma: 0.01, ..Default::default() };
            let a = sample_pair(&p, &spec, 0.0, index).unwrap();
            let b = sample_pair(&p, &spec, 0.0, index).unwrap();
            prop_assert_eq!(a, b);
            if mode == SamplerMode::PinnedCom {
                prop_assert!(a.config.com_y().abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn selective_detection_partitions(ys in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 0..200), upper in any::<bool>()) {
        let side = if upper { Side::Upper } else { Side::Lower };
        let mut events: Vec<DetectionEvent> = ys
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| DetectionEvent { y_s1: a, y_s2: b, t_arrive: 1.0, pair_id: i as u64 })
            .collect();
        if let Some(e) = events.first_mut() {
            e.y_s1 = 0.0;
        }
        let out = apply_selective_detection(&events, SelectiveFilter { keep_side_s1: side });
        prop_assert_eq!(out.kept.len() + out.rejected + out.ties, events.len());
        prop_assert!(out.kept.iter().all(|e| side.contains(e.y_s1)));
        let other = apply_selective_detection(&events, SelectiveFilter { keep_side_s1: side.opposite() });
        prop_assert_eq!(other.kept.len(), out.rejected);
        prop_assert_eq!(other.ties, out.ties);
    }

    #[test]
    fn histogram_merge_matches_single_fill(
        a in prop::collection::vec(-12.0f64..12.0, 0..300),
        b in prop::collection::vec(-12.0f64..12.0, 0..300),
        nbins in 2usize..50,
    ) {
        let g = BinGeometry::symmetric(10.0, nbins).unwrap();
        let mut left = Histogram::from_values(g, a.iter().copied());
        let right = Histogram::from_values(g, b.iter().copied());
        left.merge(&right).unwrap();
        let whole = Histogram::from_values(g, a.iter().chain(&b).copied());
        prop_assert_eq!(&left, &whole);
        let inside: u64 = whole.counts.iter().sum();
        prop_assert!(inside <= whole.total);
        prop_assert_eq!(inside + whole.underflow + whole.overflow, whole.total);
    }

    #[test]
    fn config_round_trips(seed in any::<u64>(), slit_y in 0.5f64..20.0, n in 1u64..1_000_000, stats in statistics()) {
        let mut cfg = RunConfig::default();
        cfg.sampler.seed = seed;
        cfg.params.slit_y = slit_y;
        cfg.params.statistics = stats;
        cfg.n_pairs = n;
        let text: String = RunConfig::KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", cfg.get(k).unwrap()))
            .collect();
        prop_assert_eq!(RunConfig::parse_str(&text).unwrap(), cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn mirrored_starts_give_mirrored_paths(y in 6.0f64..10.0, y0 in -0.5f64..0.5) {
        let p = ExperimentParams { screen_dist: 120.0, ..Default::default() };
        let (x1, x2) = ballistic_x(&p, 0.0);
        let start = PairConfiguration::new(x1, y0 + y, x2, y0 - y, 0.0);
        let s = IntegratorSettings::default();
        let a = integrate_pair(&p, start, p.arrival_time(), &s).unwrap();
        let b = integrate_pair(&p, start.reflected(), p.arrival_time(), &s).unwrap();
        prop_assert_eq!(a.samples.len(), b.samples.len());
        for (u, v) in a.samples.iter().zip(&b.samples) {
            prop_assert_eq!(u.t, v.t);
            prop_assert_eq!(u.y1, -v.y1);
            prop_assert_eq!(u.y2, -v.y2);
        }
    }
}
