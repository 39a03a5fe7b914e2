use locscale_core::correlators::ef_correlator;
use locscale_core::disorder::{sample, GeneratorSpec, PotentialField};
use locscale_core::lattice::{Ball, LatticeBall, Site};
use locscale_core::operator::Model;
use locscale_core::predicates::{
    gamma, is_e_cnr, is_e_resonant, is_em_nonsingular, is_m_localized, SampleWorkspace, ScaleParams,
};
use locscale_core::scaling::schedule;
use locscale_core::spectral::{eig, green, gri_fuzz_instance, Interval, SpectralData};
use locscale_core::stats::{clopper_pearson, MonteCarloEstimate};
use locscale_core::subharmonic::{bi_descent_bound, radial_descent_bound, random_witness};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn field_1d(l: u32, index: u64, seed: u64) -> PotentialField {
    sample(
        &LatticeBall::centered(1, l),
        &GeneratorSpec::uniform(),
        index,
        seed,
    )
    .unwrap()
}

fn sd_of(field: &PotentialField, g: f64) -> SpectralData {
    eig(&Model::new(g).assemble(field.ball(), field).unwrap()).unwrap()
}

fn shifted(field: &PotentialField, by: f64) -> PotentialField {
    PotentialField::from_values(
        *field.ball(),
        field.values().iter().map(|v| v + by).collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedule_follows_floor_recursion(l0 in 3u32..40, k in 1usize..4) {
        let s = schedule(l0, 4.0 / 3.0, k).unwrap();
        prop_assert_eq!(s.len(), k + 1);
        for w in s.lengths.windows(2) {
            prop_assert!(w[1] > w[0]);
            let f = (w[0] as f64).powf(4.0 / 3.0);
            // away from integers the float floor is unambiguous
            if (f - f.round()).abs() > 1e-6 {
                prop_assert_eq!(w[1], f.floor() as u32 + 1);
            }
        }
        prop_assert_eq!(s, schedule(l0, 4.0 / 3.0, k).unwrap());
    }

    #[test]
    fn gamma_monotone(m1 in 0.1f64..5.0, dm in 0.0f64..2.0, l in 1u32..10_000, dl in 1u32..1000) {
        prop_assert!(gamma(m1, l) <= gamma(m1 + dm, l));
        prop_assert!(gamma(m1, l + dl) < gamma(m1, l));
        prop_assert!(gamma(m1, l) > m1);
    }

    #[test]
    fn clopper_pearson_brackets(trials in 1u64..5000, frac in 0.0f64..=1.0) {
        let hits = ((trials as f64) * frac).floor() as u64;
        let (lo, hi) = clopper_pearson(hits, trials, 0.05);
        let p = hits as f64 / trials as f64;
        prop_assert!(lo <= p && p <= hi);
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        if hits == 0 {
            prop_assert_eq!(lo, 0.0);
        }
        if hits == trials {
            prop_assert_eq!(hi, 1.0);
        }
        let est = MonteCarloEstimate::from_counts("x", hits, trials, 0);
        prop_assert!(est.ci_low <= est.p_hat && est.p_hat <= est.ci_high);
    }

    #[test]
    fn spectral_shift_invariance(l in 3u32..9, index in 0u64..1000, g in 1.0f64..60.0, e in -2.0f64..70.0) {
        let params = ScaleParams::default();
        let c = 2.0;
        let f = field_1d(l, index, 11);
        let sd = sd_of(&f, g);
        let sd2 = sd_of(&shifted(&f, c / g), g);
        for (a, b) in sd.eigenvalues().iter().zip(sd2.eigenvalues()) {
            prop_assert!((a + c - b).abs() < 1e-9);
        }
        prop_assume!(sd.nearest(e).0 > 1e-6);
        prop_assert_eq!(is_e_resonant(&sd, e, &params), is_e_resonant(&sd2, e + c, &params));
        let ns = is_em_nonsingular(&sd, e, &params).unwrap();
        let ns2 = is_em_nonsingular(&sd2, e + c, &params).unwrap();
        prop_assert!((ns.log_margin - ns2.log_margin).abs() < 1e-6 * ns.log_margin.abs().max(1.0));
        if ns.log_margin.abs() > 1e-5 {
            prop_assert_eq!(ns.nonsingular, ns2.nonsingular);
        }
        let lo = is_m_localized(&sd, &params);
        let lo2 = is_m_localized(&sd2, &params);
        if lo.log_margin.abs() > 1e-5 {
            prop_assert_eq!(lo.localized, lo2.localized);
        }
        let x = Site::on_axis(1, -(l as i32));
        let y = Site::on_axis(1, l as i32);
        let g1 = green(&sd, e, &x, &y).unwrap().abs();
        let g2 = green(&sd2, e + c, &x, &y).unwrap().abs();
        prop_assert!((g1 - g2).abs() <= 1e-6 * g1.max(g2) + 1e-300);
    }

    #[test]
    fn cnr_implies_nr(l in 4u32..12, index in 0u64..1000, g in 1.0f64..30.0, pick in 0usize..1000, off in -0.5f64..0.5) {
        let params = ScaleParams::default();
        let f = field_1d(l, index, 5);
        let sd = sd_of(&f, g);
        let e = sd.eigenvalues()[pick % sd.len()] + off * params.resonance_threshold(l) * 4.0;
        let ball = *f.ball();
        let mut ws = SampleWorkspace::new(f, Model::new(g), params.clone()).unwrap();
        let cnr = is_e_cnr(&mut ws, &ball, e, None).unwrap();
        if cnr.cnr {
            prop_assert!(!is_e_resonant(&sd, e, &params));
        }
    }

    #[test]
    fn correlator_bounded_and_monotone(l in 2u32..10, index in 0u64..1000, g in 0.0f64..20.0, a in -3.0f64..25.0, w1 in 0.0f64..10.0, w2 in 0.0f64..10.0, i in 0u32..21, k in 0u32..21) {
        let f = field_1d(l, index, 3);
        let sd = sd_of(&f, g);
        let n = 2 * l + 1;
        let x = Site::on_axis(1, (i % n) as i32 - l as i32);
        let y = Site::on_axis(1, (k % n) as i32 - l as i32);
        let inner = ef_correlator(&sd, &x, &y, Interval::new(a, a + w1)).unwrap();
        let outer = ef_correlator(&sd, &x, &y, Interval::new(a - w2, a + w1 + w2)).unwrap();
        prop_assert!(inner.q >= 0.0 && inner.q <= 1.0 + 1e-12);
        prop_assert!(outer.q <= 1.0 + 1e-12);
        prop_assert!(inner.q <= outer.q + 1e-15);
        let diag = ef_correlator(&sd, &x, &x, Interval::everything()).unwrap();
        prop_assert!((diag.q - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gri_never_violated(dim in 1usize..3, index in 0u64..10_000, g in 0.5f64..20.0) {
        let (r, inner) = if dim == 1 { (8, 2) } else { (3, 1) };
        let out = gri_fuzz_instance(&Model::new(g), &GeneratorSpec::uniform(), dim, r, inner, 3, index, 17).unwrap();
        prop_assert_eq!(out.violations(), 0);
    }

    #[test]
    fn descent_bounds_hold(dim in 1usize..3, seed in 0u64..10_000, l in 0u32..3, q in 0.05f64..0.95) {
        let big = if dim == 1 { 10 } else { 5 };
        let region = LatticeBall::unclipped(Ball::new(Site::origin(dim), big));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_witness(&mut rng, &region, l, q, 0.5).unwrap();
        let fu = w.f.get(&Site::origin(dim)).unwrap();
        prop_assert!(fu <= radial_descent_bound(big, l, q, w.global_max).unwrap() * (1.0 + 1e-12));

        let w2 = random_witness(&mut rng, &region, l, q, 0.5).unwrap();
        let f2 = w2.f.get(&Site::origin(dim)).unwrap();
        let bound = bi_descent_bound(big, big, l, q, w.global_max * w2.global_max).unwrap();
        prop_assert!(fu * f2 <= bound * (1.0 + 1e-12));
    }
}
