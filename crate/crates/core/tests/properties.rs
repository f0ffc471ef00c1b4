use proptest::prelude::*;

use nv_phonon::fitting::*;
use nv_phonon::observables::{contrast_from_parts, linewidth_from_parts, OdmrModel};
use nv_phonon::rates::RateEvaluator;
use nv_phonon::spin::fine_structure_closed_form;
use nv_phonon::*;

fn t(k: f64) -> Temperature {
    Temperature::new(k).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn detailed_balance(kelvin in 1.0f64..3000.0, xi in 0.0f64..12.0, omega in 13.0f64..60.0) {
        let r = RateEvaluator::default();
        let e = EPhononParams { b_e: 1.32, omega_e: omega };
        let p = SpinParams::default().with_xi_perp(xi);
        let down = r.w_down(t(kelvin), &e, &p).unwrap();
        let up = r.w_up(t(kelvin), &e, &p).unwrap();
        prop_assume!(down > 0.0);
        let x = UnitConstants::CODATA.thermal_ratio(xi, kelvin);
        prop_assert!(((up / down) / (-x).exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beta_is_bounded(kelvin in 0.5f64..5000.0, xi in 0.0f64..50.0) {
        let b = beta_factor(&UnitConstants::CODATA, t(kelvin), &SpinParams::default().with_xi_perp(xi)).unwrap();
        prop_assert!((0.0..=32.0 / 27.0).contains(&b));
    }

    #[test]
    fn eigenvalues_match_closed_form(r in 0.0f64..=1.0, d_par in 100.0f64..3000.0, frac in 0.01f64..0.99) {
        let d_perp = frac * d_par;
        let p = SpinParams::new(d_par, d_perp, 40.0, 4.6).unwrap();
        let numeric = fine_structure_levels(r, &p).unwrap().levels;
        let closed = fine_structure_closed_form(r, &p);
        for (a, b) in numeric.iter().zip(&closed) {
            prop_assert!((a - b).abs() < 1e-9 * d_par.max(d_perp));
        }
    }

    #[test]
    fn half_saturation(kappa in 1.0f64..1000.0, c_max in 0.01f64..0.5, kelvin in 250.0f64..600.0) {
        let m = OdmrModel::new(
            SpinParams::default(),
            OpticalRates::default(),
            OdmrModelParams { kappa, c_max, ..OdmrModelParams::default() },
            WDownModel::Quadratic { q: 0.83 },
        );
        let h = m.homogeneous(t(kelvin)).unwrap();
        let p_half = h.gamma1 * h.gamma_h / (4.0 * std::f64::consts::PI * kappa);
        prop_assert!((contrast_from_parts(p_half, c_max, kappa, &h) / c_max - 0.5).abs() < 1e-12);
        // the linewidth grows with power
        let lo = linewidth_from_parts(p_half, 33.0, kappa, &h);
        let hi = linewidth_from_parts(2.0 * p_half, 33.0, kappa, &h);
        prop_assert!(hi > lo);
    }

    #[test]
    fn rates_grow_with_temperature(k1 in 2.0f64..800.0, dk in 0.5f64..200.0) {
        let r = RateEvaluator::default();
        let p = SpinParams::default();
        let e = EPhononParams::default();
        let a = APhononParams::default();
        prop_assert!(r.w_down(t(k1 + dk), &e, &p).unwrap() > r.w_down(t(k1), &e, &p).unwrap());
        prop_assert!(r.w_a(t(k1 + dk), &a).unwrap() > r.w_a(t(k1), &a).unwrap());
    }

    #[test]
    fn zpl_width_never_below_gamma0(kelvin in 0.0f64..600.0) {
        let r = RateEvaluator::default();
        let p = SpinParams::default().with_xi_perp(0.0);
        let w = zpl_width(&r, t(kelvin), &EPhononParams::default(), &APhononParams::default(), &OpticalRates::default(), &p).unwrap();
        prop_assert!(w >= 16.2);
    }

    #[test]
    fn visibility_stays_in_range(kelvin in 0.0f64..600.0, a in 0.0f64..=1.0, sign in prop::sample::select(vec![1i8, -1])) {
        let r = RateEvaluator::default();
        let p = SpinParams::default().with_xi_perp(0.0);
        let v = VisibilityParams { a_branching: a, r_rate: 80.0, sign_branch: sign };
        let vis = visibility(&r, t(kelvin), &v, &EPhononParams::default(), &p).unwrap();
        prop_assert!(vis.abs() <= 1.0);
    }

    #[test]
    fn splitting_between_limits(kelvin in 1.0f64..2000.0, xi in 0.0f64..20.0) {
        let p = SpinParams::default().with_xi_perp(xi);
        let s = odmr_splitting(&UnitConstants::CODATA, t(kelvin), &p).unwrap();
        let frozen = odmr_splitting(&UnitConstants::CODATA, Temperature::ZERO, &p).unwrap();
        prop_assert!(s >= 0.0 && s <= frozen + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Noiseless data at an interior point, recovered from a ±30% start.
    #[test]
    fn odmr_round_trip_from_perturbed_start(
        g in 20.0f64..50.0, k in 100.0f64..400.0, c in 0.08f64..0.3, q in 0.5f64..1.2, xi in 2.0f64..8.0,
        signs in prop::array::uniform5(prop::sample::select(vec![-1.0f64, 1.0])),
    ) {
        let reg = ModelRegistry::physical(ModelContext::default());
        let truth = ParamValues::from_pairs([("gamma_inh", g), ("kappa", k), ("c_max", c), ("q", q), ("xi_perp", xi)]);
        let data = odmr_six_bundle(&reg, &truth, BundleNoise::NONE, 0).unwrap();
        let obj = SeriesObjective::new(&reg, &data).unwrap();
        let v = [g, k, c, q, xi];
        let s: Vec<f64> = v.iter().zip(signs).map(|(v, s)| v * (1.0 + 0.3 * s)).collect();
        let fit = levenberg_marquardt(&obj, &odmr_parameters(s[0], s[1], s[2], s[3], s[4]).unwrap(), &LmOptions::default()).unwrap();
        prop_assert!(fit.converged);
        for (name, want) in &truth.0 {
            let got = fit.value(name).unwrap();
            prop_assert!((got / want - 1.0).abs() < 5e-3, "{}: {} vs {}", name, got, want);
        }
    }

    /// χ² after k+1 iterations is never above χ² after k.
    #[test]
    fn objective_never_increases(seed in 0u64..1000) {
        let reg = ModelRegistry::physical(ModelContext::default());
        let truth = ParamValues::from_pairs([("gamma_inh", 33.0), ("kappa", 210.0), ("c_max", 0.16), ("q", 0.83), ("xi_perp", 4.6)]);
        let data = odmr_six_bundle(&reg, &truth, BundleNoise::TYPICAL, seed).unwrap();
        let obj = SeriesObjective::new(&reg, &data).unwrap();
        let start = odmr_parameters(45.0, 150.0, 0.2, 0.6, 6.0).unwrap();
        let initial: f64 = residual_vector(&reg, &start.values(), &data).unwrap().iter().map(|r| r * r).sum();
        let mut last = initial;
        for k in 1..8 {
            let fit = levenberg_marquardt(&obj, &start, &LmOptions { max_iterations: k, ..LmOptions::default() }).unwrap();
            prop_assert!(fit.chi2 <= last * (1.0 + 1e-12));
            last = fit.chi2;
        }
    }
}

#[test]
fn w_down_regression_at_300k() {
    // independent high-precision evaluation of the Raman integral
    let r = RateEvaluator::default();
    let w = r.w_down(t(300.0), &EPhononParams::default(), &SpinParams::default().with_xi_perp(0.0)).unwrap();
    assert!((w / 1.342549738429e11 - 1.0).abs() < 1e-9, "{w}");
}
