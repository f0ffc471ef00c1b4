use std::time::Instant;

use nv_phonon::fitting::*;
use nv_phonon::Error;

fn series(kind: SeriesKind, x: Vec<f64>, y: Vec<f64>, sigma: Option<Vec<f64>>) -> DataSeries {
    DataSeries::new("s", kind, x, y, sigma, Conditions::default()).unwrap()
}

fn linear_registry() -> ModelRegistry {
    let mut r = ModelRegistry::empty();
    r.register(SeriesKind::ZplVsT, |s, v| {
        let (a, b) = (v.require("a")?, v.require("b")?);
        Ok(s.x.iter().map(|x| a + b * x).collect())
    });
    r
}

fn reference_odmr() -> ParamValues {
    ParamValues::from_pairs([("gamma_inh", 33.0), ("kappa", 210.0), ("c_max", 0.16), ("q", 0.83), ("xi_perp", 4.6)])
}

fn reference_zpl() -> ParamValues {
    ParamValues::from_pairs([
        ("b_e", 1.32),
        ("omega_e", 13.0),
        ("b_a", 24e-6),
        ("omega_a", 37.0),
        ("gamma0", 16.2),
        ("a_branching", 0.40),
    ])
}

#[test]
fn constant_model_residuals() {
    let mut r = ModelRegistry::empty();
    r.register(SeriesKind::ZplVsT, |s, v| Ok(vec![v.require("c")?; s.len()]));
    let s = series(SeriesKind::ZplVsT, vec![1.0, 2.0, 3.0], vec![1.0, 4.0, 2.0], Some(vec![1.0, 2.0, 0.5]));
    let res = residual_vector(&r, &ParamValues::from_pairs([("c", 3.0)]), &[s]).unwrap();
    assert_eq!(res, vec![2.0, -0.5, 2.0]);
}

#[test]
fn unknown_kind_and_missing_parameter() {
    let r = linear_registry();
    let s = series(SeriesKind::SplittingVsT, vec![1.0], vec![1.0], None);
    let v = ParamValues::from_pairs([("a", 1.0), ("b", 1.0)]);
    assert!(matches!(residual_vector(&r, &v, &[s]), Err(Error::UnknownKind(_))));
    let s = series(SeriesKind::ZplVsT, vec![1.0], vec![1.0], None);
    let v = ParamValues::from_pairs([("a", 1.0)]);
    assert_eq!(residual_vector(&r, &v, &[s]), Err(Error::MissingParameter("b".into())));
}

#[test]
fn linear_jacobian_column() {
    let r = linear_registry();
    let x = vec![0.5, 1.0, 2.0, 7.0];
    let sigma = vec![0.5, 1.0, 2.0, 4.0];
    let data = [series(SeriesKind::ZplVsT, x.clone(), vec![0.0; 4], Some(sigma.clone()))];
    let obj = SeriesObjective::new(&r, &data).unwrap();
    let params = ParameterSet::new(vec![Parameter::new("a", 0.0).fixed(), Parameter::new("b", 3.0)]).unwrap();
    let j = jacobian(&obj, &params, &LmOptions::default()).unwrap();
    assert_eq!(j.ncols(), 1, "fixed column omitted");
    for i in 0..4 {
        assert!((j[(i, 0)] - x[i] / sigma[i]).abs() < 1e-9);
    }
}

#[test]
fn quadratic_at_zero_is_exact() {
    let mut r = ModelRegistry::empty();
    r.register(SeriesKind::ZplVsT, |s, v| {
        let p = v.require("p")?;
        Ok(s.x.iter().map(|x| p * x + p * p).collect())
    });
    let x = vec![1.0, 2.0, 3.0];
    let data = [series(SeriesKind::ZplVsT, x.clone(), vec![0.0; 3], None)];
    let obj = SeriesObjective::new(&r, &data).unwrap();
    let params = ParameterSet::new(vec![Parameter::new("p", 0.0)]).unwrap();
    let j = jacobian(&obj, &params, &LmOptions::default()).unwrap();
    for i in 0..3 {
        assert_eq!(j[(i, 0)], x[i]);
    }
}

#[test]
fn odmr_jacobian_is_step_consistent() {
    let reg = ModelRegistry::physical(ModelContext::default());
    let data = odmr_six_bundle(&reg, &reference_odmr(), BundleNoise::NONE, 1).unwrap();
    let obj = SeriesObjective::new(&reg, &data[..1]).unwrap();
    let params = odmr_parameters(33.0, 210.0, 0.16, 0.83, 4.6).unwrap();
    let coarse = jacobian(&obj, &params, &LmOptions::default()).unwrap();
    let fine = jacobian(&obj, &params, &LmOptions { fd_rel_step: 1e-7, ..LmOptions::default() }).unwrap();
    for (c, f) in coarse.iter().zip(fine.iter()) {
        if c.abs() > 1e-8 {
            assert!((c / f - 1.0).abs() < 1e-4, "{c} vs {f}");
        }
    }
}

#[test]
fn straight_line_matches_normal_equations() {
    let r = linear_registry();
    let x: Vec<f64> = (0..12).map(f64::from).collect();
    let y: Vec<f64> = x.iter().map(|x| 1.5 - 0.7 * x + 0.3 * (x * 1.7).sin()).collect();
    let sigma: Vec<f64> = x.iter().map(|x| 0.5 + 0.1 * x).collect();
    // closed form weighted least squares
    let (mut s, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let w = 1.0 / (sigma[i] * sigma[i]);
        s += w;
        sx += w * x[i];
        sxx += w * x[i] * x[i];
        sy += w * y[i];
        sxy += w * x[i] * y[i];
    }
    let det = s * sxx - sx * sx;
    let b = (s * sxy - sx * sy) / det;
    let a = (sxx * sy - sx * sxy) / det;
    let data = [series(SeriesKind::ZplVsT, x, y, Some(sigma))];
    let obj = SeriesObjective::new(&r, &data).unwrap();
    let params = ParameterSet::new(vec![Parameter::new("a", 1.0), Parameter::new("b", 1.0)]).unwrap();
    let fit = levenberg_marquardt(&obj, &params, &LmOptions::default()).unwrap();
    assert!(fit.converged, "{}", fit.termination);
    assert!((fit.value("a").unwrap() - a).abs() < 1e-10);
    assert!((fit.value("b").unwrap() - b).abs() < 1e-10);
    // unscaled covariance of a line fit is the inverse normal matrix
    let var_b = s / det;
    let sb = fit.parameter("b").unwrap().uncertainty;
    assert!((sb / (var_b.sqrt() * fit.chi2_reduced.sqrt()) - 1.0).abs() < 1e-6);
}

#[test]
fn exponential_decay_from_doubled_start() {
    let mut r = ModelRegistry::empty();
    r.register(SeriesKind::ZplVsT, |s, v| {
        let p = v.require("p")?;
        Ok(s.x.iter().map(|t| (-p * t).exp()).collect())
    });
    let x: Vec<f64> = (0..40).map(|i| 0.1 * f64::from(i)).collect();
    let y = x.iter().map(|t| (-1.3 * t).exp()).collect();
    let data = [series(SeriesKind::ZplVsT, x, y, None)];
    let obj = SeriesObjective::new(&r, &data).unwrap();
    // brute-force scan: the sum of squares has a single minimum near 1.3
    let sse = |p: f64| {
        residual_vector(&r, &ParamValues::from_pairs([("p", p)]), &data)
            .unwrap()
            .iter()
            .map(|r| r * r)
            .sum::<f64>()
    };
    let scan: Vec<f64> = (1..=400).map(|i| sse(0.01 * f64::from(i))).collect();
    let best = scan.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(best + 1, 130);
    assert!(scan[..best].windows(2).all(|w| w[1] < w[0]));
    assert!(scan[best..].windows(2).all(|w| w[1] > w[0]));

    let params = ParameterSet::new(vec![Parameter::new("p", 2.6)]).unwrap();
    let fit = levenberg_marquardt(&obj, &params, &LmOptions::default()).unwrap();
    assert!(fit.converged);
    assert!((fit.value("p").unwrap() - 1.3).abs() < 1e-8);
    assert!(!fit.weighted);
}

#[test]
fn fixing_a_separable_parameter_leaves_the_other() {
    let mut r = ModelRegistry::empty();
    r.register(SeriesKind::ZplVsT, |s, v| Ok(vec![v.require("a")?; s.len()]));
    r.register(SeriesKind::SplittingVsT, |s, v| Ok(s.x.iter().map(|x| v.require("b").unwrap() * x).collect()));
    let data = [
        DataSeries::new("one", SeriesKind::ZplVsT, vec![1.0, 2.0], vec![1.0, 3.0], None, Conditions::default()).unwrap(),
        DataSeries::new("two", SeriesKind::SplittingVsT, vec![1.0, 2.0], vec![2.0, 4.5], None, Conditions::default()).unwrap(),
    ];
    let obj = SeriesObjective::new(&r, &data).unwrap();
    let both = ParameterSet::new(vec![Parameter::new("a", 1.0), Parameter::new("b", 1.0)]).unwrap();
    let fixed = ParameterSet::new(vec![Parameter::new("a", 7.0).fixed(), Parameter::new("b", 1.0)]).unwrap();
    let f1 = levenberg_marquardt(&obj, &both, &LmOptions::default()).unwrap();
    let f2 = levenberg_marquardt(&obj, &fixed, &LmOptions::default()).unwrap();
    assert!((f1.value("b").unwrap() - f2.value("b").unwrap()).abs() < 1e-10);
    assert_eq!(f2.value("a"), Some(7.0));
    assert_eq!(f2.covariance.len(), 1);
    assert_eq!(f1.series_residual_norms.len(), 2);
    assert_eq!(f1.series_residual_norms[0].0, "one");
}

#[test]
fn rank_deficient_problem_is_flagged() {
    let mut r = ModelRegistry::empty();
    r.register(SeriesKind::ZplVsT, |s, v| {
        let c = v.require("a")? + v.require("b")?;
        Ok(s.x.iter().map(|x| c * x).collect())
    });
    let data = [series(SeriesKind::ZplVsT, vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.1], None)];
    let obj = SeriesObjective::new(&r, &data).unwrap();
    let params = ParameterSet::new(vec![Parameter::new("a", 1.0), Parameter::new("b", 0.5)]).unwrap();
    let fit = levenberg_marquardt(&obj, &params, &LmOptions::default()).unwrap();
    assert!(fit.covariance_singular);
    let sum = fit.value("a").unwrap() + fit.value("b").unwrap();
    assert!((sum - 28.3 / 14.0).abs() < 1e-8, "{sum}");
}

#[test]
fn preconditions() {
    let r = linear_registry();
    let data = [series(SeriesKind::ZplVsT, vec![1.0], vec![1.0], None)];
    let obj = SeriesObjective::new(&r, &data).unwrap();
    let none_free = ParameterSet::new(vec![Parameter::new("a", 1.0).fixed(), Parameter::new("b", 1.0).fixed()]).unwrap();
    assert!(matches!(levenberg_marquardt(&obj, &none_free, &LmOptions::default()), Err(Error::InvalidFit(_))));
    let two_free = ParameterSet::new(vec![Parameter::new("a", 1.0), Parameter::new("b", 1.0)]).unwrap();
    assert!(matches!(levenberg_marquardt(&obj, &two_free, &LmOptions::default()), Err(Error::InvalidFit(_))));
}

#[test]
fn iteration_cap_is_reported_not_thrown() {
    let mut r = ModelRegistry::empty();
    r.register(SeriesKind::ZplVsT, |s, v| {
        let p = v.require("p")?;
        Ok(s.x.iter().map(|t| (-p * t).exp()).collect())
    });
    let x: Vec<f64> = (0..20).map(f64::from).collect();
    let y = x.iter().map(|t| (-0.3 * t).exp()).collect();
    let data = [series(SeriesKind::ZplVsT, x, y, None)];
    let obj = SeriesObjective::new(&r, &data).unwrap();
    let params = ParameterSet::new(vec![Parameter::new("p", 3.0)]).unwrap();
    let fit = levenberg_marquardt(&obj, &params, &LmOptions { max_iterations: 1, ..LmOptions::default() }).unwrap();
    assert!(!fit.converged);
    assert_eq!(fit.n_iterations, 1);
}

#[test]
fn synthesis_is_deterministic_and_scaled() {
    let r = linear_registry();
    let v = ParamValues::from_pairs([("a", 2.0), ("b", 0.5)]);
    let x: Vec<f64> = (0..50).map(f64::from).collect();
    let c = Conditions::default();
    let exact = synthesize_dataset(&r, "s", SeriesKind::ZplVsT, &v, x.clone(), c, 0.0, 1).unwrap();
    assert!(exact.y.iter().zip(&x).all(|(y, x)| *y == 2.0 + 0.5 * x));
    assert!(exact.sigma.is_none());
    let a = synthesize_dataset(&r, "s", SeriesKind::ZplVsT, &v, x.clone(), c, 1.0, 9).unwrap();
    let b = synthesize_dataset(&r, "s", SeriesKind::ZplVsT, &v, x.clone(), c, 1.0, 9).unwrap();
    assert_eq!(a, b);
    let dev: Vec<f64> = a.y.iter().zip(&exact.y).map(|(y, m)| y - m).collect();
    let mean = dev.iter().sum::<f64>() / 50.0;
    let sd = (dev.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / 49.0).sqrt();
    assert!((0.7..=1.3).contains(&sd), "{sd}");
    assert!(matches!(
        synthesize_dataset(&r, "s", SeriesKind::VisibilityVsT, &v, x, c, 0.0, 1),
        Err(Error::UnknownKind(_))
    ));
}

#[test]
fn noiseless_bundle_residuals_vanish() {
    let reg = ModelRegistry::physical(ModelContext::default());
    let data = odmr_six_bundle(&reg, &reference_odmr(), BundleNoise::NONE, 3).unwrap();
    assert_eq!(data.len(), 6);
    let r = residual_vector(&reg, &reference_odmr(), &data).unwrap();
    assert!(r.iter().all(|x| *x == 0.0));
}

#[test]
fn reduced_chi2_is_one_on_average() {
    let reg = ModelRegistry::physical(ModelContext::default());
    let truth = reference_odmr();
    let mut total = 0.0;
    for seed in 0..100u64 {
        let data = odmr_six_bundle(&reg, &truth, BundleNoise::TYPICAL, seed * 17).unwrap();
        let r = residual_vector(&reg, &truth, &data).unwrap();
        total += r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64;
    }
    let mean = total / 100.0;
    assert!((mean - 1.0).abs() < 0.2, "{mean}");
}

fn perturbed_odmr(signs: [f64; 5]) -> ParameterSet {
    let v = reference_odmr();
    let names = ["gamma_inh", "kappa", "c_max", "q", "xi_perp"];
    let p: Vec<f64> = names.iter().zip(signs).map(|(n, s)| v.require(n).unwrap() * (1.0 + 0.3 * s)).collect();
    odmr_parameters(p[0], p[1], p[2], p[3], p[4]).unwrap()
}

#[test]
fn six_dataset_round_trip() {
    let reg = ModelRegistry::physical(ModelContext::default());
    let truth = reference_odmr();
    let data = odmr_six_bundle(&reg, &truth, BundleNoise::NONE, 0).unwrap();
    let obj = SeriesObjective::new(&reg, &data).unwrap();
    for signs in [[1.0, 1.0, 1.0, 1.0, 1.0], [-1.0, -1.0, -1.0, -1.0, -1.0], [1.0, -1.0, 1.0, -1.0, 1.0], [-1.0, 1.0, -1.0, 1.0, -1.0]] {
        let start = Instant::now();
        let fit = levenberg_marquardt(&obj, &perturbed_odmr(signs), &LmOptions::default()).unwrap();
        assert!(fit.converged, "{}", fit.termination);
        for (name, want) in &truth.0 {
            let got = fit.value(name).unwrap();
            assert!((got / want - 1.0).abs() < 5e-3, "{signs:?} {name}: {got} vs {want}");
        }
        assert!(start.elapsed().as_secs_f64() < 30.0);
    }
}

#[test]
fn six_dataset_uncertainties_at_typical_noise() {
    let reg = ModelRegistry::physical(ModelContext::default());
    let truth = reference_odmr();
    let data = odmr_six_bundle(&reg, &truth, BundleNoise::TYPICAL, 11).unwrap();
    let obj = SeriesObjective::new(&reg, &data).unwrap();
    let fit = levenberg_marquardt(&obj, &perturbed_odmr([1.0; 5]), &LmOptions::default()).unwrap();
    assert!(fit.converged);
    assert!(!fit.covariance_singular);
    let n = fit.covariance.len();
    for i in 0..n {
        assert!(fit.covariance[i][i] >= 0.0);
        for j in 0..n {
            assert_eq!(fit.covariance[i][j], fit.covariance[j][i]);
        }
    }
    // same order of magnitude as ±3 MHz, ±0.06 MHz/K², ±0.2 meV
    for (name, quoted) in [("gamma_inh", 3.0), ("q", 0.06), ("xi_perp", 0.2)] {
        let s = fit.parameter(name).unwrap().uncertainty;
        assert!(s > quoted / 10.0 && s < quoted * 10.0, "{name}: {s}");
    }
}

#[test]
fn zpl_round_trip_and_a_phonon_necessity() {
    let reg = ModelRegistry::physical(ModelContext::default());
    let truth = reference_zpl();
    let temps: Vec<f64> = (0..25).map(|i| 10.0 + 12.0 * f64::from(i)).collect();
    let zpl = synthesize_dataset(&reg, "zpl", SeriesKind::ZplVsT, &truth, temps.clone(), Conditions::default(), 0.0, 0)
        .unwrap()
        .with_sigma(1.0);
    let start = zpl_parameters(1.32 * 1.3, 13.0 * 0.7, 24e-6 * 0.7, 37.0 * 1.3, 16.2 * 1.3, 0.4).unwrap();
    let t0 = Instant::now();
    let fit = fit_zpl_and_visibility(&reg, std::slice::from_ref(&zpl), &[], &start, ZplFitMode::Joint, &LmOptions::default()).unwrap();
    assert!(t0.elapsed().as_secs_f64() < 30.0);
    assert!(fit.converged());
    for name in ["b_e", "omega_e", "b_a", "omega_a", "gamma0"] {
        let want = truth.require(name).unwrap();
        let got = fit.parameter(name).unwrap().value;
        assert!((got / want - 1.0).abs() < 1e-2, "{name}: {got} vs {want}");
    }

    // E-phonon rates alone cannot describe the warm data
    let warm: Vec<f64> = temps.into_iter().filter(|t| *t >= 100.0).collect();
    let zpl = synthesize_dataset(&reg, "zpl", SeriesKind::ZplVsT, &truth, warm, Conditions::default(), 0.0, 0)
        .unwrap()
        .with_sigma(1.0);
    let full = fit_zpl_and_visibility(&reg, std::slice::from_ref(&zpl), &[], &start, ZplFitMode::Joint, &LmOptions::default()).unwrap();
    let mut no_a = start.clone();
    no_a.upsert(Parameter::new("b_a", 0.0).fixed());
    no_a.set_fixed("omega_a", true).unwrap();
    let e_only = fit_zpl_and_visibility(&reg, &[zpl], &[], &no_a, ZplFitMode::Joint, &LmOptions::default()).unwrap();
    let ratio = e_only.primary.chi2 / full.primary.chi2.max(1e-300);
    assert!(ratio > 10.0, "{ratio}");
}

#[test]
fn visibility_branching_recovered_in_both_modes() {
    let reg = ModelRegistry::physical(ModelContext::default());
    let truth = reference_zpl();
    let temps: Vec<f64> = (0..15).map(|i| 5.0 + 10.0 * f64::from(i)).collect();
    let zpl = synthesize_dataset(&reg, "zpl", SeriesKind::ZplVsT, &truth, temps.clone(), Conditions::default(), 0.0, 0)
        .unwrap()
        .with_sigma(1.0);
    let vis: Vec<DataSeries> = [1i8, -1]
        .into_iter()
        .map(|sign| {
            let c = Conditions { sign_branch: Some(sign), ..Conditions::default() };
            synthesize_dataset(&reg, &format!("vis{sign}"), SeriesKind::VisibilityVsT, &truth, temps.clone(), c, 0.0, 0)
                .unwrap()
                .with_sigma(0.01)
        })
        .collect();
    let start = zpl_parameters(1.5, 12.0, 20e-6, 40.0, 15.0, 0.3).unwrap();
    for mode in [ZplFitMode::Joint, ZplFitMode::Sequential] {
        let fit = fit_zpl_and_visibility(&reg, std::slice::from_ref(&zpl), &vis, &start, mode, &LmOptions::default()).unwrap();
        assert!(fit.converged());
        let a = fit.parameter("a_branching").unwrap().value;
        assert!((a - 0.40).abs() < 0.01, "{mode:?}: {a}");
        assert_eq!(fit.secondary.is_some(), mode == ZplFitMode::Sequential);
    }
    assert!(matches!(
        fit_zpl_and_visibility(&reg, &vis, &[], &start, ZplFitMode::Joint, &LmOptions::default()),
        Err(Error::InvalidSeries(_))
    ));
}
