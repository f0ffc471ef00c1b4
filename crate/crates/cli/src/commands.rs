use std::path::{Path, PathBuf};

use serde::Serialize;

use nv_phonon::fitting::{
    fit_zpl_and_visibility, levenberg_marquardt, synthesize_dataset, odmr_parameters, zpl_parameters, Conditions,
    DataSeries, FitResult, ModelContext, ModelRegistry, ParamValues, ParameterSet, SeriesKind,
    SeriesObjective, ZplFitMode,
};
use nv_phonon::observables::{gamma_mn, OdmrModel};
use nv_phonon::rates::RateEvaluator;
use nv_phonon::stochastic::{validate_at_temperature, FastExchangeReport};
use nv_phonon::{
    odmr_contrast, odmr_linewidth, odmr_spectrum, q_constant, visibility, zpl_width, GammaMnMode,
    SpinParams, Temperature, WDownModel,
};

use crate::cli::{Cli, Command, FitMode, Grid, MnCommand, OdmrCommand, SeriesArg, Sweep, VisibilityCommand, ZplCommand};
use crate::config::{parse_config, RunConfig};
use crate::csvio::{read_series, write_series, write_table};
use crate::error::{CliError, CliResult, EXIT_NOT_CONVERGED};
use crate::svg::{render_svg, Axes, Curve, Points};

const DEFAULT_OUT: &str = "nvphonon-out";
const HZ_PER_MHZ: f64 = 1e6;
const CURVE_POINTS: usize = 200;

/// Files produced by a command, written together at the end.
#[derive(Default)]
struct Artifacts(Vec<(String, Vec<u8>)>);

impl Artifacts {
    fn text(&mut self, name: &str, body: String) {
        self.0.push((name.to_string(), body.into_bytes()));
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut body = serde_json::to_string_pretty(value).map_err(|e| CliError::Invariant(e.to_string()))?;
        body.push('\n');
        self.text(name, body);
        Ok(())
    }

    fn write_all(&self, dir: &Path) -> CliResult<()> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        for (name, body) in &self.0 {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

struct Session {
    cfg: RunConfig,
    rates: RateEvaluator,
    out: Artifacts,
}

impl Session {
    fn spin(&self, xi_zero: bool) -> SpinParams {
        if xi_zero {
            self.cfg.spin.with_xi_perp(0.0)
        } else {
            self.cfg.spin
        }
    }

    fn zpl_spin(&self, xi_zero: bool) -> SpinParams {
        self.cfg.spin.with_xi_perp(if xi_zero { 0.0 } else { self.cfg.zpl.xi_perp })
    }

    fn w_down_model(&self) -> WDownModel {
        match self.cfg.odmr.gamma_mn_mode {
            GammaMnMode::Quadratic => WDownModel::Quadratic { q: self.cfg.odmr.q },
            GammaMnMode::Exact => WDownModel::Exact(self.cfg.e_phonon),
        }
    }

    fn odmr_model(&self, spin: SpinParams) -> OdmrModel {
        let mut m = OdmrModel::new(spin, self.cfg.optical, self.cfg.odmr.model_params(), self.w_down_model());
        m.gamma_infinity = self.cfg.odmr.gamma_infinity.clone();
        m.rates = self.rates.clone();
        m
    }

    fn registry(&self, zpl_xi: f64) -> ModelRegistry {
        ModelRegistry::physical(ModelContext {
            spin: self.cfg.spin,
            optical: self.cfg.optical,
            gamma_infinity: self.cfg.odmr.gamma_infinity.clone(),
            gamma1: self.cfg.odmr.gamma1,
            rates: self.rates.clone().with_memo(),
            r_rate: self.cfg.visibility.r_rate,
            zpl_xi_perp: zpl_xi,
        })
    }

    /// Configured values of every fit parameter.
    fn values(&self, xi_perp: f64) -> ParamValues {
        let c = &self.cfg;
        ParamValues::from_pairs([
            ("gamma_inh", c.odmr.gamma_inh),
            ("kappa", c.odmr.kappa),
            ("c_max", c.odmr.c_max),
            ("q", c.odmr.q),
            ("xi_perp", xi_perp),
            ("b_e", c.e_phonon.b_e),
            ("omega_e", c.e_phonon.omega_e),
            ("b_a", c.a_phonon.b_a),
            ("omega_a", c.a_phonon.omega_a),
            ("gamma0", c.optical.gamma0),
            ("a_branching", c.visibility.a_branching),
        ])
    }

    fn apply_fixed(&self, params: &mut ParameterSet) -> CliResult<()> {
        for name in &self.cfg.fit.fixed {
            params
                .set_fixed(name, true)
                .map_err(|_| CliError::Invariant(format!("invalid value for `fit.fixed`: `{name}` is not a parameter of this fit")))?;
        }
        Ok(())
    }
}

/// Runs one command and returns its exit code.
pub fn run(args: Cli) -> CliResult<u8> {
    let mut cfg = match &args.config {
        Some(path) => parse_config(path)?,
        None => {
            let cfg = RunConfig::default();
            cfg.validate()?;
            cfg
        }
    };
    if let Some(seed) = args.seed {
        cfg.mc.seed = seed;
    }
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let rates = RateEvaluator::new(cfg.constants, cfg.quadrature);
    let mut s = Session {
        cfg,
        rates,
        out: Artifacts::default(),
    };

    let code = match args.command {
        Command::Rates { grid, xi_zero } => rates_cmd(&mut s, grid, xi_zero)?,
        Command::Odmr { command: OdmrCommand::Simulate { temp, rf_power, grid } } => odmr_simulate(&mut s, temp, rf_power, grid)?,
        Command::Odmr { command: OdmrCommand::Fit { series } } => odmr_fit(&mut s, &series)?,
        Command::Zpl { command: ZplCommand::Eval { grid, xi_zero } } => zpl_eval(&mut s, grid, xi_zero)?,
        Command::Zpl { command: ZplCommand::Fit { series, mode, xi_zero } } => zpl_fit(&mut s, &series, mode, xi_zero)?,
        Command::Visibility { command: VisibilityCommand::Eval { grid, xi_zero } } => visibility_eval(&mut s, grid, xi_zero)?,
        Command::Visibility { command: VisibilityCommand::Fit { series, xi_zero } } => visibility_fit(&mut s, &series, xi_zero)?,
        Command::Mn { command: MnCommand::Validate { temp } } => mn_validate(&mut s, temp)?,
        Command::Report { series, rf_power, temp, xi_zero } => report(&mut s, &series, rf_power, temp, xi_zero)?,
        Command::Synth { kind, sweep, noise, temp, rf_power, sign, name } => {
            let conditions = Conditions {
                temperature_k: temp,
                rf_power_w: rf_power,
                optical_power_mw: None,
                sign_branch: sign,
            };
            synth(&mut s, kind, sweep, noise, conditions, name)?
        }
    };
    let cfg = s.cfg.clone();
    s.out.json("config.json", &cfg)?;
    s.out.write_all(&dir)?;
    for (name, _) in &s.out.0 {
        println!("{}", dir.join(name).display());
    }
    Ok(code)
}

fn temperature(kelvin: f64, field: &str) -> CliResult<Temperature> {
    Temperature::new(kelvin).map_err(|_| CliError::Invariant(format!("invalid value for `{field}`: must be finite and >= 0 K, got {kelvin}")))
}

fn grid_values(g: Grid, default: (f64, f64, f64)) -> CliResult<Vec<f64>> {
    let tmin = g.tmin.unwrap_or(default.0);
    let tmax = g.tmax.unwrap_or(default.1);
    let step = g.step.unwrap_or(default.2);
    let bad = |field: &str, why: &str| Err(CliError::Invariant(format!("invalid value for `{field}`: {why}")));
    if !(tmin.is_finite() && tmin > 0.0) {
        return bad("tmin", "must be finite and > 0 K");
    }
    if !(tmax.is_finite() && tmax >= tmin) {
        return bad("tmax", "must be finite and >= tmin");
    }
    if !(step.is_finite() && step > 0.0) {
        return bad("step", "must be finite and > 0 K");
    }
    let n = ((tmax - tmin) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| tmin + step * i as f64).collect())
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn rates_cmd(s: &mut Session, grid: Grid, xi_zero: bool) -> CliResult<u8> {
    let temps = grid_values(grid, (295.0, 550.0, 5.0))?;
    let spin = s.spin(xi_zero);
    let e = s.cfg.e_phonon;
    let a = s.cfg.a_phonon;
    let q = q_constant(&s.cfg.constants, &e, &spin)?;
    let w_model = s.w_down_model();
    let mut rows = Vec::with_capacity(temps.len());
    for &k in &temps {
        let t = temperature(k, "tmin")?;
        let down = s.rates.w_down(t, &e, &spin)?;
        let up = s.rates.w_up(t, &e, &spin)?;
        let wa = s.rates.w_a(t, &a)?;
        let mn = gamma_mn(&s.rates, t, &spin, &w_model)?;
        rows.push(vec![k, down, up, wa, down / (k * k), mn.gamma, q]);
    }
    let header = ["T_K", "W_down_Hz", "W_up_Hz", "W_A_Hz", "W_down_over_T2_Hz_per_K2", "Gamma_MN_MHz", "Q_Hz_per_K2"];
    let svg = render_svg(
        &[
            Curve {
                label: "W↓/T²".into(),
                x: temps.clone(),
                y: rows.iter().map(|r| r[4]).collect(),
            },
            Curve {
                label: "Q".into(),
                x: temps.clone(),
                y: vec![q; temps.len()],
            },
        ],
        &[],
        &Axes {
            title: "Down-transfer rate over T²".into(),
            x_label: "T (K)".into(),
            y_label: "W↓/T² (Hz/K²)".into(),
            log_y: false,
        },
    )?;
    s.out.text("rates.csv", write_table(&header, &rows));
    s.out.text("rates.svg", svg);
    Ok(0)
}

#[derive(Serialize)]
struct OdmrSummary {
    temperature_k: f64,
    rf_power_w: f64,
    splitting_mhz: f64,
    linewidth_mhz: f64,
    contrast: f64,
    gamma_infinity_mhz: f64,
    gamma_mn_mhz: f64,
    gamma_h_mhz: f64,
    gamma1_mhz: f64,
    w_down_mhz: f64,
    exchange_ratio: f64,
    fast_exchange: bool,
}

fn odmr_simulate(s: &mut Session, temp: f64, rf_power: f64, grid: Grid) -> CliResult<u8> {
    let t = temperature(temp, "temp")?;
    if !(rf_power.is_finite() && rf_power >= 0.0) {
        return Err(CliError::Invariant(format!("invalid value for `rf_power`: must be finite and >= 0 W, got {rf_power}")));
    }
    let m = s.odmr_model(s.cfg.spin);
    let h = m.homogeneous(t)?;
    let summary = OdmrSummary {
        temperature_k: temp,
        rf_power_w: rf_power,
        splitting_mhz: m.splitting(t)?,
        linewidth_mhz: odmr_linewidth(rf_power, t, &m)?,
        contrast: odmr_contrast(rf_power, t, &m)?,
        gamma_infinity_mhz: h.gamma_infinity,
        gamma_mn_mhz: h.motional.gamma,
        gamma_h_mhz: h.gamma_h,
        gamma1_mhz: h.gamma1,
        w_down_mhz: h.motional.w_down_mhz,
        exchange_ratio: h.motional.exchange_ratio,
        fast_exchange: h.motional.fast_exchange,
    };

    let center = m.spin.d_parallel;
    let freqs: Vec<f64> = (0..=2400).map(|i| center - 600.0 + 0.5 * f64::from(i)).collect();
    let signal = odmr_spectrum(&freqs, t, rf_power, &s.cfg.odmr.baseline, &m)?;
    let rows: Vec<Vec<f64>> = freqs.iter().zip(&signal).map(|(f, y)| vec![*f, *y]).collect();
    s.out.text("spectrum.csv", write_table(&["f_MHz", "signal"], &rows));
    s.out.text(
        "spectrum.svg",
        render_svg(
            &[Curve {
                label: format!("{temp} K, {rf_power} W"),
                x: freqs,
                y: signal,
            }],
            &[],
            &Axes {
                title: "ODMR spectrum".into(),
                x_label: "f (MHz)".into(),
                y_label: "signal".into(),
                log_y: false,
            },
        )?,
    );

    let temps = grid_values(grid, (295.0, 550.0, 5.0))?;
    let mut curves = Vec::with_capacity(temps.len());
    for &k in &temps {
        let tk = temperature(k, "tmin")?;
        let hk = m.homogeneous(tk)?;
        curves.push(vec![
            k,
            odmr_linewidth(rf_power, tk, &m)?,
            odmr_contrast(rf_power, tk, &m)?,
            m.splitting(tk)?,
            hk.motional.gamma,
        ]);
    }
    s.out.text(
        "curves.csv",
        write_table(&["T_K", "linewidth_MHz", "contrast", "splitting_MHz", "Gamma_MN_MHz"], &curves),
    );
    s.out.json("odmr_summary.json", &summary)?;
    Ok(0)
}

fn load_series(args: &[SeriesArg], allowed: &[SeriesKind]) -> CliResult<Vec<(DataSeries, String)>> {
    let mut out: Vec<(DataSeries, String)> = Vec::new();
    for a in args {
        if !allowed.contains(&a.kind) {
            let names: Vec<&str> = allowed.iter().map(|k| k.as_str()).collect();
            return Err(CliError::Invariant(format!(
                "series kind {} is not used by this fit; expected one of {}",
                a.kind,
                names.join(", ")
            )));
        }
        let mut series = read_series(a.kind, &a.path)?;
        // names label residual norms and plots, so keep them unique
        if out.iter().any(|(s, _)| s.name == series.name) {
            series.name = format!("{}_{}", series.name, out.len());
        }
        out.push((series, a.path.display().to_string()));
    }
    Ok(out)
}

#[derive(Serialize)]
struct SeriesInfo {
    name: String,
    kind: SeriesKind,
    path: String,
    points: usize,
    weighted: bool,
}

#[derive(Serialize)]
struct FitReport<'a> {
    command: &'a str,
    converged: bool,
    series: Vec<SeriesInfo>,
    fit: &'a FitResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    second_stage: Option<&'a FitResult>,
    config: &'a RunConfig,
}

fn axes_for(kind: SeriesKind, title: String) -> Axes {
    let [x, y, _] = kind.columns();
    Axes {
        title,
        x_label: x.to_string(),
        y_label: y.to_string(),
        log_y: kind == SeriesKind::ZplVsT,
    }
}

fn model_curve(reg: &ModelRegistry, values: &ParamValues, kind: SeriesKind, conditions: Conditions, lo: f64, hi: f64, label: String) -> CliResult<Curve> {
    let x = if hi > lo { linspace(lo, hi, CURVE_POINTS) } else { vec![lo] };
    let probe = DataSeries {
        name: label.clone(),
        kind,
        y: vec![0.0; x.len()],
        x,
        sigma: None,
        conditions,
    };
    let y = reg.evaluate(&probe, values)?;
    Ok(Curve { label, x: probe.x, y })
}

fn points_of(s: &DataSeries) -> Points {
    Points {
        label: s.name.clone(),
        x: s.x.clone(),
        y: s.y.clone(),
        err: s.sigma.clone(),
    }
}

fn overlays(s: &mut Session, reg: &ModelRegistry, values: &ParamValues, series: &[DataSeries]) -> CliResult<()> {
    for (i, d) in series.iter().enumerate() {
        let lo = d.x[0];
        let hi = d.x[d.len() - 1];
        let curve = model_curve(reg, values, d.kind, d.conditions, lo, hi, "fit".into())?;
        let svg = render_svg(&[curve], &[points_of(d)], &axes_for(d.kind, format!("{} ({})", d.name, d.kind)))?;
        s.out.text(&format!("fit_{}_{}.svg", i + 1, d.kind), svg);
    }
    Ok(())
}

fn fitted_values(base: ParamValues, fits: &[&FitResult]) -> ParamValues {
    let mut v = base;
    for f in fits {
        for p in f.parameters.iter().filter(|p| !p.fixed) {
            v.insert(&p.name, p.value);
        }
    }
    v
}

fn finish_fit(s: &mut Session, command: &str, loaded: &[(DataSeries, String)], fit: &FitResult, second: Option<&FitResult>) -> CliResult<u8> {
    let converged = fit.converged && second.map_or(true, |f| f.converged);
    let info = loaded
        .iter()
        .map(|(d, path)| SeriesInfo {
            name: d.name.clone(),
            kind: d.kind,
            path: path.clone(),
            points: d.len(),
            weighted: d.sigma.is_some(),
        })
        .collect();
    let cfg = s.cfg.clone();
    s.out.json(
        "fit_result.json",
        &FitReport {
            command,
            converged,
            series: info,
            fit,
            second_stage: second,
            config: &cfg,
        },
    )?;
    if converged {
        Ok(0)
    } else {
        eprintln!("warning: fit did not converge ({})", fit.termination);
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn odmr_fit(s: &mut Session, args: &[SeriesArg]) -> CliResult<u8> {
    let kinds = [SeriesKind::LinewidthVsT, SeriesKind::LinewidthVsP, SeriesKind::ContrastVsP, SeriesKind::SplittingVsT];
    let loaded = load_series(args, &kinds)?;
    let series: Vec<DataSeries> = loaded.iter().map(|(d, _)| d.clone()).collect();
    let reg = s.registry(s.cfg.zpl.xi_perp);
    let c = &s.cfg;
    let mut params = odmr_parameters(c.odmr.gamma_inh, c.odmr.kappa, c.odmr.c_max, c.odmr.q, c.spin.xi_perp)?;
    s.apply_fixed(&mut params)?;
    let obj = SeriesObjective::new(&reg, &series)?;
    let fit = levenberg_marquardt(&obj, &params, &c.fit.options)?;
    let values = fitted_values(s.values(c.spin.xi_perp), &[&fit]);
    overlays(s, &reg, &values, &series)?;
    finish_fit(s, "odmr fit", &loaded, &fit, None)
}

fn zpl_fit(s: &mut Session, args: &[SeriesArg], mode: Option<FitMode>, xi_zero: bool) -> CliResult<u8> {
    let loaded = load_series(args, &[SeriesKind::ZplVsT, SeriesKind::VisibilityVsT])?;
    let (zpl, vis): (Vec<DataSeries>, Vec<DataSeries>) = loaded
        .iter()
        .map(|(d, _)| d.clone())
        .partition(|d| d.kind == SeriesKind::ZplVsT);
    if zpl.is_empty() {
        return Err(CliError::Invariant("zpl fit needs at least one zpl_vs_T series".into()));
    }
    let mode = match mode {
        Some(FitMode::Joint) => ZplFitMode::Joint,
        Some(FitMode::Sequential) => ZplFitMode::Sequential,
        None => s.cfg.zpl.fit_mode,
    };
    let xi = s.zpl_spin(xi_zero).xi_perp;
    let reg = s.registry(xi);
    let c = &s.cfg;
    let mut params = zpl_parameters(c.e_phonon.b_e, c.e_phonon.omega_e, c.a_phonon.b_a, c.a_phonon.omega_a, c.optical.gamma0, c.visibility.a_branching)?;
    s.apply_fixed(&mut params)?;
    let fit = fit_zpl_and_visibility(&reg, &zpl, &vis, &params, mode, &c.fit.options)?;
    let mut fits = vec![&fit.primary];
    fits.extend(fit.secondary.as_ref());
    let values = fitted_values(s.values(c.spin.xi_perp), &fits);
    let all: Vec<DataSeries> = loaded.iter().map(|(d, _)| d.clone()).collect();
    overlays(s, &reg, &values, &all)?;
    finish_fit(s, "zpl fit", &loaded, &fit.primary, fit.secondary.as_ref())
}

fn visibility_fit(s: &mut Session, args: &[SeriesArg], xi_zero: bool) -> CliResult<u8> {
    let loaded = load_series(args, &[SeriesKind::VisibilityVsT])?;
    let vis: Vec<DataSeries> = loaded.iter().map(|(d, _)| d.clone()).collect();
    let xi = s.zpl_spin(xi_zero).xi_perp;
    let reg = s.registry(xi);
    let c = &s.cfg;
    let mut params = zpl_parameters(c.e_phonon.b_e, c.e_phonon.omega_e, c.a_phonon.b_a, c.a_phonon.omega_a, c.optical.gamma0, c.visibility.a_branching)?;
    for name in ["b_e", "omega_e"] {
        params.set_fixed(name, true)?;
    }
    s.apply_fixed(&mut params)?;
    let fit = fit_zpl_and_visibility(&reg, &[], &vis, &params, ZplFitMode::Joint, &c.fit.options)?;
    let values = fitted_values(s.values(c.spin.xi_perp), &[&fit.primary]);
    overlays(s, &reg, &values, &vis)?;
    finish_fit(s, "visibility fit", &loaded, &fit.primary, None)
}

fn zpl_eval(s: &mut Session, grid: Grid, xi_zero: bool) -> CliResult<u8> {
    let temps = grid_values(grid, (2.0, 300.0, 2.0))?;
    let spin = s.zpl_spin(xi_zero);
    let (e, a, o) = (s.cfg.e_phonon, s.cfg.a_phonon, s.cfg.optical);
    let mut rows = Vec::with_capacity(temps.len());
    for &k in &temps {
        let t = temperature(k, "tmin")?;
        let width = zpl_width(&s.rates, t, &e, &a, &o, &spin)?;
        let down = s.rates.w_down(t, &e, &spin)? / (2.0 * std::f64::consts::PI) / HZ_PER_MHZ;
        let deph = s.rates.w_a(t, &a)? / std::f64::consts::PI / HZ_PER_MHZ;
        rows.push(vec![k, width, down, deph, o.gamma0]);
    }
    let svg = render_svg(
        &[Curve {
            label: "ZPL width".into(),
            x: temps.clone(),
            y: rows.iter().map(|r| r[1]).collect(),
        }],
        &[],
        &axes_for(SeriesKind::ZplVsT, "ZPL width".into()),
    )?;
    s.out.text(
        "zpl.csv",
        write_table(&["T_K", "zpl_width_MHz", "W_down_over_2pi_MHz", "W_A_over_pi_MHz", "gamma0_MHz"], &rows),
    );
    s.out.text("zpl.svg", svg);
    Ok(0)
}

fn visibility_eval(s: &mut Session, grid: Grid, xi_zero: bool) -> CliResult<u8> {
    let temps = grid_values(grid, (2.0, 300.0, 2.0))?;
    let spin = s.zpl_spin(xi_zero);
    let e = s.cfg.e_phonon;
    let mut plus = s.cfg.visibility;
    plus.sign_branch = 1;
    let minus = nv_phonon::VisibilityParams { sign_branch: -1, ..plus };
    let mut rows = Vec::with_capacity(temps.len());
    for &k in &temps {
        let t = temperature(k, "tmin")?;
        rows.push(vec![
            k,
            visibility(&s.rates, t, &plus, &e, &spin)?,
            visibility(&s.rates, t, &minus, &e, &spin)?,
            s.rates.w_down(t, &e, &spin)? / HZ_PER_MHZ,
            s.rates.w_up(t, &e, &spin)? / HZ_PER_MHZ,
        ]);
    }
    let curve = |label: &str, col: usize| Curve {
        label: label.into(),
        x: temps.clone(),
        y: rows.iter().map(|r| r[col]).collect(),
    };
    let svg = render_svg(&[curve("+ branch", 1), curve("- branch", 2)], &[], &axes_for(SeriesKind::VisibilityVsT, "ZPL visibility".into()))?;
    s.out.text(
        "visibility.csv",
        write_table(&["T_K", "visibility_plus", "visibility_minus", "W_down_MHz", "W_up_MHz"], &rows),
    );
    s.out.text("visibility.svg", svg);
    Ok(0)
}

#[derive(Serialize)]
struct MnReport<'a> {
    temperature_k: f64,
    tolerance: f64,
    within_tolerance: bool,
    report: &'a FastExchangeReport,
}

const MN_TOLERANCE: f64 = 0.05;

fn mn_validate(s: &mut Session, temp: f64) -> CliResult<u8> {
    let t = temperature(temp, "temp")?;
    let spin = s.cfg.spin;
    let w_down = s.w_down_model().w_down_mhz(&s.rates, t, &spin)?;
    let report = validate_at_temperature(&s.cfg.constants, &spin, t, w_down, &s.cfg.mc)?;
    s.out.json(
        "mn_report.json",
        &MnReport {
            temperature_k: temp,
            tolerance: MN_TOLERANCE,
            within_tolerance: report.relative_error.abs() <= MN_TOLERANCE,
            report: &report,
        },
    )?;
    Ok(0)
}

struct Panel {
    file: &'static str,
    kind: SeriesKind,
    title: &'static str,
    range: (f64, f64),
}

const PANELS: [Panel; 6] = [
    Panel { file: "panel_linewidth_vs_T.svg", kind: SeriesKind::LinewidthVsT, title: "ODMR linewidth vs temperature", range: (295.0, 550.0) },
    Panel { file: "panel_linewidth_vs_P.svg", kind: SeriesKind::LinewidthVsP, title: "ODMR linewidth vs RF power", range: (0.0, 0.5) },
    Panel { file: "panel_contrast_vs_P.svg", kind: SeriesKind::ContrastVsP, title: "ODMR contrast vs RF power", range: (0.0, 0.5) },
    Panel { file: "panel_splitting_vs_T.svg", kind: SeriesKind::SplittingVsT, title: "ODMR splitting vs temperature", range: (295.0, 550.0) },
    Panel { file: "panel_zpl_vs_T.svg", kind: SeriesKind::ZplVsT, title: "ZPL width vs temperature", range: (2.0, 300.0) },
    Panel { file: "panel_visibility_vs_T.svg", kind: SeriesKind::VisibilityVsT, title: "ZPL visibility vs temperature", range: (2.0, 300.0) },
];

fn report(s: &mut Session, args: &[SeriesArg], rf_power: f64, temp: f64, xi_zero: bool) -> CliResult<u8> {
    temperature(temp, "temp")?;
    if !(rf_power.is_finite() && rf_power >= 0.0) {
        return Err(CliError::Invariant(format!("invalid value for `rf_power`: must be finite and >= 0 W, got {rf_power}")));
    }
    let loaded = load_series(args, &SeriesKind::ALL)?;
    let xi = s.spin(xi_zero).xi_perp;
    let reg = s.registry(s.zpl_spin(xi_zero).xi_perp);
    let values = s.values(xi);
    for panel in &PANELS {
        let data: Vec<&DataSeries> = loaded.iter().map(|(d, _)| d).filter(|d| d.kind == panel.kind).collect();
        let (mut lo, mut hi) = panel.range;
        for d in &data {
            lo = lo.min(d.x[0]);
            hi = hi.max(d.x[d.len() - 1]);
        }
        let mut curves = Vec::new();
        let mut conditions: Vec<(String, Conditions)> = data.iter().map(|d| (format!("model, {}", d.name), d.conditions)).collect();
        if conditions.is_empty() {
            conditions = match panel.kind {
                SeriesKind::LinewidthVsT => vec![(format!("model, {rf_power} W"), Conditions { rf_power_w: Some(rf_power), ..Conditions::default() })],
                SeriesKind::LinewidthVsP | SeriesKind::ContrastVsP => {
                    vec![(format!("model, {temp} K"), Conditions { temperature_k: Some(temp), ..Conditions::default() })]
                }
                SeriesKind::VisibilityVsT => vec![
                    ("model, + branch".into(), Conditions { sign_branch: Some(1), ..Conditions::default() }),
                    ("model, - branch".into(), Conditions { sign_branch: Some(-1), ..Conditions::default() }),
                ],
                _ => vec![("model".into(), Conditions::default())],
            };
        }
        for (label, c) in conditions {
            curves.push(model_curve(&reg, &values, panel.kind, c, lo, hi, label)?);
        }
        let points: Vec<Points> = data.iter().map(|d| points_of(d)).collect();
        let svg = render_svg(&curves, &points, &axes_for(panel.kind, panel.title.into()))?;
        s.out.text(panel.file, svg);
    }
    Ok(0)
}

fn synth(s: &mut Session, kind: SeriesKind, sweep: Sweep, noise: f64, mut conditions: Conditions, name: Option<String>) -> CliResult<u8> {
    let default = match kind {
        SeriesKind::LinewidthVsT | SeriesKind::SplittingVsT => (295.0, 545.0, 25.0),
        SeriesKind::LinewidthVsP | SeriesKind::ContrastVsP => (0.05, 0.45, 0.05),
        SeriesKind::ZplVsT | SeriesKind::VisibilityVsT => (5.0, 300.0, 5.0),
    };
    let x = grid_values(
        Grid {
            tmin: sweep.xmin,
            tmax: sweep.xmax,
            step: sweep.xstep,
        },
        default,
    )
    .map_err(|e| match e {
        CliError::Invariant(m) => CliError::Invariant(m.replace("`tmin`", "`xmin`").replace("`tmax`", "`xmax`").replace("`step`", "`xstep`").replace(" K", "")),
        other => other,
    })?;
    match kind {
        SeriesKind::LinewidthVsT if conditions.rf_power_w.is_none() => conditions.rf_power_w = Some(0.44),
        SeriesKind::LinewidthVsP | SeriesKind::ContrastVsP if conditions.temperature_k.is_none() => conditions.temperature_k = Some(295.0),
        SeriesKind::VisibilityVsT if conditions.sign_branch.is_none() => conditions.sign_branch = Some(s.cfg.visibility.sign_branch),
        _ => {}
    }
    if let Some(b) = conditions.sign_branch {
        if b != 1 && b != -1 {
            return Err(CliError::Invariant(format!("invalid value for `sign`: must be +1 or -1, got {b}")));
        }
    }
    let reg = s.registry(s.cfg.zpl.xi_perp);
    let values = s.values(s.cfg.spin.xi_perp);
    let name = name.unwrap_or_else(|| kind.to_string());
    let series = synthesize_dataset(&reg, &name, kind, &values, x, conditions, noise, s.cfg.mc.seed)?;
    s.out.text(&format!("{kind}.csv"), write_series(&series));
    Ok(0)
}
