use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::models::ModelRegistry;
use super::params::{ParamValues, Parameter, ParameterSet, Transform};
use super::series::DataSeries;

/// Anything that maps parameter values to a residual vector.
pub trait Objective: Sync {
    fn residuals(&self, values: &ParamValues) -> Result<Vec<f64>>;

    /// Named contiguous residual blocks, used for per-block norms.
    fn blocks(&self) -> Vec<(String, usize)> {
        Vec::new()
    }

    /// Whether residuals carry real `1/σ` weights.
    fn weighted(&self) -> bool {
        true
    }
}

/// Weighted residuals of several series under one registry.
pub struct SeriesObjective<'a> {
    pub registry: &'a ModelRegistry,
    pub series: &'a [DataSeries],
}

impl<'a> SeriesObjective<'a> {
    pub fn new(registry: &'a ModelRegistry, series: &'a [DataSeries]) -> Result<Self> {
        for s in series {
            s.validate()?;
            if !registry.contains(s.kind) {
                return Err(Error::UnknownKind(s.kind.to_string()));
            }
        }
        Ok(Self { registry, series })
    }
}

impl Objective for SeriesObjective<'_> {
    fn residuals(&self, values: &ParamValues) -> Result<Vec<f64>> {
        residual_vector(self.registry, values, self.series)
    }

    fn blocks(&self) -> Vec<(String, usize)> {
        self.series.iter().map(|s| (s.name.clone(), s.len())).collect()
    }

    fn weighted(&self) -> bool {
        self.series.iter().all(|s| s.sigma.is_some())
    }
}

/// `(model − y)/σ` over all series, series-then-point order.
pub fn residual_vector(registry: &ModelRegistry, values: &ParamValues, series: &[DataSeries]) -> Result<Vec<f64>> {
    let parts: Vec<Vec<f64>> = series
        .par_iter()
        .map(|s| {
            let model = registry.evaluate(s, values)?;
            Ok(model
                .iter()
                .zip(&s.y)
                .enumerate()
                .map(|(i, (m, y))| (m - y) * s.weight(i))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative χ² decrease that counts as converged.
    pub chi2_rel_tol: f64,
    /// Step norm (scaled coordinates) that counts as converged.
    pub step_tol: f64,
    /// Initial damping as a fraction of the largest diagonal of `JᵀJ`.
    pub initial_damping: f64,
    pub fd_rel_step: f64,
    pub fd_abs_step: f64,
    /// Singular values below this fraction of the largest are dropped.
    pub svd_cutoff: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            chi2_rel_tol: 1e-10,
            step_tol: 1e-12,
            initial_damping: 1e-3,
            fd_rel_step: 1e-6,
            fd_abs_step: 1e-12,
            svd_cutoff: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedParameter {
    pub name: String,
    pub value: f64,
    /// 1σ; zero for fixed parameters.
    pub uncertainty: f64,
    pub fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: Vec<FittedParameter>,
    /// Names of the covariance rows/columns (the free parameters).
    pub covariance_names: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub chi2_reduced: f64,
    pub dof: usize,
    pub n_iterations: usize,
    pub n_evaluations: usize,
    pub converged: bool,
    pub termination: String,
    pub covariance_singular: bool,
    /// Unscaled χ² when false.
    pub weighted: bool,
    pub series_residual_norms: Vec<(String, f64)>,
}

impl FitResult {
    pub fn parameter(&self, name: &str) -> Option<&FittedParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameter(name).map(|p| p.value)
    }

    /// Fitted values as a new parameter set, keeping bounds and flags.
    pub fn apply_to(&self, initial: &ParameterSet) -> ParameterSet {
        let mut out = initial.clone();
        for p in &self.parameters {
            if let Some(slot) = out.get_mut(&p.name) {
                slot.value = p.value;
            }
        }
        out
    }
}

/// Map between the free external parameters and scaled internal
/// coordinates, all of which start at 1.
struct Mapping {
    base: ParameterSet,
    free: Vec<usize>,
    scale: Vec<f64>,
}

impl Mapping {
    fn new(params: &ParameterSet) -> Self {
        let all: Vec<&Parameter> = params.iter().collect();
        let free: Vec<usize> = (0..all.len()).filter(|&i| !all[i].fixed).collect();
        let scale = free
            .iter()
            .map(|&i| {
                let p = all[i];
                match p.transform {
                    Transform::Log => p.value.ln(),
                    Transform::None if p.value != 0.0 => p.value.abs(),
                    Transform::None => 1.0,
                }
            })
            .collect();
        Self {
            base: params.clone(),
            free,
            scale,
        }
    }

    fn param(&self, j: usize) -> &Parameter {
        self.base.iter().nth(self.free[j]).expect("free index in range")
    }

    fn to_internal(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.free.len(),
            (0..self.free.len()).map(|j| {
                let p = self.param(j);
                match p.transform {
                    Transform::Log => 1.0,
                    Transform::None => p.value / self.scale[j],
                }
            }),
        )
    }

    fn external(&self, j: usize, u: f64) -> f64 {
        let p = self.param(j);
        let v = match p.transform {
            Transform::Log => (u - 1.0 + self.scale[j]).exp(),
            Transform::None => u * self.scale[j],
        };
        p.clamp(v)
    }

    /// `dp/du` at `u`.
    fn derivative(&self, j: usize, u: f64) -> f64 {
        match self.param(j).transform {
            Transform::Log => self.external(j, u),
            Transform::None => self.scale[j],
        }
    }

    /// Projects `u` onto the feasible region.
    fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            u.len(),
            u.iter().enumerate().map(|(j, &x)| {
                let p = self.param(j);
                let v = self.external(j, x);
                match p.transform {
                    Transform::Log => v.ln() + 1.0 - self.scale[j],
                    Transform::None => v / self.scale[j],
                }
            }),
        )
    }

    fn values(&self, u: &DVector<f64>) -> ParamValues {
        let mut v = self.base.values();
        for (j, &x) in u.iter().enumerate() {
            v.insert(&self.param(j).name, self.external(j, x));
        }
        v
    }
}

fn residuals_at(obj: &dyn Objective, map: &Mapping, u: &DVector<f64>) -> Result<DVector<f64>> {
    let r = obj.residuals(&map.values(u))?;
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidFit("model produced a non-finite residual".into()));
    }
    Ok(DVector::from_vec(r))
}

/// Central differences in internal coordinates, one column per free parameter.
fn internal_jacobian(obj: &dyn Objective, map: &Mapping, u: &DVector<f64>, m: usize, opts: &LmOptions) -> Result<DMatrix<f64>> {
    let cols: Vec<DVector<f64>> = (0..u.len())
        .into_par_iter()
        .map(|j| {
            let h = (opts.fd_rel_step * u[j].abs()).max(opts.fd_abs_step);
            let mut up = u.clone();
            up[j] += h;
            let mut dn = u.clone();
            dn[j] -= h;
            let (rp, rm) = (residuals_at(obj, map, &up)?, residuals_at(obj, map, &dn)?);
            Ok((rp - rm) / (2.0 * h))
        })
        .collect::<Result<_>>()?;
    let mut j = DMatrix::zeros(m, u.len());
    for (k, c) in cols.iter().enumerate() {
        j.set_column(k, c);
    }
    Ok(j)
}

/// `∂r/∂p` for the free parameters at `params`, in parameter order.
pub fn jacobian(obj: &dyn Objective, params: &ParameterSet, opts: &LmOptions) -> Result<DMatrix<f64>> {
    params.validate()?;
    let map = Mapping::new(params);
    let u = map.to_internal();
    let m = residuals_at(obj, &map, &u)?.len();
    let mut j = internal_jacobian(obj, &map, &u, m, opts)?;
    for k in 0..u.len() {
        let d = map.derivative(k, u[k]);
        j.column_mut(k).unscale_mut(d);
    }
    Ok(j)
}

/// Damped Gauss-Newton with gain-ratio damping control.
pub fn levenberg_marquardt(obj: &dyn Objective, initial: &ParameterSet, opts: &LmOptions) -> Result<FitResult> {
    initial.validate()?;
    let map = Mapping::new(initial);
    let n = map.free.len();
    if n == 0 {
        return Err(Error::InvalidFit("no free parameters".into()));
    }
    let mut u = map.to_internal();
    let mut r = residuals_at(obj, &map, &u)?;
    let m = r.len();
    if m < n {
        return Err(Error::InvalidFit(format!("{m} residuals for {n} free parameters")));
    }
    let mut chi2 = r.norm_squared();
    let mut evaluations = 1;
    let mut mu = 0.0;
    let mut nu = 2.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = false;
    let mut termination = String::from("maximum iterations reached");

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        let jac = internal_jacobian(obj, &map, &u, m, opts)?;
        evaluations += 2 * n;
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        if iterations == 1 {
            mu = opts.initial_damping * a.diagonal().max();
            if !(mu > 0.0) {
                mu = opts.initial_damping;
            }
        }
        if g.amax() == 0.0 || chi2 == 0.0 {
            converged = true;
            termination = "zero gradient".into();
            break;
        }
        if stalled {
            // A small decrease on a damped step only counts once the
            // undamped Gauss-Newton step promises no more either.
            let mut gn = a.clone();
            let floor = 1e-12 * a.diagonal().max();
            for k in 0..n {
                gn[(k, k)] += floor;
            }
            let gn_step = gn.cholesky().map(|ch| ch.solve(&(-&g)));
            let promised = gn_step.as_ref().map_or(0.0, |d| -g.dot(d));
            if promised < opts.chi2_rel_tol * chi2 {
                // final undamped polish, kept only if it helps
                if let Some(d) = gn_step {
                    let trial = map.project(&(&u + d));
                    if let Ok(r_new) = residuals_at(obj, &map, &trial) {
                        evaluations += 1;
                        if r_new.norm_squared() < chi2 {
                            u = trial;
                            r = r_new;
                        }
                    }
                }
                converged = true;
                termination = "relative chi2 decrease below tolerance".into();
                break;
            }
        }
        loop {
            let mut damped = a.clone();
            for k in 0..n {
                damped[(k, k)] += mu;
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    mu *= nu;
                    nu *= 2.0;
                    continue;
                }
            };
            let trial = map.project(&(&u + &step));
            let delta = &trial - &u;
            if delta.norm() < opts.step_tol * (u.norm() + opts.step_tol) {
                converged = true;
                termination = "step norm below tolerance".into();
                break 'outer;
            }
            let r_new = residuals_at(obj, &map, &trial)?;
            evaluations += 1;
            let chi2_new = r_new.norm_squared();
            let predicted = delta.dot(&(mu * &delta - &g));
            let rho = if predicted > 0.0 { (chi2 - chi2_new) / predicted } else { -1.0 };
            if rho > 0.0 && chi2_new < chi2 {
                let decrease = (chi2 - chi2_new) / chi2;
                u = trial;
                r = r_new;
                chi2 = chi2_new;
                mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                nu = 2.0;
                if chi2 == 0.0 {
                    converged = true;
                    termination = "exact fit".into();
                    break 'outer;
                }
                stalled = decrease < opts.chi2_rel_tol;
                break;
            }
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() {
                termination = "damping overflow".into();
                break 'outer;
            }
        }
    }

    summarize(obj, &map, &u, &r, opts, iterations, evaluations, converged, termination)
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    obj: &dyn Objective,
    map: &Mapping,
    u: &DVector<f64>,
    r: &DVector<f64>,
    opts: &LmOptions,
    n_iterations: usize,
    n_evaluations: usize,
    converged: bool,
    termination: String,
) -> Result<FitResult> {
    let n = u.len();
    let m = r.len();
    let chi2 = r.norm_squared();
    let dof = m - n;
    let chi2_reduced = if dof > 0 { chi2 / dof as f64 } else { f64::NAN };

    // J in external units, columns scaled by |p| so the normal matrix is well conditioned.
    let mut jac = internal_jacobian(obj, map, u, m, opts)?;
    let mut d = vec![0.0; n];
    for k in 0..n {
        let p = map.external(k, u[k]);
        d[k] = if p != 0.0 { p.abs() } else { 1.0 };
        let scale = d[k] / map.derivative(k, u[k]);
        jac.column_mut(k).scale_mut(scale);
    }
    let a = jac.transpose() * &jac;
    let svd = a.svd(true, true);
    let s_max = svd.singular_values.max();
    let cutoff = opts.svd_cutoff * s_max;
    let singular = !(s_max > 0.0) || svd.singular_values.iter().any(|&s| s <= cutoff);
    let pinv = svd
        .pseudo_inverse(cutoff.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidFit(e.to_string()))?;
    let mut cov = DMatrix::from_fn(n, n, |i, j| d[i] * pinv[(i, j)] * d[j]);
    cov = 0.5 * (&cov + cov.transpose());

    let scale = if dof > 0 { chi2_reduced.sqrt() } else { 0.0 };
    let mut parameters = Vec::new();
    let mut k = 0;
    for (i, p) in map.base.iter().enumerate() {
        if map.free.get(k) == Some(&i) {
            parameters.push(FittedParameter {
                name: p.name.clone(),
                value: map.external(k, u[k]),
                uncertainty: cov[(k, k)].max(0.0).sqrt() * scale,
                fixed: false,
            });
            k += 1;
        } else {
            parameters.push(FittedParameter {
                name: p.name.clone(),
                value: p.value,
                uncertainty: 0.0,
                fixed: true,
            });
        }
    }

    let mut norms = Vec::new();
    let mut offset = 0;
    for (name, len) in obj.blocks() {
        let end = (offset + len).min(m);
        norms.push((name, r.rows(offset, end - offset).norm()));
        offset = end;
    }

    Ok(FitResult {
        parameters,
        covariance_names: (0..n).map(|k| map.param(k).name.clone()).collect(),
        covariance: (0..n).map(|i| (0..n).map(|j| cov[(i, j)]).collect()).collect(),
        chi2,
        chi2_reduced,
        dof,
        n_iterations,
        n_evaluations,
        converged,
        termination,
        covariance_singular: singular,
        weighted: obj.weighted(),
        series_residual_norms: norms,
    })
}
