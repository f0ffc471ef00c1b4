//! Event-driven Monte Carlo of a two-site telegraph frequency process.
//!
//! A spin resonance jumps between `+δ` (upper orbital site) and `−δ` (lower
//! site). Dwell times are drawn exactly from the exponential distributions
//! of the two sites, and within each dwell the phase advances exactly by
//! `2π(±δ)τ`, so there is no time-step bias. The trajectory average of
//! `e^{iφ(t)}` is the free-induction coherence whose Fourier transform is the
//! exchange-narrowed line.
//!
//! Trajectory `i` uses the ChaCha8 stream `i` of the configured seed, and
//! trajectories are accumulated in fixed batches that are combined in index
//! order, so the averaged coherence is bit-identical for any number of
//! worker threads.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::{beta_from_boltzmann, SpinParams, Temperature};
use crate::units::UnitConstants;

/// Site occupied at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialSite {
    /// Drawn from the stationary distribution `p_upper = w_up/(w_up + w_down)`.
    #[default]
    Stationary,
    Upper,
    Lower,
}

/// Telegraph process and sampling settings. Frequencies and rates in MHz,
/// times in µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelegraphConfig {
    /// Half the frequency jump; the sites sit at `±delta`.
    pub delta: f64,
    /// Upper → lower rate.
    pub w_down: f64,
    /// Lower → upper rate.
    pub w_up: f64,
    pub t_total: f64,
    pub n_trajectories: usize,
    pub seed: u64,
    pub n_time_samples: usize,
    pub initial: InitialSite,
}

pub const DEFAULT_TRAJECTORIES: usize = 100_000;
pub const DEFAULT_TIME_SAMPLES: usize = 1 << 10;
/// Decay constants covered by the default record length.
pub const DEFAULT_DECAY_SPAN: f64 = 6.0;
const MAX_BATCHES: usize = 64;
const PROPAGATOR_DECAY_SPAN: f64 = 12.0;
const PROPAGATOR_SAMPLES: usize = 1 << 13;

impl TelegraphConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return bad(format!("delta must be finite and > 0, got {}", self.delta));
        }
        if !(self.w_down.is_finite() && self.w_down >= 0.0) || !(self.w_up.is_finite() && self.w_up >= 0.0) {
            return bad(format!("rates must be finite and >= 0, got {} / {}", self.w_down, self.w_up));
        }
        if self.initial == InitialSite::Stationary && self.w_down + self.w_up == 0.0 {
            return bad("stationary start needs at least one nonzero rate".into());
        }
        if !(self.t_total.is_finite() && self.t_total > 0.0) {
            return bad(format!("t_total must be finite and > 0, got {}", self.t_total));
        }
        if self.n_trajectories == 0 {
            return bad("n_trajectories must be >= 1".into());
        }
        if self.n_time_samples < 2 {
            return bad("n_time_samples must be >= 2".into());
        }
        Ok(())
    }

    /// Stationary probability of the upper site.
    pub fn p_upper(&self) -> f64 {
        self.w_up / (self.w_up + self.w_down)
    }

    pub fn dt(&self) -> f64 {
        self.t_total / (self.n_time_samples - 1) as f64
    }

    fn n_batches(&self) -> usize {
        self.n_trajectories.min(MAX_BATCHES)
    }

    fn batch_range(&self, b: usize) -> std::ops::Range<usize> {
        let nb = self.n_batches();
        let n = self.n_trajectories;
        (b * n / nb)..((b + 1) * n / nb)
    }
}

/// Averaged coherence on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Coherence {
    pub dt: f64,
    pub g: Vec<Complex64>,
}

impl Coherence {
    pub fn from_fn(dt: f64, n: usize, f: impl Fn(f64) -> Complex64) -> Self {
        Self {
            dt,
            g: (0..n).map(|k| f(k as f64 * dt)).collect(),
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.g.len()).map(|k| k as f64 * self.dt).collect()
    }
}

/// Monte Carlo output: the averaged coherence plus per-batch partial sums
/// for resampling.
#[derive(Debug, Clone)]
pub struct CoherenceTrace {
    pub config: TelegraphConfig,
    pub coherence: Coherence,
    /// Sum of `e^{iφ}` over the trajectories of each batch.
    pub batch_sums: Vec<Vec<Complex64>>,
    pub batch_sizes: Vec<usize>,
    /// Per-batch mean fraction of `[0, t_total]` spent in the upper site.
    pub batch_upper_fraction: Vec<f64>,
}

impl CoherenceTrace {
    /// Trajectory-weighted fraction of time in the upper site, with the
    /// standard error estimated from the spread between batches.
    pub fn upper_occupancy(&self) -> (f64, f64) {
        let n: usize = self.batch_sizes.iter().sum();
        let mean = self
            .batch_upper_fraction
            .iter()
            .zip(&self.batch_sizes)
            .map(|(f, &s)| f * s as f64)
            .sum::<f64>()
            / n as f64;
        let nb = self.batch_sizes.len();
        if nb < 2 {
            return (mean, f64::NAN);
        }
        let var = self
            .batch_upper_fraction
            .iter()
            .zip(&self.batch_sizes)
            .map(|(f, &s)| s as f64 * (f - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        // Between-batch variance of the weighted mean.
        (mean, (var / (nb - 1) as f64).sqrt())
    }
}

struct Trajectory {
    upper_time: f64,
}

fn run_trajectory(c: &TelegraphConfig, index: usize, acc: &mut [Complex64], rot: [Complex64; 2]) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    rng.set_stream(index as u64);

    let mut upper = match c.initial {
        InitialSite::Upper => true,
        InitialSite::Lower => false,
        InitialSite::Stationary => rng.random::<f64>() < c.p_upper(),
    };
    let omega = 2.0 * PI * c.delta;
    let dt = c.dt();
    let n = acc.len();

    let mut t0 = 0.0;
    let mut phase = 0.0;
    let mut k = 0usize;
    let mut upper_time = 0.0;
    while k < n {
        let rate = if upper { c.w_down } else { c.w_up };
        let dwell = if rate > 0.0 {
            let e: f64 = rng.sample(Exp1);
            e / rate
        } else {
            f64::INFINITY
        };
        let t1 = t0 + dwell;
        let w = if upper { omega } else { -omega };
        if upper {
            upper_time += t1.min(c.t_total) - t0.min(c.t_total);
        }
        // Grid points with t0 <= k·dt < t1 see phase + w (k·dt − t0).
        let first = k;
        let mut z = Complex64::default();
        while k < n && (k as f64) * dt < t1 {
            if k == first {
                let (s, co) = (phase + w * ((k as f64) * dt - t0)).sin_cos();
                z = Complex64::new(co, s);
            } else {
                z *= rot[usize::from(!upper)];
            }
            acc[k] += z;
            k += 1;
        }
        phase += w * dwell;
        t0 = t1;
        upper = !upper;
    }
    Trajectory {
        upper_time: upper_time / c.t_total,
    }
}

/// Runs the Monte Carlo and returns the trajectory-averaged coherence.
/// `G(0) = 1` exactly.
pub fn simulate_coherence(c: &TelegraphConfig) -> Result<CoherenceTrace> {
    c.validate()?;
    let n = c.n_time_samples;
    let dt = c.dt();
    let omega = 2.0 * PI * c.delta;
    let rot = [
        Complex64::from_polar(1.0, omega * dt),
        Complex64::from_polar(1.0, -omega * dt),
    ];

    let batches: Vec<(Vec<Complex64>, usize, f64)> = (0..c.n_batches())
        .into_par_iter()
        .map(|b| {
            let range = c.batch_range(b);
            let size = range.len();
            let mut acc = vec![Complex64::default(); n];
            let mut upper = 0.0;
            for i in range {
                upper += run_trajectory(c, i, &mut acc, rot).upper_time;
            }
            (acc, size, upper / size as f64)
        })
        .collect();

    let mut total = vec![Complex64::default(); n];
    for (acc, _, _) in &batches {
        for (t, a) in total.iter_mut().zip(acc) {
            *t += a;
        }
    }
    let inv = 1.0 / c.n_trajectories as f64;
    for t in &mut total {
        *t *= inv;
    }
    total[0] = Complex64::new(1.0, 0.0);

    let mut batch_sums = Vec::with_capacity(batches.len());
    let mut batch_sizes = Vec::with_capacity(batches.len());
    let mut batch_upper_fraction = Vec::with_capacity(batches.len());
    for (acc, size, up) in batches {
        batch_sums.push(acc);
        batch_sizes.push(size);
        batch_upper_fraction.push(up);
    }
    Ok(CoherenceTrace {
        config: *c,
        coherence: Coherence { dt, g: total },
        batch_sums,
        batch_sizes,
        batch_upper_fraction,
    })
}

/// Analytic coherence of the two-site exchange model: `G(t) = 1ᵀ e^{Mt} c₀`
/// with `M = [[i2πδ − w↓, w↑], [w↓, −i2πδ − w↑]]` and `c₀ = (p_upper, 1 − p_upper)`.
pub fn two_site_coherence(delta: f64, w_down: f64, w_up: f64, p_upper: f64, t: f64) -> Complex64 {
    let i = Complex64::i();
    let omega = 2.0 * PI * delta;
    let m = [
        [i * omega - w_down, Complex64::new(w_up, 0.0)],
        [Complex64::new(w_down, 0.0), -i * omega - w_up],
    ];
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (tr * tr * 0.25 - det).sqrt();
    let l1 = tr * 0.5 + disc;
    let l2 = tr * 0.5 - disc;
    let c0 = [Complex64::new(p_upper, 0.0), Complex64::new(1.0 - p_upper, 0.0)];
    // e^{Mt} = a·I + b·M
    let (a, b) = if (l1 - l2).norm() > 1e-9 * (l1.norm() + l2.norm()).max(1e-300) {
        let e1 = (l1 * t).exp();
        let e2 = (l2 * t).exp();
        ((l1 * e2 - l2 * e1) / (l1 - l2), (e1 - e2) / (l1 - l2))
    } else {
        let l = tr * 0.5;
        let e = (l * t).exp();
        (e * (1.0 - l * t), e * t)
    };
    let mut g = Complex64::default();
    for r in 0..2 {
        for (col, &c) in c0.iter().enumerate() {
            let id = if r == col { a } else { Complex64::default() };
            g += (id + b * m[r][col]) * c;
        }
    }
    g
}

/// Spectrum computed from a coherence record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineshapeResult {
    /// MHz, ascending.
    pub freq_grid: Vec<f64>,
    /// Normalised so that `Σ spectrum·Δf = 1`.
    pub spectrum: Vec<f64>,
    pub fwhm: f64,
    pub peak_center: f64,
    pub stderr_fwhm: Option<f64>,
}

/// Options for [`lineshape_from_coherence`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineshapeOptions {
    /// The mean `|G|` over the last 5% of the record must lie below this.
    pub decay_threshold: f64,
    /// Largest frequency present in the signal; checked against Nyquist.
    pub max_frequency: Option<f64>,
    /// Zero-padding factor applied on top of the next power of two.
    pub padding: usize,
}

impl Default for LineshapeOptions {
    fn default() -> Self {
        Self {
            decay_threshold: 1e-3,
            max_frequency: None,
            padding: 16,
        }
    }
}

fn check_record(c: &Coherence, opts: &LineshapeOptions) -> Result<()> {
    let n = c.g.len();
    if n < 8 || !(c.dt > 0.0) {
        return Err(Error::Lineshape(format!("need >= 8 samples and dt > 0, got {n} / {}", c.dt)));
    }
    let nyquist = 0.5 / c.dt;
    if let Some(f) = opts.max_frequency {
        if f.abs() >= nyquist {
            return Err(Error::Aliasing {
                frequency: f.abs(),
                nyquist,
            });
        }
    }
    let tail_len = (n / 20).max(1);
    let tail = c.g[n - tail_len..].iter().map(|z| z.norm()).sum::<f64>() / tail_len as f64;
    let threshold = opts.decay_threshold * c.g[0].norm();
    if !(tail <= threshold) {
        return Err(Error::InsufficientDecay { tail, threshold });
    }
    Ok(())
}

/// Spectrum `S(f) = 2 Re ∫₀^T G(t) e^{−i2πft} dt` (trapezoidal weights,
/// zero-padded FFT) and its full width at half maximum by linear
/// interpolation. Small negative values from a noisy record are clipped and
/// the result renormalised to unit area.
pub fn lineshape_from_coherence(c: &Coherence, opts: &LineshapeOptions) -> Result<LineshapeResult> {
    check_record(c, opts)?;
    let mut planner = FftPlanner::new();
    let (freq_grid, spectrum) = spectrum_of(&c.g, c.dt, opts.padding, &mut planner);
    let (fwhm, peak_center) = fwhm_of(&freq_grid, &spectrum)?;
    Ok(LineshapeResult {
        freq_grid,
        spectrum,
        fwhm,
        peak_center,
        stderr_fwhm: None,
    })
}

fn spectrum_of(g: &[Complex64], dt: f64, padding: usize, planner: &mut FftPlanner<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = g.len();
    let n_fft = n.next_power_of_two() * padding.max(1);
    let mut buf = vec![Complex64::default(); n_fft];
    buf[..n].copy_from_slice(g);
    buf[0] *= 0.5;
    buf[n - 1] *= 0.5;
    planner.plan_fft_forward(n_fft).process(&mut buf);

    let df = 1.0 / (n_fft as f64 * dt);
    let half = n_fft / 2;
    let mut freq = Vec::with_capacity(n_fft);
    let mut spec = Vec::with_capacity(n_fft);
    // FFT bin j ↔ frequency j·df for j < n/2 and (j − n)·df otherwise.
    for j in (half..n_fft).chain(0..half) {
        let f = if j >= half { j as f64 - n_fft as f64 } else { j as f64 } * df;
        freq.push(f);
        spec.push((2.0 * dt * buf[j].re).max(0.0));
    }
    let area: f64 = spec.iter().sum::<f64>() * df;
    if area > 0.0 {
        for s in &mut spec {
            *s /= area;
        }
    }
    (freq, spec)
}

fn fwhm_of(freq: &[f64], spec: &[f64]) -> Result<(f64, f64)> {
    let (imax, &smax) = spec
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::Lineshape("empty spectrum".into()))?;
    if !(smax > 0.0) {
        return Err(Error::Lineshape("spectrum has no positive maximum".into()));
    }
    let half = 0.5 * smax;
    let cross = |j_in: usize, j_out: usize| {
        let (s0, s1) = (spec[j_in], spec[j_out]);
        freq[j_in] + (freq[j_out] - freq[j_in]) * (s0 - half) / (s0 - s1)
    };
    let left = (0..imax)
        .rev()
        .find(|&j| spec[j] < half)
        .map(|j| cross(j + 1, j))
        .ok_or_else(|| Error::Lineshape("half maximum not reached below the peak".into()))?;
    let right = (imax + 1..spec.len())
        .find(|&j| spec[j] < half)
        .map(|j| cross(j - 1, j))
        .ok_or_else(|| Error::Lineshape("half maximum not reached above the peak".into()))?;

    let mut center = freq[imax];
    if imax > 0 && imax + 1 < spec.len() {
        let (a, b, c) = (spec[imax - 1], spec[imax], spec[imax + 1]);
        let denom = a - 2.0 * b + c;
        if denom != 0.0 {
            center += 0.5 * (a - c) / denom * (freq[imax + 1] - freq[imax]);
        }
    }
    Ok((right - left, center))
}

/// Mean `|G|` expected from averaging `n` unit phasors with uncorrelated
/// phases, times a safety factor; the decay check for Monte Carlo records
/// cannot go below this floor.
pub fn noise_floor(n_trajectories: usize) -> f64 {
    4.0 / (n_trajectories as f64).sqrt()
}

/// Bootstrap over batches: resamples batches with replacement and returns
/// the FWHM of each resample.
pub fn bootstrap_fwhm(trace: &CoherenceTrace, opts: &LineshapeOptions, n_resamples: usize, seed: u64) -> Result<Vec<f64>> {
    let nb = trace.batch_sums.len();
    if nb < 2 {
        return Err(Error::InvalidConfig("bootstrap needs at least two batches".into()));
    }
    let n = trace.coherence.g.len();
    let dt = trace.coherence.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let draws: Vec<Vec<usize>> = (0..n_resamples)
        .map(|_| (0..nb).map(|_| rng.random_range(0..nb)).collect())
        .collect();
    draws
        .par_iter()
        .map(|pick| {
            let mut planner = FftPlanner::new();
            let mut g = vec![Complex64::default(); n];
            let mut count = 0usize;
            for &b in pick {
                count += trace.batch_sizes[b];
                for (gi, s) in g.iter_mut().zip(&trace.batch_sums[b]) {
                    *gi += s;
                }
            }
            let inv = 1.0 / count as f64;
            for gi in &mut g {
                *gi *= inv;
            }
            let (f, s) = spectrum_of(&g, dt, opts.padding, &mut planner);
            fwhm_of(&f, &s).map(|(w, _)| w)
        })
        .collect()
}

/// Lineshape of a Monte Carlo trace with a bootstrap standard error.
pub fn analyze_trace(trace: &CoherenceTrace, n_resamples: usize) -> Result<(LineshapeResult, Vec<f64>)> {
    let c = &trace.config;
    let opts = LineshapeOptions {
        decay_threshold: 1e-3_f64.max(noise_floor(c.n_trajectories)),
        max_frequency: Some(c.delta),
        ..LineshapeOptions::default()
    };
    let mut result = lineshape_from_coherence(&trace.coherence, &opts)?;
    let boots = if n_resamples > 0 {
        bootstrap_fwhm(trace, &opts, n_resamples, c.seed)?
    } else {
        Vec::new()
    };
    if boots.len() >= 2 {
        let mean = boots.iter().sum::<f64>() / boots.len() as f64;
        let var = boots.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (boots.len() - 1) as f64;
        result.stderr_fwhm = Some(var.sqrt());
    }
    Ok((result, boots))
}

/// Monte Carlo settings for [`validate_fast_exchange`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSettings {
    pub n_trajectories: usize,
    pub n_time_samples: usize,
    pub seed: u64,
    /// Record length in µs; `DEFAULT_DECAY_SPAN` expected decay times when absent.
    pub t_total: Option<f64>,
    pub n_bootstrap: usize,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            n_trajectories: DEFAULT_TRAJECTORIES,
            n_time_samples: DEFAULT_TIME_SAMPLES,
            seed: 0x5eed_0001,
            t_total: None,
            n_bootstrap: 200,
        }
    }
}

impl McSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_trajectories < 2 {
            return Err(crate::error::domain("n_trajectories", format!("must be >= 2, got {}", self.n_trajectories)));
        }
        if self.n_time_samples < 8 {
            return Err(crate::error::domain("n_time_samples", format!("must be >= 8, got {}", self.n_time_samples)));
        }
        if let Some(t) = self.t_total {
            if !(t.is_finite() && t > 0.0) {
                return Err(crate::error::domain("t_total", format!("must be finite and > 0, got {t}")));
            }
        }
        Ok(())
    }
}

/// Smallest `W↓/2δ` accepted by [`validate_fast_exchange`].
pub const FAST_REGIME_MIN_RATIO: f64 = 20.0;

/// Monte Carlo width compared with `β·2πδ²/W↓`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FastExchangeReport {
    /// Site detunings are `±delta` with `delta = D⊥` (bare, not `D⊥R`).
    pub site_convention: String,
    pub delta: f64,
    pub w_down: f64,
    pub w_up: f64,
    /// `ln(W↓/W↑)`.
    pub x: f64,
    pub beta: f64,
    pub fwhm_mc: f64,
    pub stderr_fwhm: f64,
    pub fwhm_formula: f64,
    /// FWHM of the analytic two-site propagator on the same grid.
    pub fwhm_propagator: f64,
    pub relative_error: f64,
    /// 95% bootstrap percentile interval of the relative error.
    pub relative_error_ci: (f64, f64),
    /// Measured line center; reported, not compared.
    pub peak_center_mc: f64,
    pub upper_occupancy: f64,
    pub upper_occupancy_stderr: f64,
    pub upper_occupancy_expected: f64,
    pub n_trajectories: usize,
    pub t_total: f64,
}

/// Checks the fast-exchange width `β·2πδ²/W↓` (with `β = 8u/(1+u)³`,
/// `u = W↑/W↓`) against the Monte Carlo line for sites at `±D⊥`.
///
/// Rates in MHz. Fails with [`Error::RegimeViolation`] unless
/// `W↓ ≥ 20·2D⊥` and `0 < W↑ ≤ W↓`.
pub fn validate_fast_exchange(p: &SpinParams, w_down: f64, w_up: f64, mc: &McSettings) -> Result<FastExchangeReport> {
    let delta = p.d_perp;
    if !(w_down >= FAST_REGIME_MIN_RATIO * 2.0 * delta) {
        return Err(Error::RegimeViolation(format!(
            "W↓ = {w_down} MHz is below {FAST_REGIME_MIN_RATIO}·2D⊥ = {} MHz",
            FAST_REGIME_MIN_RATIO * 2.0 * delta
        )));
    }
    if !(w_up > 0.0 && w_up <= w_down) {
        return Err(Error::RegimeViolation(format!("need 0 < W↑ <= W↓, got W↑ = {w_up} MHz")));
    }
    let u = w_up / w_down;
    let beta = beta_from_boltzmann(u);
    let fwhm_formula = beta * 2.0 * PI * delta * delta / w_down;
    let t_total = mc
        .t_total
        .unwrap_or(DEFAULT_DECAY_SPAN / (PI * fwhm_formula));
    let config = TelegraphConfig {
        delta,
        w_down,
        w_up,
        t_total,
        n_trajectories: mc.n_trajectories,
        seed: mc.seed,
        n_time_samples: mc.n_time_samples,
        initial: InitialSite::Stationary,
    };
    let trace = simulate_coherence(&config)?;
    let (line, boots) = analyze_trace(&trace, mc.n_bootstrap)?;

    let p_upper = config.p_upper();
    // The exact record is noise free, so it can run long enough to decay fully.
    let exact_span = t_total.max(PROPAGATOR_DECAY_SPAN / (PI * fwhm_formula));
    let exact_samples = PROPAGATOR_SAMPLES;
    let exact = Coherence::from_fn(exact_span / (exact_samples - 1) as f64, exact_samples, |t| {
        two_site_coherence(delta, w_down, w_up, p_upper, t)
    });
    let propagator = lineshape_from_coherence(
        &exact,
        &LineshapeOptions {
            max_frequency: Some(delta),
            ..LineshapeOptions::default()
        },
    )?;

    let relative_error = line.fwhm / fwhm_formula - 1.0;
    let relative_error_ci = percentile_interval(boots.iter().map(|w| w / fwhm_formula - 1.0).collect())
        .unwrap_or((relative_error, relative_error));
    let (occ, occ_err) = trace.upper_occupancy();
    Ok(FastExchangeReport {
        site_convention: "sites at ±D⊥ (bare transverse constant)".into(),
        delta,
        w_down,
        w_up,
        x: (w_down / w_up).ln(),
        beta,
        fwhm_mc: line.fwhm,
        stderr_fwhm: line.stderr_fwhm.unwrap_or(f64::NAN),
        fwhm_formula,
        fwhm_propagator: propagator.fwhm,
        relative_error,
        relative_error_ci,
        peak_center_mc: line.peak_center,
        upper_occupancy: occ,
        upper_occupancy_stderr: occ_err,
        upper_occupancy_expected: p_upper,
        n_trajectories: config.n_trajectories,
        t_total,
    })
}

/// [`validate_fast_exchange`] with `W↑ = W↓ e^{−hξ⊥/k_BT}`.
pub fn validate_at_temperature(
    units: &UnitConstants,
    p: &SpinParams,
    t: Temperature,
    w_down: f64,
    mc: &McSettings,
) -> Result<FastExchangeReport> {
    if t.is_zero() {
        return Err(Error::RegimeViolation("T = 0 has no thermal exchange".into()));
    }
    let x = t.thermal_ratio(units, p.xi_perp);
    validate_fast_exchange(p, w_down, w_down * (-x).exp(), mc)
}

fn percentile_interval(mut v: Vec<f64>) -> Option<(f64, f64)> {
    if v.len() < 2 {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let at = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
    Some((at(0.025), at(0.975)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(w_down: f64, w_up: f64, n: usize) -> TelegraphConfig {
        TelegraphConfig {
            delta: 1.0,
            w_down,
            w_up,
            t_total: 4.0,
            n_trajectories: n,
            seed: 7,
            n_time_samples: 256,
            initial: InitialSite::Stationary,
        }
    }

    #[test]
    fn frozen_upper_site_is_a_pure_rotation() {
        let c = TelegraphConfig {
            initial: InitialSite::Upper,
            ..config(0.0, 0.0, 3)
        };
        let tr = simulate_coherence(&c).unwrap();
        for (k, g) in tr.coherence.g.iter().enumerate() {
            let want = Complex64::from_polar(1.0, 2.0 * PI * k as f64 * c.dt());
            assert!((g - want).norm() < 1e-9, "k={k}");
        }
        assert_eq!(tr.upper_occupancy().0, 1.0);
    }

    #[test]
    fn propagator_limits() {
        assert_eq!(two_site_coherence(1.0, 3.0, 2.0, 0.4, 0.0), Complex64::new(1.0, 0.0));
        // no exchange: two independent rotations
        let g = two_site_coherence(1.0, 0.0, 0.0, 0.3, 0.2);
        let w = 2.0 * PI * 0.2;
        let want = 0.3 * Complex64::from_polar(1.0, w) + 0.7 * Complex64::from_polar(1.0, -w);
        assert!((g - want).norm() < 1e-12);
        // fast symmetric exchange: exp(−2π²δ²t/w)
        let g = two_site_coherence(1.0, 400.0, 400.0, 0.5, 3.0);
        let rate = 4.0 * PI * PI / (2.0 * 400.0);
        assert!((g.re / (-rate * 3.0).exp() - 1.0).abs() < 1e-2, "{g}");
    }

    #[test]
    fn monte_carlo_tracks_the_propagator() {
        let c = config(3.0, 2.0, 20_000);
        let tr = simulate_coherence(&c).unwrap();
        let p = c.p_upper();
        let tol = 5.0 / (c.n_trajectories as f64).sqrt();
        for (k, g) in tr.coherence.g.iter().enumerate() {
            let want = two_site_coherence(1.0, 3.0, 2.0, p, k as f64 * c.dt());
            assert!((g - want).norm() < tol, "k={k}: {g} vs {want}");
        }
        let (occ, err) = tr.upper_occupancy();
        assert!((occ - p).abs() < 5.0 * err, "{occ} ± {err}");
    }

    #[test]
    fn identical_for_any_worker_count() {
        let c = config(3.0, 2.0, 500);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| simulate_coherence(&c).unwrap());
        let b = three.install(|| simulate_coherence(&c).unwrap());
        assert_eq!(a.coherence, b.coherence);
        let other = simulate_coherence(&TelegraphConfig { seed: 8, ..c }).unwrap();
        assert_ne!(a.coherence, other.coherence);
    }

    #[test]
    fn lorentzian_width_from_exponential_decay() {
        let gamma = 2.0;
        let c = Coherence::from_fn(10.0 / 4095.0, 4096, |t| Complex64::new((-PI * gamma * t).exp(), 0.0));
        let r = lineshape_from_coherence(&c, &LineshapeOptions::default()).unwrap();
        assert!((r.fwhm / gamma - 1.0).abs() < 5e-3, "{}", r.fwhm);
        assert!(r.peak_center.abs() < 1e-3);
        let df = r.freq_grid[1] - r.freq_grid[0];
        assert!((r.spectrum.iter().sum::<f64>() * df - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_line_center() {
        let c = Coherence::from_fn(10.0 / 4095.0, 4096, |t| {
            Complex64::from_polar((-PI * 2.0 * t).exp(), 2.0 * PI * 5.0 * t)
        });
        let r = lineshape_from_coherence(&c, &LineshapeOptions::default()).unwrap();
        assert!((r.peak_center - 5.0).abs() < 0.01, "{}", r.peak_center);
    }

    #[test]
    fn record_checks() {
        let slow = Coherence::from_fn(0.01, 100, |t| Complex64::new((-0.1 * t).exp(), 0.0));
        assert!(matches!(
            lineshape_from_coherence(&slow, &LineshapeOptions::default()),
            Err(Error::InsufficientDecay { .. })
        ));
        let fast = Coherence::from_fn(0.01, 4096, |t| Complex64::new((-5.0 * t).exp(), 0.0));
        let opts = LineshapeOptions {
            max_frequency: Some(60.0),
            ..LineshapeOptions::default()
        };
        assert!(matches!(lineshape_from_coherence(&fast, &opts), Err(Error::Aliasing { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(config(0.0, 0.0, 10).validate().is_err());
        assert!(TelegraphConfig { delta: -1.0, ..config(1.0, 1.0, 10) }.validate().is_err());
        assert!(TelegraphConfig { n_trajectories: 0, ..config(1.0, 1.0, 10) }.validate().is_err());
        assert!(TelegraphConfig { t_total: f64::NAN, ..config(1.0, 1.0, 10) }.validate().is_err());
    }

    #[test]
    fn regime_guard() {
        let p = SpinParams::default();
        let mc = McSettings {
            n_trajectories: 10,
            ..McSettings::default()
        };
        let r = validate_fast_exchange(&p, 10.0 * 2.0 * p.d_perp, 100.0, &mc);
        assert!(matches!(r, Err(Error::RegimeViolation(_))));
        let w = 60.0 * 2.0 * p.d_perp;
        assert!(matches!(validate_fast_exchange(&p, w, 2.0 * w, &mc), Err(Error::RegimeViolation(_))));
    }

    #[test]
    fn small_run_agrees_with_formula() {
        let p = SpinParams::default();
        let w = 50.0 * 2.0 * p.d_perp;
        let mc = McSettings {
            n_trajectories: 20_000,
            n_bootstrap: 40,
            ..McSettings::default()
        };
        let r = validate_fast_exchange(&p, w, w, &mc).unwrap();
        assert!((r.fwhm_propagator / r.fwhm_formula - 1.0).abs() < 5e-3);
        assert!(r.relative_error.abs() < 5.0 * r.stderr_fwhm / r.fwhm_formula + 0.01, "{r:?}");
        assert!((r.upper_occupancy - 0.5).abs() < 0.01);
    }
}
