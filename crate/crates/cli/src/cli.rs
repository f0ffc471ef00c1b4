use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nv_phonon::fitting::SeriesKind;

#[derive(Debug, Parser)]
#[command(name = "nvphonon", version, about = "Electron-phonon rates, ODMR/ZPL observables and fits for the NV center")]
pub struct Cli {
    /// JSON run configuration; defaults apply to omitted sections.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Monte Carlo seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// W↓, W↑, W_A, Γ_MN and Q over a temperature grid.
    Rates {
        #[command(flatten)]
        grid: Grid,
        /// Evaluate W↓ and W↑ with ξ⊥ = 0.
        #[arg(long)]
        xi_zero: bool,
    },
    Odmr {
        #[command(subcommand)]
        command: OdmrCommand,
    },
    Zpl {
        #[command(subcommand)]
        command: ZplCommand,
    },
    Visibility {
        #[command(subcommand)]
        command: VisibilityCommand,
    },
    /// Motional-narrowing Monte Carlo.
    Mn {
        #[command(subcommand)]
        command: MnCommand,
    },
    /// One panel per series kind: configured model curves plus any supplied data.
    Report {
        #[arg(long = "series", value_name = "KIND:PATH", value_parser = parse_series_arg)]
        series: Vec<SeriesArg>,
        /// RF power for the linewidth/contrast model curves, W.
        #[arg(long, default_value_t = 0.44)]
        rf_power: f64,
        /// Temperature for the power-dependence curves, K.
        #[arg(long, default_value_t = 295.0)]
        temp: f64,
        #[arg(long)]
        xi_zero: bool,
    },
    /// Model data with Gaussian noise from the configured parameters, as a series CSV.
    Synth {
        #[arg(long, value_parser = parse_kind)]
        kind: SeriesKind,
        #[command(flatten)]
        sweep: Sweep,
        /// Noise standard deviation in the y column's units; 0 writes exact values.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Fixed temperature for power sweeps, K.
        #[arg(long)]
        temp: Option<f64>,
        /// Fixed RF power for temperature sweeps, W.
        #[arg(long)]
        rf_power: Option<f64>,
        /// Visibility sign branch, +1 or -1.
        #[arg(long, allow_hyphen_values = true)]
        sign: Option<i8>,
        #[arg(long)]
        name: Option<String>,
    },
}

/// Sweep for `synth`; `None` falls back to a per-kind default.
#[derive(Debug, Clone, Copy, Args)]
pub struct Sweep {
    #[arg(long)]
    pub xmin: Option<f64>,
    #[arg(long)]
    pub xmax: Option<f64>,
    #[arg(long)]
    pub xstep: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum OdmrCommand {
    /// Spectrum, linewidth, contrast and splitting at one condition plus curves vs T.
    Simulate {
        #[arg(long, default_value_t = 295.0)]
        temp: f64,
        #[arg(long, default_value_t = 0.44)]
        rf_power: f64,
        #[command(flatten)]
        grid: Grid,
    },
    /// Joint fit of the five ODMR parameters.
    Fit {
        #[arg(long = "series", value_name = "KIND:PATH", value_parser = parse_series_arg, required = true)]
        series: Vec<SeriesArg>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ZplCommand {
    /// ZPL width and its components over a temperature grid.
    Eval {
        #[command(flatten)]
        grid: Grid,
        /// Force ξ⊥ = 0 for the ZPL center.
        #[arg(long)]
        xi_zero: bool,
    },
    /// Fit of B_E, Ω_E, B_A, Ω_A, γ₀ (and a with visibility data).
    Fit {
        #[arg(long = "series", value_name = "KIND:PATH", value_parser = parse_series_arg, required = true)]
        series: Vec<SeriesArg>,
        #[arg(long, value_enum)]
        mode: Option<FitMode>,
        #[arg(long)]
        xi_zero: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum VisibilityCommand {
    /// Visibility for both sign branches over a temperature grid.
    Eval {
        #[command(flatten)]
        grid: Grid,
        #[arg(long)]
        xi_zero: bool,
    },
    /// Fit of the branching ratio a with the E-phonon parameters held fixed.
    Fit {
        #[arg(long = "series", value_name = "KIND:PATH", value_parser = parse_series_arg, required = true)]
        series: Vec<SeriesArg>,
        #[arg(long)]
        xi_zero: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum MnCommand {
    /// Monte Carlo width vs the fast-exchange formula at one temperature.
    Validate {
        #[arg(long, default_value_t = 295.0)]
        temp: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitMode {
    Joint,
    Sequential,
}

/// Temperature grid in K; `None` falls back to the command's default.
#[derive(Debug, Clone, Copy, Args)]
pub struct Grid {
    #[arg(long)]
    pub tmin: Option<f64>,
    #[arg(long)]
    pub tmax: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SeriesArg {
    pub kind: SeriesKind,
    pub path: PathBuf,
}

fn parse_kind(kind: &str) -> Result<SeriesKind, String> {
    kind.parse::<SeriesKind>().map_err(|_| {
        let known: Vec<&str> = SeriesKind::ALL.iter().map(|k| k.as_str()).collect();
        format!("unknown series kind `{kind}`; expected one of {}", known.join(", "))
    })
}

fn parse_series_arg(s: &str) -> Result<SeriesArg, String> {
    let (kind, path) = s.split_once(':').ok_or_else(|| format!("expected KIND:PATH, got `{s}`"))?;
    let kind = parse_kind(kind)?;
    if path.is_empty() {
        return Err("empty path".into());
    }
    Ok(SeriesArg {
        kind,
        path: PathBuf::from(path),
    })
}
