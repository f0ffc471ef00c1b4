use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kind of measured curve; fixes the meaning and units of `x` and `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SeriesKind {
    /// x: K, y: MHz; needs `rf_power_w`.
    LinewidthVsT,
    /// x: W, y: MHz; needs `temperature_k`.
    LinewidthVsP,
    /// x: W, y: fraction; needs `temperature_k`.
    ContrastVsP,
    /// x: K, y: MHz.
    SplittingVsT,
    /// x: K, y: MHz.
    ZplVsT,
    /// x: K, y: dimensionless; uses `sign_branch`.
    VisibilityVsT,
}

impl SeriesKind {
    pub const ALL: [SeriesKind; 6] = [
        SeriesKind::LinewidthVsT,
        SeriesKind::LinewidthVsP,
        SeriesKind::ContrastVsP,
        SeriesKind::SplittingVsT,
        SeriesKind::ZplVsT,
        SeriesKind::VisibilityVsT,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SeriesKind::LinewidthVsT => "linewidth_vs_T",
            SeriesKind::LinewidthVsP => "linewidth_vs_P",
            SeriesKind::ContrastVsP => "contrast_vs_P",
            SeriesKind::SplittingVsT => "splitting_vs_T",
            SeriesKind::ZplVsT => "zpl_vs_T",
            SeriesKind::VisibilityVsT => "visibility_vs_T",
        }
    }

    /// CSV column names `(x, y, sigma)`.
    pub fn columns(self) -> [&'static str; 3] {
        match self {
            SeriesKind::LinewidthVsT => ["T_K", "linewidth_MHz", "sigma_MHz"],
            SeriesKind::LinewidthVsP => ["P_RF_W", "linewidth_MHz", "sigma_MHz"],
            SeriesKind::ContrastVsP => ["P_RF_W", "contrast", "sigma"],
            SeriesKind::SplittingVsT => ["T_K", "splitting_MHz", "sigma_MHz"],
            SeriesKind::ZplVsT => ["T_K", "zpl_width_MHz", "sigma_MHz"],
            SeriesKind::VisibilityVsT => ["T_K", "visibility", "sigma"],
        }
    }
}

impl From<SeriesKind> for String {
    fn from(k: SeriesKind) -> String {
        k.as_str().to_string()
    }
}

impl TryFrom<String> for SeriesKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl fmt::Display for SeriesKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeriesKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SeriesKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownKind(s.to_string()))
    }
}

/// Fixed experimental conditions of a series.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Conditions {
    pub temperature_k: Option<f64>,
    pub rf_power_w: Option<f64>,
    /// Recorded as metadata only.
    pub optical_power_mw: Option<f64>,
    pub sign_branch: Option<i8>,
}

/// One measured curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSeries {
    pub name: String,
    pub kind: SeriesKind,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Per-point 1σ; unit weights when absent.
    pub sigma: Option<Vec<f64>>,
    pub conditions: Conditions,
}

impl DataSeries {
    pub fn new(name: impl Into<String>, kind: SeriesKind, x: Vec<f64>, y: Vec<f64>, sigma: Option<Vec<f64>>, conditions: Conditions) -> Result<Self> {
        let s = Self {
            name: name.into(),
            kind,
            x,
            y,
            sigma,
            conditions,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSeries(format!("{}: {msg}", self.name)));
        if self.x.is_empty() {
            return bad("no points".into());
        }
        if self.x.len() != self.y.len() {
            return bad(format!("x has {} points but y has {}", self.x.len(), self.y.len()));
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return bad("non-finite value".into());
        }
        if self.x.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("x must be strictly increasing".into());
        }
        if let Some(s) = &self.sigma {
            if s.len() != self.x.len() {
                return bad(format!("sigma has {} points but x has {}", s.len(), self.x.len()));
            }
            if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return bad("sigma must be finite and > 0".into());
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(vec![sigma; self.x.len()]);
        self
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.sigma.as_ref().map_or(1.0, |s| 1.0 / s[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in SeriesKind::ALL {
            assert_eq!(k.as_str().parse::<SeriesKind>().unwrap(), k);
        }
        assert!(matches!("spin_echo".parse::<SeriesKind>(), Err(Error::UnknownKind(_))));
    }

    #[test]
    fn series_invariants() {
        let c = Conditions::default();
        let k = SeriesKind::ZplVsT;
        assert!(DataSeries::new("a", k, vec![1.0, 2.0], vec![1.0, 2.0], None, c).is_ok());
        assert!(DataSeries::new("a", k, vec![2.0, 1.0], vec![1.0, 2.0], None, c).is_err());
        assert!(DataSeries::new("a", k, vec![1.0, 2.0], vec![1.0], None, c).is_err());
        assert!(DataSeries::new("a", k, vec![1.0, 2.0], vec![1.0, 2.0], Some(vec![1.0, 0.0]), c).is_err());
        assert!(DataSeries::new("a", k, vec![], vec![], None, c).is_err());
    }
}
