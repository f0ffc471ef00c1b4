use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    None,
    /// Optimise `ln p`; keeps the parameter positive.
    Log,
}

/// One named fit parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
    #[serde(default)]
    pub lower_bound: Option<f64>,
    #[serde(default)]
    pub upper_bound: Option<f64>,
    #[serde(default)]
    pub fixed: bool,
    #[serde(default)]
    pub transform: Transform,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            lower_bound: None,
            upper_bound: None,
            fixed: false,
            transform: Transform::None,
        }
    }

    pub fn bounds(mut self, lower: Option<f64>, upper: Option<f64>) -> Self {
        self.lower_bound = lower;
        self.upper_bound = upper;
        self
    }

    pub fn fixed(mut self) -> Self {
        self.fixed = true;
        self
    }

    pub fn log(mut self) -> Self {
        self.transform = Transform::Log;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidFit(format!("parameter `{}`: {msg}", self.name)));
        if !self.value.is_finite() {
            return bad(format!("value must be finite, got {}", self.value));
        }
        if let (Some(lo), Some(hi)) = (self.lower_bound, self.upper_bound) {
            if !(lo < hi) {
                return bad(format!("lower bound {lo} must be below upper bound {hi}"));
            }
        }
        if self.lower_bound.is_some_and(|lo| self.value < lo) || self.upper_bound.is_some_and(|hi| self.value > hi) {
            return bad(format!("value {} lies outside its bounds", self.value));
        }
        if self.transform == Transform::Log && !self.fixed {
            if !(self.value > 0.0) {
                return bad("log transform needs a positive value".into());
            }
            if self.lower_bound.is_some_and(|lo| lo < 0.0) || self.upper_bound.is_some_and(|hi| hi <= 0.0) {
                return bad("log transform needs positive bounds".into());
            }
        }
        Ok(())
    }

    pub fn clamp(&self, v: f64) -> f64 {
        let v = self.lower_bound.map_or(v, |lo| v.max(lo));
        self.upper_bound.map_or(v, |hi| v.min(hi))
    }
}

/// Ordered collection of parameters, looked up by name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterSet {
    params: Vec<Parameter>,
}

impl ParameterSet {
    pub fn new(params: Vec<Parameter>) -> Result<Self> {
        let set = Self { params };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.params.iter().enumerate() {
            p.validate()?;
            if self.params[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::InvalidFit(format!("duplicate parameter `{}`", p.name)));
            }
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// Inserts or replaces by name.
    pub fn upsert(&mut self, p: Parameter) {
        match self.get_mut(&p.name) {
            Some(slot) => *slot = p,
            None => self.params.push(p),
        }
    }

    pub fn set_value(&mut self, name: &str, value: f64) -> Result<()> {
        let p = self
            .get_mut(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))?;
        p.value = value;
        Ok(())
    }

    pub fn set_fixed(&mut self, name: &str, fixed: bool) -> Result<()> {
        let p = self
            .get_mut(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))?;
        p.fixed = fixed;
        Ok(())
    }

    pub fn values(&self) -> ParamValues {
        ParamValues(self.params.iter().map(|p| (p.name.clone(), p.value)).collect())
    }

    pub fn free(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter().filter(|p| !p.fixed)
    }
}

/// Plain name → value view handed to models.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamValues(pub IndexMap<String, f64>);

impl ParamValues {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        Self(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    /// Value of `name`, or [`Error::MissingParameter`].
    pub fn require(&self, name: &str) -> Result<f64> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn insert(&mut self, name: &str, value: f64) {
        self.0.insert(name.to_string(), value);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_and_transform_validation() {
        assert!(Parameter::new("a", 1.0).bounds(Some(2.0), Some(1.0)).validate().is_err());
        assert!(Parameter::new("a", 3.0).bounds(Some(0.0), Some(1.0)).validate().is_err());
        assert!(Parameter::new("a", -1.0).log().validate().is_err());
        assert!(Parameter::new("a", 1.0).log().bounds(Some(-1.0), None).validate().is_err());
        assert!(Parameter::new("a", 1.0).log().bounds(Some(0.5), Some(2.0)).validate().is_ok());
        // a fixed parameter may sit at zero even if marked log
        assert!(Parameter::new("a", 0.0).log().fixed().validate().is_ok());
    }

    #[test]
    fn duplicate_names_rejected() {
        let r = ParameterSet::new(vec![Parameter::new("a", 1.0), Parameter::new("a", 2.0)]);
        assert!(r.is_err());
    }

    #[test]
    fn missing_value_is_named() {
        let v = ParamValues::from_pairs([("q", 0.83)]);
        assert_eq!(v.require("q").unwrap(), 0.83);
        assert_eq!(v.require("kappa"), Err(Error::MissingParameter("kappa".into())));
    }
}
