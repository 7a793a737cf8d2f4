//! Small lookup helpers shared by the model modules.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for treating two frequencies as the same table key.
pub const FREQ_EPS: f64 = 1e-9;

/// A sampled scalar function of one variable, kept sorted by `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct Table1d(Vec<(f64, f64)>);

impl Table1d {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyTable("no points".into()));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidParameter("table contains non-finite values".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| (w[1].0 - w[0].0).abs() < FREQ_EPS) {
            return Err(Error::InvalidParameter("duplicate table keys".into()));
        }
        Ok(Table1d(points))
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.0
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(|p| p.0)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.0[0].0, self.0[self.0.len() - 1].0)
    }

    /// Value stored at `x`, if tabulated.
    pub fn exact(&self, x: f64) -> Option<f64> {
        self.0.iter().find(|p| (p.0 - x).abs() < FREQ_EPS).map(|p| p.1)
    }

    /// Piecewise-linear interpolation, clamped to the end values.
    pub fn lerp(&self, x: f64) -> f64 {
        lerp_clamped(&self.0, x)
    }

    pub fn insert(&mut self, x: f64, y: f64) {
        match self.0.iter_mut().find(|p| (p.0 - x).abs() < FREQ_EPS) {
            Some(p) => p.1 = y,
            None => {
                self.0.push((x, y));
                self.0.sort_by(|a, b| a.0.total_cmp(&b.0));
            }
        }
    }
}

impl TryFrom<Vec<(f64, f64)>> for Table1d {
    type Error = Error;
    fn try_from(v: Vec<(f64, f64)>) -> Result<Self> {
        Table1d::new(v)
    }
}

impl From<Table1d> for Vec<(f64, f64)> {
    fn from(t: Table1d) -> Self {
        t.0
    }
}

/// Linear interpolation on points sorted by `x`, clamped outside the range.
pub(crate) fn lerp_clamped(points: &[(f64, f64)], x: f64) -> f64 {
    let (first, last) = (points[0], points[points.len() - 1]);
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let k = points.partition_point(|p| p.0 <= x);
    let (x0, y0) = points[k - 1];
    let (x1, y1) = points[k];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Reads a TOML or JSON file, chosen by extension (JSON when not `.toml`).
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, path.extension().is_some_and(|e| e == "toml"))
}

pub fn parse_config<T: DeserializeOwned>(text: &str, is_toml: bool) -> Result<T> {
    if is_toml {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    } else {
        Ok(serde_json::from_str(text)?)
    }
}
