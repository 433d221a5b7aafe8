//! Sampled `(x, y, σ)` curves shared by the synthesis, dynamics and fitting
//! modules, with CSV and JSON-sidecar export.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("x and y lengths differ ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("sigma length {sigma} does not match data length {n}")]
    SigmaLength { sigma: usize, n: usize },
    #[error("x axis is not strictly monotone at index {0}")]
    NotMonotone(usize),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("sigma must be positive, got {value} at index {index}")]
    BadSigma { index: usize, value: f64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Axis labels, units and free-form provenance entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub x_label: String,
    pub x_unit: String,
    pub y_label: String,
    pub y_unit: String,
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

impl SpectrumMeta {
    pub fn new(x_label: &str, x_unit: &str, y_label: &str, y_unit: &str) -> Self {
        SpectrumMeta {
            x_label: x_label.into(),
            x_unit: x_unit.into(),
            y_label: y_label.into(),
            y_unit: y_unit.into(),
            provenance: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.provenance.insert(key.into(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
    pub meta: SpectrumMeta,
}

impl Spectrum {
    pub fn new(x: Vec<f64>, y: Vec<f64>, sigma: Option<Vec<f64>>, meta: SpectrumMeta) -> Result<Self, SpectrumError> {
        let s = Spectrum { x, y, sigma, meta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SpectrumError> {
        if self.x.len() != self.y.len() {
            return Err(SpectrumError::LengthMismatch {
                x: self.x.len(),
                y: self.y.len(),
            });
        }
        if let Some(s) = &self.sigma {
            if s.len() != self.x.len() {
                return Err(SpectrumError::SigmaLength {
                    sigma: s.len(),
                    n: self.x.len(),
                });
            }
            if let Some((index, &value)) = s.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
                return Err(SpectrumError::BadSigma { index, value });
            }
        }
        if let Some(i) = (0..self.x.len()).find(|&i| !self.x[i].is_finite() || !self.y[i].is_finite()) {
            return Err(SpectrumError::NonFinite(i));
        }
        let increasing = self.x.windows(2).all(|w| w[1] > w[0]);
        let decreasing = self.x.windows(2).all(|w| w[1] < w[0]);
        if !(increasing || decreasing) {
            let i = self
                .x
                .windows(3)
                .position(|w| (w[1] - w[0]) * (w[2] - w[1]) <= 0.0)
                .map_or(1, |p| p + 1);
            return Err(SpectrumError::NotMonotone(i));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Per-point σ, or 1 everywhere when the spectrum carries none.
    pub fn sigma_or_unit(&self, i: usize) -> f64 {
        self.sigma.as_ref().map_or(1.0, |s| s[i])
    }

    /// Writes `x, y, sigma` columns with unit-annotated headers.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SpectrumError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            format!("{} [{}]", self.meta.x_label, self.meta.x_unit),
            format!("{} [{}]", self.meta.y_label, self.meta.y_unit),
            format!("sigma [{}]", self.meta.y_unit),
        ])?;
        for i in 0..self.len() {
            let sigma = self.sigma.as_ref().map_or(String::new(), |s| s[i].to_string());
            w.write_record([self.x[i].to_string(), self.y[i].to_string(), sigma])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the layout produced by [`Spectrum::write_csv`]: a header row and
    /// two or three numeric columns (`x, y[, sigma]`). An empty sigma cell
    /// means no per-point uncertainty.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self, SpectrumError> {
        let mut r = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(input);
        let headers = r.headers()?.clone();
        let (x_label, x_unit) = split_header(headers.get(0).unwrap_or("x"));
        let (y_label, y_unit) = split_header(headers.get(1).unwrap_or("y"));
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut sigma = Vec::new();
        let mut has_sigma = true;
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64, SpectrumError> {
                rec.get(k)
                    .and_then(|v| v.parse().ok())
                    .ok_or(SpectrumError::NonFinite(row))
            };
            x.push(num(0)?);
            y.push(num(1)?);
            match rec.get(2).filter(|v| !v.is_empty()) {
                Some(v) => sigma.push(v.parse().map_err(|_| SpectrumError::NonFinite(row))?),
                None => has_sigma = false,
            }
        }
        Spectrum::new(
            x,
            y,
            has_sigma.then_some(sigma),
            SpectrumMeta::new(&x_label, &x_unit, &y_label, &y_unit),
        )
    }

    /// JSON sidecar: axis units plus provenance (seed, config hash, ...).
    pub fn sidecar_json(&self) -> Result<String, SpectrumError> {
        Ok(serde_json::to_string_pretty(&self.meta)?)
    }
}

fn split_header(h: &str) -> (String, String) {
    match (h.find('['), h.rfind(']')) {
        (Some(a), Some(b)) if b > a => (h[..a].trim().to_string(), h[a + 1..b].trim().to_string()),
        _ => (h.trim().to_string(), String::new()),
    }
}
