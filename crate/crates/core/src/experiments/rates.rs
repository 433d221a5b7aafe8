//! Tunneling rates against DC field: tabulated samples with shape-preserving
//! cubic interpolation, plus an illustrative activated-tunneling generator.

use serde::{Deserialize, Serialize};

use crate::units::{Field, Rate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateRow {
    pub field: Field,
    pub gamma_e: Rate,
    pub gamma_h: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTable {
    rows: Vec<RateRow>,
    slopes_e: Vec<f64>,
    slopes_h: Vec<f64>,
}

/// Why a table was rejected, with the offending row.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTableError {
    pub row: Option<usize>,
    pub message: String,
}

impl RateTable {
    pub fn new(rows: Vec<RateRow>) -> Result<Self, RateTableError> {
        let err = |row: Option<usize>, message: String| Err(RateTableError { row, message });
        if rows.len() < 2 {
            return err(None, format!("need at least 2 rows, got {}", rows.len()));
        }
        for (i, r) in rows.iter().enumerate() {
            if !(r.gamma_e.value() > 0.0 && r.gamma_h.value() > 0.0) {
                return err(Some(i), "rates must be positive".into());
            }
            if r.gamma_e <= r.gamma_h {
                return err(Some(i), format!("gamma_e {} must exceed gamma_h {}", r.gamma_e, r.gamma_h));
            }
            if i > 0 && r.field <= rows[i - 1].field {
                return err(Some(i), "field axis must be strictly increasing".into());
            }
        }
        let x: Vec<f64> = rows.iter().map(|r| r.field.value()).collect();
        let ge: Vec<f64> = rows.iter().map(|r| r.gamma_e.value()).collect();
        let gh: Vec<f64> = rows.iter().map(|r| r.gamma_h.value()).collect();
        Ok(RateTable {
            slopes_e: pchip_slopes(&x, &ge),
            slopes_h: pchip_slopes(&x, &gh),
            rows,
        })
    }

    pub fn rows(&self) -> &[RateRow] {
        &self.rows
    }

    pub fn field_range(&self) -> (Field, Field) {
        (self.rows[0].field, self.rows[self.rows.len() - 1].field)
    }

    /// `(Γe, Γh)` at `e`, or `None` outside the tabulated range.
    pub fn at(&self, e: Field) -> Option<(Rate, Rate)> {
        let (lo, hi) = self.field_range();
        if e < lo || e > hi {
            return None;
        }
        let x = e.value();
        let k = self.rows.partition_point(|r| r.field.value() <= x).clamp(1, self.rows.len() - 1) - 1;
        let (x0, x1) = (self.rows[k].field.value(), self.rows[k + 1].field.value());
        let eval = |y0: f64, y1: f64, d0: f64, d1: f64| hermite(x, x0, x1, y0, y1, d0, d1);
        let ge = eval(
            self.rows[k].gamma_e.value(),
            self.rows[k + 1].gamma_e.value(),
            self.slopes_e[k],
            self.slopes_e[k + 1],
        );
        let gh = eval(
            self.rows[k].gamma_h.value(),
            self.rows[k + 1].gamma_h.value(),
            self.slopes_h[k],
            self.slopes_h[k + 1],
        );
        Some((Rate::new(ge).ok()?, Rate::new(gh).ok()?))
    }
}

fn hermite(x: f64, x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let (t2, t3) = (t * t, t * t * t);
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * h * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * d1
}

/// Fritsch–Carlson derivatives: weighted harmonic means of neighboring
/// secants, zero at local extrema, one-sided three-point ends.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let s: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![s[0], s[0]];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if s[k - 1] * s[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / s[k - 1] + w2 / s[k]);
        }
    }
    let end = |h0: f64, h1: f64, s0: f64, s1: f64| {
        let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
        if d.signum() != s0.signum() {
            0.0
        } else if s0.signum() != s1.signum() && d.abs() > 3.0 * s0.abs() {
            3.0 * s0
        } else {
            d
        }
    };
    d[0] = end(h[0], h[1], s[0], s[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], s[n - 2], s[n - 3]);
    d
}

/// `Γ(E) = Γ(E_ref)·exp(b/E_ref − b/E)` for both carriers, sampled on a
/// uniform field grid. Illustrative only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticRates {
    pub e_ref: Field,
    pub gamma_e_ref: Rate,
    pub gamma_h_ref: Rate,
    /// Activation field of electron tunneling.
    pub b_e: Field,
    /// Activation field of hole tunneling.
    pub b_h: Field,
    pub from: Field,
    pub to: Field,
    pub points: usize,
}

impl Default for SyntheticRates {
    fn default() -> Self {
        let f = |v| Field::new(v).unwrap();
        let r = |v| Rate::new(v).unwrap();
        SyntheticRates {
            e_ref: f(72.0),
            gamma_e_ref: r(1.0 / 47.6),
            gamma_h_ref: r(1.0 / 5000.0),
            b_e: f(300.0),
            b_h: f(430.0),
            from: f(50.0),
            to: f(90.0),
            points: 17,
        }
    }
}

impl SyntheticRates {
    pub fn gamma(&self, e: Field) -> (f64, f64) {
        let (e0, e) = (self.e_ref.value(), e.value());
        let act = |b: Field| (b.value() / e0 - b.value() / e).exp();
        (self.gamma_e_ref.value() * act(self.b_e), self.gamma_h_ref.value() * act(self.b_h))
    }

    pub fn table(&self) -> Result<RateTable, RateTableError> {
        if self.points < 2 || !(self.to > self.from) || !(self.from.value() > 0.0) {
            return Err(RateTableError {
                row: None,
                message: "synthetic grid needs 0 < from < to and at least 2 points".into(),
            });
        }
        let step = (self.to.value() - self.from.value()) / (self.points - 1) as f64;
        let rows = (0..self.points)
            .map(|i| {
                let field = Field::new(self.from.value() + i as f64 * step).expect("finite field");
                let (ge, gh) = self.gamma(field);
                Ok(RateRow {
                    field,
                    gamma_e: Rate::new(ge).map_err(|e| RateTableError {
                        row: Some(i),
                        message: e.to_string(),
                    })?,
                    gamma_h: Rate::new(gh).map_err(|e| RateTableError {
                        row: Some(i),
                        message: e.to_string(),
                    })?,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        RateTable::new(rows)
    }
}
