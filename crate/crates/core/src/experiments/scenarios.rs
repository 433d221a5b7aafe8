use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Cell, ExperimentError, PlotSpec, RateRow, RateTable, RunOptions, ScenarioConfig, ScenarioOutput, Series, SyntheticRates, Table};
use crate::analytic::{
    fidelity_godden, fss_at_field, fss_at_intensity, fss_for_fidelity, preset, qubit_timescales, OsePreset,
    OseSignConvention, PresetTable, QuantumDotParams,
};
use crate::dynamics::{beat_signal, evolve, simulate_fidelity, EvolutionSpec};
use crate::fitting::{
    fit, DampedSine, FitModel, FitResult, Gaussian, GaussianFixedShape, Linear, Lorentzian, OseFss, Sin2,
};
use crate::spectra::{extract_fidelity_report, synth_two_color_spectrum, ProbePolarization, SpectrumConfig};
use crate::spectrum::{Spectrum, SpectrumMeta};
use crate::units::{field_to_bias, DiodeGeometry, Energy, Field, Intensity, Rate, Time, HBAR_UEV_PS};

/// Largest relative disagreement tolerated by `--verify`.
pub const VERIFY_TOLERANCE: f64 = 1e-6;
/// Integrator resolution `dt·max(δ, ΓX)` used for oracle checks.
const ORACLE_RESOLUTION: f64 = 0.01;

pub trait SweepQuantity: Copy {
    fn magnitude(self) -> f64;
    fn from_magnitude(v: f64) -> Option<Self>;
}

impl SweepQuantity for Energy {
    fn magnitude(self) -> f64 {
        self.value()
    }
    fn from_magnitude(v: f64) -> Option<Self> {
        Energy::new(v).ok()
    }
}

impl SweepQuantity for Field {
    fn magnitude(self) -> f64 {
        self.value()
    }
    fn from_magnitude(v: f64) -> Option<Self> {
        Field::new(v).ok()
    }
}

impl SweepQuantity for Intensity {
    fn magnitude(self) -> f64 {
        self.value()
    }
    fn from_magnitude(v: f64) -> Option<Self> {
        Intensity::new(v).ok()
    }
}

/// Evenly spaced sweep, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep<T> {
    pub from: T,
    pub to: T,
    pub points: usize,
}

impl<T: SweepQuantity> Sweep<T> {
    pub fn values(&self) -> Vec<T> {
        let (a, b) = (self.from.magnitude(), self.to.magnitude());
        if self.points == 1 {
            return vec![self.from];
        }
        (0..self.points)
            .map(|i| {
                let v = if i + 1 == self.points {
                    b
                } else {
                    a + (b - a) * i as f64 / (self.points - 1) as f64
                };
                T::from_magnitude(v).expect("endpoints validated")
            })
            .collect()
    }

    fn check(&self, pointer: &str) -> Result<(), ExperimentError> {
        if self.points == 0 {
            return Err(ExperimentError::config(format!("{pointer}/points"), "need at least 1 point"));
        }
        if self.points > 1 && !(self.to.magnitude() > self.from.magnitude()) {
            return Err(ExperimentError::config(format!("{pointer}/to"), "`to` must exceed `from`"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FssMarker {
    pub label: String,
    pub fss: Energy,
}

fn default_markers() -> Vec<FssMarker> {
    [("QD A", 2.01), ("QD C", 13.2), ("QD E", 31.2), ("Fig. S1 dot", 10.1)]
        .iter()
        .map(|(label, fss)| FssMarker {
            label: (*label).into(),
            fss: Energy::new(*fss).unwrap(),
        })
        .collect()
}

fn default_oracle_points() -> usize {
    5
}

fn default_gamma() -> Rate {
    Rate::new(0.021).unwrap()
}

fn default_resolution() -> f64 {
    0.02
}

/// Fidelity against FSS at fixed `ΓX − Γh`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig3Config {
    /// `ΓX − Γh`.
    pub gamma: Rate,
    pub sweep: Sweep<Energy>,
    #[serde(default = "default_markers")]
    pub markers: Vec<FssMarker>,
    #[serde(default = "default_oracle_points")]
    pub oracle_points: usize,
}

/// Where the field-dependent rates come from; exactly one must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSource {
    #[serde(default)]
    pub table: Option<Vec<RateRow>>,
    #[serde(default)]
    pub synthetic: Option<SyntheticRates>,
}

impl RateSource {
    fn build(&self) -> Result<RateTable, ExperimentError> {
        match (&self.table, &self.synthetic) {
            (Some(rows), None) => RateTable::new(rows.clone()).map_err(|e| {
                let pointer = e.row.map_or("/rates/table".to_string(), |r| format!("/rates/table/{r}"));
                ExperimentError::config(pointer, e.message)
            }),
            (None, Some(s)) => s.table().map_err(|e| ExperimentError::config("/rates/synthetic", e.message)),
            _ => Err(ExperimentError::config("/rates", "give exactly one of `table` or `synthetic`")),
        }
    }
}

/// Fidelity and qubit timescales across DC field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig4Config {
    pub dot: QuantumDotParams,
    pub rates: RateSource,
    pub sweep: Sweep<Field>,
    #[serde(default)]
    pub geometry: DiodeGeometry,
    #[serde(default = "default_oracle_points")]
    pub oracle_points: usize,
}

fn default_fss_presets() -> Vec<String> {
    vec![crate::analytic::PRESET_FSS_SCAN_H.into(), crate::analytic::PRESET_FSS_SCAN_V.into()]
}

fn default_fidelity_preset() -> String {
    crate::analytic::PRESET_FIDELITY_SCAN.into()
}

fn default_v_preset() -> String {
    crate::analytic::PRESET_FSS_SCAN_V.into()
}

/// Noisy synthetic FSS data refitted for `(a, k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OseFitConfig {
    pub intensities: Sweep<Intensity>,
    /// Additive noise as a fraction of the zero-intensity FSS.
    pub noise: f64,
}

/// FSS against CW intensity for Stark-tuning presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig5bConfig {
    pub sweep: Sweep<Intensity>,
    #[serde(default = "default_fss_presets")]
    pub presets: Vec<String>,
    #[serde(default)]
    pub convention: OseSignConvention,
    #[serde(default)]
    pub fit: Option<OseFitConfig>,
}

fn default_overlay_spectrum() -> SpectrumConfig {
    SpectrumConfig {
        probe_delay: Time::new(900.0).unwrap(),
        noise_sigma: 0.2,
        ..Default::default()
    }
}

fn default_error_bar() -> f64 {
    2.0
}

/// Synthetic "measurements" through the two-color pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlayConfig {
    pub intensities: Vec<Intensity>,
    #[serde(default = "default_overlay_spectrum")]
    pub spectrum: SpectrumConfig,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    /// Error-bar half-width in units of the reported σ.
    #[serde(default = "default_error_bar")]
    pub error_bar_sigmas: f64,
}

/// Fidelity against CW intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig5cConfig {
    pub sweep: Sweep<Intensity>,
    #[serde(default = "default_fidelity_preset")]
    pub preset: String,
    #[serde(default)]
    pub convention: OseSignConvention,
    #[serde(default)]
    pub dot: QuantumDotParams,
    #[serde(default)]
    pub overlay: Option<OverlayConfig>,
    #[serde(default = "default_oracle_points")]
    pub oracle_points: usize,
}

fn default_beat_noise() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeatSweep {
    #[serde(default = "default_v_preset")]
    pub preset: String,
    pub intensities: Sweep<Intensity>,
    #[serde(default)]
    pub convention: OseSignConvention,
}

/// Exciton-spin beats and their damped-sine fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeatsConfig {
    pub fss: Energy,
    /// `ΓX − Γh`.
    #[serde(default = "default_gamma")]
    pub gamma: Rate,
    #[serde(default)]
    pub dot: QuantumDotParams,
    /// Additive noise σ on the beat signal, population units.
    #[serde(default = "default_beat_noise")]
    pub noise: f64,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default)]
    pub window: BeatWindow,
    #[serde(default)]
    pub sweep: Option<BeatSweep>,
}

/// Sampling of the beat trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeatWindow {
    pub t_max: Time,
    pub points: usize,
}

impl Default for BeatWindow {
    fn default() -> Self {
        BeatWindow {
            t_max: Time::new(400.0).unwrap(),
            points: 200,
        }
    }
}

/// One co/cross spectrum pair and its fidelity extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumScenarioConfig {
    #[serde(default)]
    pub fss: Option<Energy>,
    /// Target fidelity; the FSS is chosen to produce it.
    #[serde(default)]
    pub fidelity: Option<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: Rate,
    #[serde(default)]
    pub dot: QuantumDotParams,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OseModelConfig {
    pub preset: String,
    #[serde(default)]
    pub convention: OseSignConvention,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedShapeConfig {
    pub x0: f64,
    pub fwhm: f64,
}

pub const FIT_MODELS: [&str; 7] = ["damped-sine", "lorentzian", "gaussian", "gaussian-fixed-shape", "sin2", "linear", "ose-fss"];

/// Fit of a model to a CSV spectrum on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitScenarioConfig {
    /// CSV path, relative to the config file.
    pub data: String,
    pub model: String,
    #[serde(default)]
    pub init: Option<Vec<f64>>,
    #[serde(default)]
    pub ose: Option<OseModelConfig>,
    #[serde(default)]
    pub fixed_shape: Option<FixedShapeConfig>,
}

fn check_oracle_points(n: usize) -> Result<(), ExperimentError> {
    if n < 5 {
        return Err(ExperimentError::config("/oracle_points", "at least 5 oracle points are required"));
    }
    Ok(())
}

fn check_preset(name: &str, pointer: &str, table: PresetTable) -> Result<&'static OsePreset, ExperimentError> {
    let p = preset(name).map_err(|e| ExperimentError::config(pointer, e))?;
    if p.table != table {
        return Err(ExperimentError::config(pointer, format!("preset `{name}` belongs to the {:?} table", p.table)));
    }
    Ok(p)
}

fn check_resolution(r: f64, pointer: &str) -> Result<(), ExperimentError> {
    if !(r > 0.0 && r <= crate::dynamics::STEP_GUARD) {
        return Err(ExperimentError::config(pointer, format!("must lie in (0, {}]", crate::dynamics::STEP_GUARD)));
    }
    Ok(())
}

fn check_dot(dot: &QuantumDotParams, pointer: &str) -> Result<(), ExperimentError> {
    dot.validate().map_err(|e| ExperimentError::config(pointer, e))
}

/// Cross-field checks that serde cannot express.
pub(crate) fn validate(cfg: &ScenarioConfig) -> Result<(), ExperimentError> {
    match cfg {
        ScenarioConfig::Fig3(c) => {
            c.sweep.check("/sweep")?;
            check_oracle_points(c.oracle_points)?;
            if !(c.gamma.value() > 0.0) {
                return Err(ExperimentError::config("/gamma", "must be positive"));
            }
        }
        ScenarioConfig::Fig4(c) => {
            check_dot(&c.dot, "/dot")?;
            c.sweep.check("/sweep")?;
            check_oracle_points(c.oracle_points)?;
            let table = c.rates.build()?;
            let (lo, hi) = table.field_range();
            if c.sweep.from < lo || c.sweep.to > hi {
                return Err(ExperimentError::config(
                    "/sweep",
                    format!("sweep [{}, {}] leaves the rate table range [{lo}, {hi}]", c.sweep.from, c.sweep.to),
                ));
            }
        }
        ScenarioConfig::Fig5b(c) => {
            c.sweep.check("/sweep")?;
            if c.presets.is_empty() {
                return Err(ExperimentError::config("/presets", "need at least one preset"));
            }
            for (i, name) in c.presets.iter().enumerate() {
                check_preset(name, &format!("/presets/{i}"), PresetTable::FssVsIntensity)?;
            }
            if let Some(f) = &c.fit {
                f.intensities.check("/fit/intensities")?;
                if f.intensities.points < 3 {
                    return Err(ExperimentError::config("/fit/intensities/points", "need at least 3 points"));
                }
                if !(f.noise > 0.0 && f.noise.is_finite()) {
                    return Err(ExperimentError::config("/fit/noise", "must be positive"));
                }
            }
        }
        ScenarioConfig::Fig5c(c) => {
            c.sweep.check("/sweep")?;
            check_oracle_points(c.oracle_points)?;
            check_preset(&c.preset, "/preset", PresetTable::FidelityVsIntensity)?;
            if let Some(o) = &c.overlay {
                o.spectrum.validate().map_err(|e| ExperimentError::config("/overlay/spectrum", e))?;
                check_resolution(o.resolution, "/overlay/resolution")?;
                if !(o.error_bar_sigmas > 0.0) {
                    return Err(ExperimentError::config("/overlay/error_bar_sigmas", "must be positive"));
                }
            }
        }
        ScenarioConfig::Beats(c) => {
            check_dot(&c.dot, "/dot")?;
            if c.window.points < 10 {
                return Err(ExperimentError::config("/window/points", "need at least 10 points"));
            }
            if !(c.window.t_max.value() > 0.0) {
                return Err(ExperimentError::config("/window/t_max", "must be positive"));
            }
            check_resolution(c.resolution, "/resolution")?;
            if !(c.noise >= 0.0 && c.noise.is_finite()) {
                return Err(ExperimentError::config("/noise", "must be non-negative"));
            }
            if !(c.gamma.value() > c.dot.gamma_r.value()) {
                return Err(ExperimentError::config("/gamma", "must exceed the radiative rate"));
            }
            if let Some(s) = &c.sweep {
                s.intensities.check("/sweep/intensities")?;
                check_preset(&s.preset, "/sweep/preset", PresetTable::FssVsIntensity)?;
            }
        }
        ScenarioConfig::Spectrum(c) => {
            check_dot(&c.dot, "/dot")?;
            match (c.fss, c.fidelity) {
                (Some(_), None) => {}
                (None, Some(f)) if f > 0.5 && f <= 1.0 => {}
                (None, Some(_)) => return Err(ExperimentError::config("/fidelity", "must lie in (0.5, 1]")),
                _ => return Err(ExperimentError::config("/fss", "give exactly one of `fss` or `fidelity`")),
            }
            if !(c.gamma.value() > c.dot.gamma_r.value()) {
                return Err(ExperimentError::config("/gamma", "must exceed the radiative rate"));
            }
            c.spectrum.validate().map_err(|e| ExperimentError::config("/spectrum", e))?;
            check_resolution(c.resolution, "/resolution")?;
        }
        ScenarioConfig::Fit(c) => {
            if !FIT_MODELS.contains(&c.model.as_str()) {
                return Err(ExperimentError::config(
                    "/model",
                    format!("unknown model `{}` (expected one of {})", c.model, FIT_MODELS.join(", ")),
                ));
            }
            if c.model == "ose-fss" {
                let o = c.ose.as_ref().ok_or_else(|| ExperimentError::config("/ose", "required for model `ose-fss`"))?;
                check_preset(&o.preset, "/ose/preset", PresetTable::FssVsIntensity)?;
            }
            if c.model == "gaussian-fixed-shape" && c.fixed_shape.is_none() {
                return Err(ExperimentError::config("/fixed_shape", "required for model `gaussian-fixed-shape`"));
            }
        }
    }
    Ok(())
}

pub(crate) fn run(cfg: &ScenarioConfig, seed: Option<u64>, opts: &RunOptions) -> Result<ScenarioOutput, ExperimentError> {
    validate(cfg)?;
    match cfg {
        ScenarioConfig::Fig3(c) => fig3(c, opts),
        ScenarioConfig::Fig4(c) => fig4(c, opts),
        ScenarioConfig::Fig5b(c) => fig5b(c, seed.unwrap_or(0)),
        ScenarioConfig::Fig5c(c) => fig5c(c, seed.unwrap_or(0), opts),
        ScenarioConfig::Beats(c) => beats(c, seed.unwrap_or(0)),
        ScenarioConfig::Spectrum(c) => spectrum(c, seed),
        ScenarioConfig::Fit(c) => fit_file(c, opts),
    }
}

fn numerical<E: ToString>(e: E) -> ExperimentError {
    ExperimentError::numerical(e)
}

/// Evenly spread indices, ends included.
fn spread(n: usize, k: usize) -> Vec<usize> {
    if n <= k {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..k).map(|i| (i * (n - 1) + (k - 1) / 2) / (k - 1)).collect();
    idx.dedup();
    idx
}

/// One closed-form point re-derived by the integrator.
#[derive(Clone, Copy)]
struct OracleCase {
    x: f64,
    dot: QuantumDotParams,
    fss: Energy,
    closed: f64,
}

fn verify(cases: Vec<OracleCase>, x_name: &str, x_unit: &str) -> Result<(Table, Value), ExperimentError> {
    let results: Vec<Result<f64, ExperimentError>> = cases
        .par_iter()
        .map(|c| simulate_fidelity(&c.dot, c.fss, ORACLE_RESOLUTION).map(|f| f.f).map_err(numerical))
        .collect();
    let mut table = Table::new("oracle", &[(x_name, x_unit), ("closed_form", "1"), ("dynamics", "1"), ("rel_diff", "1")]);
    let mut worst = 0.0f64;
    for (c, r) in cases.iter().zip(results) {
        let sim = r?;
        let rel = ((sim - c.closed) / c.closed).abs();
        worst = worst.max(rel);
        table.push(vec![c.x.into(), c.closed.into(), sim.into(), rel.into()]);
    }
    if worst > VERIFY_TOLERANCE {
        return Err(ExperimentError::Numerical(format!(
            "oracle check failed: max relative difference {worst:e} exceeds {VERIFY_TOLERANCE:e}"
        )));
    }
    let report = json!({"points": cases.len(), "max_rel_diff": worst, "tolerance": VERIFY_TOLERANCE, "passed": true});
    Ok((table, report))
}

fn fig3(c: &Fig3Config, opts: &RunOptions) -> Result<ScenarioOutput, ExperimentError> {
    let f = |fss: Energy| fidelity_godden(fss, c.gamma, Rate::ZERO).map(|v| v.f).map_err(numerical);
    let sweep = c.sweep.values();
    let mut curve = Table::new("curve", &[("fss", "ueV"), ("fidelity", "1")]);
    for &fss in &sweep {
        curve.push(vec![fss.value().into(), f(fss)?.into()]);
    }
    let mut markers = Table::new("markers", &[("label", "text"), ("fss", "ueV"), ("fidelity", "1")]);
    let mut marker_report = Vec::new();
    for m in &c.markers {
        let v = f(m.fss)?;
        markers.push(vec![m.label.as_str().into(), m.fss.value().into(), v.into()]);
        marker_report.push(json!({"label": m.label, "fss_ueV": m.fss.value(), "fidelity": v}));
    }
    let mut plot = PlotSpec {
        title: format!("Fidelity vs fine-structure splitting (ΓX − Γh = {} ps⁻¹)", c.gamma.value()),
        x_label: "ħδ_FS (µeV)".into(),
        y_label: "Fidelity".into(),
        series: vec![
            Series::line("Eq. model", curve.numbers("fss").unwrap(), curve.numbers("fidelity").unwrap()),
            Series::markers("dots", markers.numbers("fss").unwrap(), markers.numbers("fidelity").unwrap()),
        ],
    };
    let mut tables = vec![curve, markers];
    let mut report = json!({"gamma_per_ps": c.gamma.value(), "markers": marker_report});
    if opts.verify {
        let dot = QuantumDotParams {
            gamma_e: c.gamma,
            gamma_h: Rate::ZERO,
            gamma_r: Rate::ZERO,
            ..Default::default()
        };
        let cases = spread(sweep.len(), c.oracle_points)
            .into_iter()
            .map(|i| {
                Ok(OracleCase {
                    x: sweep[i].value(),
                    dot,
                    fss: sweep[i],
                    closed: f(sweep[i])?,
                })
            })
            .collect::<Result<Vec<_>, ExperimentError>>()?;
        let (table, r) = verify(cases, "fss", "ueV")?;
        plot.series.push(Series::markers("dynamics oracle", table.numbers("fss").unwrap(), table.numbers("dynamics").unwrap()));
        tables.push(table);
        report["verify"] = r;
    }
    Ok(ScenarioOutput {
        scenario: "fig3",
        tables,
        plot,
        report,
        seed: 0,
        convention: None,
    })
}

fn fig4(c: &Fig4Config, opts: &RunOptions) -> Result<ScenarioOutput, ExperimentError> {
    let table = c.rates.build()?;
    let mut out = Table::new(
        "fidelity_vs_field",
        &[
            ("field", "kV/cm"),
            ("bias", "V"),
            ("fss", "ueV"),
            ("fss_clamped", "bool"),
            ("gamma_e", "1/ps"),
            ("gamma_h", "1/ps"),
            ("init_time", "ps"),
            ("hole_lifetime", "ps"),
            ("fidelity", "1"),
            ("two_th_gt_t2star", "bool"),
        ],
    );
    let mut cases = Vec::new();
    let sweep = c.sweep.values();
    for &e in &sweep {
        let (gamma_e, gamma_h) = table
            .at(e)
            .ok_or_else(|| ExperimentError::config("/sweep", format!("field {e} outside the rate table")))?;
        let dot = QuantumDotParams { gamma_e, gamma_h, ..c.dot };
        let fss = fss_at_field(&dot, e);
        let f = fidelity_godden(fss.fss, dot.gamma_x(), gamma_h).map_err(numerical)?.f;
        let ts = qubit_timescales(&dot).map_err(numerical)?;
        out.push(vec![
            e.value().into(),
            field_to_bias(e, &c.geometry).value().into(),
            fss.fss.value().into(),
            fss.clamped.into(),
            gamma_e.value().into(),
            gamma_h.value().into(),
            ts.init_time.value().into(),
            ts.hole_lifetime.value().into(),
            f.into(),
            ts.meets_2th_gt_t2star.into(),
        ]);
        cases.push(OracleCase {
            x: e.value(),
            dot,
            fss: fss.fss,
            closed: f,
        });
    }
    let mut rates = Table::new("rate_table", &[("field", "kV/cm"), ("gamma_e", "1/ps"), ("gamma_h", "1/ps")]);
    for r in table.rows() {
        rates.push(vec![r.field.value().into(), r.gamma_e.value().into(), r.gamma_h.value().into()]);
    }
    let plot = PlotSpec {
        title: "Fidelity vs initialization time".into(),
        x_label: "1/Γe (ps)".into(),
        y_label: "Fidelity".into(),
        series: vec![Series::line("model", out.numbers("init_time").unwrap(), out.numbers("fidelity").unwrap())],
    };
    let clamped = out.numbers("fss_clamped").unwrap().iter().filter(|v| **v > 0.0).count();
    let mut report = json!({
        "rate_source": if c.rates.table.is_some() { "table" } else { "synthetic (illustrative)" },
        "clamped_points": clamped,
    });
    let mut tables = vec![out, rates];
    if opts.verify {
        let picked: Vec<OracleCase> = spread(cases.len(), c.oracle_points)
            .into_iter()
            .map(|i| OracleCase { ..cases[i] })
            .collect();
        let (t, r) = verify(picked, "field", "kV/cm")?;
        tables.push(t);
        report["verify"] = r;
    }
    Ok(ScenarioOutput {
        scenario: "fig4",
        tables,
        plot,
        report,
        seed: 0,
        convention: None,
    })
}

fn kw(i: Intensity) -> f64 {
    i.kw_per_cm2()
}

fn ose_model(p: &OsePreset, convention: OseSignConvention) -> OseFss {
    OseFss {
        polarization: p.polarization,
        convention,
        fss_zero: p.fss_zero.value(),
        delta_cw_zero: p.delta_cw_zero.value(),
    }
}

fn fig5b(c: &Fig5bConfig, seed: u64) -> Result<ScenarioOutput, ExperimentError> {
    let presets: Vec<&OsePreset> = c
        .presets
        .iter()
        .map(|n| preset(n).map_err(|e| ExperimentError::config("/presets", e)))
        .collect::<Result<_, _>>()?;
    let mut columns: Vec<(String, String)> = vec![("intensity".into(), "kW/cm2".into())];
    for name in &c.presets {
        columns.push((format!("fss_{name}"), "ueV".into()));
        columns.push((format!("clamped_{name}"), "bool".into()));
    }
    let cols: Vec<(&str, &str)> = columns.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let mut table = Table::new("fss_vs_intensity", &cols);
    let sweep = c.sweep.values();
    for &i in &sweep {
        let mut row: Vec<Cell> = vec![kw(i).into()];
        for p in &presets {
            let dot = p.dot(QuantumDotParams::default()).map_err(numerical)?;
            let drive = p.drive(i);
            let v = fss_at_intensity(&dot, &crate::analytic::CwDriveConfig { convention: c.convention, ..drive })
                .map_err(numerical)?;
            row.push(v.fss.value().into());
            row.push(v.clamped.into());
        }
        table.push(row);
    }
    let x = table.numbers("intensity").unwrap();
    let mut plot = PlotSpec {
        title: "FSS vs CW laser intensity".into(),
        x_label: "Intensity (kW/cm²)".into(),
        y_label: "ħδ_FS (µeV)".into(),
        series: c
            .presets
            .iter()
            .zip(&presets)
            .map(|(name, p)| Series::line(&format!("{:?} ({name})", p.polarization), x.clone(), table.numbers(&format!("fss_{name}")).unwrap()))
            .collect(),
    };
    let mut tables = vec![table];
    let mut report = json!({"convention": c.convention.id()});
    if let Some(f) = &c.fit {
        let mut fits = Vec::new();
        for (k, (name, p)) in c.presets.iter().zip(&presets).enumerate() {
            let (data, result) = ose_round_trip(p, c.convention, &f.intensities.values(), f.noise, derive_seed(seed, k as u64))?;
            let model = ose_model(p, c.convention);
            let mut t = Table::new(&format!("fit_{name}"), &[("intensity", "kW/cm2"), ("fss", "ueV"), ("sigma", "ueV"), ("fit", "ueV")]);
            let sig = data.sigma.clone().unwrap_or_default();
            for i in 0..data.len() {
                t.push(vec![data.x[i].into(), data.y[i].into(), sig[i].into(), model.eval(data.x[i], &result.values()).into()]);
            }
            let mut s = Series::markers(&format!("synthetic {name}"), data.x.clone(), data.y.clone());
            s.yerr = data.sigma.clone();
            plot.series.push(s);
            let rel_a = (result.value("a") - p.a_dipole.value()) / p.a_dipole.value();
            let rel_k = (result.value("k") - p.k_screen.value()) / p.k_screen.value();
            fits.push(json!({
                "preset": name,
                "fit": serde_json::to_value(&result).unwrap_or(Value::Null),
                "injected": {"a": p.a_dipole.value(), "k": p.k_screen.value()},
                "relative_error": {"a": rel_a, "k": rel_k},
            }));
            tables.push(t);
        }
        report["fits"] = Value::Array(fits);
    }
    Ok(ScenarioOutput {
        scenario: "fig5b",
        tables,
        plot,
        report,
        seed,
        convention: Some(c.convention.id()),
    })
}

/// Independent per-item seed derived from a run seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03)) ^ index
}

/// Samples a preset's FSS curve with additive noise `noise·fss_zero` and
/// refits `(a, k)`.
pub fn ose_round_trip(
    p: &OsePreset,
    convention: OseSignConvention,
    intensities: &[Intensity],
    noise: f64,
    seed: u64,
) -> Result<(Spectrum, FitResult), ExperimentError> {
    let model = ose_model(p, convention);
    let truth = [p.a_dipole.value(), p.k_screen.value()];
    let sigma = noise * p.fss_zero.value();
    let dist = Normal::new(0.0, sigma).map_err(numerical)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = intensities.iter().map(|&i| kw(i)).collect();
    let y: Vec<f64> = x.iter().map(|&i| model.eval(i, &truth) + dist.sample(&mut rng)).collect();
    let data = Spectrum::new(
        x.clone(),
        y,
        Some(vec![sigma; x.len()]),
        SpectrumMeta::new("intensity", "kW/cm2", "fss", "ueV").with("rng_seed", seed),
    )
    .map_err(numerical)?;
    let result = fit(&model, &data, None).map_err(numerical)?;
    Ok((data, result))
}

fn fig5c(c: &Fig5cConfig, seed: u64, opts: &RunOptions) -> Result<ScenarioOutput, ExperimentError> {
    let p = preset(&c.preset).map_err(|e| ExperimentError::config("/preset", e))?;
    let dot = p.dot(c.dot).map_err(|e| ExperimentError::config("/dot", e))?;
    let drive_at = |i: Intensity| crate::analytic::CwDriveConfig {
        convention: c.convention,
        ..p.drive(i)
    };
    let model_at = |i: Intensity| -> Result<(Energy, f64), ExperimentError> {
        let fss = fss_at_intensity(&dot, &drive_at(i)).map_err(numerical)?;
        let f = fidelity_godden(fss.fss, dot.gamma_x(), dot.gamma_h).map_err(numerical)?.f;
        Ok((fss.fss, f))
    };
    let mut curve = Table::new("fidelity_vs_intensity", &[("intensity", "kW/cm2"), ("fss", "ueV"), ("fidelity", "1")]);
    let sweep = c.sweep.values();
    let mut cases = Vec::new();
    for &i in &sweep {
        let (fss, f) = model_at(i)?;
        curve.push(vec![kw(i).into(), fss.value().into(), f.into()]);
        cases.push(OracleCase {
            x: kw(i),
            dot,
            fss,
            closed: f,
        });
    }
    let mut plot = PlotSpec {
        title: "Fidelity vs CW laser intensity".into(),
        x_label: "Intensity (kW/cm²)".into(),
        y_label: "Fidelity".into(),
        series: vec![Series::line("model", curve.numbers("intensity").unwrap(), curve.numbers("fidelity").unwrap())],
    };
    let mut tables = vec![curve];
    let mut report = json!({"preset": c.preset, "convention": c.convention.id()});
    if let Some(o) = &c.overlay {
        let rows: Vec<Result<Vec<Cell>, ExperimentError>> = o
            .intensities
            .par_iter()
            .enumerate()
            .map(|(j, &i)| {
                let (fss, f_model) = model_at(i)?;
                let mut spec = EvolutionSpec::settled(dot, fss, o.resolution).map_err(numerical)?;
                if spec.t_max < o.spectrum.probe_delay {
                    spec.t_max = Time::new(o.spectrum.probe_delay.value() + spec.dt.value()).map_err(numerical)?;
                }
                let traj = evolve(&spec).map_err(numerical)?;
                let cfg = SpectrumConfig {
                    rng_seed: derive_seed(seed, j as u64),
                    ..o.spectrum
                };
                let co = synth_two_color_spectrum(&traj, &cfg, ProbePolarization::Co).map_err(numerical)?;
                let cross = synth_two_color_spectrum(&traj, &cfg, ProbePolarization::Cross).map_err(numerical)?;
                let r = extract_fidelity_report(&co, &cross, &cfg).map_err(numerical)?;
                let sigma = r.fidelity.uncertainty.unwrap_or(f64::NAN);
                let within = if r.fidelity.is_lower_bound {
                    r.fidelity.f <= f_model
                } else {
                    (r.fidelity.f - f_model).abs() <= o.error_bar_sigmas * sigma
                };
                Ok(vec![
                    kw(i).into(),
                    f_model.into(),
                    r.fidelity.f.into(),
                    sigma.into(),
                    r.fidelity.is_lower_bound.into(),
                    within.into(),
                ])
            })
            .collect();
        let mut t = Table::new(
            "overlay",
            &[
                ("intensity", "kW/cm2"),
                ("fidelity_model", "1"),
                ("fidelity_measured", "1"),
                ("sigma", "1"),
                ("is_lower_bound", "bool"),
                ("within_error_bar", "bool"),
            ],
        );
        for r in rows {
            t.push(r?);
        }
        let within = t.numbers("within_error_bar").unwrap();
        let frac = within.iter().sum::<f64>() / within.len().max(1) as f64;
        let mut s = Series::markers("synthetic measurement", t.numbers("intensity").unwrap(), t.numbers("fidelity_measured").unwrap());
        s.yerr = Some(t.numbers("sigma").unwrap().iter().map(|v| v * o.error_bar_sigmas).collect());
        plot.series.push(s);
        report["overlay"] = json!({
            "points": within.len(),
            "fraction_within_error_bars": frac,
            "error_bar_sigmas": o.error_bar_sigmas,
            "probe_delay_ps": o.spectrum.probe_delay.value(),
        });
        tables.push(t);
    }
    if opts.verify {
        let picked: Vec<OracleCase> = spread(cases.len(), c.oracle_points).into_iter().map(|i| cases[i]).collect();
        let (t, r) = verify(picked, "intensity", "kW/cm2")?;
        tables.push(t);
        report["verify"] = r;
    }
    Ok(ScenarioOutput {
        scenario: "fig5c",
        tables,
        plot,
        report,
        seed,
        convention: Some(c.convention.id()),
    })
}

/// Outcome of fitting a damped sine to a simulated beat signal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeatFit {
    pub fss_injected: f64,
    pub gamma_x_injected: f64,
    /// `None` when the frequency is not identifiable from the data.
    pub fss_fit: Option<f64>,
    pub fss_sigma: Option<f64>,
    pub gamma_x_fit: Option<f64>,
    pub gamma_x_sigma: Option<f64>,
    pub identifiable: bool,
    pub note: Option<String>,
}

/// Simulates the beats for `dot` at `fss`, adds white noise of σ = `noise`
/// and fits `A·e^{−γt}cos(δt + φ) + c`.
pub fn beat_round_trip(
    dot: &QuantumDotParams,
    fss: Energy,
    window: &BeatWindow,
    noise: f64,
    resolution: f64,
    seed: u64,
) -> Result<(Spectrum, BeatFit, Option<FitResult>), ExperimentError> {
    let spec = EvolutionSpec::sampled(*dot, fss, window.t_max, window.points, resolution).map_err(numerical)?;
    let traj = evolve(&spec).map_err(numerical)?;
    let mut signal = beat_signal(&traj);
    if noise > 0.0 {
        let dist = Normal::new(0.0, noise).map_err(numerical)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut signal.y {
            *v += dist.sample(&mut rng);
        }
        signal.sigma = Some(vec![noise; signal.len()]);
    }
    signal.meta = signal.meta.with("rng_seed", seed).with("noise", noise);
    let mut out = BeatFit {
        fss_injected: fss.value(),
        gamma_x_injected: dot.gamma_x().value(),
        fss_fit: None,
        fss_sigma: None,
        gamma_x_fit: None,
        gamma_x_sigma: None,
        identifiable: false,
        note: None,
    };
    match fit(&DampedSine, &signal, None) {
        Ok(r) => {
            let (d, ds) = (r.value("delta"), r.uncertainty("delta"));
            out.fss_fit = Some(d * HBAR_UEV_PS);
            out.fss_sigma = Some(ds * HBAR_UEV_PS);
            out.gamma_x_fit = Some(r.value("gamma"));
            out.gamma_x_sigma = Some(r.uncertainty("gamma"));
            out.identifiable = d > 2.0 * ds && r.converged;
            if !out.identifiable {
                out.note = Some("beat frequency not resolved above its uncertainty".into());
            }
            Ok((signal, out, Some(r)))
        }
        Err(e) => {
            out.note = Some(format!("frequency not identifiable: {e}"));
            Ok((signal, out, None))
        }
    }
}

fn beats(c: &BeatsConfig, seed: u64) -> Result<ScenarioOutput, ExperimentError> {
    let dot = c.dot.with_gamma_x_minus_h(c.fss, c.gamma).map_err(|e| ExperimentError::config("/gamma", e))?;
    let (signal, summary, result) = beat_round_trip(&dot, c.fss, &c.window, c.noise, c.resolution, seed)?;
    let clean = beat_signal(
        &evolve(&EvolutionSpec::sampled(dot, c.fss, c.window.t_max, c.window.points, c.resolution).map_err(numerical)?)
            .map_err(numerical)?,
    );
    let mut table = Table::new("beats", &[("time", "ps"), ("signal", "1"), ("noisy", "1"), ("fit", "1")]);
    let fitted: Vec<f64> = match &result {
        Some(r) => signal.x.iter().map(|&t| DampedSine.eval(t, &r.values())).collect(),
        None => vec![f64::NAN; signal.len()],
    };
    for k in 0..signal.len() {
        table.push(vec![signal.x[k].into(), clean.y[k].into(), signal.y[k].into(), fitted[k].into()]);
    }
    let mut plot = PlotSpec {
        title: format!("Exciton spin beats, ħδ_FS = {} µeV", c.fss.value()),
        x_label: "Delay (ps)".into(),
        y_label: "n_co − n_cross".into(),
        series: vec![
            Series::markers("simulated + noise", signal.x.clone(), signal.y.clone()),
            Series::line("damped-sine fit", signal.x.clone(), fitted),
        ],
    };
    let mut report = json!({"fit": summary, "report": result.map(|r| serde_json::to_value(r).unwrap_or(Value::Null))});
    let mut tables = vec![table];
    if let Some(s) = &c.sweep {
        let p = preset(&s.preset).map_err(|e| ExperimentError::config("/sweep/preset", e))?;
        let pdot = p.dot(c.dot).map_err(numerical)?;
        let intensities = s.intensities.values();
        let rows: Vec<Result<(f64, BeatFit), ExperimentError>> = intensities
            .par_iter()
            .enumerate()
            .map(|(j, &i)| {
                let fss = fss_at_intensity(&pdot, &crate::analytic::CwDriveConfig { convention: s.convention, ..p.drive(i) })
                    .map_err(numerical)?
                    .fss;
                let d = QuantumDotParams { fss_zero: fss, ..pdot };
                let (_, bf, _) = beat_round_trip(&d, fss, &c.window, c.noise, c.resolution, derive_seed(seed, j as u64 + 1))?;
                Ok((kw(i), bf))
            })
            .collect();
        let mut t = Table::new(
            "beat_sweep",
            &[
                ("intensity", "kW/cm2"),
                ("fss_injected", "ueV"),
                ("fss_fit", "ueV"),
                ("fss_sigma", "ueV"),
                ("gamma_x_fit", "1/ps"),
                ("identifiable", "bool"),
            ],
        );
        for r in rows {
            let (i, bf) = r?;
            let n = |v: Option<f64>| Cell::Num(v.unwrap_or(f64::NAN));
            t.push(vec![i.into(), bf.fss_injected.into(), n(bf.fss_fit), n(bf.fss_sigma), n(bf.gamma_x_fit), bf.identifiable.into()]);
        }
        report["sweep"] = json!({"preset": s.preset, "convention": s.convention.id()});
        plot.series.push(Series::markers("sweep: fitted FSS (µeV) vs intensity", t.numbers("intensity").unwrap(), t.numbers("fss_fit").unwrap()));
        tables.push(t);
    }
    Ok(ScenarioOutput {
        scenario: "beats",
        tables,
        plot,
        report,
        seed,
        convention: c.sweep.as_ref().map(|s| s.convention.id()),
    })
}

fn spectrum(c: &SpectrumScenarioConfig, seed: Option<u64>) -> Result<ScenarioOutput, ExperimentError> {
    let fss = match (c.fss, c.fidelity) {
        (Some(e), _) => e,
        (None, Some(f)) => fss_for_fidelity(f, c.gamma).ok_or_else(|| ExperimentError::config("/fidelity", "must lie in (0.5, 1]"))?,
        _ => unreachable!("validated"),
    };
    let dot = c.dot.with_gamma_x_minus_h(fss, c.gamma).map_err(|e| ExperimentError::config("/gamma", e))?;
    let cfg = SpectrumConfig {
        rng_seed: seed.unwrap_or(c.spectrum.rng_seed),
        ..c.spectrum
    };
    let mut spec = EvolutionSpec::settled(dot, fss, c.resolution).map_err(numerical)?;
    if spec.t_max < cfg.probe_delay {
        spec.t_max = Time::new(cfg.probe_delay.value() + spec.dt.value()).map_err(numerical)?;
    }
    let traj = evolve(&spec).map_err(numerical)?;
    let co = synth_two_color_spectrum(&traj, &cfg, ProbePolarization::Co).map_err(numerical)?;
    let cross = synth_two_color_spectrum(&traj, &cfg, ProbePolarization::Cross).map_err(numerical)?;
    let (target, wrong) = traj.hole_populations(traj.index_at(cfg.probe_delay).expect("covered"));
    let injected = target / (target + wrong);
    let extraction = extract_fidelity_report(&co, &cross, &cfg);
    let mut table = Table::new("spectra", &[("detuning", "ueV"), ("co", "pA"), ("cross", "pA"), ("sigma", "pA")]);
    for k in 0..co.len() {
        table.push(vec![co.x[k].into(), co.y[k].into(), cross.y[k].into(), cfg.noise_sigma.into()]);
    }
    let plot = PlotSpec {
        title: "Two-color photocurrent spectra".into(),
        x_label: "Probe detuning (µeV)".into(),
        y_label: "Photocurrent (pA)".into(),
        series: vec![Series::line("co", co.x.clone(), co.y.clone()), Series::line("cross", cross.x.clone(), cross.y.clone())],
    };
    let report = json!({
        "fss_ueV": fss.value(),
        "injected_fidelity": injected,
        "probe_delay_ps": cfg.probe_delay.value(),
        "extraction": match &extraction {
            Ok(r) => serde_json::to_value(r).unwrap_or(Value::Null),
            Err(e) => json!({"error": e.to_string()}),
        },
    });
    Ok(ScenarioOutput {
        scenario: "spectrum",
        tables: vec![table],
        plot,
        report,
        seed: cfg.rng_seed,
        convention: None,
    })
}

fn fit_file(c: &FitScenarioConfig, opts: &RunOptions) -> Result<ScenarioOutput, ExperimentError> {
    let path = opts.base_dir.join(&c.data);
    let file = std::fs::File::open(&path).map_err(|e| ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let data = Spectrum::read_csv(file).map_err(|e| ExperimentError::config("/data", format!("{}: {e}", path.display())))?;
    let ose;
    let fixed;
    let model: &dyn FitModel = match c.model.as_str() {
        "damped-sine" => &DampedSine,
        "lorentzian" => &Lorentzian,
        "gaussian" => &Gaussian,
        "sin2" => &Sin2,
        "linear" => &Linear,
        "gaussian-fixed-shape" => {
            let s = c.fixed_shape.expect("validated");
            fixed = GaussianFixedShape { x0: s.x0, fwhm: s.fwhm };
            &fixed
        }
        "ose-fss" => {
            let o = c.ose.as_ref().expect("validated");
            let p = preset(&o.preset).map_err(|e| ExperimentError::config("/ose/preset", e))?;
            ose = ose_model(p, o.convention);
            &ose
        }
        other => return Err(ExperimentError::config("/model", format!("unknown model `{other}`"))),
    };
    if let Some(init) = &c.init {
        if init.len() != model.params().len() {
            return Err(ExperimentError::config(
                "/init",
                format!("model `{}` takes {} parameters, got {}", c.model, model.params().len(), init.len()),
            ));
        }
    }
    let result = fit(model, &data, c.init.as_deref()).map_err(numerical)?;
    let p = result.values();
    let mut table = Table::new(
        "fit",
        &[
            (data.meta.x_label.as_str(), data.meta.x_unit.as_str()),
            (data.meta.y_label.as_str(), data.meta.y_unit.as_str()),
            ("fit", data.meta.y_unit.as_str()),
            ("residual", data.meta.y_unit.as_str()),
        ],
    );
    let fitted: Vec<f64> = data.x.iter().map(|&x| model.eval(x, &p)).collect();
    for k in 0..data.len() {
        table.push(vec![data.x[k].into(), data.y[k].into(), fitted[k].into(), (data.y[k] - fitted[k]).into()]);
    }
    let plot = PlotSpec {
        title: format!("{} fit", c.model),
        x_label: format!("{} ({})", data.meta.x_label, data.meta.x_unit),
        y_label: format!("{} ({})", data.meta.y_label, data.meta.y_unit),
        series: vec![
            Series {
                yerr: data.sigma.clone(),
                ..Series::markers("data", data.x.clone(), data.y.clone())
            },
            Series::line("fit", data.x.clone(), fitted),
        ],
    };
    let report = serde_json::to_value(&result).unwrap_or(Value::Null);
    Ok(ScenarioOutput {
        scenario: "fit",
        tables: vec![table],
        plot,
        report,
        seed: 0,
        convention: c.ose.as_ref().map(|o| o.convention.id()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{from_value, parse_config};

    fn run_text(text: &str, verify: bool) -> ScenarioOutput {
        let cfg = parse_config(text).unwrap();
        crate::experiments::run(
            &cfg,
            &RunOptions {
                verify,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn fig3_curve_values_and_oracle() {
        let out = run_text(
            r#"{"schema": "qdspin/v1", "scenario": "fig3", "gamma": "0.021 1/ps",
                "sweep": {"from": "0 ueV", "to": "40 ueV", "points": 201}}"#,
            true,
        );
        let t = &out.tables[0];
        let fss = t.numbers("fss").unwrap();
        let f = t.numbers("fidelity").unwrap();
        assert_eq!(f[0], 1.0);
        let at = |x: f64| f[fss.iter().position(|v| (v - x).abs() < 1e-9).unwrap()];
        assert!((at(0.2 * 155.0) - fidelity_godden(Energy::new(31.0).unwrap(), default_gamma(), Rate::ZERO).unwrap().f).abs() < 1e-15);
        assert!(f.windows(2).all(|w| w[1] < w[0]));
        let markers = &out.tables[1];
        let mf = markers.numbers("fidelity").unwrap();
        assert!((mf[0] - 0.9896).abs() < 5e-4);
        assert!((mf[2] - 0.582).abs() < 2e-3);
        assert!(out.report["verify"]["passed"].as_bool().unwrap());
        assert!(out.tables[2].rows.len() >= 5);
    }

    #[test]
    fn fig4_at_reference_row() {
        let out = run_text(
            r#"{"schema": "qdspin/v1", "scenario": "fig4",
                "dot": {"fss_zero": "2.01 ueV", "chi_e": -0.0219, "e_ref": "72 kV/cm", "gamma_r": "0 1/ps"},
                "rates": {"table": [
                    {"field": "60 kV/cm", "gamma_e": "0.012 1/ps", "gamma_h": "0.0001 1/ps"},
                    {"field": "72 kV/cm", "gamma_e": "0.021008403 1/ps", "gamma_h": "0.0002 1/ps"},
                    {"field": "84 kV/cm", "gamma_e": "0.03 1/ps", "gamma_h": "0.0003 1/ps"}]},
                "sweep": {"from": "60 kV/cm", "to": "84 kV/cm", "points": 3}}"#,
            true,
        );
        let t = &out.tables[0];
        let f = t.numbers("fidelity").unwrap();
        let init = t.numbers("init_time").unwrap();
        assert!((init[1] - 47.6).abs() < 1e-3);
        assert!((t.numbers("fss").unwrap()[1] - 2.01).abs() < 1e-12);
        // ΓX − Γh = Γe here since Γr = 0
        assert!((f[1] - 0.9896).abs() < 5e-4);
        let bias = t.numbers("bias").unwrap();
        assert!((bias[1] - 0.896).abs() < 1e-9);
    }

    #[test]
    fn fig4_flat_slope_gives_flat_fidelity_at_fixed_rates() {
        let out = run_text(
            r#"{"schema": "qdspin/v1", "scenario": "fig4",
                "dot": {"fss_zero": "5 ueV", "chi_e": 0.0},
                "rates": {"table": [
                    {"field": "60 kV/cm", "gamma_e": "0.02 1/ps", "gamma_h": "0.0002 1/ps"},
                    {"field": "80 kV/cm", "gamma_e": "0.02 1/ps", "gamma_h": "0.0002 1/ps"}]},
                "sweep": {"from": "60 kV/cm", "to": "80 kV/cm", "points": 9}}"#,
            false,
        );
        let f = out.tables[0].numbers("fidelity").unwrap();
        assert!(f.iter().all(|v| (v - f[0]).abs() < 1e-15));
    }

    #[test]
    fn fig4_rejects_sweep_outside_table() {
        let err = parse_config(
            r#"{"schema": "qdspin/v1", "scenario": "fig4", "dot": {},
                "rates": {"synthetic": {"e_ref": "72 kV/cm", "gamma_e_ref": "0.021 1/ps", "gamma_h_ref": "0.0002 1/ps",
                          "b_e": "300 kV/cm", "b_h": "430 kV/cm", "from": "50 kV/cm", "to": "90 kV/cm", "points": 9}},
                "sweep": {"from": "40 kV/cm", "to": "80 kV/cm", "points": 5}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ExperimentError::Config { ref pointer, .. } if pointer == "/sweep"), "{err}");
    }

    #[test]
    fn fig5b_endpoints() {
        let out = run_text(
            r#"{"schema": "qdspin/v1", "scenario": "fig5b",
                "sweep": {"from": "0 kW/cm2", "to": "0.44 kW/cm2", "points": 45}}"#,
            false,
        );
        let t = &out.tables[0];
        let h = t.numbers("fss_qd-c-fss-scan-h").unwrap();
        let v = t.numbers("fss_qd-c-fss-scan-v").unwrap();
        assert_eq!(h[0], 13.2);
        assert_eq!(v[0], 13.2);
        assert!((v[44] - 4.57).abs() < 0.05);
        assert!((h[20] - 15.4).abs() < 0.05);
        assert!(h.windows(2).all(|w| w[1] > w[0]));
        assert!(out.convention.unwrap().starts_with("ose-sign/physical"));
    }

    #[test]
    fn fig5c_endpoints_and_oracle() {
        let out = run_text(
            r#"{"schema": "qdspin/v1", "scenario": "fig5c",
                "sweep": {"from": "0 kW/cm2", "to": "0.3 kW/cm2", "points": 31}}"#,
            true,
        );
        let f = out.tables[0].numbers("fidelity").unwrap();
        assert!((f[0] - 0.762).abs() < 2e-3);
        assert!((f[25] - 0.886).abs() < 2e-3);
        assert!(out.report["verify"]["passed"].as_bool().unwrap());
    }

    #[test]
    fn beats_recover_injected_splitting() {
        let out = run_text(
            r#"{"schema": "qdspin/v1", "scenario": "beats", "fss": "31.2 ueV", "noise": 0.0}"#,
            false,
        );
        let fit = &out.report["fit"];
        assert!(fit["identifiable"].as_bool().unwrap());
        assert!((fit["fss_fit"].as_f64().unwrap() - 31.2).abs() < 1e-6);
        assert!((fit["gamma_x_fit"].as_f64().unwrap() - fit["gamma_x_injected"].as_f64().unwrap()).abs() < 1e-8);
    }

    #[test]
    fn beats_flag_zero_splitting() {
        let out = run_text(r#"{"schema": "qdspin/v1", "scenario": "beats", "fss": "0 ueV", "seed": 3}"#, false);
        assert!(!out.report["fit"]["identifiable"].as_bool().unwrap());
    }

    #[test]
    fn beat_frequency_falls_along_v_sweep() {
        let out = run_text(
            r#"{"schema": "qdspin/v1", "scenario": "beats", "fss": "13.2 ueV", "noise": 0.005,
                "sweep": {"intensities": {"from": "0 kW/cm2", "to": "0.44 kW/cm2", "points": 4}}}"#,
            false,
        );
        let t = &out.tables[1];
        let fss = t.numbers("fss_fit").unwrap();
        let ok = t.numbers("identifiable").unwrap();
        let resolved: Vec<f64> = fss.iter().zip(&ok).filter(|(_, k)| **k > 0.0).map(|(f, _)| *f).collect();
        assert!(resolved.len() >= 3, "{}", t.to_csv_string());
        assert!(resolved.windows(2).all(|w| w[1] < w[0]), "{fss:?}");
    }

    #[test]
    fn spectrum_scenario_reports_extraction() {
        let out = run_text(
            r#"{"schema": "qdspin/v1", "scenario": "spectrum", "fidelity": 0.762, "seed": 4,
                "spectrum": {"probe_delay": "900 ps", "noise_sigma": 0.1}}"#,
            false,
        );
        let ex = &out.report["extraction"];
        let f = ex["fidelity"]["f"].as_f64().unwrap();
        let s = ex["fidelity"]["uncertainty"].as_f64().unwrap();
        assert!((f - 0.762).abs() < 4.0 * s + 1e-3);
        assert_eq!(out.seed, 4);
    }

    #[test]
    fn fit_scenario_reads_relative_csv() {
        let dir = std::env::temp_dir().join(format!("qdspin-fit-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("line.csv"), "x [ueV],y [pA],sigma [pA]\n0,1,\n1,3,\n2,5,\n3,7,\n").unwrap();
        let cfg = parse_config(r#"{"schema": "qdspin/v1", "scenario": "fit", "data": "line.csv", "model": "linear"}"#).unwrap();
        let out = crate::experiments::run(
            &cfg,
            &RunOptions {
                base_dir: dir.clone(),
                ..Default::default()
            },
        )
        .unwrap();
        assert!((out.report["params"][0]["value"].as_f64().unwrap() - 2.0).abs() < 1e-12);
        let missing = parse_config(r#"{"schema": "qdspin/v1", "scenario": "fit", "data": "nope.csv", "model": "linear"}"#).unwrap();
        let err = crate::experiments::run(
            &missing,
            &RunOptions {
                base_dir: dir.clone(),
                ..Default::default()
            },
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 4);
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn spread_includes_ends() {
        assert_eq!(spread(201, 5), vec![0, 50, 100, 150, 200]);
        assert_eq!(spread(3, 5), vec![0, 1, 2]);
    }

    #[test]
    fn value_pointer_for_nested_unit_error() {
        let err = from_value::<Fig3Config>(
            serde_json::json!({"gamma": "0.021 1/ps", "sweep": {"from": "0 ueV", "to": "40 furlongs", "points": 3}}),
            "",
        )
        .unwrap_err();
        assert!(matches!(err, ExperimentError::Config { ref pointer, .. } if pointer == "/sweep/to"), "{err}");
    }
}
