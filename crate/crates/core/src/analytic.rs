//! Closed-form models: hole-spin fidelity, FSS tuning by DC field and by the
//! optical Stark effect, the photocurrent noise-floor lower bound, and qubit
//! timescales.
//!
//! Sign convention for the Stark shift: a positively detuned V-polarized CW
//! drive lowers the FSS and an H-polarized drive raises it, i.e.
//! `Δω = (s/2)·(√(Δ² + ħ²Ω²) − Δ)` with `s = +1` for H and `s = −1` for V.
//! [`OseSignConvention::Literal`] evaluates the printed form
//! `(s/2)·(Δ − √(Δ² + ħ²Ω²))` instead, which tunes in the opposite direction.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{
    energy_to_rate_units, DipoleConstant, Energy, Field, FieldSlope, Intensity, Rate,
    ScreeningSlope, Time, UnitError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("fidelity model needs ΓX > Γh (got ΓX = {gamma_x} ps⁻¹, Γh = {gamma_h} ps⁻¹)")]
    RateOrdering { gamma_x: f64, gamma_h: f64 },
    #[error("effective CW detuning must be positive, got {0} µeV")]
    NonPositiveDetuning(f64),
    #[error("cross-polarized peak amplitude must be positive, got {0}")]
    NonPositiveSignal(f64),
    #[error("noise-floor estimate needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("noise sigma must be non-negative and finite, got {0}")]
    InvalidNoise(f64),
    #[error("{0} must be positive")]
    ZeroRate(&'static str),
    #[error("electron tunneling rate must exceed hole tunneling rate (Γe = {gamma_e}, Γh = {gamma_h})")]
    TunnelingOrder { gamma_e: f64, gamma_h: f64 },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error(transparent)]
    Unit(#[from] UnitError),
}

/// Physical record of one quantum dot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantumDotParams {
    /// FSS `ħδ_FS` at the reference condition.
    pub fss_zero: Energy,
    pub gamma_e: Rate,
    pub gamma_h: Rate,
    pub gamma_r: Rate,
    /// FSS–field slope `ħχE`, µeV per kV·cm⁻¹.
    pub chi_e: FieldSlope,
    /// Field at which `fss_zero` applies.
    pub e_ref: Field,
    pub trion_binding: Energy,
    /// Extrinsic hole-spin dephasing time.
    pub t2_star: Time,
}

impl Default for QuantumDotParams {
    fn default() -> Self {
        QuantumDotParams {
            fss_zero: Energy::ZERO,
            gamma_e: Rate::new(0.021).unwrap(),
            gamma_h: Rate::ZERO,
            gamma_r: Rate::new(1.0 / 700.0).unwrap(),
            chi_e: FieldSlope(0.0),
            e_ref: Field::new(72.0).unwrap(),
            trion_binding: Energy::new(2500.0).unwrap(),
            t2_star: Time::new(10_000.0).unwrap(),
        }
    }
}

impl QuantumDotParams {
    /// Total exciton decay rate `ΓX = Γr + Γe + Γh`.
    pub fn gamma_x(&self) -> Rate {
        self.gamma_r + self.gamma_e + self.gamma_h
    }

    /// `ΓX − Γh`, the rate that competes with FSS precession.
    pub fn gamma_x_minus_h(&self) -> f64 {
        self.gamma_r.value() + self.gamma_e.value()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.gamma_e <= self.gamma_h {
            return Err(ModelError::TunnelingOrder {
                gamma_e: self.gamma_e.value(),
                gamma_h: self.gamma_h.value(),
            });
        }
        Ok(())
    }

    /// Dot with the given FSS and `ΓX − Γh`, splitting the latter into the
    /// radiative rate (kept from `self`) and the electron tunneling rate.
    pub fn with_gamma_x_minus_h(mut self, fss: Energy, gamma: Rate) -> Result<Self, ModelError> {
        let gamma_e = gamma.value() - self.gamma_r.value();
        self.gamma_e = Rate::new(gamma_e)?;
        self.fss_zero = fss;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    /// `+1` for H, `−1` for V.
    pub fn sign(self) -> f64 {
        match self {
            Polarization::H => 1.0,
            Polarization::V => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OseSignConvention {
    /// V-polarized drive reduces the FSS.
    #[default]
    Physical,
    /// The formula exactly as printed with the tabulated `s`.
    Literal,
}

impl OseSignConvention {
    pub fn id(self) -> &'static str {
        match self {
            OseSignConvention::Physical => "ose-sign/physical: dw = (s/2)(sqrt(D^2+W^2) - D), s(H)=+1, s(V)=-1",
            OseSignConvention::Literal => "ose-sign/literal: dw = (s/2)(D - sqrt(D^2+W^2)), s(H)=+1, s(V)=-1",
        }
    }
}

/// CW tuning laser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CwDriveConfig {
    pub polarization: Polarization,
    /// Bare detuning `ħΔ_CW` from the X→XX transition at zero intensity.
    pub delta_cw_zero: Energy,
    pub a_dipole: DipoleConstant,
    pub k_screen: ScreeningSlope,
    pub intensity: Intensity,
    #[serde(default)]
    pub convention: OseSignConvention,
}

impl CwDriveConfig {
    pub fn at_intensity(mut self, intensity: Intensity) -> Self {
        self.intensity = intensity;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityValue {
    pub f: f64,
    pub is_lower_bound: bool,
    /// 1σ uncertainty when the value comes from an estimator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<f64>,
}

impl FidelityValue {
    pub fn exact(f: f64) -> Self {
        FidelityValue {
            f,
            is_lower_bound: false,
            uncertainty: None,
        }
    }
}

/// An FSS value together with whether it was clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FssValue {
    pub fss: Energy,
    pub clamped: bool,
}

impl FssValue {
    fn clamp(raw: Energy) -> Self {
        if raw.value() < 0.0 {
            FssValue {
                fss: Energy::ZERO,
                clamped: true,
            }
        } else {
            FssValue {
                fss: raw,
                clamped: false,
            }
        }
    }
}

/// `F = 1 − ½·δ²/(δ² + (ΓX − Γh)²)` with `δ = ħδ_FS/ħ`.
pub fn fidelity_godden(fss: Energy, gamma_x: Rate, gamma_h: Rate) -> Result<FidelityValue, ModelError> {
    if gamma_x <= gamma_h {
        return Err(ModelError::RateOrdering {
            gamma_x: gamma_x.value(),
            gamma_h: gamma_h.value(),
        });
    }
    Ok(FidelityValue::exact(godden(
        energy_to_rate_units(fss),
        gamma_x.value() - gamma_h.value(),
    )))
}

/// Same model evaluated from raw `δ` (rad/ps) and `ΓX − Γh` (ps⁻¹).
#[inline]
pub(crate) fn godden(delta: f64, gamma: f64) -> f64 {
    let d2 = delta * delta;
    1.0 - 0.5 * d2 / (d2 + gamma * gamma)
}

/// Inverts the fidelity model: the FSS that yields fidelity `f` at
/// `ΓX − Γh = gamma`. Valid for `f` in (0.5, 1].
pub fn fss_for_fidelity(f: f64, gamma: Rate) -> Option<Energy> {
    if !(f > 0.5 && f <= 1.0) {
        return None;
    }
    let r = 2.0 * (1.0 - f);
    let delta = gamma.value() * (r / (1.0 - r)).sqrt();
    Energy::new(delta * crate::units::HBAR_UEV_PS).ok()
}

/// Linearized FSS at field `e`: `fss_zero + χE·(e − e_ref)`, clamped at 0.
pub fn fss_at_field(qd: &QuantumDotParams, e: Field) -> FssValue {
    FssValue::clamp(qd.fss_zero + qd.chi_e.shift(e - qd.e_ref))
}

/// Effective detuning `ħΔ_CW(I) = ħΔ_CW|₀ − k·I`.
pub fn delta_cw_at_intensity(cw: &CwDriveConfig) -> Energy {
    cw.delta_cw_zero - cw.k_screen.shift(cw.intensity)
}

/// Stark-induced change of the FSS.
pub fn ose_shift(cw: &CwDriveConfig) -> Result<Energy, ModelError> {
    let delta = delta_cw_at_intensity(cw).value();
    if delta <= 0.0 {
        return Err(ModelError::NonPositiveDetuning(delta));
    }
    let omega2 = cw.a_dipole.rabi_energy_squared(cw.intensity);
    if omega2 == 0.0 {
        return Ok(Energy::ZERO);
    }
    // √(Δ² + Ω²) − Δ rewritten to avoid cancellation when Ω ≪ Δ
    let magnitude = 0.5 * omega2 / ((delta * delta + omega2).sqrt() + delta);
    let s = cw.polarization.sign();
    let signed = match cw.convention {
        OseSignConvention::Physical => s * magnitude,
        OseSignConvention::Literal => -s * magnitude,
    };
    Ok(Energy::new(signed)?)
}

/// FSS under CW drive, `fss_zero + Δω`, clamped at 0.
pub fn fss_at_intensity(qd: &QuantumDotParams, cw: &CwDriveConfig) -> Result<FssValue, ModelError> {
    Ok(FssValue::clamp(qd.fss_zero + ose_shift(cw)?))
}

/// Fidelity with the FSS tuned by the CW drive.
pub fn fidelity_vs_intensity(qd: &QuantumDotParams, cw: &CwDriveConfig) -> Result<FidelityValue, ModelError> {
    let fss = fss_at_intensity(qd, cw)?;
    fidelity_godden(fss.fss, qd.gamma_x(), qd.gamma_h)
}

/// Noise-floor lower bound: `ε = σ/√N` stands in for the undetected
/// co-polarized amplitude, `F ≥ A/(A + ε)`.
pub fn fidelity_lower_bound(pc_cross: f64, noise_sigma: f64, n_samples: usize) -> Result<FidelityValue, ModelError> {
    if !(pc_cross > 0.0) {
        return Err(ModelError::NonPositiveSignal(pc_cross));
    }
    if n_samples < 2 {
        return Err(ModelError::TooFewSamples(n_samples));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(ModelError::InvalidNoise(noise_sigma));
    }
    let eps = noise_sigma / (n_samples as f64).sqrt();
    Ok(FidelityValue {
        f: pc_cross / (pc_cross + eps),
        is_lower_bound: true,
        uncertainty: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitTimescales {
    pub init_time: Time,
    pub hole_lifetime: Time,
    /// `2·T_h > T₂*`: dephasing rather than hole tunneling limits coherence.
    pub meets_2th_gt_t2star: bool,
}

pub fn qubit_timescales(qd: &QuantumDotParams) -> Result<QubitTimescales, ModelError> {
    let init_time = qd.gamma_e.lifetime().ok_or(ModelError::ZeroRate("Γe"))?;
    let hole_lifetime = qd.gamma_h.lifetime().ok_or(ModelError::ZeroRate("Γh"))?;
    Ok(QubitTimescales {
        init_time,
        hole_lifetime,
        meets_2th_gt_t2star: 2.0 * hole_lifetime.value() > qd.t2_star.value(),
    })
}

/// One row of the built-in Stark-tuning parameter tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OsePreset {
    pub table: PresetTable,
    pub polarization: Polarization,
    pub fss_zero: Energy,
    pub s: i8,
    pub a_dipole: DipoleConstant,
    pub delta_cw_zero: Energy,
    pub k_screen: ScreeningSlope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_x_minus_h: Option<Rate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetTable {
    FssVsIntensity,
    FidelityVsIntensity,
}

pub const PRESET_FSS_SCAN_H: &str = "qd-c-fss-scan-h";
pub const PRESET_FSS_SCAN_V: &str = "qd-c-fss-scan-v";
pub const PRESET_FIDELITY_SCAN: &str = "qd-c-fidelity-scan";

const PRESETS_JSON: &str = include_str!("../data/presets.json");

/// Built-in presets keyed by name.
pub fn presets() -> &'static BTreeMap<String, OsePreset> {
    static PRESETS: OnceLock<BTreeMap<String, OsePreset>> = OnceLock::new();
    PRESETS.get_or_init(|| serde_json::from_str(PRESETS_JSON).expect("embedded presets are valid"))
}

pub fn preset(name: &str) -> Result<&'static OsePreset, ModelError> {
    presets()
        .get(name)
        .ok_or_else(|| ModelError::UnknownPreset(name.to_string()))
}

impl OsePreset {
    pub fn drive(&self, intensity: Intensity) -> CwDriveConfig {
        CwDriveConfig {
            polarization: self.polarization,
            delta_cw_zero: self.delta_cw_zero,
            a_dipole: self.a_dipole,
            k_screen: self.k_screen,
            intensity,
            convention: OseSignConvention::Physical,
        }
    }

    /// Dot parameters for this row; `ΓX − Γh` defaults to 0.021 ps⁻¹ when the
    /// table does not list it.
    pub fn dot(&self, base: QuantumDotParams) -> Result<QuantumDotParams, ModelError> {
        let gamma = self.gamma_x_minus_h.unwrap_or(Rate::new(0.021)?);
        base.with_gamma_x_minus_h(self.fss_zero, gamma)
    }
}
