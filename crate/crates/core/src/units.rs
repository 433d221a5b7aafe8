//! Physical constants, unit-tagged quantities and the diode bias-to-field map.
//!
//! Canonical internal units are µeV, ps, kV·cm⁻¹ and W·µm⁻². Every quantity is
//! a newtype over `f64` holding its canonical magnitude, so passing a [`Rate`]
//! where an [`Energy`] is expected does not compile:
//!
//! ```compile_fail
//! use qdspin_core::units::{energy_to_omega, Rate};
//! let r = Rate::new(0.021).unwrap();
//! energy_to_omega(r);
//! ```
//!
//! In configuration files quantities are written as `"<value> <unit>"`
//! strings, e.g. `"13.2 ueV"` or `"0.021 1/ps"`; a bare number is rejected.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Reduced Planck constant in µeV·ps.
pub const HBAR_UEV_PS: f64 = 658.2119569;

/// Fixed physical constants shared by every module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysConstants {
    pub hbar: f64,
}

/// The single constants record used throughout the crate.
pub const PHYS: PhysConstants = PhysConstants { hbar: HBAR_UEV_PS };

/// 1 kW·cm⁻² expressed in W·µm⁻².
const KW_PER_CM2_IN_W_PER_UM2: f64 = 1.0e-5;
/// 1 V·nm⁻¹ expressed in kV·cm⁻¹.
const V_PER_NM_IN_KV_PER_CM: f64 = 1.0e4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UnitError {
    #[error("{quantity} must be non-negative, got {value}")]
    Negative { quantity: &'static str, value: f64 },
    #[error("{quantity} must be finite, got {value}")]
    NonFinite { quantity: &'static str, value: f64 },
    #[error("unknown unit `{unit}` for {quantity} (expected one of: {expected})")]
    UnknownUnit {
        quantity: &'static str,
        unit: String,
        expected: String,
    },
    #[error("cannot parse `{0}` as `<value> <unit>`")]
    Malformed(String),
    #[error("intrinsic width must be positive, got {0} nm")]
    InvalidGeometry(f64),
}

macro_rules! quantity {
    (
        $(#[$meta:meta])*
        $name:ident, $label:literal, canonical = $canon:literal,
        non_negative = $nonneg:expr,
        units = [$(($unit:literal, $factor:expr)),+ $(,)?]
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
        pub struct $name(f64);

        impl $name {
            pub const ZERO: $name = $name(0.0);
            pub const UNIT: &'static str = $canon;
            const UNITS: &'static [(&'static str, f64)] = &[$(($unit, $factor)),+];

            /// Builds the quantity from a magnitude in canonical units.
            pub fn new(value: f64) -> Result<Self, UnitError> {
                if !value.is_finite() {
                    return Err(UnitError::NonFinite { quantity: $label, value });
                }
                if $nonneg && value < 0.0 {
                    return Err(UnitError::Negative { quantity: $label, value });
                }
                Ok($name(value))
            }

            /// Magnitude in canonical units.
            #[inline]
            pub fn value(self) -> f64 {
                self.0
            }

            /// Parses `"<value> <unit>"`.
            pub fn parse(text: &str) -> Result<Self, UnitError> {
                let (value, unit) = split_quantity(text)?;
                let factor = Self::UNITS
                    .iter()
                    .find(|(u, _)| *u == unit)
                    .map(|(_, f)| *f)
                    .ok_or_else(|| UnitError::UnknownUnit {
                        quantity: $label,
                        unit: unit.to_string(),
                        expected: Self::UNITS
                            .iter()
                            .map(|(u, _)| *u)
                            .collect::<Vec<_>>()
                            .join(", "),
                    })?;
                Self::new(value * factor)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{} {}", self.0, $canon)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = String::deserialize(d)?;
                $name::parse(&text).map_err(serde::de::Error::custom)
            }
        }
    };
}

fn split_quantity(text: &str) -> Result<(f64, &str), UnitError> {
    let text = text.trim();
    let (num, unit) = text
        .split_once(char::is_whitespace)
        .ok_or_else(|| UnitError::Malformed(text.to_string()))?;
    let value: f64 = num
        .parse()
        .map_err(|_| UnitError::Malformed(text.to_string()))?;
    Ok((value, unit.trim()))
}

quantity!(
    /// Energy in µeV. May be negative (shifts, detunings).
    Energy, "energy", canonical = "ueV", non_negative = false,
    units = [("ueV", 1.0), ("µeV", 1.0), ("meV", 1.0e3), ("eV", 1.0e6)]
);

quantity!(
    /// Angular frequency in rad·ps⁻¹.
    AngularFrequency, "angular frequency", canonical = "rad/ps", non_negative = false,
    units = [("rad/ps", 1.0), ("rad/ns", 1.0e-3)]
);

quantity!(
    /// Rate in ps⁻¹.
    Rate, "rate", canonical = "1/ps", non_negative = true,
    units = [("1/ps", 1.0), ("ps^-1", 1.0), ("1/ns", 1.0e-3), ("ns^-1", 1.0e-3)]
);

quantity!(
    /// Time in ps.
    Time, "time", canonical = "ps", non_negative = true,
    units = [("ps", 1.0), ("ns", 1.0e3)]
);

quantity!(
    /// DC electric field in kV·cm⁻¹. Negative values are representable.
    Field, "field", canonical = "kV/cm", non_negative = false,
    units = [("kV/cm", 1.0), ("V/cm", 1.0e-3)]
);

quantity!(
    /// Optical intensity, stored in W·µm⁻².
    Intensity, "intensity", canonical = "W/um2", non_negative = true,
    units = [("W/um2", 1.0), ("kW/cm2", KW_PER_CM2_IN_W_PER_UM2)]
);

quantity!(
    /// Bias voltage in V.
    Voltage, "voltage", canonical = "V", non_negative = false,
    units = [("V", 1.0), ("mV", 1.0e-3)]
);

quantity!(
    /// Squared-Rabi-energy per intensity, `a` in meV²·µm²·W⁻¹; `ħ²Ω² = a·I`.
    DipoleConstant, "dipole constant", canonical = "meV2*um2/W", non_negative = true,
    units = [("meV2*um2/W", 1.0), ("ueV2*um2/W", 1.0e-6)]
);

quantity!(
    /// Charge-screening slope `k` in eV·µm²·W⁻¹; detuning falls by `k·I`.
    ScreeningSlope, "screening slope", canonical = "eV*um2/W", non_negative = false,
    units = [("eV*um2/W", 1.0), ("meV*um2/W", 1.0e-3), ("ueV*um2/W", 1.0e-6)]
);

impl DipoleConstant {
    /// `ħ²Ω²` in µeV² at the given intensity.
    pub fn rabi_energy_squared(self, i: Intensity) -> f64 {
        // meV² → µeV² is 1e6
        self.0 * 1.0e6 * i.value()
    }
}

impl ScreeningSlope {
    /// Blue shift `k·I` in µeV.
    pub fn shift(self, i: Intensity) -> Energy {
        Energy(self.0 * 1.0e6 * i.value())
    }
}

impl Energy {
    pub fn abs(self) -> Energy {
        Energy(self.0.abs())
    }
}

impl Add for Energy {
    type Output = Energy;
    fn add(self, rhs: Energy) -> Energy {
        Energy(self.0 + rhs.0)
    }
}

impl Sub for Energy {
    type Output = Energy;
    fn sub(self, rhs: Energy) -> Energy {
        Energy(self.0 - rhs.0)
    }
}

impl Neg for Energy {
    type Output = Energy;
    fn neg(self) -> Energy {
        Energy(-self.0)
    }
}

impl Mul<f64> for Energy {
    type Output = Energy;
    fn mul(self, rhs: f64) -> Energy {
        Energy(self.0 * rhs)
    }
}

impl Add for Rate {
    type Output = Rate;
    fn add(self, rhs: Rate) -> Rate {
        Rate(self.0 + rhs.0)
    }
}

impl Sub for Field {
    type Output = Field;
    fn sub(self, rhs: Field) -> Field {
        Field(self.0 - rhs.0)
    }
}

impl Rate {
    /// Lifetime `1/rate`; `None` for a zero rate.
    pub fn lifetime(self) -> Option<Time> {
        (self.0 > 0.0).then(|| Time(1.0 / self.0))
    }
}

impl Intensity {
    pub fn from_kw_per_cm2(value: f64) -> Result<Intensity, UnitError> {
        intensity_convert(value)
    }

    pub fn kw_per_cm2(self) -> f64 {
        self.0 / KW_PER_CM2_IN_W_PER_UM2
    }
}

/// FSS–field slope χE in µeV per kV·cm⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldSlope(pub f64);

impl FieldSlope {
    pub fn shift(self, delta: Field) -> Energy {
        Energy(self.0 * delta.value())
    }
}

/// Converts an energy to the corresponding angular frequency, `ω = E/ħ`.
#[inline]
pub fn energy_to_omega(e: Energy) -> AngularFrequency {
    AngularFrequency(e.0 / HBAR_UEV_PS)
}

#[inline]
pub fn omega_to_energy(w: AngularFrequency) -> Energy {
    Energy(w.0 * HBAR_UEV_PS)
}

/// Same as [`energy_to_omega`] but expressed as a rate magnitude in ps⁻¹.
#[inline]
pub fn energy_to_rate_units(e: Energy) -> f64 {
    e.0 / HBAR_UEV_PS
}

/// Converts kW·cm⁻² to the canonical W·µm⁻².
pub fn intensity_convert(kw_per_cm2: f64) -> Result<Intensity, UnitError> {
    Intensity::new(kw_per_cm2 * KW_PER_CM2_IN_W_PER_UM2)
        .map_err(|_| UnitError::Negative {
            quantity: "intensity",
            value: kw_per_cm2,
        })
}

/// n-i-Schottky diode geometry used to turn applied bias into a DC field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiodeGeometry {
    pub v_bi: Voltage,
    /// Intrinsic region width in nm.
    pub w_i_nm: f64,
}

impl DiodeGeometry {
    pub fn new(v_bi: Voltage, w_i_nm: f64) -> Result<Self, UnitError> {
        if !(w_i_nm > 0.0 && w_i_nm.is_finite()) {
            return Err(UnitError::InvalidGeometry(w_i_nm));
        }
        Ok(DiodeGeometry { v_bi, w_i_nm })
    }
}

impl Default for DiodeGeometry {
    fn default() -> Self {
        DiodeGeometry {
            v_bi: Voltage(0.76),
            w_i_nm: 230.0,
        }
    }
}

/// `E = (V + V_bi) / W_i`, in kV·cm⁻¹.
pub fn bias_to_field(v: Voltage, geom: &DiodeGeometry) -> Field {
    Field((v.0 + geom.v_bi.0) / geom.w_i_nm * V_PER_NM_IN_KV_PER_CM)
}

pub fn field_to_bias(e: Field, geom: &DiodeGeometry) -> Voltage {
    Voltage(e.0 / V_PER_NM_IN_KV_PER_CM * geom.w_i_nm - geom.v_bi.0)
}
