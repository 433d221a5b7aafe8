//! Simulation and analysis toolkit for optically initialized quantum-dot
//! hole-spin qubits.
//!
//! * [`units`]: unit-tagged quantities and the bias-to-field map.
//! * [`analytic`]: closed-form fidelity and Stark-tuning models.
//! * [`dynamics`]: fixed-step open-system integrator for the exciton-ionization scheme.
//! * [`spectra`]: synthetic two-color and CW spectra, and fidelity estimators.
//! * [`fitting`]: damped least-squares engine and model functions.
//! * [`experiments`]: scenario configs and runners that produce figure tables.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytic;
pub mod dynamics;
pub mod experiments;
pub mod fitting;
pub mod spectra;
pub mod spectrum;
pub mod units;

pub use analytic::{
    CwDriveConfig, FidelityValue, ModelError, OseSignConvention, Polarization, QuantumDotParams,
};
pub use units::{Energy, Field, Intensity, Rate, Time, Voltage};
