//! Synthetic observables (two-color pump-probe photocurrent spectra, CW line
//! scans, waveplate scans) and the estimators that turn them back into
//! fidelities and splittings.

use std::f64::consts::LN_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{fidelity_lower_bound, FidelityValue, ModelError};
use crate::dynamics::Trajectory;
use crate::fitting::{fit, fit_with, FitError, FitOptions, FitResult, Gaussian, GaussianFixedShape, Lorentzian, Sin2};
use crate::spectrum::{Spectrum, SpectrumError, SpectrumMeta};
use crate::units::{Energy, Time};

#[derive(Debug, Error)]
pub enum SpectraError {
    #[error("probe delay {delay} lies outside the trajectory (0..{end} ps)")]
    ProbeDelayOutside { delay: f64, end: f64 },
    #[error("co and cross spectra do not share an x grid")]
    GridMismatch,
    #[error("only {0} points fall inside the trion window")]
    WindowTooSmall(usize),
    #[error("no trion peak in the cross-polarized spectrum (amplitude {amplitude} ± {sigma})")]
    NoCrossSignal { amplitude: f64, sigma: f64 },
    #[error("invalid spectrum config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbePolarization {
    Co,
    Cross,
}

/// Two-color pump-probe spectrum settings. Photocurrents are in pA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub pulse_fwhm: Energy,
    pub trion_binding: Energy,
    pub probe_delay: Time,
    /// Additive white-noise standard deviation, pA.
    pub noise_sigma: f64,
    pub rng_seed: u64,
    /// Photocurrent per unit hole population, pA.
    pub pc_scale: f64,
    /// Depth of the X⁰ background-subtraction dip at zero detuning, as a
    /// fraction of `pc_scale`.
    pub dip_depth: f64,
    pub detuning_min: f64,
    pub detuning_max: f64,
    pub detuning_step: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            pulse_fwhm: Energy::new(200.0).unwrap(),
            trion_binding: Energy::new(2500.0).unwrap(),
            probe_delay: Time::new(100.0).unwrap(),
            noise_sigma: 0.0,
            rng_seed: 0,
            pc_scale: 10.0,
            dip_depth: 0.5,
            detuning_min: -500.0,
            detuning_max: 3500.0,
            detuning_step: 20.0,
        }
    }
}

impl SpectrumConfig {
    pub fn validate(&self) -> Result<(), SpectraError> {
        let bad = |m: &str| Err(SpectraError::InvalidConfig(m.into()));
        if !(self.pulse_fwhm.value() > 0.0) {
            return bad("pulse_fwhm must be positive");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be non-negative");
        }
        if !(self.pc_scale > 0.0 && self.pc_scale.is_finite()) {
            return bad("pc_scale must be positive");
        }
        if !(self.detuning_step > 0.0 && self.detuning_max > self.detuning_min) {
            return bad("detuning grid must be increasing with a positive step");
        }
        Ok(())
    }

    /// Detuning grid in µeV.
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.detuning_max - self.detuning_min) / self.detuning_step).round() as usize;
        (0..=n).map(|i| self.detuning_min + i as f64 * self.detuning_step).collect()
    }
}

fn gaussian_profile(x: f64, x0: f64, fwhm: f64) -> f64 {
    let u = (x - x0) / fwhm;
    (-4.0 * LN_2 * u * u).exp()
}

/// Photocurrent vs probe detuning for one probe polarization.
///
/// The cross-polarized probe reads the hole spin left by ionizing the pumped
/// exciton; the co-polarized probe reads the opposite spin.
pub fn synth_two_color_spectrum(
    traj: &Trajectory,
    cfg: &SpectrumConfig,
    probe: ProbePolarization,
) -> Result<Spectrum, SpectraError> {
    cfg.validate()?;
    let end = traj.states.last().map_or(0.0, |s| s.time.value());
    let k = traj.index_at(cfg.probe_delay).ok_or(SpectraError::ProbeDelayOutside {
        delay: cfg.probe_delay.value(),
        end,
    })?;
    let (target, wrong) = traj.hole_populations(k);
    let population = match probe {
        ProbePolarization::Cross => target,
        ProbePolarization::Co => wrong,
    };
    let peak = cfg.pc_scale * population;
    let dip = cfg.pc_scale * cfg.dip_depth;
    let fwhm = cfg.pulse_fwhm.value();
    let x0 = cfg.trion_binding.value();

    let x = cfg.grid();
    let mut y: Vec<f64> = x
        .iter()
        .map(|&d| peak * gaussian_profile(d, x0, fwhm) - dip * gaussian_profile(d, 0.0, fwhm))
        .collect();
    let sigma = if cfg.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        // independent noise streams for the two probe polarizations
        rng.set_stream(match probe {
            ProbePolarization::Co => 1,
            ProbePolarization::Cross => 2,
        });
        let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
        for v in &mut y {
            *v += noise.sample(&mut rng);
        }
        Some(vec![cfg.noise_sigma; x.len()])
    } else {
        None
    };
    let probe_label = match probe {
        ProbePolarization::Co => "co",
        ProbePolarization::Cross => "cross",
    };
    let meta = SpectrumMeta::new("detuning", "ueV", "photocurrent", "pA")
        .with("probe", probe_label)
        .with("probe_delay_ps", cfg.probe_delay.value())
        .with("rng_seed", cfg.rng_seed)
        .with("noise_sigma_pA", cfg.noise_sigma)
        .with("fss_ueV", traj.fss.value());
    Ok(Spectrum::new(x, y, sigma, meta)?)
}

/// How a fidelity number was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    PeakRatio,
    NoiseFloorBound,
}

/// Fidelity together with the peak fits behind it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelityExtraction {
    pub fidelity: FidelityValue,
    pub estimator: EstimatorKind,
    pub a_cross: f64,
    pub a_cross_sigma: f64,
    pub a_co: f64,
    pub a_co_sigma: f64,
    pub peak_center: f64,
    pub peak_fwhm: f64,
    /// Points entering the noise-floor estimate (0 for the peak ratio).
    pub n_floor: usize,
    /// Photocurrent noise used by the noise-floor estimate, pA.
    pub floor_sigma: f64,
}

/// Smallest reported uncertainty; noiseless fits would otherwise report zero.
const UNCERTAINTY_FLOOR: f64 = 1e-9;

pub fn extract_fidelity(co: &Spectrum, cross: &Spectrum, cfg: &SpectrumConfig) -> Result<FidelityValue, SpectraError> {
    Ok(extract_fidelity_report(co, cross, cfg)?.fidelity)
}

/// Fits the trion peak in the cross spectrum with a free Gaussian, then the
/// co spectrum with the same center and width. `F = A_cross/(A_cross + A_co)`
/// unless the co amplitude is below twice its uncertainty, in which case the
/// noise-floor lower bound replaces it.
pub fn extract_fidelity_report(
    co: &Spectrum,
    cross: &Spectrum,
    cfg: &SpectrumConfig,
) -> Result<FidelityExtraction, SpectraError> {
    cfg.validate()?;
    if co.len() != cross.len() || co.x.iter().zip(&cross.x).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0)) {
        return Err(SpectraError::GridMismatch);
    }
    let fwhm = cfg.pulse_fwhm.value();
    let x0 = cfg.trion_binding.value();
    let window = |s: &Spectrum, half: f64| -> Result<Spectrum, SpectraError> {
        let idx: Vec<usize> = (0..s.len()).filter(|&i| (s.x[i] - x0).abs() <= half).collect();
        Ok(Spectrum::new(
            idx.iter().map(|&i| s.x[i]).collect(),
            idx.iter().map(|&i| s.y[i]).collect(),
            s.sigma.as_ref().map(|sig| idx.iter().map(|&i| sig[i]).collect()),
            s.meta.clone(),
        )?)
    };
    let fit_half = 1.5 * fwhm;
    let cross_w = window(cross, fit_half)?;
    let co_w = window(co, fit_half)?;
    if cross_w.len() < 6 {
        return Err(SpectraError::WindowTooSmall(cross_w.len()));
    }

    let edge = (cross_w.len() / 8).max(1);
    let n = cross_w.len();
    let baseline = (cross_w.y[..edge].iter().sum::<f64>() + cross_w.y[n - edge..].iter().sum::<f64>()) / (2 * edge) as f64;
    let nearest = (0..n)
        .min_by(|&a, &b| (cross_w.x[a] - x0).abs().total_cmp(&(cross_w.x[b] - x0).abs()))
        .unwrap_or(0);
    let start = [cross_w.y[nearest] - baseline, x0, fwhm, baseline];
    let no_signal = |amplitude: f64, sigma: f64| SpectraError::NoCrossSignal { amplitude, sigma };
    let opts = FitOptions {
        max_iter: 500,
        ..Default::default()
    };
    let cross_fit = match fit_with(&Gaussian, &cross_w, Some(&start), &opts) {
        Ok(r) => r,
        Err(FitError::Singular(_)) => return Err(no_signal(start[0], f64::NAN)),
        Err(e) => return Err(e.into()),
    };
    let (a_cross, a_cross_sigma) = (cross_fit.value("A"), cross_fit.uncertainty("A"));
    let center = cross_fit.value("x0");
    let width = cross_fit.value("fwhm");
    if !(a_cross > 3.0 * a_cross_sigma) || !(a_cross > 0.0) || (center - x0).abs() > fwhm {
        return Err(no_signal(a_cross, a_cross_sigma));
    }

    let shape = GaussianFixedShape { x0: center, fwhm: width };
    let co_fit = fit(&shape, &co_w, None)?;
    let (a_co, a_co_sigma) = (co_fit.value("A"), co_fit.uncertainty("A"));

    if a_co < 2.0 * a_co_sigma {
        let in_floor: Vec<usize> = (0..co.len()).filter(|&i| (co.x[i] - center).abs() <= fwhm).collect();
        let n_floor = in_floor.len();
        // the spectrum's own σ when it carries one, else the scatter of the window
        let floor_sigma = match &co.sigma {
            Some(s) => in_floor.iter().map(|&i| s[i]).sum::<f64>() / n_floor.max(1) as f64,
            None if n_floor > 1 => {
                let mean = in_floor.iter().map(|&i| co.y[i]).sum::<f64>() / n_floor as f64;
                let ss = in_floor.iter().map(|&i| (co.y[i] - mean).powi(2)).sum::<f64>();
                (ss / (n_floor - 1) as f64).sqrt()
            }
            None => 0.0,
        };
        let fidelity = fidelity_lower_bound(a_cross, floor_sigma, n_floor)?;
        return Ok(FidelityExtraction {
            fidelity,
            estimator: EstimatorKind::NoiseFloorBound,
            a_cross,
            a_cross_sigma,
            a_co,
            a_co_sigma,
            peak_center: center,
            peak_fwhm: width,
            n_floor,
            floor_sigma,
        });
    }

    let total = a_cross + a_co;
    let f = a_cross / total;
    let sigma_f = ((a_co * a_cross_sigma).powi(2) + (a_cross * a_co_sigma).powi(2)).sqrt() / (total * total);
    Ok(FidelityExtraction {
        fidelity: FidelityValue {
            f,
            is_lower_bound: false,
            uncertainty: Some(sigma_f.max(UNCERTAINTY_FLOOR)),
        },
        estimator: EstimatorKind::PeakRatio,
        a_cross,
        a_cross_sigma,
        a_co,
        a_co_sigma,
        peak_center: center,
        peak_fwhm: width,
        n_floor: 0,
        floor_sigma: 0.0,
    })
}

/// High-resolution CW photocurrent line seen through a half-wave plate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CwLineConfig {
    /// Lorentzian FWHM.
    pub linewidth: Energy,
    pub fss: Energy,
    /// Waveplate angle at which the line sits at `E_V`, degrees.
    pub waveplate_zero: f64,
    /// Peak photocurrent, pA.
    pub amplitude: f64,
    /// Additive white-noise standard deviation, pA.
    pub noise_sigma: f64,
    pub rng_seed: u64,
    /// Scan half-range around `E_V`, µeV.
    pub half_range: f64,
    pub step: f64,
}

impl Default for CwLineConfig {
    fn default() -> Self {
        CwLineConfig {
            linewidth: Energy::new(40.0).unwrap(),
            fss: Energy::ZERO,
            waveplate_zero: 0.0,
            amplitude: 1.0,
            noise_sigma: 0.0,
            rng_seed: 0,
            half_range: 150.0,
            step: 2.0,
        }
    }
}

impl CwLineConfig {
    pub fn validate(&self) -> Result<(), SpectraError> {
        if !(self.linewidth.value() > 0.0) {
            return Err(SpectraError::InvalidConfig("linewidth must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.step > 0.0 && self.half_range > self.step) {
            return Err(SpectraError::InvalidConfig("bad noise or scan grid".into()));
        }
        Ok(())
    }

    /// Line center relative to `E_V` at a waveplate angle (degrees).
    pub fn center(&self, angle: f64) -> f64 {
        let s = (2.0 * (angle - self.waveplate_zero).to_radians()).sin();
        self.fss.value() * s * s
    }
}

/// One CW line scan at a waveplate angle; x is energy relative to `E_V`.
/// Noise is seeded by `rng_seed` and the angle so every scan differs.
pub fn synth_cw_line_scan(cfg: &CwLineConfig, angle: f64) -> Result<Spectrum, SpectraError> {
    cfg.validate()?;
    let center = cfg.center(angle);
    let half = 0.5 * cfg.linewidth.value();
    let n = (2.0 * cfg.half_range / cfg.step).round() as usize;
    let x: Vec<f64> = (0..=n).map(|i| -cfg.half_range + i as f64 * cfg.step).collect();
    let mut y: Vec<f64> = x
        .iter()
        .map(|&e| cfg.amplitude * half * half / ((e - center).powi(2) + half * half))
        .collect();
    let sigma = if cfg.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        rng.set_stream(angle.to_bits());
        let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
        for v in &mut y {
            *v += noise.sample(&mut rng);
        }
        Some(vec![cfg.noise_sigma; x.len()])
    } else {
        None
    };
    let meta = SpectrumMeta::new("energy - E_V", "ueV", "photocurrent", "pA")
        .with("waveplate_deg", angle)
        .with("rng_seed", cfg.rng_seed);
    Ok(Spectrum::new(x, y, sigma, meta)?)
}

/// Line centers across a waveplate rotation and the sin² fit through them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveplateScan {
    pub centers: Spectrum,
    pub fit: FitResult,
}

impl WaveplateScan {
    /// Oscillation amplitude, i.e. the recovered FSS in µeV, with its uncertainty.
    pub fn fss(&self) -> (f64, f64) {
        (self.fit.value("A").abs(), self.fit.uncertainty("A"))
    }
}

/// Fits a Lorentzian to the line at each angle, then `A·sin²(f(θ − θ0)) + c`
/// to the centers.
pub fn waveplate_scan(cfg: &CwLineConfig, angles: &[f64]) -> Result<WaveplateScan, SpectraError> {
    let mut centers = Vec::with_capacity(angles.len());
    let mut sigmas = Vec::with_capacity(angles.len());
    for &angle in angles {
        let line = synth_cw_line_scan(cfg, angle)?;
        let r = fit(&Lorentzian, &line, None)?;
        centers.push(r.value("x0"));
        sigmas.push(r.uncertainty("x0").max(UNCERTAINTY_FLOOR));
    }
    let meta = SpectrumMeta::new("waveplate angle", "deg", "line center - E_V", "ueV").with("rng_seed", cfg.rng_seed);
    let with_sigma = cfg.noise_sigma > 0.0;
    let centers = Spectrum::new(angles.to_vec(), centers, with_sigma.then_some(sigmas), meta)?;
    // the half-wave plate doubles the angle: sin²(2θ)
    let guess = {
        let lo = centers.y.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = centers.y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let k = (0..centers.len()).min_by(|&a, &b| centers.y[a].total_cmp(&centers.y[b])).unwrap_or(0);
        vec![hi - lo, 2.0, centers.x[k], lo]
    };
    let fit = fit(&Sin2, &centers, Some(&guess))?;
    Ok(WaveplateScan { centers, fit })
}
