use std::f64::consts::{LN_2, PI};

use super::{FitModel, ParamSpec};
use crate::analytic::{OseSignConvention, Polarization};
use crate::spectrum::Spectrum;

/// `A·e^{−γt}·cos(δt + φ) + c`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DampedSine;

const DAMPED_SINE_PARAMS: [ParamSpec; 5] = [
    ParamSpec::new("A", "{y}"),
    ParamSpec::new("gamma", "1/{x}"),
    ParamSpec::new("delta", "rad/{x}"),
    ParamSpec::new("phi", "rad"),
    ParamSpec::new("c", "{y}"),
];

impl FitModel for DampedSine {
    fn name(&self) -> &str {
        "damped-sine"
    }

    fn params(&self) -> &[ParamSpec] {
        &DAMPED_SINE_PARAMS
    }

    fn eval(&self, t: f64, p: &[f64]) -> f64 {
        p[0] * (-p[1] * t).exp() * (p[2] * t + p[3]).cos() + p[4]
    }

    fn gradient(&self, t: f64, p: &[f64], out: &mut [f64]) {
        let env = (-p[1] * t).exp();
        let (s, c) = (p[2] * t + p[3]).sin_cos();
        out[0] = env * c;
        out[1] = -t * p[0] * env * c;
        out[2] = -t * p[0] * env * s;
        out[3] = -p[0] * env * s;
        out[4] = 1.0;
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    /// Decay from the energy ratio of the two halves of the record and the
    /// periodogram peak seed a `(γ, δ)` grid; at each node the amplitude,
    /// phase and offset are solved linearly and the best node wins.
    fn initial_guess(&self, data: &Spectrum) -> Vec<f64> {
        let n = data.len();
        let tail = (n / 10).max(1);
        let c = data.y[n - tail..].iter().sum::<f64>() / tail as f64;
        let centered: Vec<f64> = data.y.iter().map(|y| y - c).collect();
        let t0 = data.x[0];
        let span = data.x[n - 1] - t0;
        let nyquist = PI * (n - 1) as f64 / span;

        let (peak, _) = periodogram_peak(&data.x, &centered, 0.0, nyquist, 8 * n);

        let half = n / 2;
        let e1: f64 = centered[..half].iter().map(|v| v * v).sum();
        let e2: f64 = centered[half..].iter().map(|v| v * v).sum();
        let dt_half = data.x[half + (n - half) / 2] - data.x[half / 2];
        let gamma0 = if e2 > 0.0 && e1 > e2 {
            0.5 * (e1 / e2).ln() / dt_half
        } else {
            1.0 / span
        };

        let weights: Vec<f64> = match &data.sigma {
            Some(s) => s.iter().map(|v| 1.0 / (v * v)).collect(),
            None => vec![1.0; n],
        };
        let delta_max = (2.0 * peak).max(4.0 * gamma0).max(8.0 * PI / span).min(nyquist);
        let mut deltas: Vec<f64> = (0..=64).map(|k| delta_max * k as f64 / 64.0).collect();
        deltas.push(peak);
        let mut best = (f64::INFINITY, vec![0.0, gamma0, peak, 0.0, c]);
        for j in -4..=4 {
            let gamma = gamma0 * 2f64.powf(0.5 * j as f64);
            for &delta in &deltas {
                if let Some((rss, p)) = project_damped(&data.x, &data.y, &weights, gamma, delta) {
                    if rss < best.0 {
                        best = (rss, p);
                    }
                }
            }
        }
        best.1
    }

    fn canonicalize(&self, p: &mut [f64]) {
        if p[2] < 0.0 {
            p[2] = -p[2];
            p[3] = -p[3];
        }
        if p[0] < 0.0 {
            p[0] = -p[0];
            p[3] += PI;
        }
        p[3] = wrap_phase(p[3]);
    }
}

/// Weighted linear least squares of `y` on `e^{−γt}cos δt`, `e^{−γt}sin δt`
/// and `1` (just the exponential and `1` when `δ = 0`). Returns the residual
/// sum of squares and the equivalent `[A, γ, δ, φ, c]`.
fn project_damped(x: &[f64], y: &[f64], w: &[f64], gamma: f64, delta: f64) -> Option<(f64, Vec<f64>)> {
    let basis = |t: f64| {
        let env = (-gamma * t).exp();
        let (s, c) = (delta * t).sin_cos();
        [env * c, env * s, 1.0]
    };
    let k = if delta > 0.0 { 3 } else { 2 };
    let pick = |b: [f64; 3]| if k == 3 { b } else { [b[0], b[2], 0.0] };
    let mut m = nalgebra::Matrix3::<f64>::zeros();
    let mut r = nalgebra::Vector3::<f64>::zeros();
    for ((&t, &yi), &wi) in x.iter().zip(y).zip(w) {
        let b = pick(basis(t));
        for i in 0..k {
            r[i] += wi * b[i] * yi;
            for j in 0..k {
                m[(i, j)] += wi * b[i] * b[j];
            }
        }
    }
    if k == 2 {
        m[(2, 2)] = 1.0;
    }
    let coef = m.lu().solve(&r)?;
    if !coef.iter().all(|v| v.is_finite()) {
        return None;
    }
    let rss: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&t, &yi), &wi)| {
            let b = pick(basis(t));
            let f: f64 = (0..k).map(|i| coef[i] * b[i]).sum();
            wi * (yi - f).powi(2)
        })
        .sum();
    let p = if k == 3 {
        vec![coef[0].hypot(coef[1]), gamma, delta, (-coef[1]).atan2(coef[0]), coef[2]]
    } else {
        vec![coef[0], gamma, 0.0, 0.0, coef[1]]
    };
    Some((rss, p))
}

fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Largest `|Σ y·e^{−iωx}|` over `ω ∈ [lo, hi]`, refined parabolically.
/// Returns the frequency and the transform `(re, im)` of `Σ y·e^{+iωx}`'s
/// conjugate, whose argument is the phase of a `cos(ωx + φ)` component.
fn periodogram_peak(x: &[f64], y: &[f64], lo: f64, hi: f64, grid: usize) -> (f64, (f64, f64)) {
    let transform = |w: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (xi, yi) in x.iter().zip(y) {
            let (s, c) = (w * xi).sin_cos();
            re += yi * c;
            im += yi * s;
        }
        (re, im)
    };
    let power = |w: f64| {
        let (re, im) = transform(w);
        re * re + im * im
    };
    let step = (hi - lo) / grid as f64;
    let powers: Vec<f64> = (0..=grid).map(|k| power(lo + k as f64 * step)).collect();
    let k = powers
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(k, _)| k);
    let mut w = lo + k as f64 * step;
    if k > 0 && k < grid {
        let (a, b, c) = (powers[k - 1], powers[k], powers[k + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            w += 0.5 * step * (a - c) / denom;
        }
    }
    // cos(ωx + φ) correlates with e^{-iωx} as e^{iφ}: re = Σ y cos, −im = Σ y·(−sin)
    let (re, im) = transform(w);
    (w, (re, -im))
}

/// `A·(w/2)²/((x − x0)² + (w/2)²) + c`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Lorentzian;

const PEAK_PARAMS: [ParamSpec; 4] = [
    ParamSpec::new("A", "{y}"),
    ParamSpec::new("x0", "{x}"),
    ParamSpec::new("fwhm", "{x}"),
    ParamSpec::new("c", "{y}"),
];

impl FitModel for Lorentzian {
    fn name(&self) -> &str {
        "lorentzian"
    }

    fn params(&self) -> &[ParamSpec] {
        &PEAK_PARAMS
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let h = 0.5 * p[2];
        let u = x - p[1];
        p[0] * h * h / (u * u + h * h) + p[3]
    }

    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        let h = 0.5 * p[2];
        let u = x - p[1];
        let d = u * u + h * h;
        out[0] = h * h / d;
        out[1] = 2.0 * p[0] * h * h * u / (d * d);
        out[2] = p[0] * h * u * u / (d * d);
        out[3] = 1.0;
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn initial_guess(&self, data: &Spectrum) -> Vec<f64> {
        peak_guess(data)
    }

    fn canonicalize(&self, p: &mut [f64]) {
        p[2] = p[2].abs();
    }
}

/// `A·exp(−4 ln2·(x − x0)²/w²) + c`, parameterized by the FWHM `w`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Gaussian;

impl FitModel for Gaussian {
    fn name(&self) -> &str {
        "gaussian"
    }

    fn params(&self) -> &[ParamSpec] {
        &PEAK_PARAMS
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let u = (x - p[1]) / p[2];
        p[0] * (-4.0 * LN_2 * u * u).exp() + p[3]
    }

    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        let w = p[2];
        let u = x - p[1];
        let g = (-4.0 * LN_2 * u * u / (w * w)).exp();
        out[0] = g;
        out[1] = p[0] * g * 8.0 * LN_2 * u / (w * w);
        out[2] = p[0] * g * 8.0 * LN_2 * u * u / (w * w * w);
        out[3] = 1.0;
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn initial_guess(&self, data: &Spectrum) -> Vec<f64> {
        peak_guess(data)
    }

    fn canonicalize(&self, p: &mut [f64]) {
        p[2] = p[2].abs();
    }
}

/// Gaussian of known center and FWHM; only amplitude and offset are free.
#[derive(Debug, Clone, Copy)]
pub struct GaussianFixedShape {
    pub x0: f64,
    pub fwhm: f64,
}

const AMPLITUDE_PARAMS: [ParamSpec; 2] = [ParamSpec::new("A", "{y}"), ParamSpec::new("c", "{y}")];

impl GaussianFixedShape {
    fn profile(&self, x: f64) -> f64 {
        let u = (x - self.x0) / self.fwhm;
        (-4.0 * LN_2 * u * u).exp()
    }
}

impl FitModel for GaussianFixedShape {
    fn name(&self) -> &str {
        "gaussian-fixed-shape"
    }

    fn params(&self) -> &[ParamSpec] {
        &AMPLITUDE_PARAMS
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[0] * self.profile(x) + p[1]
    }

    fn gradient(&self, x: f64, _p: &[f64], out: &mut [f64]) {
        out[0] = self.profile(x);
        out[1] = 1.0;
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn initial_guess(&self, data: &Spectrum) -> Vec<f64> {
        let basis: Vec<f64> = data.x.iter().map(|&x| self.profile(x)).collect();
        let (slope, intercept) = weighted_line(&basis, data);
        vec![slope, intercept]
    }
}

/// `A·sin²(f·(θ − θ0)) + c` with θ in degrees.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sin2;

const SIN2_PARAMS: [ParamSpec; 4] = [
    ParamSpec::new("A", "{y}"),
    ParamSpec::new("f", "1"),
    ParamSpec::new("theta0", "{x}"),
    ParamSpec::new("c", "{y}"),
];

const DEG: f64 = PI / 180.0;

impl FitModel for Sin2 {
    fn name(&self) -> &str {
        "sin2"
    }

    fn params(&self) -> &[ParamSpec] {
        &SIN2_PARAMS
    }

    fn eval(&self, theta: f64, p: &[f64]) -> f64 {
        let s = (p[1] * (theta - p[2]) * DEG).sin();
        p[0] * s * s + p[3]
    }

    fn gradient(&self, theta: f64, p: &[f64], out: &mut [f64]) {
        let u = p[1] * (theta - p[2]) * DEG;
        let s = u.sin();
        let s2u = (2.0 * u).sin();
        out[0] = s * s;
        out[1] = p[0] * s2u * (theta - p[2]) * DEG;
        out[2] = -p[0] * s2u * p[1] * DEG;
        out[3] = 1.0;
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn initial_guess(&self, data: &Spectrum) -> Vec<f64> {
        let n = data.len();
        let (lo, hi) = data
            .y
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let mean = data.y.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = data.y.iter().map(|y| y - mean).collect();
        let span = (data.x[n - 1] - data.x[0]).abs();
        let spacing = span / (n - 1) as f64;
        // sin²(u) oscillates as cos(2u): search ω = 2f·DEG
        let lo_w = PI / span;
        let hi_w = PI / spacing;
        let (w, (re, im)) = periodogram_peak(&data.x, &centered, lo_w, hi_w, 16 * n);
        let f = w / (2.0 * DEG);
        // centered ≈ −(A/2)·cos(ωθ − ωθ0), so −transform has phase −ωθ0
        let theta0 = -(-im).atan2(-re) / w;
        let mut p = vec![hi - lo, f, theta0, lo];
        self.canonicalize(&mut p);
        p
    }

    /// `f > 0`, `θ0 ∈ [0°, 90°/f)`; the half-period shift is absorbed by
    /// flipping the sign of `A` and moving `c`.
    fn canonicalize(&self, p: &mut [f64]) {
        p[1] = p[1].abs();
        if p[1] == 0.0 {
            return;
        }
        let period = 180.0 / p[1];
        let mut theta0 = p[2].rem_euclid(period);
        if theta0 >= 0.5 * period {
            theta0 -= 0.5 * period;
            p[3] += p[0];
            p[0] = -p[0];
        }
        p[2] = theta0;
    }
}

/// `m·x + b`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Linear;

const LINEAR_PARAMS: [ParamSpec; 2] = [ParamSpec::new("m", "{y}/{x}"), ParamSpec::new("b", "{y}")];

impl FitModel for Linear {
    fn name(&self) -> &str {
        "linear"
    }

    fn params(&self) -> &[ParamSpec] {
        &LINEAR_PARAMS
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[0] * x + p[1]
    }

    fn gradient(&self, x: f64, _p: &[f64], out: &mut [f64]) {
        out[0] = x;
        out[1] = 1.0;
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn initial_guess(&self, data: &Spectrum) -> Vec<f64> {
        let (m, b) = weighted_line(&data.x, data);
        vec![m, b]
    }
}

/// Weighted least-squares line `y ≈ m·u + b` for a regressor `u`.
fn weighted_line(u: &[f64], data: &Spectrum) -> (f64, f64) {
    let (mut sw, mut su, mut sy, mut suu, mut suy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..data.len() {
        let w = data.sigma_or_unit(i).powi(-2);
        sw += w;
        su += w * u[i];
        sy += w * data.y[i];
        suu += w * u[i] * u[i];
        suy += w * u[i] * data.y[i];
    }
    let det = sw * suu - su * su;
    if det.abs() <= f64::EPSILON * sw * suu {
        return (0.0, sy / sw);
    }
    ((sw * suy - su * sy) / det, (suu * sy - su * suy) / det)
}

/// FSS under CW drive with the dipole constant `a` (meV²·µm²·W⁻¹) and
/// screening slope `k` (eV·µm²·W⁻¹) free; x is intensity in kW·cm⁻² and the
/// result is the unclamped FSS in µeV.
#[derive(Debug, Clone, Copy)]
pub struct OseFss {
    pub polarization: Polarization,
    pub convention: OseSignConvention,
    /// `ħδ_FS` at zero intensity, µeV.
    pub fss_zero: f64,
    /// `ħΔ_CW` at zero intensity, µeV.
    pub delta_cw_zero: f64,
}

const OSE_PARAMS: [ParamSpec; 2] = [ParamSpec::new("a", "meV2*um2/W"), ParamSpec::new("k", "eV*um2/W")];

/// kW·cm⁻² → W·µm⁻², times the meV²→µeV² (or eV→µeV) factor.
const OSE_SCALE: f64 = 1.0e-5 * 1.0e6;

impl OseFss {
    fn sign(&self) -> f64 {
        match self.convention {
            OseSignConvention::Physical => self.polarization.sign(),
            OseSignConvention::Literal => -self.polarization.sign(),
        }
    }
}

impl FitModel for OseFss {
    fn name(&self) -> &str {
        "ose-fss"
    }

    fn params(&self) -> &[ParamSpec] {
        &OSE_PARAMS
    }

    fn eval(&self, intensity: f64, p: &[f64]) -> f64 {
        let delta = self.delta_cw_zero - p[1] * OSE_SCALE * intensity;
        let omega2 = p[0] * OSE_SCALE * intensity;
        if delta <= 0.0 || p[0] < 0.0 {
            return f64::NAN;
        }
        self.fss_zero + self.sign() * 0.5 * omega2 / ((delta * delta + omega2).sqrt() + delta)
    }

    fn gradient(&self, intensity: f64, p: &[f64], out: &mut [f64]) {
        let delta = self.delta_cw_zero - p[1] * OSE_SCALE * intensity;
        let omega2 = p[0] * OSE_SCALE * intensity;
        let root = (delta * delta + omega2).sqrt();
        let s = self.sign();
        if root == 0.0 {
            out[0] = f64::NAN;
            out[1] = f64::NAN;
            return;
        }
        out[0] = s * 0.25 * OSE_SCALE * intensity / root;
        out[1] = -s * 0.5 * (delta / root - 1.0) * OSE_SCALE * intensity;
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    /// Coarse grid over `a` (log-spaced) and `k` (keeping the detuning
    /// positive across the data).
    fn initial_guess(&self, data: &Spectrum) -> Vec<f64> {
        let i_max = data.x.iter().fold(0.0f64, |m, &v| m.max(v));
        let k_max = if i_max > 0.0 {
            0.95 * self.delta_cw_zero / (OSE_SCALE * i_max)
        } else {
            1.0
        };
        let cost = |p: &[f64]| -> f64 {
            (0..data.len())
                .map(|i| ((data.y[i] - self.eval(data.x[i], p)) / data.sigma_or_unit(i)).powi(2))
                .sum::<f64>()
        };
        let mut best = (f64::INFINITY, vec![100.0, 0.0]);
        for ia in 0..48 {
            let a = 10f64.powf(0.5 + 3.5 * ia as f64 / 47.0);
            for ik in 0..48 {
                let k = k_max * ik as f64 / 48.0;
                let c = cost(&[a, k]);
                if c < best.0 {
                    best = (c, vec![a, k]);
                }
            }
        }
        best.1
    }
}

/// Offset from the record edges, peak at the largest excursion, FWHM from
/// half-maximum crossings.
fn peak_guess(data: &Spectrum) -> Vec<f64> {
    let n = data.len();
    let edge = (n / 10).max(1);
    let c = (data.y[..edge].iter().sum::<f64>() + data.y[n - edge..].iter().sum::<f64>()) / (2 * edge) as f64;
    let k = (0..n)
        .max_by(|&a, &b| (data.y[a] - c).abs().total_cmp(&(data.y[b] - c).abs()))
        .unwrap_or(0);
    let amp = data.y[k] - c;
    let half = 0.5 * amp.abs();
    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = k;
        for i in range {
            if (data.y[i] - c).abs() < half {
                let (y0, y1) = ((data.y[prev] - c).abs(), (data.y[i] - c).abs());
                let frac = if y0 != y1 { (y0 - half) / (y0 - y1) } else { 0.5 };
                return Some(data.x[prev] + frac * (data.x[i] - data.x[prev]));
            }
            prev = i;
        }
        None
    };
    let left = crossing(&mut (0..k).rev());
    let right = crossing(&mut (k + 1..n));
    let x0 = data.x[k];
    let fwhm = match (left, right) {
        (Some(l), Some(r)) => (r - l).abs(),
        (Some(l), None) => 2.0 * (x0 - l).abs(),
        (None, Some(r)) => 2.0 * (r - x0).abs(),
        (None, None) => 0.25 * (data.x[n - 1] - data.x[0]).abs(),
    };
    let spacing = ((data.x[n - 1] - data.x[0]) / (n - 1) as f64).abs();
    vec![amp, x0, fwhm.max(spacing), c]
}
