//! Fixed-step integrator for the exciton-ionization level scheme.
//!
//! Five levels: the empty dot `0`, the two circular-basis neutral excitons
//! `X↑⇓`, `X↓⇑`, and the single-hole spin states `h⇑`, `h⇓`. The excitons are
//! coupled by `H = (ħδ_FS/2)·σx` and all decay at `ΓX = Γr + Γe + Γh`.
//! Electron tunneling moves `X↑⇓ → h⇓` and `X↓⇑ → h⇑` at `Γe`; radiative
//! recombination and hole tunneling empty the exciton at `Γr + Γh`; holes
//! tunnel out at `Γh`.
//!
//! Hole states never acquire coherence with the other levels, so the state is
//! closed over the `{0, X↑⇓, X↓⇑}` density-matrix block plus the two hole
//! populations. The pump is an instantaneous rotation on `{0, X_pumped}`.

use std::io::Write;

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{FidelityValue, ModelError, QuantumDotParams};
use crate::spectrum::{Spectrum, SpectrumMeta};
use crate::units::{energy_to_rate_units, Energy, Time};

/// Largest allowed `dt·max(δ_FS, ΓX)`.
pub const STEP_GUARD: f64 = 0.05;
/// Allowed drift of the total probability over a trajectory.
pub const TRACE_TOLERANCE: f64 = 1e-7;
/// Allowed negative excursion of any population.
pub const POSITIVITY_TOLERANCE: f64 = 1e-10;
/// Exciton population below which the hole populations count as settled.
pub const SETTLED_EXCITON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("time step too coarse: dt·max(δ, ΓX) = {0:.4} exceeds {STEP_GUARD}")]
    StepTooLarge(f64),
    #[error("invalid evolution spec: {0}")]
    InvalidSpec(String),
    #[error("positivity lost at t = {time} ps: {detail}")]
    PositivityLoss { time: f64, detail: String },
    #[error("total probability drifted to {trace} at t = {time} ps")]
    TraceDrift { time: f64, trace: f64 },
    #[error("exciton population {0:e} has not decayed below {SETTLED_EXCITON:e}; extend t_max")]
    NotSettled(f64),
    #[error("no hole population left to read out")]
    NoSignal,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PumpPolarization {
    /// Creates `X↑⇓`, which ionizes to `h⇓`.
    #[default]
    #[serde(rename = "sigma+")]
    SigmaPlus,
    /// Creates `X↓⇑`, which ionizes to `h⇑`.
    #[serde(rename = "sigma-")]
    SigmaMinus,
}

impl PumpPolarization {
    /// Index of the addressed exciton in `[X↑⇓, X↓⇑]`.
    fn exciton_index(self) -> usize {
        match self {
            PumpPolarization::SigmaPlus => 0,
            PumpPolarization::SigmaMinus => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PumpSpec {
    pub polarization: PumpPolarization,
    /// Pulse area in radians.
    pub pulse_area: f64,
    pub arrival: Time,
}

impl Default for PumpSpec {
    fn default() -> Self {
        PumpSpec {
            polarization: PumpPolarization::SigmaPlus,
            pulse_area: std::f64::consts::PI,
            arrival: Time::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSpec {
    pub qd: QuantumDotParams,
    /// Replaces `qd.fss_zero` when set.
    pub fss_override: Option<Energy>,
    pub t_max: Time,
    pub dt: Time,
    pub pump: PumpSpec,
    /// Keep every n-th step in the trajectory (the last step is always kept).
    pub record_stride: usize,
}

impl EvolutionSpec {
    pub fn new(qd: QuantumDotParams, t_max: Time, dt: Time) -> Self {
        EvolutionSpec {
            qd,
            fss_override: None,
            t_max,
            dt,
            pump: PumpSpec::default(),
            record_stride: 1,
        }
    }

    /// A spec long enough for the exciton to empty below [`SETTLED_EXCITON`],
    /// with `dt·max(δ, ΓX) = resolution`.
    pub fn settled(qd: QuantumDotParams, fss: Energy, resolution: f64) -> Result<Self, DynamicsError> {
        let gamma_x = qd.gamma_x().value();
        if !(gamma_x > 0.0) {
            return Err(DynamicsError::InvalidSpec("ΓX must be positive".into()));
        }
        let delta = energy_to_rate_units(fss).abs();
        let dt = resolution.min(STEP_GUARD) / delta.max(gamma_x);
        // e^{-ΓX t} < 1e-9 leaves a decade of margin under SETTLED_EXCITON
        let steps = ((9.0 * std::f64::consts::LN_10) / gamma_x / dt).ceil();
        let steps_per_record = (steps / 2000.0).ceil().max(1.0) as usize;
        Ok(EvolutionSpec {
            qd,
            fss_override: Some(fss),
            t_max: Time::new(steps * dt).map_err(ModelError::from)?,
            dt: Time::new(dt).map_err(ModelError::from)?,
            pump: PumpSpec::default(),
            record_stride: steps_per_record,
        })
    }

    /// A spec recording exactly `samples` evenly spaced states on `[0, t_max]`,
    /// with the step refined until `dt·max(δ, ΓX) ≤ resolution`.
    pub fn sampled(qd: QuantumDotParams, fss: Energy, t_max: Time, samples: usize, resolution: f64) -> Result<Self, DynamicsError> {
        if samples < 2 || !(t_max.value() > 0.0) {
            return Err(DynamicsError::InvalidSpec("need t_max > 0 and at least 2 samples".into()));
        }
        let rate = energy_to_rate_units(fss).abs().max(qd.gamma_x().value());
        let interval = t_max.value() / (samples - 1) as f64;
        let stride = (interval * rate / resolution.min(STEP_GUARD)).ceil().max(1.0) as usize;
        Ok(EvolutionSpec {
            qd,
            fss_override: Some(fss),
            t_max,
            dt: Time::new(interval / stride as f64).map_err(ModelError::from)?,
            pump: PumpSpec::default(),
            record_stride: stride,
        })
    }

    pub fn fss(&self) -> Energy {
        self.fss_override.unwrap_or(self.qd.fss_zero)
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        let dt = self.dt.value();
        if !(dt > 0.0) {
            return Err(DynamicsError::InvalidSpec("dt must be positive".into()));
        }
        if !(self.t_max.value() >= 0.0) {
            return Err(DynamicsError::InvalidSpec("t_max must be non-negative".into()));
        }
        if self.record_stride == 0 {
            return Err(DynamicsError::InvalidSpec("record_stride must be at least 1".into()));
        }
        let area = self.pump.pulse_area;
        if !(0.0..=2.0 * std::f64::consts::PI).contains(&area) {
            return Err(DynamicsError::InvalidSpec(format!("pulse area {area} outside [0, 2π]")));
        }
        if self.pump.arrival > self.t_max {
            return Err(DynamicsError::InvalidSpec("pump arrives after t_max".into()));
        }
        let scale = energy_to_rate_units(self.fss()).abs().max(self.qd.gamma_x().value());
        if dt * scale > STEP_GUARD {
            return Err(DynamicsError::StepTooLarge(dt * scale));
        }
        Ok(())
    }
}

/// Density-matrix snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    /// Exciton block over `[X↑⇓, X↓⇑]`.
    pub rho_x: [[Complex64; 2]; 2],
    /// `⟨0|ρ|X⟩` for both excitons; nonzero only after a partial pump.
    pub empty_coherence: [Complex64; 2],
    pub p_empty: f64,
    /// Population of `h⇑`.
    pub p_hole_up: f64,
    /// Population of `h⇓`.
    pub p_hole_down: f64,
    pub time: Time,
}

impl SystemState {
    pub fn vacuum() -> Self {
        let zero = Complex64::new(0.0, 0.0);
        SystemState {
            rho_x: [[zero; 2]; 2],
            empty_coherence: [zero; 2],
            p_empty: 1.0,
            p_hole_up: 0.0,
            p_hole_down: 0.0,
            time: Time::ZERO,
        }
    }

    pub fn exciton_population(&self) -> f64 {
        self.rho_x[0][0].re + self.rho_x[1][1].re
    }

    pub fn trace(&self) -> f64 {
        self.exciton_population() + self.p_empty + self.p_hole_up + self.p_hole_down
    }

    fn check(&self) -> Result<(), DynamicsError> {
        let t = self.time.value();
        let trace = self.trace();
        if (trace - 1.0).abs() > TRACE_TOLERANCE {
            return Err(DynamicsError::TraceDrift { time: t, trace });
        }
        let pops = [
            ("p(X↑⇓)", self.rho_x[0][0].re),
            ("p(X↓⇑)", self.rho_x[1][1].re),
            ("p(0)", self.p_empty),
            ("p(h⇑)", self.p_hole_up),
            ("p(h⇓)", self.p_hole_down),
        ];
        if let Some((name, v)) = pops.iter().find(|(_, v)| *v < -POSITIVITY_TOLERANCE) {
            return Err(DynamicsError::PositivityLoss {
                time: t,
                detail: format!("{name} = {v:e}"),
            });
        }
        let (a, b) = (self.rho_x[0][0].re, self.rho_x[1][1].re);
        let coh = self.rho_x[0][1].norm_sqr();
        let lambda_min = 0.5 * (a + b - ((a - b).powi(2) + 4.0 * coh).sqrt());
        if lambda_min < -POSITIVITY_TOLERANCE {
            return Err(DynamicsError::PositivityLoss {
                time: t,
                detail: format!("exciton block eigenvalue {lambda_min:e}"),
            });
        }
        Ok(())
    }

    fn block(&self) -> Matrix3<Complex64> {
        let c = self.empty_coherence;
        let r = self.rho_x;
        let p0 = Complex64::new(self.p_empty, 0.0);
        Matrix3::new(
            p0, c[0], c[1],
            c[0].conj(), r[0][0], r[0][1],
            c[1].conj(), r[1][0], r[1][1],
        )
    }

    fn set_block(&mut self, m: &Matrix3<Complex64>) {
        self.p_empty = m[(0, 0)].re;
        self.empty_coherence = [m[(0, 1)], m[(0, 2)]];
        self.rho_x = [[m[(1, 1)], m[(1, 2)]], [m[(2, 1)], m[(2, 2)]]];
    }

    fn apply_pump(&mut self, pump: &PumpSpec) {
        let half = 0.5 * pump.pulse_area;
        let (s, c) = half.sin_cos();
        let k = 1 + pump.polarization.exciton_index();
        let mut u = Matrix3::<Complex64>::identity();
        u[(0, 0)] = Complex64::new(c, 0.0);
        u[(k, k)] = Complex64::new(c, 0.0);
        u[(0, k)] = Complex64::new(0.0, -s);
        u[(k, 0)] = Complex64::new(0.0, -s);
        let rotated = u * self.block() * u.adjoint();
        self.set_block(&rotated);
    }

    fn pack(&self) -> [f64; 11] {
        let r = &self.rho_x;
        let c = &self.empty_coherence;
        [
            r[0][0].re, r[1][1].re, r[0][1].re, r[0][1].im,
            c[0].re, c[0].im, c[1].re, c[1].im,
            self.p_empty, self.p_hole_up, self.p_hole_down,
        ]
    }

    fn unpack(v: &[f64; 11], time: Time) -> Self {
        let ab = Complex64::new(v[2], v[3]);
        SystemState {
            rho_x: [
                [Complex64::new(v[0], 0.0), ab],
                [ab.conj(), Complex64::new(v[1], 0.0)],
            ],
            empty_coherence: [Complex64::new(v[4], v[5]), Complex64::new(v[6], v[7])],
            p_empty: v[8],
            p_hole_up: v[9],
            p_hole_down: v[10],
            time,
        }
    }
}

/// Rates in ps⁻¹ and the precession frequency in rad·ps⁻¹.
#[derive(Debug, Clone, Copy)]
struct Generator {
    delta: f64,
    gamma_x: f64,
    gamma_e: f64,
    gamma_h: f64,
    gamma_to_empty: f64,
}

impl Generator {
    /// Transfer terms: exciton decay feeding the holes and the empty dot,
    /// and hole tunneling back to the empty dot.
    fn transfer(&self, v: &[f64; 11]) -> [f64; 3] {
        let (aa, bb, up, down) = (v[0], v[1], v[9], v[10]);
        [
            self.gamma_to_empty * (aa + bb) + self.gamma_h * (up + down),
            self.gamma_e * bb,
            self.gamma_e * aa,
        ]
    }

    /// Exact flow of the linear part over `h`: precession and `ΓX` decay of
    /// the exciton block, `ΓX/2` decay of the empty-exciton coherences, `Γh`
    /// decay of the holes.
    fn flow(&self, v: &[f64; 11], h: f64) -> [f64; 11] {
        let (s, c) = (0.5 * self.delta * h).sin_cos();
        let i = Complex64::i();
        let u = [[Complex64::new(c, 0.0), -i * s], [-i * s, Complex64::new(c, 0.0)]];
        let ab = Complex64::new(v[2], v[3]);
        let rho = [[Complex64::new(v[0], 0.0), ab], [ab.conj(), Complex64::new(v[1], 0.0)]];
        let mut out = [0.0; 11];
        let decay = (-self.gamma_x * h).exp();
        let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (r, row) in m.iter_mut().enumerate() {
            for (q, cell) in row.iter_mut().enumerate() {
                for k in 0..2 {
                    for l in 0..2 {
                        *cell += u[r][k] * rho[k][l] * u[q][l].conj();
                    }
                }
                *cell *= decay;
            }
        }
        out[0] = m[0][0].re;
        out[1] = m[1][1].re;
        out[2] = m[0][1].re;
        out[3] = m[0][1].im;
        let half = (-0.5 * self.gamma_x * h).exp();
        let (ca, cb) = (Complex64::new(v[4], v[5]), Complex64::new(v[6], v[7]));
        let na = half * (ca * c + i * s * cb);
        let nb = half * (cb * c + i * s * ca);
        out[4] = na.re;
        out[5] = na.im;
        out[6] = nb.re;
        out[7] = nb.im;
        let hole = (-self.gamma_h * h).exp();
        out[8] = v[8];
        out[9] = hole * v[9];
        out[10] = hole * v[10];
        out
    }

    /// Integrating-factor (Lawson) fourth-order Runge–Kutta step. The
    /// linear part is propagated exactly; the stages integrate the transfer
    /// terms, which only act on the empty-dot and hole populations.
    fn rk4_step(&self, v: &[f64; 11], dt: f64) -> [f64; 11] {
        let hole_half = (-self.gamma_h * 0.5 * dt).exp();
        let hole_full = hole_half * hole_half;
        let carry = |k: &[f64; 3], f: f64| [k[0], f * k[1], f * k[2]];
        let add = |mut base: [f64; 11], k: &[f64; 3], h: f64| {
            base[8] += h * k[0];
            base[9] += h * k[1];
            base[10] += h * k[2];
            base
        };
        let mid = self.flow(v, 0.5 * dt);
        let end = self.flow(v, dt);
        let k1 = self.transfer(v);
        let k2 = self.transfer(&add(mid, &carry(&k1, hole_half), 0.5 * dt));
        let k3 = self.transfer(&add(mid, &k2, 0.5 * dt));
        let k4 = self.transfer(&add(end, &carry(&k3, hole_half), dt));
        let k1 = carry(&k1, hole_full);
        let k23 = carry(&[k2[0] + k3[0], k2[1] + k3[1], k2[2] + k3[2]], hole_half);
        let mut out = end;
        for j in 0..3 {
            out[8 + j] += dt / 6.0 * (k1[j] + 2.0 * k23[j] + k4[j]);
        }
        out
    }
}

/// Time-ordered states; the first is at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<SystemState>,
    pub pump: PumpSpec,
    pub fss: Energy,
}

impl Trajectory {
    fn co_index(&self) -> usize {
        self.pump.polarization.exciton_index()
    }

    /// Population of the pumped exciton spin state.
    pub fn n_co(&self, k: usize) -> f64 {
        let i = self.co_index();
        self.states[k].rho_x[i][i].re
    }

    pub fn n_cross(&self, k: usize) -> f64 {
        let i = 1 - self.co_index();
        self.states[k].rho_x[i][i].re
    }

    /// `⟨co|ρ|cross⟩`.
    pub fn coherence(&self, k: usize) -> Complex64 {
        let i = self.co_index();
        self.states[k].rho_x[i][1 - i]
    }

    /// `(target, wrong)` hole populations, where the target is the spin left
    /// behind by ionizing the pumped exciton.
    pub fn hole_populations(&self, k: usize) -> (f64, f64) {
        let s = &self.states[k];
        match self.pump.polarization {
            PumpPolarization::SigmaPlus => (s.p_hole_down, s.p_hole_up),
            PumpPolarization::SigmaMinus => (s.p_hole_up, s.p_hole_down),
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.time.value())
    }

    /// Index of the recorded state closest to `t`, if `t` lies inside the trajectory.
    pub fn index_at(&self, t: Time) -> Option<usize> {
        let first = self.states.first()?.time.value();
        let last = self.states.last()?.time.value();
        let t = t.value();
        if t < first || t > last {
            return None;
        }
        let k = self.states.partition_point(|s| s.time.value() < t);
        if k == 0 {
            return Some(0);
        }
        let below = self.states[k - 1].time.value();
        let above = self.states.get(k).map_or(f64::INFINITY, |s| s.time.value());
        Some(if t - below <= above - t { k - 1 } else { k })
    }

    /// CSV with columns time_ps, n_co, n_cross, re_coherence, im_coherence,
    /// p_hole_up, p_hole_down, p_empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "time_ps", "n_co", "n_cross", "re_coherence", "im_coherence", "p_hole_up", "p_hole_down", "p_empty",
        ])?;
        for (k, s) in self.states.iter().enumerate() {
            let c = self.coherence(k);
            w.write_record(
                [
                    s.time.value(),
                    self.n_co(k),
                    self.n_cross(k),
                    c.re,
                    c.im,
                    s.p_hole_up,
                    s.p_hole_down,
                    s.p_empty,
                ]
                .iter()
                .map(|v| v.to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Integrates the scheme from the empty dot at fixed step.
pub fn evolve(spec: &EvolutionSpec) -> Result<Trajectory, DynamicsError> {
    spec.validate()?;
    let qd = &spec.qd;
    let gen = Generator {
        delta: energy_to_rate_units(spec.fss()),
        gamma_x: qd.gamma_x().value(),
        gamma_e: qd.gamma_e.value(),
        gamma_h: qd.gamma_h.value(),
        gamma_to_empty: qd.gamma_r.value() + qd.gamma_h.value(),
    };
    let dt = spec.dt.value();
    let n_steps = (spec.t_max.value() / dt).round() as usize;
    let pump_step = (spec.pump.arrival.value() / dt).round() as usize;

    let mut state = SystemState::vacuum();
    if pump_step == 0 {
        state.apply_pump(&spec.pump);
    }
    state.check()?;
    let mut states = Vec::with_capacity(n_steps / spec.record_stride + 2);
    states.push(state);

    let mut v = state.pack();
    for k in 1..=n_steps {
        v = gen.rk4_step(&v, dt);
        let time = Time::new(k as f64 * dt).map_err(ModelError::from)?;
        let mut s = SystemState::unpack(&v, time);
        if k == pump_step {
            s.apply_pump(&spec.pump);
            v = s.pack();
        }
        s.check()?;
        if k % spec.record_stride == 0 || k == n_steps || k == pump_step {
            states.push(s);
        }
    }
    Ok(Trajectory {
        states,
        pump: spec.pump,
        fss: spec.fss(),
    })
}

/// Target-spin fraction of the hole population at the end of the trajectory.
///
/// Once the exciton has emptied both hole populations decay at the same
/// `Γh`, so the ratio no longer depends on when it is read.
pub fn steady_hole_fidelity(traj: &Trajectory) -> Result<FidelityValue, DynamicsError> {
    let last = traj.states.len() - 1;
    let remaining = traj.states[last].exciton_population();
    if remaining > SETTLED_EXCITON {
        return Err(DynamicsError::NotSettled(remaining));
    }
    let (target, wrong) = traj.hole_populations(last);
    let total = target + wrong;
    if !(total > 1e-12) {
        return Err(DynamicsError::NoSignal);
    }
    Ok(FidelityValue::exact(target / total))
}

/// `n_co(t) − n_cross(t)` on the trajectory grid.
pub fn beat_signal(traj: &Trajectory) -> Spectrum {
    let x: Vec<f64> = traj.times().collect();
    let y: Vec<f64> = (0..traj.states.len()).map(|k| traj.n_co(k) - traj.n_cross(k)).collect();
    let meta = SpectrumMeta::new("time", "ps", "n_co - n_cross", "population")
        .with("fss_ueV", traj.fss.value());
    Spectrum {
        x,
        y,
        sigma: None,
        meta,
    }
}

/// Hole-spin fidelity from a full simulation, settling automatically.
pub fn simulate_fidelity(qd: &QuantumDotParams, fss: Energy, resolution: f64) -> Result<FidelityValue, DynamicsError> {
    let spec = EvolutionSpec::settled(*qd, fss, resolution)?;
    steady_hole_fidelity(&evolve(&spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::fidelity_godden;
    use crate::units::Rate;

    fn dot(gamma_e: f64, gamma_r: f64, gamma_h: f64) -> QuantumDotParams {
        QuantumDotParams {
            gamma_e: Rate::new(gamma_e).unwrap(),
            gamma_r: Rate::new(gamma_r).unwrap(),
            gamma_h: Rate::new(gamma_h).unwrap(),
            ..Default::default()
        }
    }

    fn spec(qd: QuantumDotParams, fss: f64, t_max: f64, dt: f64) -> EvolutionSpec {
        EvolutionSpec {
            fss_override: Some(Energy::new(fss).unwrap()),
            ..EvolutionSpec::new(qd, Time::new(t_max).unwrap(), Time::new(dt).unwrap())
        }
    }

    #[test]
    fn zero_fss_initializes_perfectly() {
        let traj = evolve(&spec(dot(0.021, 0.0, 0.0), 0.0, 1500.0, 0.1)).unwrap();
        assert!((0..traj.states.len()).all(|k| traj.n_cross(k) == 0.0));
        let last = traj.states.last().unwrap();
        assert_eq!(last.p_hole_up, 0.0);
        assert_eq!(steady_hole_fidelity(&traj).unwrap().f, 1.0);
    }

    #[test]
    fn co_population_matches_closed_form() {
        let qd = dot(0.021, 0.0, 0.0);
        let traj = evolve(&spec(qd, 31.2, 400.0, 0.05)).unwrap();
        let d = energy_to_rate_units(Energy::new(31.2).unwrap());
        for k in (0..traj.states.len()).step_by(37) {
            let t = traj.states[k].time.value();
            let expect = (-0.021 * t).exp() * (0.5 * d * t).cos().powi(2);
            assert!((traj.n_co(k) - expect).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn beat_signal_closed_form() {
        let traj = evolve(&spec(dot(0.021, 0.0, 0.0), 31.2, 400.0, 0.05)).unwrap();
        let beat = beat_signal(&traj);
        let d = energy_to_rate_units(Energy::new(31.2).unwrap());
        assert_eq!(beat.y[0], 1.0);
        let max_err = beat
            .x
            .iter()
            .zip(&beat.y)
            .map(|(t, y)| (y - (-0.021 * t).exp() * (d * t).cos()).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-8, "{max_err}");
        // first zero crossing at π/(2δ) ≈ 33.1 ps
        let first = beat.y.iter().position(|&y| y < 0.0).unwrap();
        assert!((beat.x[first] - 33.1).abs() < 0.1);
        assert!((std::f64::consts::PI / (2.0 * d) - 33.1).abs() < 0.05);
        assert!((2.0 * std::f64::consts::PI / d - 132.6).abs() < 0.1);
    }

    #[test]
    fn zero_fss_beat_is_pure_exponential() {
        let traj = evolve(&spec(dot(0.021, 0.0, 0.0), 0.0, 200.0, 0.1)).unwrap();
        let beat = beat_signal(&traj);
        for (t, y) in beat.x.iter().zip(&beat.y) {
            assert!((y - (-0.021 * t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn full_rabi_cycle_leaves_vacuum() {
        let mut s = spec(dot(0.021, 0.001, 0.0005), 20.0, 500.0, 0.1);
        s.pump.pulse_area = 2.0 * std::f64::consts::PI;
        let traj = evolve(&s).unwrap();
        for st in &traj.states {
            assert!((st.p_empty - 1.0).abs() < 1e-15);
            assert!(st.exciton_population().abs() < 1e-30);
            assert!(st.p_hole_down.abs() < 1e-30 && st.p_hole_up.abs() < 1e-30);
        }
    }

    #[test]
    fn steady_fidelity_matches_closed_form_example() {
        let traj = evolve(&spec(dot(0.021, 0.0, 0.0), 2.01, 2000.0, 0.05)).unwrap();
        let f = steady_hole_fidelity(&traj).unwrap().f;
        assert!((f - 0.98965).abs() < 1e-5, "{f}");
        let g = fidelity_godden(Energy::new(2.01).unwrap(), Rate::new(0.021).unwrap(), Rate::ZERO).unwrap().f;
        assert!(((f - g) / g).abs() < 1e-6);
    }

    #[test]
    fn steady_fidelity_with_hole_loss() {
        let qd = dot(0.021 - 0.0005, 0.0005, 0.0002);
        let fss = Energy::new(13.2).unwrap();
        let f = simulate_fidelity(&qd, fss, 0.01).unwrap().f;
        let g = fidelity_godden(fss, qd.gamma_x(), qd.gamma_h).unwrap().f;
        assert!(((f - g) / g).abs() < 1e-6, "{f} vs {g}");
    }

    #[test]
    fn sigma_minus_targets_hole_up() {
        let mut s = spec(dot(0.021, 0.0, 0.0), 5.0, 1500.0, 0.1);
        s.pump.polarization = PumpPolarization::SigmaMinus;
        let traj = evolve(&s).unwrap();
        let last = traj.states.last().unwrap();
        assert!(last.p_hole_up > last.p_hole_down);
        assert!(steady_hole_fidelity(&traj).unwrap().f > 0.9);
    }

    #[test]
    fn partial_pump_and_late_arrival() {
        let mut s = spec(dot(0.021, 0.001, 0.0), 10.0, 300.0, 0.1);
        s.pump.pulse_area = std::f64::consts::FRAC_PI_2;
        s.pump.arrival = Time::new(50.0).unwrap();
        let traj = evolve(&s).unwrap();
        assert_eq!(traj.states[0].time, Time::ZERO);
        assert_eq!(traj.states[0].p_empty, 1.0);
        let k = traj.index_at(Time::new(50.0).unwrap()).unwrap();
        assert!((traj.states[k].exciton_population() - 0.5).abs() < 1e-12);
        assert!(traj.states[k].empty_coherence[0].norm() > 0.49);
        assert!(traj.times().collect::<Vec<_>>().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_coarse_steps_and_bad_specs() {
        assert!(matches!(
            evolve(&spec(dot(0.021, 0.0, 0.0), 31.2, 100.0, 2.0)),
            Err(DynamicsError::StepTooLarge(_))
        ));
        let mut s = spec(dot(0.021, 0.0, 0.0), 1.0, 100.0, 0.1);
        s.pump.pulse_area = 7.0;
        assert!(matches!(evolve(&s), Err(DynamicsError::InvalidSpec(_))));
    }

    #[test]
    fn unsettled_trajectory_is_rejected() {
        let traj = evolve(&spec(dot(0.021, 0.0, 0.0), 2.0, 100.0, 0.1)).unwrap();
        assert!(matches!(steady_hole_fidelity(&traj), Err(DynamicsError::NotSettled(_))));
    }

    #[test]
    fn csv_has_expected_columns() {
        let traj = evolve(&spec(dot(0.021, 0.0, 0.0), 2.0, 1.0, 0.5)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "time_ps,n_co,n_cross,re_coherence,im_coherence,p_hole_up,p_hole_down,p_empty"
        );
        assert_eq!(lines.count(), 3);
    }
}
