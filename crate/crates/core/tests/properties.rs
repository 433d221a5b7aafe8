use proptest::prelude::*;
use qdspin_core::analytic::{fidelity_godden, fidelity_lower_bound};
use qdspin_core::dynamics::{evolve, EvolutionSpec, PumpPolarization, PumpSpec};
use qdspin_core::experiments::Sweep;
use qdspin_core::spectra::{extract_fidelity, synth_two_color_spectrum, ProbePolarization, SpectrumConfig};
use qdspin_core::spectrum::{Spectrum, SpectrumMeta};
use qdspin_core::{Energy, QuantumDotParams, Rate, Time};

fn dot(ge: f64, gr: f64, gh: f64) -> QuantumDotParams {
    QuantumDotParams {
        gamma_e: Rate::new(ge).unwrap(),
        gamma_r: Rate::new(gr).unwrap(),
        gamma_h: Rate::new(gh).unwrap(),
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trajectories_conserve_probability_and_stay_positive(
        ge in 0.002f64..0.08, gr in 0.0f64..0.01, gh in 0.0f64..0.005,
        fss in 0.0f64..80.0, res in 0.002f64..0.05,
        area in 0.0f64..std::f64::consts::TAU, arrival in 0.0f64..30.0, minus in any::<bool>(),
    ) {
        let mut spec = EvolutionSpec::settled(dot(ge, gr, gh), Energy::new(fss).unwrap(), res).unwrap();
        spec.record_stride = 1;
        spec.pump = PumpSpec {
            polarization: if minus { PumpPolarization::SigmaMinus } else { PumpPolarization::SigmaPlus },
            pulse_area: area,
            arrival: Time::new(arrival).unwrap(),
        };
        let traj = evolve(&spec).unwrap();
        for s in &traj.states {
            prop_assert!((s.trace() - 1.0).abs() <= 1e-7);
            for p in [s.rho_x[0][0].re, s.rho_x[1][1].re, s.p_empty, s.p_hole_up, s.p_hole_down] {
                prop_assert!(p >= -1e-10, "{p}");
            }
            let c = s.rho_x[0][1].norm_sqr();
            prop_assert!(c <= s.rho_x[0][0].re * s.rho_x[1][1].re + 1e-12);
        }
    }

    #[test]
    fn pump_polarization_mirrors_hole_spins(ge in 0.005f64..0.05, fss in 0.0f64..40.0) {
        let mut spec = EvolutionSpec::settled(dot(ge, 0.001, 0.0), Energy::new(fss).unwrap(), 0.02).unwrap();
        let plus = evolve(&spec).unwrap();
        spec.pump.polarization = PumpPolarization::SigmaMinus;
        let minus = evolve(&spec).unwrap();
        let k = plus.states.len() - 1;
        let (tp, wp) = plus.hole_populations(k);
        let (tm, wm) = minus.hole_populations(k);
        prop_assert!((tp - tm).abs() < 1e-14 && (wp - wm).abs() < 1e-14);
        prop_assert!((plus.states[k].p_hole_down - minus.states[k].p_hole_up).abs() < 1e-14);
    }

    #[test]
    fn fidelity_stays_between_half_and_one(fss in 0.0f64..500.0, g in 1e-4f64..0.2, gh in 0.0f64..1e-4) {
        let f = fidelity_godden(Energy::new(fss).unwrap(), Rate::new(g + gh).unwrap(), Rate::new(gh).unwrap()).unwrap().f;
        prop_assert!((0.5..=1.0).contains(&f));
    }

    #[test]
    fn lower_bound_grows_with_signal(a in 0.01f64..100.0, extra in 0.0f64..10.0, sigma in 0.0f64..1.0, n in 2usize..200) {
        let lo = fidelity_lower_bound(a, sigma, n).unwrap();
        let hi = fidelity_lower_bound(a + extra, sigma, n).unwrap();
        prop_assert!(lo.is_lower_bound && lo.f <= 1.0 && lo.f > 0.0);
        prop_assert!(hi.f >= lo.f);
    }

    #[test]
    fn noiseless_spectra_return_injected_fidelity(ge in 0.01f64..0.04, fss in 0.0f64..30.0) {
        let d = dot(ge, 0.0, 0.0);
        let traj = evolve(&EvolutionSpec::settled(d, Energy::new(fss).unwrap(), 0.02).unwrap()).unwrap();
        let cfg = SpectrumConfig { probe_delay: Time::new(traj.states.last().unwrap().time.value()).unwrap(), ..Default::default() };
        let co = synth_two_color_spectrum(&traj, &cfg, ProbePolarization::Co).unwrap();
        let cross = synth_two_color_spectrum(&traj, &cfg, ProbePolarization::Cross).unwrap();
        let (t, w) = traj.hole_populations(traj.states.len() - 1);
        let f = extract_fidelity(&co, &cross, &cfg).unwrap();
        prop_assert!(!f.is_lower_bound);
        prop_assert!((f.f - t / (t + w)).abs() < 1e-6, "{} vs {}", f.f, t / (t + w));
    }

    #[test]
    fn same_seed_same_spectrum(seed in any::<u64>(), noise in 0.01f64..1.0) {
        let traj = evolve(&EvolutionSpec::settled(dot(0.021, 0.0, 0.0), Energy::new(13.2).unwrap(), 0.05).unwrap()).unwrap();
        let cfg = SpectrumConfig { noise_sigma: noise, rng_seed: seed, ..Default::default() };
        let a = synth_two_color_spectrum(&traj, &cfg, ProbePolarization::Cross).unwrap();
        let b = synth_two_color_spectrum(&traj, &cfg, ProbePolarization::Cross).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn sweep_hits_both_ends_in_order(from in 0.0f64..50.0, span in 1e-3f64..50.0, points in 2usize..300) {
        let s = Sweep { from: Energy::new(from).unwrap(), to: Energy::new(from + span).unwrap(), points };
        let v: Vec<f64> = s.values().iter().map(|e| e.value()).collect();
        prop_assert_eq!(v.len(), points);
        prop_assert_eq!(v[0], from);
        prop_assert_eq!(*v.last().unwrap(), from + span);
        prop_assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn spectrum_csv_round_trips(ys in proptest::collection::vec(-1e3f64..1e3, 2..40), with_sigma in any::<bool>()) {
        let x: Vec<f64> = (0..ys.len()).map(|i| i as f64 * 0.5 - 3.0).collect();
        let sigma = with_sigma.then(|| ys.iter().map(|y| y.abs() * 0.01 + 0.1).collect());
        let s = Spectrum::new(x, ys, sigma, SpectrumMeta::new("detuning", "ueV", "photocurrent", "pA")).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = Spectrum::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(&back.x, &s.x);
        prop_assert_eq!(&back.y, &s.y);
        prop_assert_eq!(&back.sigma, &s.sigma);
        prop_assert_eq!(back.meta.x_unit.as_str(), "ueV");
    }
}
