use criterion::{black_box, criterion_group, criterion_main, Criterion};
use qdspin_core::analytic::fidelity_godden;
use qdspin_core::dynamics::{beat_signal, evolve, EvolutionSpec};
use qdspin_core::fitting::{fit, DampedSine};
use qdspin_core::{Energy, QuantumDotParams, Rate};

fn dot() -> QuantumDotParams {
    QuantumDotParams {
        gamma_e: Rate::new(0.021).unwrap(),
        gamma_r: Rate::ZERO,
        ..Default::default()
    }
}

fn bench_godden(c: &mut Criterion) {
    let g = Rate::new(0.021).unwrap();
    c.bench_function("fidelity_godden", |b| {
        b.iter(|| fidelity_godden(black_box(Energy::new(13.2).unwrap()), black_box(g), Rate::ZERO).unwrap())
    });
}

fn bench_evolve(c: &mut Criterion) {
    let spec = EvolutionSpec::settled(dot(), Energy::new(13.2).unwrap(), 0.05).unwrap();
    c.bench_function("evolve_settled_13ueV", |b| b.iter(|| evolve(black_box(&spec)).unwrap()));
}

fn bench_fit(c: &mut Criterion) {
    let spec = EvolutionSpec::settled(dot(), Energy::new(31.2).unwrap(), 0.02).unwrap();
    let signal = beat_signal(&evolve(&spec).unwrap());
    c.bench_function("damped_sine_fit", |b| b.iter(|| fit(&DampedSine, black_box(&signal), None).unwrap()));
}

criterion_group!(benches, bench_godden, bench_evolve, bench_fit);
criterion_main!(benches);
