//! Criterion benches for the core crate; see `benches/`.
