//! Benchmarks for `lsi-core` live under `benches/`; this crate has no library code.
