//! Criterion benchmarks for `casimir-core`; see `benches/kernels.rs`.
