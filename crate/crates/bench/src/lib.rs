//! Criterion benchmarks for the calibration pipeline live in `benches/`.
