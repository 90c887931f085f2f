//! Criterion benchmarks for the solver and estimator hot paths; see `benches/`.
