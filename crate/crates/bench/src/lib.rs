//! Criterion benchmarks for the search engine; see `benches/engine.rs`.
