//! Benchmarks live in `benches/`; run with `cargo bench -p specmatch-bench`.
//! The `specmatch bench` command produces the same timings as CSV.
