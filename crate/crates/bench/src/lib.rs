//! Benchmark-only crate; see `benches/core_ops.rs`. Run with `cargo bench`.
