//! Acceptance suite for `curvlab`. The checks live in `tests/acceptance.rs`
//! and run with `cargo test -p curvlab-verify`.
