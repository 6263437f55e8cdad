//! Acceptance suite for `treatkit`. The checks live in `tests/acceptance.rs`
//! and run with `cargo test -p treatkit-validation`.
