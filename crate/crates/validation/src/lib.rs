//! Acceptance suite for `hifde`. The criteria live in `tests/acceptance.rs`
//! and run with `cargo test -p hifde-validation --test acceptance`.
