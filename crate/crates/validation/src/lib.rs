//! Holds the acceptance sweep in `tests/acceptance.rs`; there is no library code.
