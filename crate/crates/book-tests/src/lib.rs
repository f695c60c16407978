//! Runs every code block in the book as a doctest.
//!
//! mdbook cannot link workspace crates into its own test runner, so each
//! chapter is pulled in as the docs of an empty module and `cargo test
//! --doc` does the rest. A failure is reported against the chapter's
//! module name.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/codecs.md")]
pub mod codecs {}
#[doc = include_str!("../../../book/src/framing.md")]
pub mod framing {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/emg.md")]
pub mod emg {}
#[doc = include_str!("../../../book/src/simulator.md")]
pub mod simulator {}
#[doc = include_str!("../../../book/src/gateway.md")]
pub mod gateway {}
#[doc = include_str!("../../../book/src/server.md")]
pub mod server {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
