//! The book's chapters, mounted as doc comments so `cargo test --doc`
//! compiles and runs every Rust snippet in them. mdBook renders the same
//! Markdown files, which keeps the guide and the code in lockstep: a
//! snippet that stops compiling fails the test suite. One module per
//! chapter, so a failure names the chapter it came from.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}

#[doc = include_str!("../../../book/src/sessions.md")]
pub mod sessions {}

#[doc = include_str!("../../../book/src/features.md")]
pub mod features {}

#[doc = include_str!("../../../book/src/clustering.md")]
pub mod clustering {}

#[doc = include_str!("../../../book/src/classification.md")]
pub mod classification {}

#[doc = include_str!("../../../book/src/forecasting.md")]
pub mod forecasting {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
