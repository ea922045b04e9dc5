//! Doc-test harness for the book.
//!
//! Each chapter of `book/src` is attached here as module documentation, so
//! `cargo test` compiles and runs every fenced Rust snippet in the book.
//! One module per chapter keeps failures attributable to a file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/signals.md")]
pub mod signals {}

#[doc = include_str!("../../../book/src/content.md")]
pub mod content {}

#[doc = include_str!("../../../book/src/ssim.md")]
pub mod ssim {}

#[doc = include_str!("../../../book/src/synthesis.md")]
pub mod synthesis {}

#[doc = include_str!("../../../book/src/diffusion.md")]
pub mod diffusion {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
