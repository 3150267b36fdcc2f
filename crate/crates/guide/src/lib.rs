//! Compiled companion to the mdbook guide in `book/`.
//!
//! Each chapter is attached verbatim as the documentation of a placeholder
//! module, so every fenced `rust` snippet in the book runs as a doctest of the
//! published `bnmemo` API. If the book drifts from the library, `cargo test`
//! fails.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
