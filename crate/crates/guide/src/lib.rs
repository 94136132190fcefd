//! Chapters of the book under `book/src`, included here so that
//! `cargo test` runs every Rust example they contain.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/sources.md")]
mod sources {}

#[doc = include_str!("../../../book/src/measurement.md")]
mod measurement {}

#[doc = include_str!("../../../book/src/chsh.md")]
mod chsh {}

#[doc = include_str!("../../../book/src/keyrate.md")]
mod keyrate {}

#[doc = include_str!("../../../book/src/finite_key.md")]
mod finite_key {}

#[doc = include_str!("../../../book/src/validation.md")]
mod validation {}

#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
