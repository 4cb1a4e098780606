//! mdbook cannot test listings that depend on a crate, so the chapters are
//! pulled in as module docs and `cargo test --doc` runs their listings.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/spectral.md")]
pub mod spectral {}
#[doc = include_str!("../../../book/src/noise.md")]
pub mod noise {}
#[doc = include_str!("../../../book/src/dynamics.md")]
pub mod dynamics {}
#[doc = include_str!("../../../book/src/theory.md")]
pub mod theory {}
#[doc = include_str!("../../../book/src/geometry.md")]
pub mod geometry {}
#[doc = include_str!("../../../book/src/hele_shaw.md")]
pub mod hele_shaw {}
#[doc = include_str!("../../../book/src/residual.md")]
pub mod residual {}
#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}
