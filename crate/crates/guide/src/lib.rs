//! The book's chapters, compiled so that every listing runs as a doctest.

#[doc = include_str!("../../../book/src/overview.md")]
pub mod overview {}

#[doc = include_str!("../../../book/src/kernel.md")]
pub mod kernel {}

#[doc = include_str!("../../../book/src/prior.md")]
pub mod prior {}

#[doc = include_str!("../../../book/src/fitting.md")]
pub mod fitting {}

#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}

#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
