//! The guide under `book/src`, compiled so that its code snippets run as
//! doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/thermal.md")]
pub mod thermal {}

#[doc = include_str!("../../../book/src/controller.md")]
pub mod controller {}

#[doc = include_str!("../../../book/src/scenarios.md")]
pub mod scenarios {}

#[doc = include_str!("../../../book/src/episodes.md")]
pub mod episodes {}

#[doc = include_str!("../../../book/src/offline.md")]
pub mod offline {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
