//! Shared-control teleoperation: affordance detection, virtual fixtures,
//! action ranking and the menu, hosted in a deterministic session.
//!
//! The guide in `book/` walks through each module; its snippets run as
//! doc-tests of this crate.

pub mod actions;
pub mod affordance;
pub mod cloud;
pub mod control;
pub mod geometry;
pub mod hashing;
pub mod menu;
pub mod predictor;
pub mod scenesim;
pub mod session;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/perception.md")]
    mod perception {}
    #[doc = include_str!("../../../book/src/fixtures.md")]
    mod fixtures {}
    #[doc = include_str!("../../../book/src/prediction.md")]
    mod prediction {}
    #[doc = include_str!("../../../book/src/menus.md")]
    mod menus {}
    #[doc = include_str!("../../../book/src/sessions.md")]
    mod sessions {}
}
