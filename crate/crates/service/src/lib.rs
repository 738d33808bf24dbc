//! Session host for the teleoperation cockpit, plus offline tools.

pub mod cli;
pub mod host;
pub mod protocol;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cockpit.md")]
mod cockpit_chapter {}
