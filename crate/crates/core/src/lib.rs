//! Runtime monitoring core: a monitoring controller with dual-trigger
//! sensors, threshold violation detection, state composition, an
//! append-only knowledge log, and adaptive sampling policies, driven
//! against a deterministic simulated managed system.
//!
//! The crate is organized along the data flow of a feedback loop:
//!
//! - [`property`] holds the value types (properties, thresholds,
//!   measurements, system state, violation events) and the pure
//!   threshold evaluation over them.
//! - [`sensing`] binds sensors to the managed system through
//!   instrumentation hooks and delivers measurements via a
//!   subject/observer channel.
//! - [`controller`] deploys and tracks sensors, composes the current
//!   system state, buffers violation events, and writes log entries
//!   under a periodic or event-triggered logging mode.
//! - [`knowledge`] is the append-only log with subscription triggers
//!   and a newline-delimited on-disk format.
//! - [`adaptive`] adjusts sampling frequency and the monitored metric
//!   set at runtime to bound measurement overhead.
//! - [`sim`] is the seeded, deterministic managed system the loop
//!   observes.
//! - [`config`] and [`runner`] wire everything together from a plain
//!   text configuration document.

pub mod adaptive;
pub mod config;
pub mod controller;
pub mod knowledge;
pub mod property;
pub mod report;
pub mod rng;
pub mod runner;
pub mod sensing;
pub mod sim;

/// Logical time. One tick is the scheduler's unit step; wall-clock
/// pacing is an optional adapter on top (see the runner's realtime
/// option).
pub type Tick = u64;
