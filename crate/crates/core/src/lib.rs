//! Early-warning indicators for multi-instrument intraday price panels.
//!
//! The crate turns a panel of minute-resolution prices into daily risk
//! signals along three routes:
//!
//! * recurrence networks per instrument, stacked into a multiplex network
//!   per trading day, summarised by interlayer mutual information and
//!   average edge overlap ([`mrn`], [`indicators`]);
//! * a bipower-variation jump test on sampled intraday returns of a
//!   weighted portfolio series ([`jump`]);
//! * critical-slowing-down statistics (variance, lag-1 autocorrelation,
//!   low-frequency power) with Kendall-trend scoring ([`benchmark`]).
//!
//! [`sim`] provides a co-jump diffusion simulator used to calibrate the
//! indicator peak horizon against planted ground truth, and [`pipeline`]
//! wires the pieces into a reproducible report run.

pub mod benchmark;
pub mod indicators;
pub mod jump;
pub mod market_data;
pub mod mrn;
pub mod numfmt;
pub mod pipeline;
pub mod recurrence;
pub mod sim;

pub use indicators::{IndicatorConfig, IndicatorKind, IndicatorSeries};
pub use market_data::{DayWindow, PricePanel, ReturnPanel, WeightVector};
pub use mrn::Mrn;
pub use pipeline::{PipelineConfig, PipelineError, ReportBundle};
pub use recurrence::{EmbeddingConfig, RecurrenceMatrix, ThresholdPolicy};
pub use sim::SimConfig;
