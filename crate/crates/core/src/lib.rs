//! Event-study engine for cryptocurrency reactions to regulatory actions.
//!
//! The pipeline ingests daily price/volume histories and an event registry,
//! fits a market model per event, pools abnormal returns and volumes across
//! events, and relates the reactions to asset characteristics through robust
//! regressions.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod cross_section;
pub mod event_study;
pub mod inference;
pub mod ingest;
pub mod market_model;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod synthetic;
pub mod window;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/market-model.md")]
    mod market_model {}
    #[doc = include_str!("../../../book/src/pooled-tests.md")]
    mod pooled_tests {}
    #[doc = include_str!("../../../book/src/robust-regression.md")]
    mod robust_regression {}
    #[doc = include_str!("../../../book/src/outputs.md")]
    mod outputs {}
}
