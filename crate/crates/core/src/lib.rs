//! Maritime route extraction from AIS position reports.
//!
//! The pipeline runs ingest, port extraction, voyage segmentation,
//! aggregation into route groups and standard route extraction. A synthetic
//! scenario generator and a small regression model for the extraction
//! parameters live alongside.

pub mod aggregation;
pub mod clustering;
pub mod config;
pub mod geo;
pub mod ingest;
pub mod motion;
pub mod pipeline;
pub mod ports;
pub mod regression;
pub mod routes;
pub mod segmentation;
pub mod synth;
