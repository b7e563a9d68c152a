//! End-to-end sparse travel-time forecasting over a road network: GPS trip
//! ingestion and map matching, windowed standardized travel-time
//! aggregation, matrix-factorization segment embeddings, and a recurrent
//! set-attention forecaster with its training and evaluation harness.

pub mod error;
pub mod factorize;
pub mod ingest;
pub mod prep;
pub mod roadnet;
pub mod synthgen;

pub use error::{Error, Result};
