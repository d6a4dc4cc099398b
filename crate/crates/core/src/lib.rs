//! Discrete and two-slice dynamic Bayesian networks for daily financial returns.
//!
//! The crate covers the whole analytical pipeline:
//!
//! * [`panel`], [`garch`], [`discretize`]: price ingestion, log returns,
//!   AR-GARCH filtering with BIC order selection and tertile binning.
//! * [`data`], [`graph`], [`score`], [`search`], [`bootstrap`], [`network`]:
//!   categorical datasets, DAG/CPDAG types, BDeu scoring, tabu structure
//!   search, bootstrap consensus and maximum-likelihood CPTs.
//! * [`inference`]: exact posteriors, MPE and evidence sweeps by variable
//!   elimination.
//! * [`sensitivity`]: mutual information, first-order Sobol indices, arc
//!   diameters and one-way CPT (tornado) sensitivity.
//! * [`dbn`]: inter-slice transition learning and next-day shock queries.
//! * [`report`], [`dot`]: CSV tables and Graphviz export.

pub mod bootstrap;
pub mod data;
pub mod discretize;
pub mod dbn;
pub mod dot;
pub mod error;
mod factor;
pub mod garch;
pub mod graph;
pub mod inference;
pub mod network;
mod optimize;
pub mod panel;
pub mod report;
pub mod score;
pub mod search;
pub mod sensitivity;
pub mod synthetic;

pub use error::{Error, Result};
