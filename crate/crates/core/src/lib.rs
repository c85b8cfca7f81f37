//! Bayesian transformed Gaussian process regression with quadrature over
//! hyperparameters, bounded quantile solving and fast leave-one-out validation.

pub mod baselines;
pub mod btg;
pub mod config;
pub mod data;
pub mod datasets;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod linalg;
pub mod loocv;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod quadrature;
pub mod tmixture;
pub mod transforms;
pub mod wire;

pub use error::{Error, ErrorKind, Result};
