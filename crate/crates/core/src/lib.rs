//! Desk-scale hypernetwork that turns a one-sentence task requirement into
//! the weights of a small MLP, plus the training loop, baselines and
//! evaluation harness around it.

pub mod arch;
pub mod artifact;
pub mod baselines;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod hypernet;
pub mod init_study;
pub mod nn;
pub mod optim;
pub mod paramgen;
pub mod requirement;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
