pub mod bundle;
pub mod config;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod event;
pub mod experiment;
pub mod logio;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod pretrain;
pub mod report;
pub mod stream;

pub use error::{Error, Result};
