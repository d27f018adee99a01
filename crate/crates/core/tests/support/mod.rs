#![allow(dead_code)]

pub mod gradients;
pub mod metrics_oracle;
pub mod scenarios;
