//! Discrete integration over binary models by hashing and constrained
//! optimization, with a fixed-schedule estimator (every quantile queried) and
//! an adaptive one that bisects the quantile curve.

pub mod gf2;
pub mod logspace;
pub mod model;
pub mod oracle;
pub mod estimator;
pub mod optbench;
pub mod verify;
