//! Discrete-round simulator of wireless federated edge learning with joint
//! compression-ratio and deadline optimisation.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(test)]
#[macro_use]
mod test_util;

pub mod channel;
pub mod compression;
pub mod experiment;
pub mod federated;
pub mod optimizer;
pub mod oracles;
pub mod rng;
