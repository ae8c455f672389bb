//! Anchored, Jacobian-sparsity regularized domain transfer.

pub mod adcore;
pub mod nets;
pub mod mpatheory;
pub mod objective;
pub mod rng;
pub mod sparsity;
pub mod synthdata;
pub mod trainer;
