pub mod baselines;
pub mod bench;
pub mod bits;
pub mod bloom;
pub mod error;
pub mod hashing;
pub mod protocol;
pub mod rbf;
pub mod riblt;
pub mod wire;
pub mod workload;
