//! Subcommand implementations.

pub mod ablation;
pub mod balance;
pub mod fuse;
pub mod kfold;
pub mod predict;
pub mod score;
pub mod ssl;
pub mod submit;
pub mod train;
