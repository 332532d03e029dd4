//! Command implementations behind the `verigate` binary.

pub mod config;
pub mod gen;
pub mod passk;
pub mod score;
pub mod serve;
pub mod train_cmd;
