pub mod checkpoint;
pub mod config;
pub mod device;
pub mod error;
pub mod harness;
pub mod network;
pub mod pendulum;
pub mod seed;
pub mod training;
