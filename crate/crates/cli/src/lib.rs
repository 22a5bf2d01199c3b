//! Command-line runner and JSON service for the cellcast forecaster.

pub mod commands;
pub mod config;
pub mod engine;
pub mod service;
