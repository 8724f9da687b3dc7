//! Command-line front end and HTTP service for the rulebook question
//! answering engine.

pub mod commands;
pub mod service;
