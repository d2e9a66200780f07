//! Command line and HTTP front end of the scenemem engine.

pub mod api;
pub mod commands;
pub mod lock;
pub mod service;
