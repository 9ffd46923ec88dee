//! File formats, configuration, checkpoints, the command-line tool and the
//! HTTP service around [`crisis_scope_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod http;
pub mod io;
pub mod session;
pub mod starter;

pub use crisis_scope_core as core;
