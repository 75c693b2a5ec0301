pub mod clock;
pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod lp;
pub mod plot;
pub mod report;
pub mod service;
pub mod trace;
pub mod verify;

pub use error::{Error, Result};
