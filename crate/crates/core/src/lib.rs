pub mod config;
pub mod error;
pub mod functionals;
pub mod harness;
pub mod innovations;
pub mod limits;
pub mod linproc;
pub mod par;
pub mod quad;
pub mod regvar;
pub mod report;
pub mod stable;
pub mod stats;

pub use error::{Error, Result};
