//! File formats, the generation pipeline and the `simpl` command line on
//! top of [`simpl_core`].

pub mod bench;
pub mod cli;
pub mod config_file;
pub mod error;
pub mod eval;
pub mod export;
pub mod io;
pub mod pipeline;

pub use cli::{dispatch, CommandOutcome};
pub use error::{Error, Result};
pub use simpl_core as core;
