//! File formats and the `shapprop` command-line tool built on
//! [`shapprop_core`].

pub mod cli;
pub mod manifest;
pub mod model_format;
pub mod table;
