//! Library side of the `fut` command: config files, data wiring and the
//! subcommands, so they can be driven from tests.

pub mod commands;
pub mod config;
pub mod data;

use fut_core::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// 1 for usage and configuration problems, 2 for data, 3 for a numerical abort.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NonFinite { .. } => EXIT_NUMERIC,
        Error::Data(_)
        | Error::Schema(_)
        | Error::Input(_)
        | Error::Io { .. }
        | Error::Corrupt { .. }
        | Error::Version { .. } => EXIT_DATA,
        _ => EXIT_USAGE,
    }
}
