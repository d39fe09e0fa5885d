//! Minimal stderr logger controlled by ATM_LOG (error|info|debug).

use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Error = 0,
    Info = 1,
    Debug = 2,
}

pub fn level() -> Level {
    static LEVEL: OnceLock<Level> = OnceLock::new();
    *LEVEL.get_or_init(|| match std::env::var("ATM_LOG").as_deref() {
        Ok("error") => Level::Error,
        Ok("debug") => Level::Debug,
        _ => Level::Info,
    })
}

macro_rules! log_info {
    ($($arg:tt)*) => {
        if crate::logging::level() >= crate::logging::Level::Info {
            eprintln!($($arg)*);
        }
    };
}

macro_rules! log_debug {
    ($($arg:tt)*) => {
        if crate::logging::level() >= crate::logging::Level::Debug {
            eprintln!($($arg)*);
        }
    };
}

pub(crate) use {log_debug, log_info};
