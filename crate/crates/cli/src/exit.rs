use std::fmt;

pub const FAILURE: u8 = 1;
pub const PARSE: u8 = 2;
pub const PHASE: u8 = 3;
pub const CONVERGENCE: u8 = 4;
pub const AUDIT: u8 = 5;
pub const UNKNOWN_VID: u8 = 6;

/// An error paired with the process exit code it maps to.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: u8, msg: impl fmt::Display) -> Self {
        Self {
            code,
            error: anyhow::anyhow!("{msg}"),
        }
    }
}

impl fmt::Debug for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "exit {}: {:#}", self.code, self.error)
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub trait OrExit<T> {
    fn exit(self, code: u8) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn exit(self, code: u8) -> CmdResult<T> {
        self.map_err(|e| Failure {
            code,
            error: e.into(),
        })
    }
}
