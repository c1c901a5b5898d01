//! Error reporting with machine-readable codes.

use std::fmt::Display;

#[derive(Debug)]
pub struct Failure {
    pub code: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(code: &'static str, message: impl Display) -> Self {
        Failure {
            code,
            message: message.to_string(),
        }
    }

    pub fn usage(message: impl Display) -> Self {
        Self::new("E_USAGE", message)
    }

    pub fn io(path: &std::path::Path, e: impl Display) -> Self {
        Self::new("E_IO", format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        if self.code == "E_USAGE" {
            2
        } else {
            1
        }
    }
}

impl<E: Into<flowtune::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e: flowtune::Error = e.into();
        Failure::new(e.code(), e)
    }
}
