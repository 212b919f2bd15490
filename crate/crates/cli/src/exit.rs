//! Exit-code contract. Every failure prints one line `error[<kind>]: <message>`.

use alpha_dynamo::Error;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(code: i32, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            kind,
            message: message.into().replace('\n', " "),
        }
    }

    pub fn config(m: impl Into<String>) -> Self {
        Self::new(2, "config", m)
    }

    pub fn io(m: impl Into<String>) -> Self {
        Self::new(3, "io", m)
    }

    pub fn line(&self) -> String {
        format!("error[{}]: {}", self.kind, self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Format(_) => Self::io(e.to_string()),
            Error::InvalidArgument(_) | Error::InvalidBox(_) | Error::BoxMismatch { .. } => {
                Self::config(e.to_string())
            }
            Error::NoUnstableDirection { .. } => {
                Self::new(4, "no-unstable-direction", e.to_string())
            }
            _ => Self::new(1, "failed", e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}
