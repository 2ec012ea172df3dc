//! Failures and their exit codes.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Data,
    Numerical,
}

impl Kind {
    pub fn exit_code(self) -> u8 {
        match self {
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Numerical => 4,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Kind::Config => "config",
            Kind::Data => "data",
            Kind::Numerical => "numerical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub kind: Kind,
    pub msg: String,
}

impl Failure {
    pub fn config(msg: String) -> Self {
        Self { kind: Kind::Config, msg }
    }

    pub fn data(msg: String) -> Self {
        Self { kind: Kind::Data, msg }
    }

    pub fn numerical(msg: String) -> Self {
        Self {
            kind: Kind::Numerical,
            msg,
        }
    }
}

/// One line: `error: kind=<kind> msg="<escaped message>"`.
impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg: String = self
            .msg
            .chars()
            .flat_map(|c| match c {
                '"' => vec!['\\', '"'],
                '\\' => vec!['\\', '\\'],
                '\n' | '\r' => vec![' '],
                c => vec![c],
            })
            .collect();
        write!(f, "error: kind={} msg=\"{}\"", self.kind.name(), msg)
    }
}

impl From<qbgmm::Error> for Failure {
    fn from(e: qbgmm::Error) -> Self {
        use qbgmm::Error as E;
        let msg = e.to_string();
        match e {
            E::Data(_) | E::Io(_) | E::InsufficientData { .. } => Failure::data(msg),
            E::DimensionMismatch { .. } | E::InvalidInput(_) => Failure::config(msg),
            _ => Failure::numerical(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::data(e.to_string())
    }
}
