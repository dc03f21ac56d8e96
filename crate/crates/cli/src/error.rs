use std::fmt;

pub type Result<T, E = anyhow::Error> = std::result::Result<T, E>;

/// Bad input or configuration, as opposed to a failure while running.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(e: impl fmt::Display) -> anyhow::Error {
    Invalid(e.to_string()).into()
}

/// 1 for validation and config errors, 2 for everything else.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    if e.chain().any(|c| c.is::<Invalid>()) {
        1
    } else {
        2
    }
}
