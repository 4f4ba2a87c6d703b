//! Maps errors to process exit codes: 2 for bad input, 1 for everything else.

use std::fmt;

use faithtrace_conceptgen::GenError;
use faithtrace_core::modelio::IoError;

pub const RUNTIME: i32 = 1;
pub const VALIDATION: i32 = 2;

/// A flag combination or value the command cannot accept.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn io_code(e: &IoError) -> i32 {
    match e {
        IoError::Io { .. } => RUNTIME,
        IoError::Invalid(inner) => core_code(inner),
        _ => VALIDATION,
    }
}

fn core_code(e: &faithtrace_core::Error) -> i32 {
    if e.is_validation() {
        VALIDATION
    } else {
        RUNTIME
    }
}

fn gen_code(e: &GenError) -> i32 {
    match e {
        GenError::Http { .. } | GenError::Response(_) => RUNTIME,
        GenError::Io(io) => io_code(io),
        GenError::Concept { source, .. } => core_code(source),
        GenError::Core(inner) => core_code(inner),
        GenError::Parse | GenError::Config(_) | GenError::CountMismatch { .. } => VALIDATION,
    }
}

/// Exit code for the first recognised error in the chain.
pub fn code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<faithtrace_core::Error>() {
            return core_code(e);
        }
        if let Some(e) = cause.downcast_ref::<IoError>() {
            return io_code(e);
        }
        if let Some(e) = cause.downcast_ref::<GenError>() {
            return gen_code(e);
        }
    }
    RUNTIME
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn classifies_through_context() {
        let dim: anyhow::Error = faithtrace_core::Error::DimMismatch { expected: 2, got: 3 }.into();
        assert_eq!(code_for(&dim.context("loading")), VALIDATION);
        let singular: anyhow::Error = faithtrace_core::Error::SingularSystem.into();
        assert_eq!(code_for(&singular), RUNTIME);
        let missing = std::fs::read("/nonexistent/x").context("reading");
        assert_eq!(code_for(&missing.unwrap_err()), RUNTIME);
        assert_eq!(code_for(&usage("bad flag")), VALIDATION);
        let magic: anyhow::Error = IoError::BadMagic { found: *b"XXXX" }.into();
        assert_eq!(code_for(&magic), VALIDATION);
    }
}
