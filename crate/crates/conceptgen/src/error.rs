use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("chat request failed after {attempts} attempt(s): {message}")]
    Http { attempts: u32, message: String },

    #[error("unusable completion: {0}")]
    Response(String),

    #[error("no bullet-list concepts in response")]
    Parse,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("expected {expected} embeddings, file has {actual}")]
    CountMismatch { expected: usize, actual: usize },

    #[error(transparent)]
    Io(#[from] faithtrace_core::modelio::IoError),

    #[error("concept {index}: {source}")]
    Concept {
        index: usize,
        #[source]
        source: faithtrace_core::Error,
    },

    #[error(transparent)]
    Core(#[from] faithtrace_core::Error),
}
