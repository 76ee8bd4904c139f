use serde_json::json;

/// Errors surfaced by the CLI (as exit codes) and the HTTP API (as status
/// codes), both with a JSON body.
#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{message}")]
    Usage { message: String, flag: Option<String> },
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Engine(makeitso::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<makeitso::Error> for ServiceError {
    fn from(e: makeitso::Error) -> Self {
        use makeitso::Error as E;
        match e {
            E::Config(_) | E::Contract(_) | E::IncompatibleArchitecture { .. } | E::Format { .. } => ServiceError::Usage {
                message: e.to_string(),
                flag: None,
            },
            other => ServiceError::Engine(other),
        }
    }
}

impl ServiceError {
    pub fn usage(message: impl Into<String>) -> Self {
        ServiceError::Usage {
            message: message.into(),
            flag: None,
        }
    }

    pub fn flag(flag: &str, message: impl Into<String>) -> Self {
        ServiceError::Usage {
            message: message.into(),
            flag: Some(flag.to_string()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::Usage { .. } => "usage",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Failed(_) => "job_failed",
            ServiceError::Engine(_) => "runtime",
            ServiceError::Io(_) => "io",
        }
    }

    /// 2 for bad input, 3 for failures at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            ServiceError::Usage { .. } | ServiceError::NotFound(_) => 2,
            _ => 3,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut body = json!({ "kind": self.kind(), "message": self.to_string() });
        if let ServiceError::Usage { flag: Some(f), .. } = self {
            body["flag"] = json!(f);
        }
        json!({ "error": body })
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
