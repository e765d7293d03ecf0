use std::fmt;

use serde::Serialize;
use shapeaug::augment::AugmentError;
use shapeaug::geometry::GeometryError;
use shapeaug::grasp::GraspError;
use shapeaug::latent::LatentError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    Data,
    Config,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 2,
            ErrorKind::Data => 3,
            ErrorKind::Config => 4,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
}

impl CliError {
    pub fn data(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Data, message: message.into(), details: Vec::new() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Config, message: message.into(), details: Vec::new() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Usage, message: message.into(), details: Vec::new() }
    }

    pub fn with_details(mut self, details: Vec<String>) -> Self {
        self.details = details;
        self
    }

    /// Prefixes the message with what was being done.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::InvalidArgument(_) => CliError::config(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<LatentError> for CliError {
    fn from(e: LatentError) -> Self {
        match e {
            LatentError::Config(_) => CliError::config(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<GraspError> for CliError {
    fn from(e: GraspError) -> Self {
        match e {
            GraspError::Config(_) => CliError::config(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<AugmentError> for CliError {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::Config(_) => CliError::config(e.to_string()),
            AugmentError::Latent(e) => e.into(),
            AugmentError::Geometry(e) => e.into(),
            AugmentError::Grasp(e) => e.into(),
            _ => CliError::data(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
