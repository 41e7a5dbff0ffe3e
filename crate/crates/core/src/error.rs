// SPDX-License-Identifier: Apache-2.0

//! Workspace-level error with stable machine-readable codes.

use thiserror::Error;

use crate::context::ContextError;
use crate::dataset::DatasetError;
use crate::evaluation::EvalError;
use crate::generation::GenerationError;
use crate::ingest::IngestError;
use crate::planner::PlanError;
use crate::prompt::PromptError;
use crate::store::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    NotFound,
    Conflict,
    Unavailable,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{kind} `{id}` not found")]
    NotFound { kind: &'static str, id: String },
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("no runs recorded{}", .0.as_ref().map(|m| format!(" for model `{m}`")).unwrap_or_default())]
    NoRuns(Option<String>),
    #[error("{count} run(s) of model `{model}` have no annotation")]
    Unannotated { model: String, count: usize },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn not_found(kind: &'static str, id: impl Into<String>) -> Self {
        Error::NotFound { kind, id: id.into() }
    }

    pub fn code(&self) -> &'static str {
        use Error as E;
        match self {
            E::Ingest(e) => match e {
                IngestError::MalformedCatalog { .. } => "E_MALFORMED_CATALOG",
                IngestError::EmptyCatalog => "E_EMPTY_CATALOG",
                IngestError::InvalidDescriptor(_) => "E_INVALID_DESCRIPTOR",
                IngestError::UnknownProvider(_) => "E_UNKNOWN_PROVIDER",
                IngestError::ConflictingIdentity(_) => "E_CONFLICTING_IDENTITY",
                IngestError::EmptyMerge => "E_EMPTY_MERGE",
            },
            E::Context(e) => match e {
                ContextError::NoFeatures(_) => "E_NO_FEATURES",
                ContextError::ContextSyntax { .. } => "E_CONTEXT_SYNTAX",
                _ => "E_INVALID_FEATURE",
            },
            E::Dataset(e) => match e {
                DatasetError::MissingReference(_) => "E_MISSING_REFERENCE",
                DatasetError::InsufficientExamples { .. } => "E_INSUFFICIENT_EXAMPLES",
                DatasetError::DuplicateFacility(_) => "E_DUPLICATE_FACILITY",
                DatasetError::Io(_) => "E_IO",
                _ => "E_INVALID_EXAMPLE",
            },
            E::Prompt(e) => match e {
                PromptError::UnsupportedRole { .. } => "E_UNSUPPORTED_ROLE",
                PromptError::UnknownTemplate(_) => "E_UNKNOWN_TEMPLATE",
                PromptError::InvalidTemplate { .. } => "E_INVALID_TEMPLATE",
                _ => "E_INVALID_PROMPT",
            },
            E::Generation(e) => match e {
                GenerationError::BackendUnavailable { .. } => "E_BACKEND_UNAVAILABLE",
                GenerationError::BackendRejected { .. } => "E_BACKEND_REJECTED",
                GenerationError::Timeout(_) => "E_TIMEOUT",
                GenerationError::MalformedResponse(_) => "E_BACKEND_RESPONSE",
                GenerationError::InvalidConfig(_) => "E_INVALID_CONFIG",
                GenerationError::SplitViolation(_) => "E_SPLIT_VIOLATION",
                GenerationError::Store(_) => "E_STORE",
                GenerationError::Prompt(p) => E::Prompt(p.clone()).code(),
            },
            E::Eval(e) => match e {
                EvalError::InvalidAnnotation { .. } => "E_INVALID_ANNOTATION",
                EvalError::MissingCells(_) => "E_MISSING_CELLS",
                EvalError::NoFacilities => "E_NO_RUNS",
            },
            E::Plan(e) => match e {
                PlanError::Infeasible { .. } => "E_INFEASIBLE",
                PlanError::InvalidInput(_) => "E_INVALID_INPUT",
            },
            E::Store(_) => "E_STORE",
            E::NotFound { .. } => "E_NOT_FOUND",
            E::Conflict(_) => "E_CONFLICT",
            E::Validation(_) => "E_VALIDATION",
            E::NoRuns(_) => "E_NO_RUNS",
            E::Unannotated { .. } => "E_UNANNOTATED",
            E::Io(_) => "E_IO",
        }
    }

    pub fn class(&self) -> ErrorClass {
        use ErrorClass as C;
        match self {
            Error::NotFound { .. } | Error::Ingest(IngestError::UnknownProvider(_)) | Error::NoRuns(_) => C::NotFound,
            Error::Conflict(_) | Error::Ingest(IngestError::ConflictingIdentity(_)) => C::Conflict,
            Error::Generation(
                GenerationError::BackendUnavailable { .. }
                | GenerationError::BackendRejected { .. }
                | GenerationError::Timeout(_)
                | GenerationError::MalformedResponse(_),
            ) => C::Unavailable,
            Error::Store(_)
            | Error::Io(_)
            | Error::Dataset(DatasetError::Io(_))
            | Error::Generation(GenerationError::Store(_)) => C::Internal,
            _ => C::Validation,
        }
    }

    /// `E_CODE: message`, the one-line form used by the CLI.
    pub fn line(&self) -> String {
        format!("{}: {}", self.code(), self)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
