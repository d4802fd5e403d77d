use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Warning => f.write_str("warning"),
            Severity::Error => f.write_str("error"),
        }
    }
}

/// A positioned message. Lines and columns are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl Diagnostic {
    pub fn error(line: u32, col: u32, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            line,
            col,
            message: message.into(),
        }
    }

    pub fn warning(line: u32, col: u32, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            line,
            col,
            message: message.into(),
        }
    }

    /// `file:line:col: severity: message`
    pub fn render(&self, file: &str) -> String {
        format!("{file}:{self}")
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {}: {}",
            self.line, self.col, self.severity, self.message
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SalError {
    #[error("lexical error: {}", first(.0))]
    Lexical(Vec<Diagnostic>),
    #[error("syntax error: {}", first(.0))]
    Syntax(Vec<Diagnostic>),
    #[error("semantic error: {}", first(.0))]
    Semantic(Vec<Diagnostic>),
}

fn first(diags: &[Diagnostic]) -> String {
    diags
        .first()
        .map(|d| d.to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

impl SalError {
    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            SalError::Lexical(d) | SalError::Syntax(d) | SalError::Semantic(d) => d,
        }
    }

    pub fn is_semantic(&self) -> bool {
        matches!(self, SalError::Semantic(_))
    }
}
