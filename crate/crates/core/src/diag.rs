use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Location {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: &'static str,
    pub location: Option<Location>,
    pub message: String,
}

impl Diagnostic {
    pub fn error(code: &'static str, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            code,
            location: None,
            message: message.into(),
        }
    }

    pub fn warning(code: &'static str, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            code,
            location: None,
            message: message.into(),
        }
    }

    pub fn at(mut self, location: Location) -> Self {
        self.location = Some(location);
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match self.location {
            Some(l) => write!(
                f,
                "{}:{}: {sev}[{}]: {}",
                l.line, l.col, self.code, self.message
            ),
            None => write!(f, "{sev}[{}]: {}", self.code, self.message),
        }
    }
}

/// An ordered collection of diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl Diagnostics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, d: Diagnostic) {
        self.0.push(d);
    }

    pub fn has_errors(&self) -> bool {
        self.0.iter().any(Diagnostic::is_error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.0.iter().filter(|d| d.is_error())
    }

    pub fn with_code<'a>(&'a self, code: &'a str) -> impl Iterator<Item = &'a Diagnostic> + 'a {
        self.0.iter().filter(move |d| d.code == code)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Diagnostic> {
        self.0.iter()
    }

    pub fn extend(&mut self, other: Diagnostics) {
        self.0.extend(other.0);
    }
}

impl From<Diagnostic> for Diagnostics {
    fn from(d: Diagnostic) -> Self {
        Diagnostics(vec![d])
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.0 {
            writeln!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Diagnostics {}

impl<'a> IntoIterator for &'a Diagnostics {
    type Item = &'a Diagnostic;
    type IntoIter = std::slice::Iter<'a, Diagnostic>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

pub mod codes {
    pub const E_SYNTAX: &str = "E_SYNTAX";
    pub const E_DUPLICATE_NAME: &str = "E_DUPLICATE_NAME";
    pub const E_UNKNOWN_REF: &str = "E_UNKNOWN_REF";
    pub const E_ADJ: &str = "E_ADJ";
    pub const E_APPEARING_IN_REGION: &str = "E_APPEARING_IN_REGION";
    pub const E_JOIN_ARITY: &str = "E_JOIN_ARITY";
    pub const E_JOIN_SHAPE: &str = "E_JOIN_SHAPE";
    pub const E_REGION_EMPTY: &str = "E_REGION_EMPTY";
    pub const W_REGION_DISCONNECTED: &str = "W_REGION_DISCONNECTED";
    pub const E_NEG_UNPAIRED: &str = "E_NEG_UNPAIRED";
    pub const E_GUARD_UNRESOLVED: &str = "E_GUARD_UNRESOLVED";
    pub const E_UNKNOWN_EVENT: &str = "E_UNKNOWN_EVENT";
    pub const E_CHRON_CYCLE: &str = "E_CHRON_CYCLE";
    pub const E_XML: &str = "E_XML";
    pub const E_DANGLING_REF: &str = "E_DANGLING_REF";
    pub const E_UNSUPPORTED: &str = "E_UNSUPPORTED";
    pub const W_UNSUPPORTED: &str = "W_UNSUPPORTED";
}
