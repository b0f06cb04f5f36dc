//! Code normalization and pattern matching for ICD-9/10-CM, HCPCS, and
//! RxNorm codes. Matching is dot-insensitive: both patterns and codes are
//! normalized (dots removed, letters upper-cased) before comparison.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CodeError {
    #[error("empty or whitespace-only code")]
    Empty,
    #[error("malformed pattern `{0}`: `*` is only allowed as a trailing wildcard")]
    MalformedPattern(String),
}

/// Normalizes a raw code: strips dots and whitespace, upper-cases letters.
/// Idempotent. Errors on empty/whitespace-only input.
pub fn normalize_code(raw: &str) -> Result<String, CodeError> {
    let normalized: String = raw
        .chars()
        .filter(|c| !c.is_whitespace() && *c != '.')
        .map(|c| c.to_ascii_uppercase())
        .collect();
    if normalized.is_empty() {
        return Err(CodeError::Empty);
    }
    Ok(normalized)
}

/// A code pattern: either an exact code or a trailing-star prefix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CodePattern {
    Exact(String),
    Prefix(String),
}

impl CodePattern {
    /// Parses a pattern string such as `"153.*"` or `"C26.0"`. The stored
    /// form is normalized, so matching is dot-insensitive.
    pub fn parse(raw: &str) -> Result<CodePattern, CodeError> {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return Err(CodeError::Empty);
        }
        let star_count = trimmed.matches('*').count();
        if star_count > 1 || (star_count == 1 && !trimmed.ends_with('*')) {
            return Err(CodeError::MalformedPattern(trimmed.to_string()));
        }
        if let Some(body) = trimmed.strip_suffix('*') {
            let body = body.strip_suffix('.').unwrap_or(body);
            Ok(CodePattern::Prefix(normalize_code(body)?))
        } else {
            Ok(CodePattern::Exact(normalize_code(trimmed)?))
        }
    }

    /// Prefix pattern over an already-normalized code (no wildcard syntax).
    pub fn prefix(code: &str) -> Result<CodePattern, CodeError> {
        Ok(CodePattern::Prefix(normalize_code(code)?))
    }

    pub fn exact(code: &str) -> Result<CodePattern, CodeError> {
        Ok(CodePattern::Exact(normalize_code(code)?))
    }

    /// Matches against a normalized code.
    pub fn matches(&self, normalized_code: &str) -> bool {
        match self {
            CodePattern::Exact(c) => normalized_code == c,
            CodePattern::Prefix(p) => normalized_code.starts_with(p.as_str()),
        }
    }

    /// Source-style rendering (`153.*` renders as `153*` without the dot,
    /// since patterns are stored normalized).
    pub fn render(&self) -> String {
        match self {
            CodePattern::Exact(c) => c.clone(),
            CodePattern::Prefix(p) => format!("{p}*"),
        }
    }
}

/// Pattern match on a raw (possibly dotted) code: both sides normalized.
pub fn code_matches(pattern: &str, code: &str) -> Result<bool, CodeError> {
    let pat = CodePattern::parse(pattern)?;
    let norm = normalize_code(code)?;
    Ok(pat.matches(&norm))
}
