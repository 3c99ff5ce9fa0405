//! Source spans and type errors shared by the checker, the refiner and the
//! front ends.

use std::fmt;

use serde::{Deserialize, Serialize};

/// 1-based line/column range. The default span (all zeros) marks synthetic
/// nodes that were not read from a file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start_line: u32,
    pub start_col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl Span {
    pub fn new(start_line: u32, start_col: u32, end_line: u32, end_col: u32) -> Self {
        Span {
            start_line,
            start_col,
            end_line,
            end_col,
        }
    }

    pub fn is_synthetic(&self) -> bool {
        self.start_line == 0
    }

    pub fn to(self, other: Span) -> Span {
        if self.is_synthetic() {
            return other;
        }
        if other.is_synthetic() {
            return self;
        }
        Span {
            start_line: self.start_line,
            start_col: self.start_col,
            end_line: other.end_line,
            end_col: other.end_col,
        }
    }
}

/// Closed set of type error kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TypeErrorCode {
    FlowViolation,
    ModifierViolation,
    UnknownField,
    UnknownMethod,
    UnknownVar,
    ArityMismatch,
    GuardNotBoolean,
    FieldModifierIllegal,
    InterfaceUnimplemented,
    PromotionFailed,
    DeclassifyIllegal,
    IncomparableLevels,
    ClassMismatch,
    UnknownClass,
    UnknownLevel,
    DuplicateDeclaration,
    NotConstructible,
    UnexpectedHole,
}

impl TypeErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            TypeErrorCode::FlowViolation => "FlowViolation",
            TypeErrorCode::ModifierViolation => "ModifierViolation",
            TypeErrorCode::UnknownField => "UnknownField",
            TypeErrorCode::UnknownMethod => "UnknownMethod",
            TypeErrorCode::UnknownVar => "UnknownVar",
            TypeErrorCode::ArityMismatch => "ArityMismatch",
            TypeErrorCode::GuardNotBoolean => "GuardNotBoolean",
            TypeErrorCode::FieldModifierIllegal => "FieldModifierIllegal",
            TypeErrorCode::InterfaceUnimplemented => "InterfaceUnimplemented",
            TypeErrorCode::PromotionFailed => "PromotionFailed",
            TypeErrorCode::DeclassifyIllegal => "DeclassifyIllegal",
            TypeErrorCode::IncomparableLevels => "IncomparableLevels",
            TypeErrorCode::ClassMismatch => "ClassMismatch",
            TypeErrorCode::UnknownClass => "UnknownClass",
            TypeErrorCode::UnknownLevel => "UnknownLevel",
            TypeErrorCode::DuplicateDeclaration => "DuplicateDeclaration",
            TypeErrorCode::NotConstructible => "NotConstructible",
            TypeErrorCode::UnexpectedHole => "UnexpectedHole",
        }
    }
}

impl fmt::Display for TypeErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A rejected judgement: what went wrong, where, and which typing or
/// refinement rule was violated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeError {
    pub code: TypeErrorCode,
    pub rule: String,
    pub message: String,
    pub span: Span,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

impl TypeError {
    pub fn new(code: TypeErrorCode, rule: &str, message: impl Into<String>) -> Self {
        TypeError {
            code,
            rule: rule.to_string(),
            message: message.into(),
            span: Span::default(),
            file: None,
        }
    }

    /// Records the source file unless one is already set.
    pub fn in_file(mut self, file: Option<&str>) -> Self {
        if self.file.is_none() {
            self.file = file.map(str::to_string);
        }
        self
    }

    pub fn at(mut self, span: Span) -> Self {
        if self.span.is_synthetic() {
            self.span = span;
        }
        self
    }

    /// `file:line:col: <code>: <rule>: <message>`
    /// `file` is used when the error does not record its own source file.
    pub fn render(&self, file: &str) -> String {
        format!(
            "{}:{}:{}: {}: {}: {}",
            self.file.as_deref().unwrap_or(file),
            self.span.start_line, self.span.start_col, self.code, self.rule, self.message
        )
    }
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.code, self.rule, self.message)
    }
}

impl std::error::Error for TypeError {}
