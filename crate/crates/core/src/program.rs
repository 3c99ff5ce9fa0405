//! Loading a lattice file and a set of source files into a checked class
//! table, with diagnostics attributed to files.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{Span, TypeError};
use crate::lattice::SecurityLattice;
use crate::parser::{parse_lattice, parse_program, ParseError};
use crate::syntax::ClassTable;
use crate::typechecker::Checker;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub name: String,
    pub text: String,
}

impl SourceFile {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        SourceFile {
            name: name.into(),
            text: text.into(),
        }
    }
}

/// A machine-readable diagnostic. `code` is a type error code or a parse
/// error kind; `rule` names the violated typing or refinement rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: String,
    pub span: Span,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub premise: Option<String>,
}

impl Diagnostic {
    pub fn from_type_error(e: &TypeError, default_file: &str) -> Self {
        Diagnostic {
            file: e.file.clone().unwrap_or_else(|| default_file.to_string()),
            span: e.span,
            code: e.code.to_string(),
            rule: Some(e.rule.clone()),
            message: e.message.clone(),
            premise: None,
        }
    }

    pub fn from_parse_error(e: &ParseError, file: &str) -> Self {
        Diagnostic {
            file: file.to_string(),
            span: e.span,
            code: e.kind.to_string(),
            rule: None,
            message: e.message.clone(),
            premise: None,
        }
    }
}

impl fmt::Display for Diagnostic {
    /// `file:line:col: <code>: <rule>: <message>`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: {}: ", self.file, self.span.start_line, self.span.start_col, self.code)?;
        if let Some(rule) = &self.rule {
            write!(f, "{rule}: ")?;
        }
        f.write_str(&self.message)
    }
}

/// A lattice and class table built from source files.
#[derive(Debug, Clone)]
pub struct Program {
    pub lattice: Arc<SecurityLattice>,
    pub table: Arc<ClassTable>,
}

/// Parses the lattice and every source file and builds the class table.
/// Method bodies are not checked; see [`check`].
pub fn load(lattice_file: &SourceFile, sources: &[SourceFile]) -> Result<Program, Vec<Diagnostic>> {
    let lattice = parse_lattice(&lattice_file.text)
        .map_err(|e| vec![Diagnostic::from_parse_error(&e, &lattice_file.name)])?;
    let mut decls = Vec::new();
    let mut diagnostics = Vec::new();
    for src in sources {
        let parsed = parse_program(&src.text);
        diagnostics.extend(parsed.diagnostics.iter().map(|e| Diagnostic::from_parse_error(e, &src.name)));
        decls.extend(parsed.decls.into_iter().map(|mut d| {
            d.file = Some(src.name.clone());
            d
        }));
    }
    if !diagnostics.is_empty() {
        return Err(diagnostics);
    }
    let default_file = sources.first().map(|s| s.name.as_str()).unwrap_or("<input>");
    let table = ClassTable::build(&lattice, decls)
        .map_err(|es| es.iter().map(|e| Diagnostic::from_type_error(e, default_file)).collect::<Vec<_>>())?;
    Ok(Program {
        lattice: Arc::new(lattice),
        table: Arc::new(table),
    })
}

/// Type checks every method body and interface obligation.
pub fn check(program: &Program) -> Vec<Diagnostic> {
    match Checker::new(&program.table, &program.lattice).check_program() {
        Ok(()) => Vec::new(),
        Err(es) => es.iter().map(|e| Diagnostic::from_type_error(e, "<input>")).collect(),
    }
}

/// Loads and checks in one go.
pub fn load_and_check(lattice_file: &SourceFile, sources: &[SourceFile]) -> Vec<Diagnostic> {
    match load(lattice_file, sources) {
        Ok(p) => check(&p),
        Err(ds) => ds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAT: &str = "level low high\nflow low -> high\n";

    #[test]
    fn errors_name_their_files() {
        let lat = SourceFile::new("lattice.lat", LAT);
        let a = SourceFile::new("a.sifo", "class A { high imm int secret; }");
        let b = SourceFile::new(
            "b.sifo",
            "class B { low imm int shown;\n  low mut method low imm void leak(high imm A a) { this.shown = a.secret; } }",
        );
        let ds = load_and_check(&lat, &[a.clone(), b]);
        assert_eq!(ds.len(), 1, "{ds:?}");
        assert_eq!(ds[0].file, "b.sifo");
        assert_eq!(ds[0].code, "FlowViolation");
        assert!(ds[0].to_string().starts_with("b.sifo:2:"), "{}", ds[0]);
        assert!(load_and_check(&lat, &[a]).is_empty());
    }

    #[test]
    fn parse_and_table_errors() {
        let lat = SourceFile::new("lattice.lat", LAT);
        let ds = load_and_check(&lat, &[SourceFile::new("x.sifo", "class { }")]);
        assert_eq!(ds[0].code, "SyntaxError");
        assert_eq!(ds[0].file, "x.sifo");
        let ds = load_and_check(
            &lat,
            &[
                SourceFile::new("x.sifo", "class A { }"),
                SourceFile::new("y.sifo", "class A { }"),
            ],
        );
        assert_eq!(ds[0].code, "DuplicateDeclaration");
        assert_eq!(ds[0].file, "y.sifo");
        let ds = load_and_check(&SourceFile::new("bad.lat", "level a\nflow a -> b\n"), &[]);
        assert_eq!((ds[0].file.as_str(), ds[0].span.start_line), ("bad.lat", 2));
    }
}
