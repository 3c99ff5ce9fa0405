//! Concrete syntax for programs (`.sifo`), lattices (`.lat`) and
//! refinement scripts (`.ifbc`).
//!
//! Program grammar, informally:
//!
//! ```text
//! program   ::= decl*
//! decl      ::= "class" C ("implements" C ("," C)*)? "{" member* "}"
//!             | "interface" C ("extends" C ("," C)*)? "{" (header ";")* "}"
//! member    ::= s mdf C f ";" | header ("{" body "}" | ";")
//! header    ::= s mdf "method" T m "(" (T x ("," T x)*)? ")"
//! body      ::= stmt (";" stmt)* ";"?            statements after "}" need no ";"
//! stmt      ::= "return"? (T x "=" expr | expr)  a declaration scopes over the rest
//! expr      ::= postfix "=" expr | binary
//! binary    ::= unary (op unary)*                || && == != < <= > >= + - *
//! unary     ::= "!" unary | postfix
//! postfix   ::= primary ("." f | "." m "(" args ")")*
//! primary   ::= x | literal | "?" holeId | "(" body ")" | "new" s C "(" args ")"
//!             | "if" "(" expr ")" "{" body "}" "else" "{" body "}"
//!             | "while" "(" expr ")" "{" body "}" | "declassify" "(" expr ")"
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diagnostics::Span;
use crate::lattice::{LatticeError, SecurityLattice, SecurityLevel};
use crate::refiner::{Refinement, RefinementStep, RuleKind};
use crate::syntax::{
    ClassDecl, ClassName, DeclKind, Expr, ExprKind, FieldDecl, HoleId, Literal, MethodDef, MethodHeader,
    Modifier, Param, SifoType, BINARY_OPERATORS, NOT_METHOD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseErrorKind {
    SyntaxError,
    UnknownRule,
    LatticeError,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::SyntaxError => "SyntaxError",
            ParseErrorKind::UnknownRule => "UnknownRule",
            ParseErrorKind::LatticeError => "LatticeError",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub span: Span,
    pub message: String,
}

impl ParseError {
    fn syntax(span: Span, message: impl Into<String>) -> Self {
        ParseError {
            kind: ParseErrorKind::SyntaxError,
            span,
            message: message.into(),
        }
    }

    /// `file:line:col: <kind>: <message>`
    pub fn render(&self, file: &str) -> String {
        format!(
            "{}:{}:{}: {}: {}",
            file, self.span.start_line, self.span.start_col, self.kind, self.message
        )
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {}: {}",
            self.span.start_line, self.span.start_col, self.kind, self.message
        )
    }
}

impl std::error::Error for ParseError {}

// ---------------------------------------------------------------- lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Span,
    /// Source text of the token.
    text: String,
}

const SYMBOLS: &[&str] = &[
    "->", "==", "!=", "<=", ">=", "&&", "||", "{", "}", "(", ")", ";", ",", ".", "=", "<", ">", "+", "-", "*",
    "!", "?", "@",
];

const KEYWORDS: &[&str] = &[
    "class",
    "interface",
    "implements",
    "extends",
    "method",
    "new",
    "if",
    "else",
    "while",
    "declassify",
    "return",
    "true",
    "false",
    "unit",
    "mut",
    "imm",
    "capsule",
    "read",
];

fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let advance = |i: &mut usize, line: &mut u32, col: &mut u32, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') || c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                { let ch = chars[i]; advance(&mut i, &mut line, &mut col, ch); }
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            let start = Span::new(line, col, line, col + 1);
            advance(&mut i, &mut line, &mut col, '/');
            advance(&mut i, &mut line, &mut col, '*');
            loop {
                if i + 1 >= chars.len() {
                    return Err(ParseError::syntax(start, "unterminated block comment"));
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    advance(&mut i, &mut line, &mut col, '*');
                    advance(&mut i, &mut line, &mut col, '/');
                    break;
                }
                { let ch = chars[i]; advance(&mut i, &mut line, &mut col, ch); }
            }
            continue;
        }
        let (sl, sc, start) = (line, col, i);
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                { let ch = chars[i]; advance(&mut i, &mut line, &mut col, ch); }
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                { let ch = chars[i]; advance(&mut i, &mut line, &mut col, ch); }
            }
            let digits: String = chars[start..i].iter().collect();
            let value = digits
                .parse::<i64>()
                .map_err(|_| ParseError::syntax(Span::new(sl, sc, line, col), "integer literal out of range"))?;
            Tok::Int(value)
        } else if c == '"' {
            advance(&mut i, &mut line, &mut col, c);
            let mut value = String::new();
            loop {
                let Some(&ch) = chars.get(i) else {
                    return Err(ParseError::syntax(Span::new(sl, sc, line, col), "unterminated string literal"));
                };
                if ch == '\n' {
                    return Err(ParseError::syntax(Span::new(sl, sc, line, col), "unterminated string literal"));
                }
                advance(&mut i, &mut line, &mut col, ch);
                match ch {
                    '"' => break,
                    '\\' => {
                        let Some(&esc) = chars.get(i) else { continue };
                        advance(&mut i, &mut line, &mut col, esc);
                        value.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                    }
                    other => value.push(other),
                }
            }
            Tok::Str(value)
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) else {
                return Err(ParseError::syntax(
                    Span::new(sl, sc, sl, sc + 1),
                    format!("unexpected character `{c}`"),
                ));
            };
            for _ in 0..sym.len() {
                { let ch = chars[i]; advance(&mut i, &mut line, &mut col, ch); }
            }
            Tok::Sym(sym)
        };
        out.push(Token {
            tok,
            span: Span::new(sl, sc, line, col.saturating_sub(1).max(1)),
            text: chars[start..i].iter().collect(),
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(line, col, line, col),
        text: String::new(),
    });
    Ok(out)
}

// ---------------------------------------------------------------- parser

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

fn describe(t: &Token) -> String {
    match &t.tok {
        Tok::Eof => "end of input".to_string(),
        _ => format!("`{}`", t.text),
    }
}

impl Parser {
    fn new(text: &str) -> PResult<Self> {
        Ok(Parser { toks: lex(text)?, pos: 0 })
    }

    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, n: usize) -> &Token {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)]
    }

    fn prev_span(&self) -> Span {
        if self.pos == 0 {
            self.toks[0].span
        } else {
            self.toks[self.pos - 1].span
        }
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at_eof(&self) -> bool {
        self.peek().tok == Tok::Eof
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(x) if *x == s)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(x) if x == w)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error_here(&self, expected: &str) -> ParseError {
        let t = self.peek();
        ParseError::syntax(t.span, format!("expected {expected}, found {}", describe(t)))
    }

    fn expect_sym(&mut self, s: &str) -> PResult<Span> {
        if self.is_sym(s) {
            Ok(self.bump().span)
        } else {
            Err(self.error_here(&format!("`{s}`")))
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<Span> {
        if self.is_word(w) {
            Ok(self.bump().span)
        } else {
            Err(self.error_here(&format!("`{w}`")))
        }
    }

    /// A non-keyword identifier.
    fn ident(&mut self, what: &str) -> PResult<(String, Span)> {
        match &self.peek().tok {
            Tok::Ident(s) if !is_keyword(s) => {
                let t = self.bump();
                Ok((t.text, t.span))
            }
            _ => Err(self.error_here(what)),
        }
    }

    fn modifier(&mut self) -> PResult<Modifier> {
        if let Tok::Ident(s) = &self.peek().tok {
            if let Some(m) = Modifier::from_keyword(s) {
                self.bump();
                return Ok(m);
            }
        }
        Err(self.error_here("a type modifier (mut, imm, capsule, read)"))
    }

    fn level(&mut self) -> PResult<SecurityLevel> {
        self.ident("a security level").map(|(s, _)| SecurityLevel::new(s))
    }

    /// Class names may be the built-in `int`, `Boolean`, `String`, `void`.
    fn class_name(&mut self) -> PResult<ClassName> {
        self.ident("a class name").map(|(s, _)| ClassName::new(s))
    }

    fn ty(&mut self) -> PResult<SifoType> {
        let level = self.level()?;
        let modifier = self.modifier()?;
        let class = self.class_name()?;
        Ok(SifoType { level, modifier, class })
    }

    fn starts_type(&self) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if !is_keyword(s))
            && matches!(&self.peek_at(1).tok, Tok::Ident(m) if Modifier::from_keyword(m).is_some())
    }

    // ---- declarations

    fn program(&mut self) -> (Vec<ClassDecl>, Vec<ParseError>) {
        let mut decls = Vec::new();
        let mut diags = Vec::new();
        while !self.at_eof() {
            match self.decl() {
                Ok(d) => decls.push(d),
                Err(e) => {
                    diags.push(e);
                    self.recover_to_decl();
                }
            }
        }
        (decls, diags)
    }

    /// Skips to the next `class`/`interface` keyword at brace depth zero.
    fn recover_to_decl(&mut self) {
        let mut depth = 0i32;
        // always consume at least one token
        let first = self.bump();
        if first.tok == Tok::Sym("{") {
            depth += 1;
        }
        while !self.at_eof() {
            if depth <= 0 && (self.is_word("class") || self.is_word("interface")) {
                return;
            }
            match self.bump().tok {
                Tok::Sym("{") => depth += 1,
                Tok::Sym("}") => depth -= 1,
                _ => {}
            }
        }
    }

    fn decl(&mut self) -> PResult<ClassDecl> {
        let start = self.peek().span;
        let kind = if self.eat_word("class") {
            DeclKind::Class
        } else if self.eat_word("interface") {
            DeclKind::Interface
        } else {
            return Err(self.error_here("`class` or `interface`"));
        };
        let (name, _) = self.ident("a class name")?;
        let mut supers = Vec::new();
        let list_kw = match kind {
            DeclKind::Class => "implements",
            DeclKind::Interface => "extends",
        };
        if self.eat_word(list_kw) {
            supers.push(self.class_name()?);
            while self.eat_sym(",") {
                supers.push(self.class_name()?);
            }
        }
        self.expect_sym("{")?;
        let mut decl = ClassDecl {
            kind,
            supers,
            ..ClassDecl::class(&name)
        };
        while !self.is_sym("}") {
            if self.at_eof() {
                return Err(self.error_here("`}`"));
            }
            let mstart = self.peek().span;
            let level = self.level()?;
            let modifier = self.modifier()?;
            if self.eat_word("method") {
                let header = self.header_rest(level, modifier, mstart)?;
                let body = if self.eat_sym(";") {
                    None
                } else {
                    if kind == DeclKind::Interface {
                        return Err(self.error_here("`;` after an interface method header"));
                    }
                    self.expect_sym("{")?;
                    let body = self.body()?;
                    self.expect_sym("}")?;
                    Some(body)
                };
                decl.methods.push(MethodDef { header, body });
            } else {
                if kind == DeclKind::Interface {
                    return Err(self.error_here("`method`; interfaces declare no fields"));
                }
                let class = self.class_name()?;
                let (fname, _) = self.ident("a field name")?;
                self.expect_sym(";")?;
                decl.fields.push(FieldDecl {
                    ty: SifoType { level, modifier, class },
                    name: fname,
                    span: mstart.to(self.prev_span()),
                });
            }
        }
        self.expect_sym("}")?;
        decl.span = start.to(self.prev_span());
        Ok(decl)
    }

    fn header_rest(&mut self, receiver_level: SecurityLevel, receiver_modifier: Modifier, start: Span) -> PResult<MethodHeader> {
        let ret = self.ty()?;
        let (name, _) = self.ident("a method name")?;
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if !self.is_sym(")") {
            loop {
                let ty = self.ty()?;
                let (pname, _) = self.ident("a parameter name")?;
                params.push(Param { name: pname, ty });
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        Ok(MethodHeader {
            receiver_level,
            receiver_modifier,
            ret,
            name,
            params,
            span: start.to(self.prev_span()),
        })
    }

    // ---- bodies and expressions

    /// A `;`-separated statement sequence, up to (not including) `}`, `)`
    /// or end of input.
    fn body(&mut self) -> PResult<Expr> {
        self.eat_word("return");
        let start = self.peek().span;
        if self.starts_type() {
            let ty = self.ty()?;
            let (name, _) = self.ident("a variable name")?;
            if !self.is_sym("=") {
                return Err(self.error_here("`=`; local variables must be initialized"));
            }
            self.bump();
            let init = self.expr()?;
            if !self.eat_sym(";") && !self.prev_is_block_end() {
                return Err(self.error_here("`;`"));
            }
            if self.at_body_end() {
                return Err(ParseError::syntax(
                    start.to(self.prev_span()),
                    format!("declaration of `{name}` must be followed by an expression"),
                ));
            }
            let rest = self.body()?;
            let span = start.to(rest.span);
            return Ok(Expr::new(
                ExprKind::Decl {
                    ty,
                    name,
                    init: Box::new(init),
                    rest: Box::new(rest),
                },
                span,
            ));
        }
        let first = self.expr()?;
        let separated = self.eat_sym(";");
        if self.at_body_end() {
            return Ok(first);
        }
        if !separated && !self.prev_is_block_end() {
            return Err(self.error_here("`;`"));
        }
        let rest = self.body()?;
        let span = first.span.to(rest.span);
        Ok(Expr::new(ExprKind::Seq(Box::new(first), Box::new(rest)), span))
    }

    fn at_body_end(&self) -> bool {
        self.at_eof() || self.is_sym("}") || self.is_sym(")")
    }

    fn prev_is_block_end(&self) -> bool {
        self.pos > 0 && self.toks[self.pos - 1].tok == Tok::Sym("}")
    }

    fn expr(&mut self) -> PResult<Expr> {
        let lhs = self.binary(1)?;
        if self.is_sym("=") {
            let eq = self.bump().span;
            let value = self.expr()?;
            let span = lhs.span.to(value.span);
            return match lhs.kind {
                ExprKind::FieldAccess { recv, field } => Ok(Expr::new(
                    ExprKind::FieldAssign {
                        recv,
                        field,
                        value: Box::new(value),
                    },
                    span,
                )),
                ExprKind::Var(name) => Err(ParseError::syntax(
                    lhs.span.to(eq),
                    format!("cannot assign to local `{name}`: locals are initialized once and never reassigned"),
                )),
                _ => Err(ParseError::syntax(lhs.span.to(eq), "left side of `=` must be a field access")),
            };
        }
        Ok(lhs)
    }

    fn binary_op(&self) -> Option<(&'static str, u8)> {
        let Tok::Sym(s) = &self.peek().tok else { return None };
        BINARY_OPERATORS
            .iter()
            .find(|(sym, _, _)| sym == s)
            .map(|(_, m, p)| (*m, *p))
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some((method, prec)) = self.binary_op() {
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr::new(
                ExprKind::Call {
                    recv: Box::new(lhs),
                    method: method.to_string(),
                    args: vec![rhs],
                },
                span,
            );
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.is_sym("!") {
            let start = self.bump().span;
            let inner = self.unary()?;
            let span = start.to(inner.span);
            return Ok(Expr::new(
                ExprKind::Call {
                    recv: Box::new(inner),
                    method: NOT_METHOD.to_string(),
                    args: Vec::new(),
                },
                span,
            ));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.eat_sym(".") {
            let (name, nspan) = self.ident("a field or method name")?;
            if self.is_sym("(") {
                let args = self.args()?;
                let span = e.span.to(self.prev_span());
                e = Expr::new(
                    ExprKind::Call {
                        recv: Box::new(e),
                        method: name,
                        args,
                    },
                    span,
                );
            } else {
                let span = e.span.to(nspan);
                e = Expr::new(
                    ExprKind::FieldAccess {
                        recv: Box::new(e),
                        field: name,
                    },
                    span,
                );
            }
        }
        Ok(e)
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect_sym("(")?;
        let mut args = Vec::new();
        if !self.is_sym(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        Ok(args)
    }

    fn block(&mut self) -> PResult<Expr> {
        self.expect_sym("{")?;
        let e = self.body()?;
        self.expect_sym("}")?;
        Ok(e)
    }

    fn hole_id(&mut self) -> PResult<HoleId> {
        let (mut id, _) = self.ident("a hole id")?;
        // `eA1.10` style ids for children past the ninth
        while self.is_sym(".") && matches!(self.peek_at(1).tok, Tok::Int(_)) {
            self.bump();
            id.push('.');
            id.push_str(&self.bump().text);
        }
        Ok(HoleId::new(id))
    }

    fn primary(&mut self) -> PResult<Expr> {
        let t = self.peek().clone();
        let start = t.span;
        let lit = |l: Literal| Ok(Expr::new(ExprKind::Literal(l), start));
        match &t.tok {
            Tok::Int(v) => {
                self.bump();
                lit(Literal::Int(*v))
            }
            Tok::Str(s) => {
                self.bump();
                lit(Literal::Str(s.clone()))
            }
            Tok::Sym("-") if matches!(self.peek_at(1).tok, Tok::Int(_)) => {
                self.bump();
                let n = self.bump();
                let Tok::Int(v) = n.tok else { unreachable!() };
                Ok(Expr::new(ExprKind::Literal(Literal::Int(-v)), start.to(n.span)))
            }
            Tok::Sym("?") => {
                self.bump();
                let id = self.hole_id()?;
                Ok(Expr::new(ExprKind::Hole(id), start.to(self.prev_span())))
            }
            Tok::Sym("(") => {
                self.bump();
                let mut e = self.body()?;
                self.expect_sym(")")?;
                e.span = start.to(self.prev_span());
                Ok(e)
            }
            Tok::Ident(w) => match w.as_str() {
                "true" | "false" => {
                    self.bump();
                    lit(Literal::Bool(w == "true"))
                }
                "unit" => {
                    self.bump();
                    lit(Literal::Unit)
                }
                "new" => {
                    self.bump();
                    let level = self.level()?;
                    let class = self.class_name()?;
                    let args = self.args()?;
                    Ok(Expr::new(ExprKind::New { level, class, args }, start.to(self.prev_span())))
                }
                "if" => {
                    self.bump();
                    self.expect_sym("(")?;
                    let guard = self.expr()?;
                    self.expect_sym(")")?;
                    let then_branch = self.block()?;
                    self.expect_word("else")?;
                    let else_branch = self.block()?;
                    Ok(Expr::new(
                        ExprKind::If {
                            guard: Box::new(guard),
                            then_branch: Box::new(then_branch),
                            else_branch: Box::new(else_branch),
                        },
                        start.to(self.prev_span()),
                    ))
                }
                "while" => {
                    self.bump();
                    self.expect_sym("(")?;
                    let guard = self.expr()?;
                    self.expect_sym(")")?;
                    let body = self.block()?;
                    Ok(Expr::new(
                        ExprKind::While {
                            guard: Box::new(guard),
                            body: Box::new(body),
                        },
                        start.to(self.prev_span()),
                    ))
                }
                "declassify" => {
                    self.bump();
                    self.expect_sym("(")?;
                    let inner = self.expr()?;
                    self.expect_sym(")")?;
                    Ok(Expr::new(ExprKind::Declassify(Box::new(inner)), start.to(self.prev_span())))
                }
                _ if is_keyword(w) => Err(self.error_here("an expression")),
                _ => {
                    self.bump();
                    Ok(Expr::new(ExprKind::Var(w.clone()), start))
                }
            },
            _ => Err(self.error_here("an expression")),
        }
    }

    fn expect_eof(&self) -> PResult<()> {
        if self.at_eof() {
            Ok(())
        } else {
            Err(self.error_here("end of input"))
        }
    }
}

/// Declarations read from one source file, plus any syntax errors.
/// Parsing resumes at the next declaration after an error.
#[derive(Debug, Clone, Default)]
pub struct ParsedProgram {
    pub decls: Vec<ClassDecl>,
    pub diagnostics: Vec<ParseError>,
}

pub fn parse_program(text: &str) -> ParsedProgram {
    match Parser::new(text) {
        Ok(mut p) => {
            let (decls, diagnostics) = p.program();
            ParsedProgram { decls, diagnostics }
        }
        Err(e) => ParsedProgram {
            decls: Vec::new(),
            diagnostics: vec![e],
        },
    }
}

/// Parses a statement sequence such as a method body.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(text)?;
    let e = p.body()?;
    p.expect_eof()?;
    Ok(e)
}

/// Parses `level modifier Class`.
pub fn parse_type(text: &str) -> Result<SifoType, ParseError> {
    let mut p = Parser::new(text)?;
    let t = p.ty()?;
    p.expect_eof()?;
    Ok(t)
}

// ---------------------------------------------------------------- lattices

/// Parses a lattice file: `level <name>...` and `flow <a> -> <b> [-> <c>...]`
/// lines, `#` comments.
pub fn parse_lattice(text: &str) -> Result<SecurityLattice, ParseError> {
    let mut names: Vec<(String, Span)> = Vec::new();
    let mut edges: Vec<(String, String, Span)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i as u32 + 1;
        let line = raw.split('#').next().unwrap_or("");
        let line_span = Span::new(line_no, 1, line_no, raw.chars().count().max(1) as u32);
        let words: Vec<&str> = line.split_whitespace().collect();
        let Some((&head, rest)) = words.split_first() else { continue };
        let bad = |msg: String| ParseError {
            kind: ParseErrorKind::SyntaxError,
            span: line_span,
            message: msg,
        };
        match head {
            "level" => {
                if rest.is_empty() {
                    return Err(bad("`level` needs at least one name".into()));
                }
                for name in rest {
                    if !SecurityLevel::is_valid_name(name) {
                        return Err(bad(format!("invalid security level name `{name}`")));
                    }
                    names.push((name.to_string(), line_span));
                }
            }
            "flow" => {
                let chain: Vec<&str> = rest.iter().copied().step_by(2).collect();
                let arrows_ok = rest.iter().skip(1).step_by(2).all(|a| *a == "->");
                if chain.len() < 2 || rest.len() % 2 == 0 || !arrows_ok {
                    return Err(bad("expected `flow <lower> -> <upper>`".into()));
                }
                for w in chain.windows(2) {
                    edges.push((w[0].to_string(), w[1].to_string(), line_span));
                }
            }
            other => return Err(bad(format!("unknown directive `{other}`; expected `level` or `flow`"))),
        }
    }
    let lattice_err = |span: Span, e: &LatticeError| ParseError {
        kind: ParseErrorKind::LatticeError,
        span,
        message: e.to_string(),
    };
    let whole = Span::new(1, 1, text.lines().count().max(1) as u32, 1);
    let span_of = |e: &LatticeError| -> Span {
        let named = |n: &str| {
            edges
                .iter()
                .find(|(a, b, _)| a == n || b == n)
                .map(|(_, _, s)| *s)
                .or_else(|| names.iter().find(|(m, _)| m == n).map(|(_, s)| *s))
        };
        match e {
            LatticeError::DuplicateLevel(n) => names.iter().filter(|(m, _)| m == n).nth(1).map(|(_, s)| *s),
            LatticeError::UnknownLevel(n) => edges.iter().find(|(a, b, _)| a == n || b == n).map(|(_, _, s)| *s),
            LatticeError::InvalidName(n) | LatticeError::Cycle(n, _) | LatticeError::NoLub(n, _) => named(n),
            LatticeError::NoExtrema(_) => None,
        }
        .unwrap_or(whole)
    };
    SecurityLattice::build(
        names.iter().map(|(n, _)| n.as_str()),
        edges.iter().map(|(a, b, _)| (a.as_str(), b.as_str())),
    )
    .map_err(|e| lattice_err(span_of(&e), &e))
}

// ---------------------------------------------------------------- scripts

/// A parsed script line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptStep {
    pub step: RefinementStep,
    pub span: Span,
}

/// Parses one step line: `<Rule> @ <holeId> <args>`.
pub fn parse_step(line: &str) -> Result<RefinementStep, ParseError> {
    let mut p = Parser::new(line)?;
    let step = step(&mut p)?;
    p.expect_eof()?;
    Ok(step)
}

fn step(p: &mut Parser) -> PResult<RefinementStep> {
    let rule_tok = p.peek().clone();
    let Tok::Ident(rule_name) = &rule_tok.tok else {
        return Err(p.error_here("a refinement rule name"));
    };
    let Some(rule) = RuleKind::from_name(rule_name) else {
        return Err(ParseError {
            kind: ParseErrorKind::UnknownRule,
            span: rule_tok.span,
            message: format!(
                "unknown refinement rule `{rule_name}`; expected one of {}",
                RuleKind::ALL.iter().map(|r| r.name()).collect::<Vec<_>>().join(", ")
            ),
        });
    };
    p.bump();
    p.expect_sym("@")?;
    let hole = p.hole_id()?;
    let refinement = match rule {
        RuleKind::Variable => {
            let t = p.peek().clone();
            let name = match &t.tok {
                Tok::Ident(w) if !is_keyword(w) || matches!(w.as_str(), "true" | "false" | "unit") => {
                    p.bump();
                    w.clone()
                }
                Tok::Int(_) | Tok::Str(_) => {
                    p.bump();
                    t.text.clone()
                }
                Tok::Sym("-") if matches!(p.peek_at(1).tok, Tok::Int(_)) => {
                    p.bump();
                    format!("-{}", p.bump().text)
                }
                _ => return Err(p.error_here("a variable name or literal")),
            };
            Refinement::Variable { name }
        }
        RuleKind::FieldAssignment => {
            let receiver = p.ty()?;
            let (field, _) = p.ident("a field name")?;
            Refinement::FieldAssignment { receiver, field }
        }
        RuleKind::FieldAccess => {
            let receiver = p.ty()?;
            let (field, _) = p.ident("a field name")?;
            Refinement::FieldAccess { receiver, field }
        }
        RuleKind::MethodCall => {
            let receiver = p.ty()?;
            let (method, _) = p.ident("a method name")?;
            let params = if p.eat_sym("(") {
                let mut ps = Vec::new();
                if !p.is_sym(")") {
                    loop {
                        ps.push(p.ty()?);
                        if !p.eat_sym(",") {
                            break;
                        }
                    }
                }
                p.expect_sym(")")?;
                Some(ps)
            } else {
                None
            };
            Refinement::MethodCall {
                receiver,
                method,
                params,
            }
        }
        RuleKind::Constructor => {
            let level = p.level()?;
            let class = p.class_name()?;
            Refinement::Constructor { level, class }
        }
        RuleKind::Composition => {
            let first = if p.at_eof() { None } else { Some(p.ty()?) };
            Refinement::Composition { first }
        }
        RuleKind::LocalDecl => {
            let ty = p.ty()?;
            let (name, _) = p.ident("a variable name")?;
            Refinement::LocalDecl { ty, name }
        }
        RuleKind::Selection => Refinement::Selection { level: p.level()? },
        RuleKind::Repetition => Refinement::Repetition { level: p.level()? },
        RuleKind::Subsumption => Refinement::Subsumption { target: p.ty()? },
        RuleKind::SecurityPromotion => Refinement::SecurityPromotion { level: p.level()? },
        RuleKind::ModifierPromotion => Refinement::ModifierPromotion,
        RuleKind::Declassification => Refinement::Declassification { level: p.level()? },
    };
    Ok(RefinementStep { hole, refinement })
}

/// Parses a script: one step per line, blank lines and `#` comments
/// ignored.
pub fn parse_script(text: &str) -> Result<Vec<ScriptStep>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i as u32 + 1;
        let content = strip_comment(raw);
        if content.trim().is_empty() {
            continue;
        }
        let step = parse_step(content).map_err(|mut e| {
            e.span.start_line = line_no;
            e.span.end_line = line_no;
            e
        })?;
        out.push(ScriptStep {
            step,
            span: Span::new(line_no, 1, line_no, raw.chars().count().max(1) as u32),
        });
    }
    Ok(out)
}

/// Cuts a line at the first `#` outside a string literal.
pub(crate) fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_str => escaped = true,
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}
