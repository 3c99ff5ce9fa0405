//! Abstract syntax: types, class tables, typing contexts and expressions
//! with typed holes.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{Span, TypeError, TypeErrorCode};
use crate::lattice::{SecurityLattice, SecurityLevel};

/// Reference capability of a type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modifier {
    Mut,
    Imm,
    Capsule,
    Read,
}

impl Modifier {
    pub const ALL: [Modifier; 4] = [Modifier::Mut, Modifier::Imm, Modifier::Capsule, Modifier::Read];

    /// `capsule <= m`, `m <= read`, `m <= m`; nothing else.
    pub fn is_sub(self, other: Modifier) -> bool {
        self == other || self == Modifier::Capsule || other == Modifier::Read
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Modifier::Mut => "mut",
            Modifier::Imm => "imm",
            Modifier::Capsule => "capsule",
            Modifier::Read => "read",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Modifier> {
        Some(match s {
            "mut" => Modifier::Mut,
            "imm" => Modifier::Imm,
            "capsule" => Modifier::Capsule,
            "read" => Modifier::Read,
            _ => return None,
        })
    }

    /// Modifiers whose values may be raised to a higher level.
    pub fn is_promotable(self) -> bool {
        matches!(self, Modifier::Imm | Modifier::Capsule)
    }
}

impl fmt::Display for Modifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassName(Arc<str>);

impl ClassName {
    pub fn new(name: impl AsRef<str>) -> Self {
        ClassName(Arc::from(name.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClassName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for ClassName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClassName {
    fn from(s: &str) -> Self {
        ClassName::new(s)
    }
}

pub const INT: &str = "int";
pub const BOOLEAN: &str = "Boolean";
pub const STRING: &str = "String";
pub const VOID: &str = "void";
pub const BUILTIN_CLASSES: [&str; 4] = [INT, BOOLEAN, STRING, VOID];

/// `level modifier Class`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SifoType {
    pub level: SecurityLevel,
    pub modifier: Modifier,
    pub class: ClassName,
}

impl SifoType {
    pub fn new(level: impl Into<SecurityLevel>, modifier: Modifier, class: impl Into<ClassName>) -> Self {
        SifoType {
            level: level.into(),
            modifier,
            class: class.into(),
        }
    }

    pub fn with_level(&self, level: SecurityLevel) -> Self {
        SifoType {
            level,
            ..self.clone()
        }
    }

    pub fn with_modifier(&self, modifier: Modifier) -> Self {
        SifoType {
            modifier,
            ..self.clone()
        }
    }

    pub fn is_void(&self) -> bool {
        self.class.as_str() == VOID
    }
}

impl fmt::Display for SifoType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.level, self.modifier, self.class)
    }
}

impl fmt::Debug for SifoType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldDecl {
    pub ty: SifoType,
    pub name: String,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub ty: SifoType,
}

/// `s mdf method T m(T1 x1, ..., Tn xn)`
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodHeader {
    pub receiver_level: SecurityLevel,
    pub receiver_modifier: Modifier,
    pub ret: SifoType,
    pub name: String,
    pub params: Vec<Param>,
    #[serde(skip)]
    pub span: Span,
}

impl PartialEq for MethodHeader {
    fn eq(&self, other: &Self) -> bool {
        self.receiver_level == other.receiver_level
            && self.receiver_modifier == other.receiver_modifier
            && self.ret == other.ret
            && self.name == other.name
            && self.params == other.params
    }
}

impl Eq for MethodHeader {}

impl MethodHeader {
    pub fn receiver_type(&self, class: &ClassName) -> SifoType {
        SifoType {
            level: self.receiver_level.clone(),
            modifier: self.receiver_modifier,
            class: class.clone(),
        }
    }

    /// Same shape up to parameter names.
    pub fn same_signature(&self, other: &MethodHeader) -> bool {
        self.receiver_level == other.receiver_level
            && self.receiver_modifier == other.receiver_modifier
            && self.ret == other.ret
            && self.name == other.name
            && self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| a.ty == b.ty)
    }

    /// The typing context a body of this method is checked in.
    pub fn context(&self, class: &ClassName) -> TypingContext {
        let mut ctx = TypingContext::new();
        ctx.push("this", self.receiver_type(class));
        for p in &self.params {
            ctx.push(p.name.clone(), p.ty.clone());
        }
        ctx
    }
}

/// A method header with an optional body. Interface methods and methods
/// whose body is still to be constructed have no body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodDef {
    pub header: MethodHeader,
    pub body: Option<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeclKind {
    Class,
    Interface,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassDecl {
    pub kind: DeclKind,
    pub name: ClassName,
    pub supers: Vec<ClassName>,
    pub fields: Vec<FieldDecl>,
    pub methods: Vec<MethodDef>,
    #[serde(default)]
    pub builtin: bool,
    #[serde(skip)]
    pub span: Span,
    /// Source file the declaration was read from, for diagnostics.
    #[serde(skip)]
    pub file: Option<String>,
}

impl PartialEq for FieldDecl {
    fn eq(&self, other: &Self) -> bool {
        self.ty == other.ty && self.name == other.name
    }
}

impl Eq for FieldDecl {}

impl PartialEq for ClassDecl {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.name == other.name
            && self.supers == other.supers
            && self.fields == other.fields
            && self.methods == other.methods
            && self.builtin == other.builtin
    }
}

impl Eq for ClassDecl {}

impl ClassDecl {
    pub fn class(name: &str) -> Self {
        ClassDecl {
            kind: DeclKind::Class,
            name: ClassName::new(name),
            supers: Vec::new(),
            fields: Vec::new(),
            methods: Vec::new(),
            builtin: false,
            span: Span::default(),
            file: None,
        }
    }

    pub fn method(&self, name: &str) -> Option<&MethodDef> {
        self.methods.iter().find(|m| m.header.name == name)
    }

    pub fn field(&self, name: &str) -> Option<&FieldDecl> {
        self.fields.iter().find(|f| f.name == name)
    }
}

/// Binary operators, desugared to calls on built-in classes.
/// `(symbol, method, precedence)`; higher binds tighter.
pub const BINARY_OPERATORS: &[(&str, &str, u8)] = &[
    ("||", "or", 1),
    ("&&", "and", 2),
    ("==", "eq", 3),
    ("!=", "neq", 3),
    ("<", "lt", 4),
    ("<=", "le", 4),
    (">", "gt", 4),
    (">=", "ge", 4),
    ("+", "plus", 5),
    ("-", "minus", 5),
    ("*", "times", 6),
];

/// Method behind unary `!`.
pub const NOT_METHOD: &str = "not";

pub fn operator_for_method(method: &str) -> Option<(&'static str, u8)> {
    BINARY_OPERATORS
        .iter()
        .find(|(_, m, _)| *m == method)
        .map(|(sym, _, prec)| (*sym, *prec))
}

fn builtin_decls(bottom: &SecurityLevel) -> Vec<ClassDecl> {
    let t = |c: &str| SifoType::new(bottom.clone(), Modifier::Imm, c);
    let header = |ret: &str, name: &str, params: &[&str]| MethodDef {
        header: MethodHeader {
            receiver_level: bottom.clone(),
            receiver_modifier: Modifier::Imm,
            ret: t(ret),
            name: name.to_string(),
            params: params
                .iter()
                .map(|c| Param {
                    name: "other".into(),
                    ty: t(c),
                })
                .collect(),
            span: Span::default(),
        },
        body: None,
    };
    let builtin = |name: &str, methods: Vec<MethodDef>| ClassDecl {
        methods,
        builtin: true,
        ..ClassDecl::class(name)
    };
    let mut int_methods: Vec<MethodDef> = ["eq", "neq", "lt", "le", "gt", "ge"]
        .iter()
        .map(|m| header(BOOLEAN, m, &[INT]))
        .collect();
    int_methods.extend(["plus", "minus", "times"].iter().map(|m| header(INT, m, &[INT])));
    let mut bool_methods: Vec<MethodDef> = ["and", "or", "eq", "neq"]
        .iter()
        .map(|m| header(BOOLEAN, m, &[BOOLEAN]))
        .collect();
    bool_methods.push(header(BOOLEAN, NOT_METHOD, &[]));
    let string_methods = vec![
        header(BOOLEAN, "eq", &[STRING]),
        header(BOOLEAN, "neq", &[STRING]),
        header(STRING, "plus", &[STRING]),
    ];
    vec![
        builtin(INT, int_methods),
        builtin(BOOLEAN, bool_methods),
        builtin(STRING, string_methods),
        builtin(VOID, Vec::new()),
    ]
}

/// Validated set of class and interface declarations, including the
/// built-in classes, bound to one security lattice.
#[derive(Debug, Clone)]
pub struct ClassTable {
    decls: IndexMap<ClassName, ClassDecl>,
    supers: HashMap<ClassName, BTreeSet<ClassName>>,
}

impl ClassTable {
    /// Validates `decls` against `lat` and adds the built-ins.
    pub fn build(lat: &SecurityLattice, decls: Vec<ClassDecl>) -> Result<Self, Vec<TypeError>> {
        let mut errors = Vec::new();
        let mut table: IndexMap<ClassName, ClassDecl> = IndexMap::new();
        for b in builtin_decls(lat.bottom()) {
            table.insert(b.name.clone(), b);
        }
        for d in decls {
            if table.contains_key(&d.name) {
                errors.push(
                    TypeError::new(
                        TypeErrorCode::DuplicateDeclaration,
                        "C-Ok",
                        format!("class or interface `{}` is declared twice", d.name),
                    )
                    .at(d.span)
                    .in_file(d.file.as_deref()),
                );
                continue;
            }
            table.insert(d.name.clone(), d);
        }

        let check_type = |errors: &mut Vec<TypeError>, ty: &SifoType, span: Span, table: &IndexMap<ClassName, ClassDecl>| {
            if !table.contains_key(&ty.class) {
                errors.push(
                    TypeError::new(TypeErrorCode::UnknownClass, "C-Ok", format!("unknown class `{}`", ty.class))
                        .at(span),
                );
            }
            if !lat.contains(&ty.level) {
                errors.push(
                    TypeError::new(
                        TypeErrorCode::UnknownLevel,
                        "C-Ok",
                        format!("unknown security level `{}`", ty.level),
                    )
                    .at(span),
                );
            }
        };

        for d in table.values().filter(|d| !d.builtin) {
            let first_error = errors.len();
            let rule = match d.kind {
                DeclKind::Class => "C-Ok",
                DeclKind::Interface => "I-Ok",
            };
            for s in &d.supers {
                match table.get(s) {
                    None => errors.push(
                        TypeError::new(TypeErrorCode::UnknownClass, rule, format!("unknown supertype `{s}`"))
                            .at(d.span),
                    ),
                    Some(sd) if sd.kind != DeclKind::Interface => errors.push(
                        TypeError::new(
                            TypeErrorCode::ClassMismatch,
                            rule,
                            format!("`{}` can only implement or extend interfaces, `{s}` is a class", d.name),
                        )
                        .at(d.span),
                    ),
                    _ => {}
                }
            }
            if d.kind == DeclKind::Interface && !d.fields.is_empty() {
                errors.push(
                    TypeError::new(
                        TypeErrorCode::FieldModifierIllegal,
                        rule,
                        format!("interface `{}` cannot declare fields", d.name),
                    )
                    .at(d.span),
                );
            }
            let mut seen = HashSet::new();
            for f in &d.fields {
                if !seen.insert(f.name.as_str()) {
                    errors.push(
                        TypeError::new(
                            TypeErrorCode::DuplicateDeclaration,
                            rule,
                            format!("field `{}` is declared twice in `{}`", f.name, d.name),
                        )
                        .at(f.span),
                    );
                }
                if !matches!(f.ty.modifier, Modifier::Mut | Modifier::Imm) {
                    errors.push(
                        TypeError::new(
                            TypeErrorCode::FieldModifierIllegal,
                            rule,
                            format!(
                                "field `{}` has modifier `{}`; fields must be mut or imm",
                                f.name, f.ty.modifier
                            ),
                        )
                        .at(f.span),
                    );
                }
                check_type(&mut errors, &f.ty, f.span, &table);
            }
            let mut seen = HashSet::new();
            for m in &d.methods {
                let h = &m.header;
                if !seen.insert(h.name.as_str()) {
                    errors.push(
                        TypeError::new(
                            TypeErrorCode::DuplicateDeclaration,
                            rule,
                            format!("method `{}` is declared twice in `{}`", h.name, d.name),
                        )
                        .at(h.span),
                    );
                }
                if d.kind == DeclKind::Interface && m.body.is_some() {
                    errors.push(
                        TypeError::new(
                            TypeErrorCode::DuplicateDeclaration,
                            rule,
                            format!("interface method `{}` cannot have a body", h.name),
                        )
                        .at(h.span),
                    );
                }
                if !lat.contains(&h.receiver_level) {
                    errors.push(
                        TypeError::new(
                            TypeErrorCode::UnknownLevel,
                            rule,
                            format!("unknown security level `{}`", h.receiver_level),
                        )
                        .at(h.span),
                    );
                }
                check_type(&mut errors, &h.ret, h.span, &table);
                let mut names = HashSet::new();
                for p in &h.params {
                    if p.name == "this" || !names.insert(p.name.as_str()) {
                        errors.push(
                            TypeError::new(
                                TypeErrorCode::DuplicateDeclaration,
                                rule,
                                format!("parameter name `{}` is reserved or repeated in `{}`", p.name, h.name),
                            )
                            .at(h.span),
                        );
                    }
                    check_type(&mut errors, &p.ty, h.span, &table);
                }
            }
            for e in &mut errors[first_error..] {
                e.file = e.file.take().or_else(|| d.file.clone());
            }
        }

        // reflexive-transitive supertype closure, rejecting cycles
        let mut supers: HashMap<ClassName, BTreeSet<ClassName>> = HashMap::new();
        for name in table.keys() {
            let mut seen = BTreeSet::new();
            let mut stack = vec![name.clone()];
            let mut cyclic = false;
            while let Some(c) = stack.pop() {
                if !seen.insert(c.clone()) {
                    continue;
                }
                if let Some(d) = table.get(&c) {
                    for s in &d.supers {
                        if s == name {
                            cyclic = true;
                        }
                        if table.contains_key(s) {
                            stack.push(s.clone());
                        }
                    }
                }
            }
            if cyclic {
                errors.push(
                    TypeError::new(
                        TypeErrorCode::ClassMismatch,
                        "I-Ok",
                        format!("`{name}` is its own supertype"),
                    )
                    .at(table[name].span)
                    .in_file(table[name].file.as_deref()),
                );
            }
            supers.insert(name.clone(), seen);
        }

        if errors.is_empty() {
            Ok(ClassTable { decls: table, supers })
        } else {
            Err(errors)
        }
    }

    pub fn get(&self, class: &ClassName) -> Option<&ClassDecl> {
        self.decls.get(class)
    }

    pub fn contains(&self, class: &ClassName) -> bool {
        self.decls.contains_key(class)
    }

    /// All declarations, built-ins first, then source order.
    pub fn decls(&self) -> impl Iterator<Item = &ClassDecl> {
        self.decls.values()
    }

    /// User declarations in source order.
    pub fn user_decls(&self) -> impl Iterator<Item = &ClassDecl> {
        self.decls.values().filter(|d| !d.builtin)
    }

    pub fn class_names(&self) -> impl Iterator<Item = &ClassName> {
        self.decls.keys()
    }

    /// Nominal subtyping: reflexive-transitive closure of implements/extends.
    pub fn is_subclass(&self, sub: &ClassName, sup: &ClassName) -> bool {
        self.supers.get(sub).is_some_and(|s| s.contains(sup))
    }

    /// Every `D` with `class <= D`, including `class` itself.
    pub fn supertypes(&self, class: &ClassName) -> impl Iterator<Item = &ClassName> {
        self.supers.get(class).into_iter().flatten()
    }

    /// Every `D` with `D <= class`, including `class` itself.
    pub fn subtypes<'a>(&'a self, class: &'a ClassName) -> impl Iterator<Item = &'a ClassName> + 'a {
        self.decls.keys().filter(move |d| self.is_subclass(d, class))
    }

    pub fn fields(&self, class: &ClassName) -> &[FieldDecl] {
        self.decls.get(class).map(|d| d.fields.as_slice()).unwrap_or(&[])
    }

    pub fn field(&self, class: &ClassName, name: &str) -> Option<&FieldDecl> {
        self.decls.get(class).and_then(|d| d.field(name))
    }

    /// Header of `method` as seen from `class`: declared in the class itself,
    /// or else in the nearest supertype that declares it.
    pub fn header(&self, class: &ClassName, method: &str) -> Option<&MethodHeader> {
        let decl = self.decls.get(class)?;
        if let Some(m) = decl.method(method) {
            return Some(&m.header);
        }
        let mut queue: Vec<&ClassName> = decl.supers.iter().collect();
        let mut seen = HashSet::new();
        while !queue.is_empty() {
            let c = queue.remove(0);
            if !seen.insert(c) {
                continue;
            }
            if let Some(d) = self.decls.get(c) {
                if let Some(m) = d.method(method) {
                    return Some(&m.header);
                }
                queue.extend(d.supers.iter());
            }
        }
        None
    }

    /// Method names visible on `class`, including inherited headers.
    pub fn method_names(&self, class: &ClassName) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for c in self.supertypes(class) {
            if let Some(d) = self.decls.get(c) {
                for m in &d.methods {
                    if !names.contains(&m.header.name) {
                        names.push(m.header.name.clone());
                    }
                }
            }
        }
        names.sort();
        names
    }

    /// Every header that `class` must implement: those of all proper supertypes.
    pub fn obligations(&self, class: &ClassName) -> Vec<(&ClassName, &MethodHeader)> {
        let mut out = Vec::new();
        for s in self.supertypes(class) {
            if s == class {
                continue;
            }
            if let Some(d) = self.decls.get(s) {
                for m in &d.methods {
                    out.push((s, &m.header));
                }
            }
        }
        out
    }

    /// Built-in classes cannot be instantiated with `new`, nor can interfaces.
    pub fn is_constructible(&self, class: &ClassName) -> bool {
        self.decls
            .get(class)
            .is_some_and(|d| !d.builtin && d.kind == DeclKind::Class)
    }
}

/// Ordered variable bindings. Names are unique.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypingContext {
    bindings: Vec<(String, SifoType)>,
}

impl TypingContext {
    pub fn new() -> Self {
        TypingContext::default()
    }

    pub fn get(&self, name: &str) -> Option<&SifoType> {
        self.bindings.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// Appends a binding. Returns `false` (and leaves the context unchanged)
    /// if the name is already bound.
    pub fn push(&mut self, name: impl Into<String>, ty: SifoType) -> bool {
        let name = name.into();
        if self.contains(&name) {
            return false;
        }
        self.bindings.push((name, ty));
        true
    }

    pub fn extended(&self, name: impl Into<String>, ty: SifoType) -> Option<Self> {
        let mut out = self.clone();
        out.push(name, ty).then_some(out)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &SifoType)> {
        self.bindings.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn has_mut(&self) -> bool {
        self.bindings.iter().any(|(_, t)| t.modifier == Modifier::Mut)
    }

    /// `Γ[mut(s)]`: every `x: s' mut C` with `s` not below-or-equal `s'`
    /// becomes `x: s' read C`.
    pub fn restrict_mut(&self, lat: &SecurityLattice, s: &SecurityLevel) -> Self {
        TypingContext {
            bindings: self
                .bindings
                .iter()
                .map(|(n, t)| {
                    if t.modifier == Modifier::Mut && !lat.flows(s, &t.level) {
                        (n.clone(), t.with_modifier(Modifier::Read))
                    } else {
                        (n.clone(), t.clone())
                    }
                })
                .collect(),
        }
    }

    /// `Γ[mut\read]`: every mut binding becomes read.
    pub fn mut_to_read(&self) -> Self {
        TypingContext {
            bindings: self
                .bindings
                .iter()
                .map(|(n, t)| {
                    if t.modifier == Modifier::Mut {
                        (n.clone(), t.with_modifier(Modifier::Read))
                    } else {
                        (n.clone(), t.clone())
                    }
                })
                .collect(),
        }
    }
}

impl FromIterator<(String, SifoType)> for TypingContext {
    fn from_iter<I: IntoIterator<Item = (String, SifoType)>>(iter: I) -> Self {
        let mut ctx = TypingContext::new();
        for (n, t) in iter {
            ctx.push(n, t);
        }
        ctx
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HoleId(String);

impl HoleId {
    pub const ROOT: &'static str = "eA";

    pub fn new(id: impl Into<String>) -> Self {
        HoleId(id.into())
    }

    pub fn root() -> Self {
        HoleId(Self::ROOT.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Id of the `index`-th (1-based) hole introduced by refining this one:
    /// `eA` -> `eA1`, `eA2`; `eA2` -> `eA21`. Indices above 9 use a dot.
    pub fn child(&self, index: usize) -> HoleId {
        if index < 10 {
            HoleId(format!("{}{}", self.0, index))
        } else {
            HoleId(format!("{}.{}", self.0, index))
        }
    }

    pub fn is_valid(s: &str) -> bool {
        !s.is_empty()
            && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
            && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
    }
}

impl fmt::Display for HoleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for HoleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A typed hole `eA : [P; Q; Γ; T]`. `pre` and `post` are carried verbatim
/// and never interpreted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoleSpec {
    pub id: HoleId,
    pub context: TypingContext,
    pub required: SifoType,
    #[serde(default)]
    pub pre: String,
    #[serde(default)]
    pub post: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Literal {
    Int(i64),
    Bool(bool),
    Str(String),
    Unit,
}

impl Literal {
    pub fn class(&self) -> &'static str {
        match self {
            Literal::Int(_) => INT,
            Literal::Bool(_) => BOOLEAN,
            Literal::Str(_) => STRING,
            Literal::Unit => VOID,
        }
    }

    /// Parses the concrete form of a literal token: `42`, `-3`, `true`,
    /// `false`, `unit`, `"text"`.
    pub fn parse_token(tok: &str) -> Option<Literal> {
        match tok {
            "true" => Some(Literal::Bool(true)),
            "false" => Some(Literal::Bool(false)),
            "unit" => Some(Literal::Unit),
            _ if tok.len() >= 2 && tok.starts_with('"') && tok.ends_with('"') => {
                Some(Literal::Str(unescape(&tok[1..tok.len() - 1])))
            }
            _ => tok.parse::<i64>().ok().map(Literal::Int),
        }
    }
}

fn unescape(s: &str) -> String {
    let mut out = String::new();
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some(other) => out.push(other),
                None => {}
            }
        } else {
            out.push(c);
        }
    }
    out
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(i) => write!(f, "{i}"),
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Str(s) => write!(f, "{s:?}"),
            Literal::Unit => f.write_str("unit"),
        }
    }
}

/// Expression node. Spans are ignored by equality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Expr {
    pub kind: ExprKind,
    #[serde(skip)]
    pub span: Span,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Eq for Expr {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExprKind {
    Hole(HoleId),
    Var(String),
    FieldAccess {
        recv: Box<Expr>,
        field: String,
    },
    FieldAssign {
        recv: Box<Expr>,
        field: String,
        value: Box<Expr>,
    },
    Call {
        recv: Box<Expr>,
        method: String,
        args: Vec<Expr>,
    },
    New {
        level: SecurityLevel,
        class: ClassName,
        args: Vec<Expr>,
    },
    Seq(Box<Expr>, Box<Expr>),
    If {
        guard: Box<Expr>,
        then_branch: Box<Expr>,
        else_branch: Box<Expr>,
    },
    While {
        guard: Box<Expr>,
        body: Box<Expr>,
    },
    Declassify(Box<Expr>),
    /// `T x = init; rest` with `x` bound in `rest` only.
    Decl {
        ty: SifoType,
        name: String,
        init: Box<Expr>,
        rest: Box<Expr>,
    },
    Literal(Literal),
}

impl From<ExprKind> for Expr {
    fn from(kind: ExprKind) -> Self {
        Expr {
            kind,
            span: Span::default(),
        }
    }
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    pub fn hole(id: HoleId) -> Self {
        ExprKind::Hole(id).into()
    }

    pub fn var(name: impl Into<String>) -> Self {
        ExprKind::Var(name.into()).into()
    }

    pub fn lit(lit: Literal) -> Self {
        ExprKind::Literal(lit).into()
    }

    pub fn field(recv: Expr, field: impl Into<String>) -> Self {
        ExprKind::FieldAccess {
            recv: Box::new(recv),
            field: field.into(),
        }
        .into()
    }

    pub fn assign(recv: Expr, field: impl Into<String>, value: Expr) -> Self {
        ExprKind::FieldAssign {
            recv: Box::new(recv),
            field: field.into(),
            value: Box::new(value),
        }
        .into()
    }

    pub fn call(recv: Expr, method: impl Into<String>, args: Vec<Expr>) -> Self {
        ExprKind::Call {
            recv: Box::new(recv),
            method: method.into(),
            args,
        }
        .into()
    }

    pub fn new_object(level: SecurityLevel, class: ClassName, args: Vec<Expr>) -> Self {
        ExprKind::New { level, class, args }.into()
    }

    pub fn seq(first: Expr, second: Expr) -> Self {
        ExprKind::Seq(Box::new(first), Box::new(second)).into()
    }

    pub fn if_else(guard: Expr, then_branch: Expr, else_branch: Expr) -> Self {
        ExprKind::If {
            guard: Box::new(guard),
            then_branch: Box::new(then_branch),
            else_branch: Box::new(else_branch),
        }
        .into()
    }

    pub fn while_loop(guard: Expr, body: Expr) -> Self {
        ExprKind::While {
            guard: Box::new(guard),
            body: Box::new(body),
        }
        .into()
    }

    pub fn declassify(inner: Expr) -> Self {
        ExprKind::Declassify(Box::new(inner)).into()
    }

    pub fn decl(ty: SifoType, name: impl Into<String>, init: Expr, rest: Expr) -> Self {
        ExprKind::Decl {
            ty,
            name: name.into(),
            init: Box::new(init),
            rest: Box::new(rest),
        }
        .into()
    }

    /// Direct subexpressions, left to right.
    pub fn children(&self) -> Vec<&Expr> {
        match &self.kind {
            ExprKind::Hole(_) | ExprKind::Var(_) | ExprKind::Literal(_) => Vec::new(),
            ExprKind::FieldAccess { recv, .. } => vec![recv],
            ExprKind::FieldAssign { recv, value, .. } => vec![recv, value],
            ExprKind::Call { recv, args, .. } => {
                let mut v: Vec<&Expr> = vec![recv];
                v.extend(args.iter());
                v
            }
            ExprKind::New { args, .. } => args.iter().collect(),
            ExprKind::Seq(a, b) => vec![a, b],
            ExprKind::If {
                guard,
                then_branch,
                else_branch,
            } => vec![guard, then_branch, else_branch],
            ExprKind::While { guard, body } => vec![guard, body],
            ExprKind::Declassify(e) => vec![e],
            ExprKind::Decl { init, rest, .. } => vec![init, rest],
        }
    }

    fn children_mut(&mut self) -> Vec<&mut Expr> {
        match &mut self.kind {
            ExprKind::Hole(_) | ExprKind::Var(_) | ExprKind::Literal(_) => Vec::new(),
            ExprKind::FieldAccess { recv, .. } => vec![recv],
            ExprKind::FieldAssign { recv, value, .. } => vec![recv, value],
            ExprKind::Call { recv, args, .. } => {
                let mut v: Vec<&mut Expr> = vec![recv];
                v.extend(args.iter_mut());
                v
            }
            ExprKind::New { args, .. } => args.iter_mut().collect(),
            ExprKind::Seq(a, b) => vec![a, b],
            ExprKind::If {
                guard,
                then_branch,
                else_branch,
            } => vec![guard, then_branch, else_branch],
            ExprKind::While { guard, body } => vec![guard, body],
            ExprKind::Declassify(e) => vec![e],
            ExprKind::Decl { init, rest, .. } => vec![init, rest],
        }
    }

    /// Hole ids in left-to-right, outside-in order.
    pub fn holes(&self) -> Vec<HoleId> {
        let mut out = Vec::new();
        self.collect_holes(&mut out);
        out
    }

    fn collect_holes(&self, out: &mut Vec<HoleId>) {
        if let ExprKind::Hole(id) = &self.kind {
            out.push(id.clone());
        }
        for c in self.children() {
            c.collect_holes(out);
        }
    }

    pub fn is_complete(&self) -> bool {
        match &self.kind {
            ExprKind::Hole(_) => false,
            _ => self.children().into_iter().all(Expr::is_complete),
        }
    }

    /// Replaces the hole `id` by `with`. Returns whether the hole was found.
    pub fn replace_hole(&mut self, id: &HoleId, with: Expr) -> bool {
        let mut slot = Some(with);
        self.replace_hole_inner(id, &mut slot);
        slot.is_none()
    }

    fn replace_hole_inner(&mut self, id: &HoleId, slot: &mut Option<Expr>) {
        if slot.is_none() {
            return;
        }
        if matches!(&self.kind, ExprKind::Hole(h) if h == id) {
            *self = slot.take().expect("checked above");
            return;
        }
        for c in self.children_mut() {
            c.replace_hole_inner(id, slot);
            if slot.is_none() {
                return;
            }
        }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        1 + self.children().into_iter().map(Expr::size).sum::<usize>()
    }
}
