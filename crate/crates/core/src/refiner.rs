//! Refinement sessions: a method body under construction, refined hole by
//! hole. Each step checks its rule's side conditions against the hole's
//! typing context and required type and computes the contexts and types of
//! the holes it introduces.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::diagnostics::{TypeError, TypeErrorCode};
use crate::lattice::{SecurityLattice, SecurityLevel};
use crate::parser::{self, ParseError};
use crate::pretty;
use crate::syntax::{
    ClassName, ClassTable, DeclKind, Expr, ExprKind, HoleId, HoleSpec, Literal, MethodDef, MethodHeader,
    Modifier, SifoType, TypingContext, BOOLEAN, INT, STRING, VOID,
};
use crate::typechecker::{field_arrow, meth_types, raise_type, subtype, Checker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleKind {
    Variable,
    FieldAssignment,
    FieldAccess,
    MethodCall,
    Constructor,
    Composition,
    Selection,
    Repetition,
    Subsumption,
    SecurityPromotion,
    ModifierPromotion,
    Declassification,
    /// Introduces a local variable.
    LocalDecl,
}

impl RuleKind {
    pub const ALL: [RuleKind; 13] = [
        RuleKind::Variable,
        RuleKind::FieldAssignment,
        RuleKind::FieldAccess,
        RuleKind::MethodCall,
        RuleKind::Constructor,
        RuleKind::Composition,
        RuleKind::Selection,
        RuleKind::Repetition,
        RuleKind::Subsumption,
        RuleKind::SecurityPromotion,
        RuleKind::ModifierPromotion,
        RuleKind::Declassification,
        RuleKind::LocalDecl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Variable => "Variable",
            RuleKind::FieldAssignment => "FieldAssignment",
            RuleKind::FieldAccess => "FieldAccess",
            RuleKind::MethodCall => "MethodCall",
            RuleKind::Constructor => "Constructor",
            RuleKind::Composition => "Composition",
            RuleKind::Selection => "Selection",
            RuleKind::Repetition => "Repetition",
            RuleKind::Subsumption => "Subsumption",
            RuleKind::SecurityPromotion => "SecurityPromotion",
            RuleKind::ModifierPromotion => "ModifierPromotion",
            RuleKind::Declassification => "Declassification",
            RuleKind::LocalDecl => "LocalDecl",
        }
    }

    pub fn from_name(name: &str) -> Option<RuleKind> {
        RuleKind::ALL.into_iter().find(|r| r.name() == name)
    }

    /// Whether the rule belongs to the original calculus. Logs of sessions
    /// that only use such rules replay on any faithful implementation.
    pub fn is_core(self) -> bool {
        self != RuleKind::LocalDecl
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A rule together with the arguments that fix its existential choices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Refinement {
    /// A variable name or a literal token (`0`, `true`, `"s"`, `unit`).
    Variable { name: String },
    FieldAssignment { receiver: SifoType, field: String },
    FieldAccess { receiver: SifoType, field: String },
    /// `params` selects among signatures with the same receiver and result.
    MethodCall {
        receiver: SifoType,
        method: String,
        params: Option<Vec<SifoType>>,
    },
    Constructor { level: SecurityLevel, class: ClassName },
    /// Type of the first component; `⊥ imm void` when absent.
    Composition { first: Option<SifoType> },
    Selection { level: SecurityLevel },
    Repetition { level: SecurityLevel },
    Subsumption { target: SifoType },
    SecurityPromotion { level: SecurityLevel },
    ModifierPromotion,
    Declassification { level: SecurityLevel },
    LocalDecl { ty: SifoType, name: String },
}

impl Refinement {
    pub fn rule(&self) -> RuleKind {
        match self {
            Refinement::Variable { .. } => RuleKind::Variable,
            Refinement::FieldAssignment { .. } => RuleKind::FieldAssignment,
            Refinement::FieldAccess { .. } => RuleKind::FieldAccess,
            Refinement::MethodCall { .. } => RuleKind::MethodCall,
            Refinement::Constructor { .. } => RuleKind::Constructor,
            Refinement::Composition { .. } => RuleKind::Composition,
            Refinement::Selection { .. } => RuleKind::Selection,
            Refinement::Repetition { .. } => RuleKind::Repetition,
            Refinement::Subsumption { .. } => RuleKind::Subsumption,
            Refinement::SecurityPromotion { .. } => RuleKind::SecurityPromotion,
            Refinement::ModifierPromotion => RuleKind::ModifierPromotion,
            Refinement::Declassification { .. } => RuleKind::Declassification,
            Refinement::LocalDecl { .. } => RuleKind::LocalDecl,
        }
    }

    /// Arguments in script syntax.
    pub fn args(&self) -> String {
        match self {
            Refinement::Variable { name } => name.clone(),
            Refinement::FieldAssignment { receiver, field } | Refinement::FieldAccess { receiver, field } => {
                format!("{receiver} {field}")
            }
            Refinement::MethodCall {
                receiver,
                method,
                params,
            } => match params {
                None => format!("{receiver} {method}"),
                Some(ps) => format!(
                    "{receiver} {method} ({})",
                    ps.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ")
                ),
            },
            Refinement::Constructor { level, class } => format!("{level} {class}"),
            Refinement::Composition { first } => first.as_ref().map(|t| t.to_string()).unwrap_or_default(),
            Refinement::Selection { level }
            | Refinement::Repetition { level }
            | Refinement::SecurityPromotion { level }
            | Refinement::Declassification { level } => level.to_string(),
            Refinement::Subsumption { target } => target.to_string(),
            Refinement::ModifierPromotion => String::new(),
            Refinement::LocalDecl { ty, name } => format!("{ty} {name}"),
        }
    }
}

/// One line of a refinement script: `<Rule> @ <hole> <args>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RefinementStep {
    pub hole: HoleId,
    pub refinement: Refinement,
}

impl RefinementStep {
    pub fn new(hole: impl Into<String>, refinement: Refinement) -> Self {
        RefinementStep {
            hole: HoleId::new(hole),
            refinement,
        }
    }

    pub fn rule(&self) -> RuleKind {
        self.refinement.rule()
    }
}

impl fmt::Display for RefinementStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} @ {}", self.rule(), self.hole)?;
        let args = self.refinement.args();
        if !args.is_empty() {
            write!(f, " {args}")?;
        }
        Ok(())
    }
}

impl FromStr for RefinementStep {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parser::parse_step(s)
    }
}

impl Serialize for RefinementStep {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RefinementStep {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RefinementError {
    #[error("no open hole `{0}`")]
    UnknownHole(HoleId),
    #[error("{rule}: side condition `{premise}` does not hold: {error}")]
    SideCondition {
        rule: RuleKind,
        premise: String,
        error: TypeError,
    },
    #[error("nothing to undo")]
    EmptyLog,
    #[error("method is not fully refined; open holes: {}", fmt_holes(.0))]
    Incomplete(Vec<HoleId>),
    #[error("no method `{method}` declared in class `{class}`")]
    UnknownMethod { class: String, method: String },
}

fn fmt_holes(holes: &[HoleId]) -> String {
    holes.iter().map(|h| h.as_str()).collect::<Vec<_>>().join(", ")
}

impl RefinementError {
    pub fn type_error(&self) -> Option<&TypeError> {
        match self {
            RefinementError::SideCondition { error, .. } => Some(error),
            _ => None,
        }
    }
}

/// Failure of the soundness oracle on a completed session.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SoundnessError {
    #[error(transparent)]
    Incomplete(RefinementError),
    #[error("constructed method is rejected by the type checker: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Rejected(Vec<TypeError>),
    #[error("exported method does not reparse to the constructed tree: {0}")]
    Roundtrip(String),
}

/// Deliberate engine defects, used to check that the soundness fuzzer
/// notices a broken rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    /// Security promotion also accepts `mut` and `read` holes.
    SecurityPromotionIgnoresModifier,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionOptions {
    pub allow_declassify: bool,
    #[serde(default)]
    pub pre: String,
    #[serde(default)]
    pub post: String,
    #[serde(skip)]
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionStatus {
    InProgress,
    Complete,
}

/// A method under construction. Sessions are values: `apply` returns a new
/// session and leaves the original untouched.
#[derive(Debug, Clone)]
pub struct Session {
    ct: Arc<ClassTable>,
    lat: Arc<SecurityLattice>,
    class: ClassName,
    header: MethodHeader,
    options: SessionOptions,
    root: Expr,
    holes: BTreeMap<HoleId, HoleSpec>,
    log: Vec<RefinementStep>,
}

struct Plan {
    replacement: Expr,
    new_holes: Vec<HoleSpec>,
}

type PlanResult = Result<Plan, RefinementError>;

fn side(rule: RuleKind, premise: impl Into<String>, code: TypeErrorCode, message: impl Into<String>) -> RefinementError {
    RefinementError::SideCondition {
        rule,
        premise: premise.into(),
        error: TypeError::new(code, rule.name(), message),
    }
}

fn mismatch_code(found: &SifoType, required: &SifoType) -> TypeErrorCode {
    if found.class != required.class {
        TypeErrorCode::ClassMismatch
    } else if found.level != required.level {
        TypeErrorCode::FlowViolation
    } else {
        TypeErrorCode::ModifierViolation
    }
}

fn literal_witness(class: &str) -> Option<&'static str> {
    match class {
        INT => Some("0"),
        BOOLEAN => Some("true"),
        STRING => Some("\"\""),
        VOID => Some("unit"),
        _ => None,
    }
}

impl Session {
    /// Opens a session on `class.method`: one hole `eA` typed with the
    /// method's return type in the context of its receiver and parameters.
    pub fn start(
        ct: Arc<ClassTable>,
        lat: Arc<SecurityLattice>,
        class: &str,
        method: &str,
        options: SessionOptions,
    ) -> Result<Session, RefinementError> {
        let class = ClassName::new(class);
        let unknown = || RefinementError::UnknownMethod {
            class: class.to_string(),
            method: method.to_string(),
        };
        let decl = ct
            .get(&class)
            .filter(|d| d.kind == DeclKind::Class && !d.builtin)
            .ok_or_else(unknown)?;
        let header = decl.method(method).ok_or_else(unknown)?.header.clone();
        let root_id = HoleId::root();
        let spec = HoleSpec {
            id: root_id.clone(),
            context: header.context(&class),
            required: header.ret.clone(),
            pre: options.pre.clone(),
            post: options.post.clone(),
        };
        Ok(Session {
            ct,
            lat,
            class,
            header,
            options,
            root: Expr::hole(root_id.clone()),
            holes: BTreeMap::from([(root_id, spec)]),
            log: Vec::new(),
        })
    }

    /// Replays `steps` from a fresh session.
    pub fn replay<'a>(
        ct: Arc<ClassTable>,
        lat: Arc<SecurityLattice>,
        class: &str,
        method: &str,
        options: SessionOptions,
        steps: impl IntoIterator<Item = &'a RefinementStep>,
    ) -> Result<Session, (usize, RefinementError)> {
        let mut s = Session::start(ct, lat, class, method, options).map_err(|e| (0, e))?;
        for (i, step) in steps.into_iter().enumerate() {
            s.apply_in_place(step).map_err(|e| (i, e))?;
        }
        Ok(s)
    }

    pub fn class_table(&self) -> &Arc<ClassTable> {
        &self.ct
    }

    pub fn lattice(&self) -> &Arc<SecurityLattice> {
        &self.lat
    }

    pub fn class(&self) -> &ClassName {
        &self.class
    }

    pub fn header(&self) -> &MethodHeader {
        &self.header
    }

    pub fn options(&self) -> &SessionOptions {
        &self.options
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn log(&self) -> &[RefinementStep] {
        &self.log
    }

    pub fn hole(&self, id: &HoleId) -> Option<&HoleSpec> {
        self.holes.get(id)
    }

    /// Open holes in left-to-right, outside-in order.
    pub fn open_holes(&self) -> Vec<&HoleSpec> {
        self.root.holes().iter().filter_map(|id| self.holes.get(id)).collect()
    }

    pub fn hole_count(&self) -> usize {
        self.holes.len()
    }

    pub fn is_complete(&self) -> bool {
        self.holes.is_empty()
    }

    pub fn status(&self) -> SessionStatus {
        if self.is_complete() {
            SessionStatus::Complete
        } else {
            SessionStatus::InProgress
        }
    }

    /// The method with its current (possibly incomplete) body.
    pub fn method_def(&self) -> MethodDef {
        MethodDef {
            header: self.header.clone(),
            body: Some(self.root.clone()),
        }
    }

    /// Applies one step, returning the refined session.
    pub fn apply(&self, step: &RefinementStep) -> Result<Session, RefinementError> {
        let plan = self.plan(step)?;
        let mut next = self.clone();
        next.commit(step, plan);
        Ok(next)
    }

    /// Applies one step in place. On error the session is unchanged.
    pub fn apply_in_place(&mut self, step: &RefinementStep) -> Result<(), RefinementError> {
        let plan = self.plan(step)?;
        self.commit(step, plan);
        Ok(())
    }

    /// Whether `step` would succeed.
    pub fn can_apply(&self, step: &RefinementStep) -> bool {
        self.plan(step).is_ok()
    }

    fn commit(&mut self, step: &RefinementStep, plan: Plan) {
        self.holes.remove(&step.hole);
        let replaced = self.root.replace_hole(&step.hole, plan.replacement);
        debug_assert!(replaced, "planned hole must exist in the tree");
        for spec in plan.new_holes {
            self.holes.insert(spec.id.clone(), spec);
        }
        self.log.push(step.clone());
    }

    /// The session before the last step, rebuilt by replaying the log.
    pub fn undo(&self) -> Result<Session, RefinementError> {
        if self.log.is_empty() {
            return Err(RefinementError::EmptyLog);
        }
        Session::replay(
            self.ct.clone(),
            self.lat.clone(),
            self.class.as_str(),
            &self.header.name,
            self.options.clone(),
            &self.log[..self.log.len() - 1],
        )
        .map_err(|(_, e)| e)
    }

    fn checker(&self) -> Checker<'_> {
        Checker::new(&self.ct, &self.lat)
    }

    fn child(&self, parent: &HoleSpec, index: usize, context: TypingContext, required: SifoType) -> HoleSpec {
        HoleSpec {
            id: parent.id.child(index),
            context,
            required,
            pre: parent.pre.clone(),
            post: parent.post.clone(),
        }
    }

    fn rewrite(&self, parent: &HoleSpec, context: TypingContext, required: SifoType) -> Plan {
        Plan {
            replacement: Expr::hole(parent.id.clone()),
            new_holes: vec![HoleSpec {
                id: parent.id.clone(),
                context,
                required,
                pre: parent.pre.clone(),
                post: parent.post.clone(),
            }],
        }
    }

    fn require_type(&self, rule: RuleKind, t: &SifoType) -> Result<(), RefinementError> {
        if !self.lat.contains(&t.level) {
            return Err(side(
                rule,
                format!("{} is a security level", t.level),
                TypeErrorCode::UnknownLevel,
                format!("unknown security level `{}`", t.level),
            ));
        }
        if !self.ct.contains(&t.class) {
            return Err(side(
                rule,
                format!("{} is a class", t.class),
                TypeErrorCode::UnknownClass,
                format!("unknown class `{}`", t.class),
            ));
        }
        Ok(())
    }

    fn require_level(&self, rule: RuleKind, s: &SecurityLevel) -> Result<(), RefinementError> {
        if self.lat.contains(s) {
            Ok(())
        } else {
            Err(side(
                rule,
                format!("{s} is a security level"),
                TypeErrorCode::UnknownLevel,
                format!("unknown security level `{s}`"),
            ))
        }
    }

    fn lub(&self, a: &SecurityLevel, b: &SecurityLevel) -> SecurityLevel {
        self.lat.lub(a, b).expect("levels validated against the lattice")
    }

    fn plan(&self, step: &RefinementStep) -> PlanResult {
        let spec = self
            .holes
            .get(&step.hole)
            .ok_or_else(|| RefinementError::UnknownHole(step.hole.clone()))?;
        let rule = step.rule();
        let t = &spec.required;
        let gamma = &spec.context;
        match &step.refinement {
            Refinement::Variable { name } => {
                let (found, replacement) = match Literal::parse_token(name) {
                    Some(lit) => (
                        SifoType::new(self.lat.bottom().clone(), Modifier::Imm, lit.class()),
                        Expr::lit(lit),
                    ),
                    None => match gamma.get(name) {
                        Some(ty) => (ty.clone(), Expr::var(name.clone())),
                        None => {
                            return Err(side(
                                rule,
                                format!("{name} ∈ Γ"),
                                TypeErrorCode::UnknownVar,
                                format!("`{name}` is not bound in the hole's context"),
                            ))
                        }
                    },
                };
                if &found != t {
                    return Err(side(
                        rule,
                        format!("Γ({name}) = {t}"),
                        mismatch_code(&found, t),
                        format!("`{name}` has type `{found}` but the hole requires exactly `{t}`"),
                    ));
                }
                Ok(Plan {
                    replacement,
                    new_holes: Vec::new(),
                })
            }
            Refinement::FieldAssignment { receiver, field } => {
                self.require_type(rule, receiver)?;
                if receiver.modifier != Modifier::Mut {
                    return Err(side(
                        rule,
                        format!("receiver type is s0 mut C0, not {receiver}"),
                        TypeErrorCode::ModifierViolation,
                        format!("fields can only be assigned through a mut receiver, `{receiver}` given"),
                    ));
                }
                let fd = self.ct.field(&receiver.class, field).ok_or_else(|| {
                    side(
                        rule,
                        format!("{field} ∈ fields({})", receiver.class),
                        TypeErrorCode::UnknownField,
                        format!("`{}` has no field `{field}`", receiver.class),
                    )
                })?;
                let value = fd.ty.with_level(self.lub(&receiver.level, &fd.ty.level));
                if !t.is_void() && t != &value {
                    return Err(side(
                        rule,
                        format!("s1 = lub({}, {})", receiver.level, fd.ty.level),
                        mismatch_code(&value, t),
                        format!("the assignment has type `{value}` but the hole requires `{t}`"),
                    ));
                }
                let recv_hole = self.child(spec, 1, gamma.clone(), receiver.clone());
                let value_hole = self.child(spec, 2, gamma.clone(), value);
                Ok(Plan {
                    replacement: Expr::assign(
                        Expr::hole(recv_hole.id.clone()),
                        field.clone(),
                        Expr::hole(value_hole.id.clone()),
                    ),
                    new_holes: vec![recv_hole, value_hole],
                })
            }
            Refinement::FieldAccess { receiver, field } => {
                self.require_type(rule, receiver)?;
                let fd = self.ct.field(&receiver.class, field).ok_or_else(|| {
                    side(
                        rule,
                        format!("{field} ∈ fields({})", receiver.class),
                        TypeErrorCode::UnknownField,
                        format!("`{}` has no field `{field}`", receiver.class),
                    )
                })?;
                if fd.ty.class != t.class {
                    return Err(side(
                        rule,
                        format!("class of {field} is {}", t.class),
                        TypeErrorCode::ClassMismatch,
                        format!("field `{field}` has class `{}`, the hole requires `{}`", fd.ty.class, t.class),
                    ));
                }
                let level = self.lub(&receiver.level, &fd.ty.level);
                if level != t.level {
                    return Err(side(
                        rule,
                        format!("{} = lub({}, {})", t.level, receiver.level, fd.ty.level),
                        TypeErrorCode::FlowViolation,
                        format!("the access has level `{level}`, the hole requires `{}`", t.level),
                    ));
                }
                let m = field_arrow(receiver.modifier, fd.ty.modifier);
                if m != Some(t.modifier) {
                    return Err(side(
                        rule,
                        format!("{} ▷ {} = {}", receiver.modifier, fd.ty.modifier, t.modifier),
                        TypeErrorCode::ModifierViolation,
                        format!(
                            "reading a `{}` field through a `{}` receiver does not give `{}`",
                            fd.ty.modifier, receiver.modifier, t.modifier
                        ),
                    ));
                }
                let recv_hole = self.child(spec, 1, gamma.clone(), receiver.clone());
                Ok(Plan {
                    replacement: Expr::field(Expr::hole(recv_hole.id.clone()), field.clone()),
                    new_holes: vec![recv_hole],
                })
            }
            Refinement::MethodCall {
                receiver,
                method,
                params,
            } => {
                self.require_type(rule, receiver)?;
                let sigs = meth_types(&self.ct, &self.lat, &receiver.class, method).map_err(|e| {
                    RefinementError::SideCondition {
                        rule,
                        premise: format!("{method} is a method of {}", receiver.class),
                        error: TypeError { rule: rule.name().into(), ..e },
                    }
                })?;
                let with_recv: Vec<_> = sigs.iter().filter(|s| &s.receiver == receiver).collect();
                if with_recv.is_empty() {
                    return Err(side(
                        rule,
                        format!("{receiver} ... -> {t} ∈ methTypes({}, {method})", receiver.class),
                        mismatch_code(receiver, &sigs[0].receiver),
                        format!("no signature of `{method}` has receiver `{receiver}`"),
                    ));
                }
                let with_ret: Vec<_> = with_recv
                    .iter()
                    .filter(|s| &s.ret == t && params.as_ref().is_none_or(|ps| &s.params == ps))
                    .collect();
                if with_ret.is_empty() {
                    let wanted = match params {
                        Some(ps) => format!(
                            "({receiver}, {}) -> {t}",
                            ps.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ")
                        ),
                        None => format!("{receiver} ... -> {t}"),
                    };
                    return Err(side(
                        rule,
                        format!("{wanted} ∈ methTypes({}, {method})", receiver.class),
                        mismatch_code(&with_recv[0].ret, t),
                        format!("no signature of `{method}` with receiver `{receiver}` returns `{t}`"),
                    ));
                }
                let Some(sig) = with_ret.iter().find(|s| s.respects_receiver_level(&self.lat)) else {
                    return Err(side(
                        rule,
                        format!(
                            "sec({t}) ≥ sec({receiver}) and mut/capsule parameters ≥ sec({receiver})"
                        ),
                        TypeErrorCode::FlowViolation,
                        format!(
                            "calling `{method}` on a `{}` receiver would leak it through the result or a mutable argument",
                            receiver.level
                        ),
                    ));
                };
                let recv_hole = self.child(spec, 1, gamma.clone(), receiver.clone());
                let arg_holes: Vec<HoleSpec> = sig
                    .params
                    .iter()
                    .enumerate()
                    .map(|(i, p)| self.child(spec, i + 2, gamma.clone(), p.clone()))
                    .collect();
                let replacement = Expr::call(
                    Expr::hole(recv_hole.id.clone()),
                    method.clone(),
                    arg_holes.iter().map(|h| Expr::hole(h.id.clone())).collect(),
                );
                let mut new_holes = vec![recv_hole];
                new_holes.extend(arg_holes);
                Ok(Plan { replacement, new_holes })
            }
            Refinement::Constructor { level, class } => {
                self.require_level(rule, level)?;
                if !self.ct.is_constructible(class) {
                    return Err(side(
                        rule,
                        format!("{class} is a constructible class"),
                        if self.ct.contains(class) {
                            TypeErrorCode::NotConstructible
                        } else {
                            TypeErrorCode::UnknownClass
                        },
                        format!("`{class}` cannot be instantiated"),
                    ));
                }
                let made = SifoType::new(level.clone(), Modifier::Mut, class.clone());
                if &made != t {
                    let mut msg = format!("`new {level} {class}(...)` has type `{made}`, the hole requires `{t}`");
                    if t.modifier == Modifier::Capsule || t.modifier == Modifier::Imm {
                        msg.push_str("; refine with ModifierPromotion or Subsumption first");
                    }
                    return Err(side(rule, format!("{t} = {made}"), mismatch_code(&made, t), msg));
                }
                let mut holes = Vec::new();
                for (i, fd) in self.ct.fields(class).iter().enumerate() {
                    let ty = raise_type(&fd.ty, level, &self.lat).map_err(|e| RefinementError::SideCondition {
                        rule,
                        premise: format!("{}[{level}] is defined", fd.ty),
                        error: TypeError { rule: rule.name().into(), ..e },
                    })?;
                    holes.push(self.child(spec, i + 1, gamma.clone(), ty));
                }
                Ok(Plan {
                    replacement: Expr::new_object(
                        level.clone(),
                        class.clone(),
                        holes.iter().map(|h| Expr::hole(h.id.clone())).collect(),
                    ),
                    new_holes: holes,
                })
            }
            Refinement::Composition { first } => {
                let first = first
                    .clone()
                    .unwrap_or_else(|| SifoType::new(self.lat.bottom().clone(), Modifier::Imm, VOID));
                self.require_type(rule, &first)?;
                let a = self.child(spec, 1, gamma.clone(), first);
                let b = self.child(spec, 2, gamma.clone(), t.clone());
                Ok(Plan {
                    replacement: Expr::seq(Expr::hole(a.id.clone()), Expr::hole(b.id.clone())),
                    new_holes: vec![a, b],
                })
            }
            Refinement::LocalDecl { ty, name } => {
                self.require_type(rule, ty)?;
                if name == "this" || parser::parse_expr(name).map(|e| e.kind) != Ok(ExprKind::Var(name.clone())) {
                    return Err(side(
                        rule,
                        format!("{name} is an identifier"),
                        TypeErrorCode::UnknownVar,
                        format!("`{name}` cannot name a local variable"),
                    ));
                }
                let Some(extended) = gamma.extended(name.clone(), ty.clone()) else {
                    return Err(side(
                        rule,
                        format!("{name} ∉ Γ"),
                        TypeErrorCode::DuplicateDeclaration,
                        format!("`{name}` is already bound in the hole's context"),
                    ));
                };
                let init = self.child(spec, 1, gamma.clone(), ty.clone());
                let rest = self.child(spec, 2, extended, t.clone());
                Ok(Plan {
                    replacement: Expr::decl(
                        ty.clone(),
                        name.clone(),
                        Expr::hole(init.id.clone()),
                        Expr::hole(rest.id.clone()),
                    ),
                    new_holes: vec![init, rest],
                })
            }
            Refinement::Selection { level } => {
                self.require_level(rule, level)?;
                let guard = self.child(spec, 1, gamma.clone(), SifoType::new(level.clone(), Modifier::Imm, BOOLEAN));
                let restricted = gamma.restrict_mut(&self.lat, level);
                let then_hole = self.child(spec, 2, restricted.clone(), t.clone());
                let else_hole = self.child(spec, 3, restricted, t.clone());
                Ok(Plan {
                    replacement: Expr::if_else(
                        Expr::hole(guard.id.clone()),
                        Expr::hole(then_hole.id.clone()),
                        Expr::hole(else_hole.id.clone()),
                    ),
                    new_holes: vec![guard, then_hole, else_hole],
                })
            }
            Refinement::Repetition { level } => {
                self.require_level(rule, level)?;
                let guard = self.child(spec, 1, gamma.clone(), SifoType::new(level.clone(), Modifier::Imm, BOOLEAN));
                let body = self.child(spec, 2, gamma.restrict_mut(&self.lat, level), t.clone());
                Ok(Plan {
                    replacement: Expr::while_loop(Expr::hole(guard.id.clone()), Expr::hole(body.id.clone())),
                    new_holes: vec![guard, body],
                })
            }
            Refinement::Subsumption { target } => {
                self.require_type(rule, target)?;
                if !subtype(target, t, &self.ct) {
                    return Err(side(
                        rule,
                        format!("{target} ≤ {t}"),
                        mismatch_code(target, t),
                        format!("`{target}` is not a subtype of `{t}`"),
                    ));
                }
                Ok(self.rewrite(spec, gamma.clone(), target.clone()))
            }
            Refinement::SecurityPromotion { level } => {
                self.require_level(rule, level)?;
                // A mut or read hole is first narrowed to the promotable
                // modifier below it (capsule <= mut, imm <= read).
                let modifier = match t.modifier {
                    _ if self.options.fault == Some(Fault::SecurityPromotionIgnoresModifier) => t.modifier,
                    Modifier::Mut => Modifier::Capsule,
                    Modifier::Read => Modifier::Imm,
                    m => m,
                };
                if !self.lat.flows(level, &t.level) {
                    return Err(side(
                        rule,
                        format!("{level} ≤ {}", t.level),
                        TypeErrorCode::FlowViolation,
                        format!("`{level}` is not below `{}`", t.level),
                    ));
                }
                let target = SifoType::new(level.clone(), modifier, t.class.clone());
                Ok(self.rewrite(spec, gamma.clone(), target))
            }
            Refinement::ModifierPromotion => {
                if t.modifier != Modifier::Capsule {
                    return Err(side(
                        rule,
                        format!("{t} is a capsule type"),
                        TypeErrorCode::PromotionFailed,
                        format!("only capsule holes can be promoted from mut, `{t}` given"),
                    ));
                }
                Ok(self.rewrite(spec, gamma.mut_to_read(), t.with_modifier(Modifier::Mut)))
            }
            Refinement::Declassification { level } => {
                self.require_level(rule, level)?;
                if !self.options.allow_declassify {
                    return Err(side(
                        rule,
                        "declassification is enabled for this session",
                        TypeErrorCode::DeclassifyIllegal,
                        "declassification is disabled; start the session with allow-declassify",
                    ));
                }
                if &t.level != self.lat.bottom() || !t.modifier.is_promotable() {
                    return Err(side(
                        rule,
                        format!("{t} = {} mdf C with mdf ∈ {{capsule, imm}}", self.lat.bottom()),
                        TypeErrorCode::DeclassifyIllegal,
                        format!("only `{}` imm or capsule holes can be declassified, `{t}` given", self.lat.bottom()),
                    ));
                }
                let inner = self.child(spec, 1, gamma.clone(), t.with_level(level.clone()));
                Ok(Plan {
                    replacement: Expr::declassify(Expr::hole(inner.id.clone())),
                    new_holes: vec![inner],
                })
            }
        }
    }

    /// Steps applicable to `hole`, each of which succeeds when applied.
    /// Local declarations are not suggested since their name and type are
    /// free choices.
    pub fn applicable_rules(&self, hole: &HoleId) -> Result<Vec<RefinementStep>, RefinementError> {
        let spec = self.holes.get(hole).ok_or_else(|| RefinementError::UnknownHole(hole.clone()))?;
        let t = &spec.required;
        let levels = self.lat.levels();
        let mut raw: Vec<Refinement> = Vec::new();

        for (x, ty) in spec.context.iter() {
            if ty == t {
                raw.push(Refinement::Variable { name: x.to_string() });
            }
        }
        if &t.level == self.lat.bottom() && t.modifier == Modifier::Imm {
            match t.class.as_str() {
                BOOLEAN => {
                    raw.push(Refinement::Variable { name: "true".into() });
                    raw.push(Refinement::Variable { name: "false".into() });
                }
                other => {
                    if let Some(w) = literal_witness(other) {
                        raw.push(Refinement::Variable { name: w.into() });
                    }
                }
            }
        }

        for decl in self.ct.user_decls() {
            for fd in self.ct.fields(&decl.name) {
                for s0 in levels {
                    raw.push(Refinement::FieldAssignment {
                        receiver: SifoType::new(s0.clone(), Modifier::Mut, decl.name.clone()),
                        field: fd.name.clone(),
                    });
                    if fd.ty.class == t.class {
                        for m0 in Modifier::ALL {
                            raw.push(Refinement::FieldAccess {
                                receiver: SifoType::new(s0.clone(), m0, decl.name.clone()),
                                field: fd.name.clone(),
                            });
                        }
                    }
                }
            }
        }

        for decl in self.ct.decls() {
            for m in self.ct.method_names(&decl.name) {
                if let Ok(sigs) = meth_types(&self.ct, &self.lat, &decl.name, &m) {
                    for sig in sigs.into_iter().filter(|s| &s.ret == t) {
                        raw.push(Refinement::MethodCall {
                            receiver: sig.receiver,
                            method: m.clone(),
                            params: Some(sig.params),
                        });
                    }
                }
            }
        }

        raw.push(Refinement::Constructor {
            level: t.level.clone(),
            class: t.class.clone(),
        });
        raw.push(Refinement::Composition { first: None });
        for s in levels {
            raw.push(Refinement::Selection { level: s.clone() });
            raw.push(Refinement::Repetition { level: s.clone() });
        }
        for c in self.ct.class_names() {
            if self.ct.is_subclass(c, &t.class) {
                for m in Modifier::ALL {
                    let target = SifoType::new(t.level.clone(), m, c.clone());
                    if &target != t {
                        raw.push(Refinement::Subsumption { target });
                    }
                }
            }
        }
        for s in levels {
            if s != &t.level {
                raw.push(Refinement::SecurityPromotion { level: s.clone() });
            }
        }
        raw.push(Refinement::ModifierPromotion);
        for s in levels {
            if s != self.lat.bottom() {
                raw.push(Refinement::Declassification { level: s.clone() });
            }
        }

        let mut out: Vec<RefinementStep> = Vec::new();
        for r in raw {
            let step = RefinementStep {
                hole: hole.clone(),
                refinement: r,
            };
            if self.can_apply(&step) && !out.contains(&step) {
                out.push(step);
            }
        }
        Ok(out)
    }

    /// Source text of the completed method.
    pub fn export_method(&self) -> Result<String, RefinementError> {
        if !self.is_complete() {
            return Err(RefinementError::Incomplete(self.root.holes()));
        }
        Ok(pretty::method(&self.method_def(), 0))
    }

    /// Checks the completed method with the type checker and confirms the
    /// exported text reparses to the same tree.
    pub fn verify_soundness(&self) -> Result<(), SoundnessError> {
        let text = self.export_method().map_err(SoundnessError::Incomplete)?;
        let def = self.method_def();
        self.checker()
            .check_method(&self.class, &def)
            .map_err(SoundnessError::Rejected)?;
        let wrapped = format!("class {} {{\n{text}\n}}", self.class);
        let parsed = parser::parse_program(&wrapped);
        let reparsed = parsed
            .decls
            .first()
            .and_then(|d| d.methods.first())
            .filter(|_| parsed.diagnostics.is_empty());
        match reparsed {
            Some(m) if *m == def => Ok(()),
            Some(_) => Err(SoundnessError::Roundtrip("trees differ".into())),
            None => Err(SoundnessError::Roundtrip(
                parsed
                    .diagnostics
                    .first()
                    .map(|d| d.to_string())
                    .unwrap_or_else(|| "no method found".into()),
            )),
        }
    }
}
