//! The type system: subtyping, promotions, multiple method types and
//! class/interface well-formedness.
//!
//! Subsumption, security promotion and capsule promotion are not syntax
//! directed. Because lattices, modifiers and class tables are finite, the
//! checker computes for every expression the complete finite set of types it
//! can be given: the syntax-directed rule produces a base set, which is then
//! closed under promotion and subsumption. `check_against` is membership in
//! that set, and `type_of` reports the principal element of the base set.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{TypeError, TypeErrorCode};
use crate::lattice::{SecurityLattice, SecurityLevel};
use crate::syntax::{
    ClassName, ClassTable, DeclKind, Expr, ExprKind, MethodDef, Modifier, SifoType, TypingContext, BOOLEAN,
    VOID,
};

pub type TypeSet = BTreeSet<SifoType>;

/// `s mdf C <= s mdf' C'` iff `C <= C'` and `mdf <= mdf'`. Levels never change.
pub fn subtype(t1: &SifoType, t2: &SifoType, ct: &ClassTable) -> bool {
    t1.level == t2.level && t1.modifier.is_sub(t2.modifier) && ct.is_subclass(&t1.class, &t2.class)
}

/// Modifier of a field read through a receiver. Defined for `mut` and `imm`
/// fields only.
pub fn field_arrow(receiver: Modifier, field: Modifier) -> Option<Modifier> {
    match (receiver, field) {
        (_, Modifier::Capsule | Modifier::Read) => None,
        (_, Modifier::Imm) | (Modifier::Imm, _) => Some(Modifier::Imm),
        (Modifier::Mut | Modifier::Capsule, f) => Some(f),
        (Modifier::Read, Modifier::Mut) => Some(Modifier::Read),
    }
}

/// `T[s]`: raises the level of `t` to `lub(s, sec(t))`. Undefined when the
/// two levels are incomparable.
pub fn raise_type(t: &SifoType, s: &SecurityLevel, lat: &SecurityLattice) -> Result<SifoType, TypeError> {
    if !lat.comparable(s, &t.level) {
        return Err(TypeError::new(
            TypeErrorCode::IncomparableLevels,
            "T[s]",
            format!("cannot raise `{t}` to `{s}`: levels `{}` and `{s}` are incomparable", t.level),
        ));
    }
    let level = lat
        .lub(s, &t.level)
        .map_err(|e| TypeError::new(TypeErrorCode::UnknownLevel, "T[s]", e.to_string()))?;
    Ok(t.with_level(level))
}

/// One usable signature of a method: receiver, parameters, result.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub receiver: SifoType,
    pub params: Vec<SifoType>,
    pub ret: SifoType,
}

impl Signature {
    fn map_modifiers(&self, f: impl Fn(Modifier) -> Modifier) -> Signature {
        let m = |t: &SifoType| t.with_modifier(f(t.modifier));
        Signature {
            receiver: m(&self.receiver),
            params: self.params.iter().map(m).collect(),
            ret: m(&self.ret),
        }
    }

    /// Side conditions of a call: the result and every mut or capsule
    /// argument must be at least as secret as the receiver.
    pub fn respects_receiver_level(&self, lat: &SecurityLattice) -> bool {
        let r = &self.receiver.level;
        lat.flows(r, &self.ret.level)
            && self
                .params
                .iter()
                .filter(|p| matches!(p.modifier, Modifier::Mut | Modifier::Capsule))
                .all(|p| lat.flows(r, &p.level))
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.receiver)?;
        for p in &self.params {
            write!(f, ", {p}")?;
        }
        write!(f, " -> {}", self.ret)
    }
}

/// All signatures derivable from the declared header of `method` as seen
/// from `class`: for every level `s'` at which all types can be raised, the
/// raised signature, the same with `mut` replaced by `capsule`, and the same
/// with additionally `read` replaced by `imm`. Duplicates are removed; order
/// follows lattice declaration order, then the three variants.
pub fn meth_types(
    ct: &ClassTable,
    lat: &SecurityLattice,
    class: &ClassName,
    method: &str,
) -> Result<Vec<Signature>, TypeError> {
    let header = ct.header(class, method).ok_or_else(|| {
        TypeError::new(
            TypeErrorCode::UnknownMethod,
            "Call",
            format!("`{class}` has no method `{method}`"),
        )
    })?;
    let declared = Signature {
        receiver: header.receiver_type(class),
        params: header.params.iter().map(|p| p.ty.clone()).collect(),
        ret: header.ret.clone(),
    };
    let mut out: Vec<Signature> = Vec::new();
    for s in lat.levels() {
        let raise = |t: &SifoType| raise_type(t, s, lat).ok();
        let Some(receiver) = raise(&declared.receiver) else { continue };
        let Some(ret) = raise(&declared.ret) else { continue };
        let Some(params) = declared.params.iter().map(raise).collect::<Option<Vec<_>>>() else {
            continue;
        };
        let raised = Signature { receiver, params, ret };
        let capsule = raised.map_modifiers(|m| if m == Modifier::Mut { Modifier::Capsule } else { m });
        let imm = raised.map_modifiers(|m| match m {
            Modifier::Mut => Modifier::Capsule,
            Modifier::Read => Modifier::Imm,
            other => other,
        });
        for sig in [raised, capsule, imm] {
            if !out.contains(&sig) {
                out.push(sig);
            }
        }
    }
    Ok(out)
}

/// Result of typing one expression.
#[derive(Debug, Clone)]
pub struct Derivation {
    /// Types produced by the syntax-directed rule, before promotion and
    /// subsumption.
    pub base: TypeSet,
    /// Every type the expression can be given.
    pub all: TypeSet,
}

/// Type checker over a class table and lattice.
#[derive(Clone, Copy)]
pub struct Checker<'a> {
    pub ct: &'a ClassTable,
    pub lat: &'a SecurityLattice,
}

fn err(code: TypeErrorCode, rule: &str, msg: impl Into<String>) -> TypeError {
    TypeError::new(code, rule, msg)
}

impl<'a> Checker<'a> {
    pub fn new(ct: &'a ClassTable, lat: &'a SecurityLattice) -> Self {
        Checker { ct, lat }
    }

    fn bottom_type(&self, class: &str) -> SifoType {
        SifoType::new(self.lat.bottom().clone(), Modifier::Imm, class)
    }

    fn lub(&self, a: &SecurityLevel, b: &SecurityLevel) -> Result<SecurityLevel, TypeError> {
        self.lat
            .lub(a, b)
            .map_err(|e| err(TypeErrorCode::UnknownLevel, "lub", e.to_string()))
    }

    /// Closes a set under security promotion (imm and capsule only) followed
    /// by subsumption.
    pub fn close(&self, set: &TypeSet) -> TypeSet {
        let mut out = TypeSet::new();
        for t in set {
            let levels = if t.modifier.is_promotable() {
                self.lat.above(&t.level)
            } else {
                vec![t.level.clone()]
            };
            for l in levels {
                for c in self.ct.supertypes(&t.class) {
                    for m in Modifier::ALL {
                        if t.modifier.is_sub(m) {
                            out.insert(SifoType {
                                level: l.clone(),
                                modifier: m,
                                class: c.clone(),
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Every type `e` can be given in `ctx`.
    pub fn derive(&self, ctx: &TypingContext, e: &Expr) -> Result<Derivation, TypeError> {
        let base = self.base(ctx, e).map_err(|er| er.at(e.span))?;
        let mut all = self.close(&base);
        if all.iter().any(|t| t.modifier == Modifier::Mut) {
            if ctx.has_mut() {
                if let Ok(viewed) = self.derive(&ctx.mut_to_read(), e) {
                    let promoted: TypeSet = viewed
                        .all
                        .iter()
                        .filter(|t| t.modifier == Modifier::Mut)
                        .map(|t| t.with_modifier(Modifier::Capsule))
                        .collect();
                    all.extend(self.close(&promoted));
                }
            } else {
                // the context is its own mut\read view
                loop {
                    let promoted: TypeSet = all
                        .iter()
                        .filter(|t| t.modifier == Modifier::Mut)
                        .map(|t| t.with_modifier(Modifier::Capsule))
                        .filter(|t| !all.contains(t))
                        .collect();
                    if promoted.is_empty() {
                        break;
                    }
                    all.extend(self.close(&promoted));
                }
            }
        }
        Ok(Derivation { base, all })
    }

    fn types(&self, ctx: &TypingContext, e: &Expr) -> Result<TypeSet, TypeError> {
        self.derive(ctx, e).map(|d| d.all)
    }

    fn check_type_wf(&self, t: &SifoType, rule: &str) -> Result<(), TypeError> {
        if !self.ct.contains(&t.class) {
            return Err(err(TypeErrorCode::UnknownClass, rule, format!("unknown class `{}`", t.class)));
        }
        if !self.lat.contains(&t.level) {
            return Err(err(
                TypeErrorCode::UnknownLevel,
                rule,
                format!("unknown security level `{}`", t.level),
            ));
        }
        Ok(())
    }

    fn base(&self, ctx: &TypingContext, e: &Expr) -> Result<TypeSet, TypeError> {
        let mut base = TypeSet::new();
        match &e.kind {
            ExprKind::Hole(id) => {
                return Err(err(
                    TypeErrorCode::UnexpectedHole,
                    "M-Ok",
                    format!("abstract expression `{id}` has not been refined"),
                ))
            }
            ExprKind::Var(x) => match ctx.get(x) {
                Some(t) => {
                    base.insert(t.clone());
                }
                None => {
                    return Err(err(TypeErrorCode::UnknownVar, "T-Var", format!("unknown variable `{x}`")))
                }
            },
            ExprKind::Literal(lit) => {
                base.insert(self.bottom_type(lit.class()));
            }
            ExprKind::FieldAccess { recv, field } => {
                let rset = self.types(ctx, recv)?;
                for t0 in &rset {
                    let Some(fd) = self.ct.field(&t0.class, field) else { continue };
                    let Some(m) = field_arrow(t0.modifier, fd.ty.modifier) else { continue };
                    base.insert(SifoType {
                        level: self.lub(&t0.level, &fd.ty.level)?,
                        modifier: m,
                        class: fd.ty.class.clone(),
                    });
                }
                if base.is_empty() {
                    return Err(err(
                        TypeErrorCode::UnknownField,
                        "Field Access",
                        format!("no field `{field}` on receiver of type `{}`", principal_of(&rset)),
                    ));
                }
            }
            ExprKind::FieldAssign { recv, field, value } => {
                let rset = self.types(ctx, recv)?;
                let vset = self.types(ctx, value)?;
                for t0 in rset.iter().filter(|t| t.modifier == Modifier::Mut) {
                    let Some(fd) = self.ct.field(&t0.class, field) else { continue };
                    let want = fd.ty.with_level(self.lub(&t0.level, &fd.ty.level)?);
                    if vset.contains(&want) {
                        base.insert(want);
                    }
                }
                if base.is_empty() {
                    return Err(self.explain_assign(ctx, recv, field, value, &rset));
                }
                // an assignment in statement position may stand for any void result
                for s in self.lat.levels() {
                    for m in Modifier::ALL {
                        base.insert(SifoType::new(s.clone(), m, VOID));
                    }
                }
            }
            ExprKind::Call { recv, method, args } => {
                let rset = self.types(ctx, recv)?;
                let asets = args
                    .iter()
                    .map(|a| self.types(ctx, a))
                    .collect::<Result<Vec<_>, _>>()?;
                for sig in self.candidate_signatures(&rset, method) {
                    if sig.params.len() == args.len()
                        && rset.contains(&sig.receiver)
                        && sig.params.iter().zip(&asets).all(|(p, a)| a.contains(p))
                        && sig.respects_receiver_level(self.lat)
                    {
                        base.insert(sig.ret.clone());
                    }
                }
                if base.is_empty() {
                    return Err(self.explain_call(&rset, method, args, &asets, None));
                }
            }
            ExprKind::New { level, class, args } => {
                if !self.lat.contains(level) {
                    return Err(err(TypeErrorCode::UnknownLevel, "New", format!("unknown security level `{level}`")));
                }
                if !self.ct.contains(class) {
                    return Err(err(TypeErrorCode::UnknownClass, "New", format!("unknown class `{class}`")));
                }
                if !self.ct.is_constructible(class) {
                    return Err(err(
                        TypeErrorCode::NotConstructible,
                        "New",
                        format!("`{class}` is an interface or built-in class and cannot be instantiated"),
                    ));
                }
                let fields = self.ct.fields(class);
                if fields.len() != args.len() {
                    return Err(err(
                        TypeErrorCode::ArityMismatch,
                        "New",
                        format!("`{class}` has {} fields but {} arguments were given", fields.len(), args.len()),
                    ));
                }
                for (fd, arg) in fields.iter().zip(args) {
                    let want = raise_type(&fd.ty, level, self.lat).map_err(|er| TypeError {
                        rule: "New".into(),
                        ..er
                    })?;
                    let aset = self.types(ctx, arg)?;
                    if !aset.contains(&want) {
                        return Err(self.mismatch(ctx, arg, &want, "New").at(arg.span));
                    }
                }
                base.insert(SifoType::new(level.clone(), Modifier::Mut, class.clone()));
            }
            ExprKind::Seq(first, second) => {
                self.types(ctx, first)?;
                base = self.types(ctx, second)?;
            }
            ExprKind::If {
                guard,
                then_branch,
                else_branch,
            } => {
                let mut first_err = None;
                for s in self.guard_levels(ctx, guard)? {
                    let inner = ctx.restrict_mut(self.lat, &s);
                    match (self.types(&inner, then_branch), self.types(&inner, else_branch)) {
                        (Ok(a), Ok(b)) => base.extend(a.intersection(&b).cloned()),
                        (Err(er), _) | (_, Err(er)) => {
                            first_err.get_or_insert(er);
                        }
                    }
                }
                if base.is_empty() {
                    return Err(first_err.unwrap_or_else(|| {
                        err(
                            TypeErrorCode::ClassMismatch,
                            "If",
                            "the branches of the conditional have no common type",
                        )
                    }));
                }
            }
            ExprKind::While { guard, body } => {
                let mut first_err = None;
                for s in self.guard_levels(ctx, guard)? {
                    let inner = ctx.restrict_mut(self.lat, &s);
                    match self.types(&inner, body) {
                        Ok(b) => base.extend(b),
                        Err(er) => {
                            first_err.get_or_insert(er);
                        }
                    }
                }
                if base.is_empty() {
                    return Err(first_err.expect("guard levels are nonempty"));
                }
            }
            ExprKind::Declassify(inner) => {
                let iset = self.types(ctx, inner)?;
                for t in iset.iter().filter(|t| t.modifier.is_promotable()) {
                    base.insert(SifoType {
                        level: self.lat.bottom().clone(),
                        modifier: t.modifier,
                        class: t.class.clone(),
                    });
                }
                if base.is_empty() {
                    return Err(err(
                        TypeErrorCode::DeclassifyIllegal,
                        "Declassification",
                        format!(
                            "only imm or capsule values can be declassified, found `{}`",
                            principal_of(&iset)
                        ),
                    ));
                }
            }
            ExprKind::Decl { ty, name, init, rest } => {
                self.check_type_wf(ty, "Decl")?;
                let inner = ctx.extended(name.clone(), ty.clone()).ok_or_else(|| {
                    err(
                        TypeErrorCode::DuplicateDeclaration,
                        "Decl",
                        format!("local `{name}` shadows an existing variable"),
                    )
                })?;
                self.check_against(ctx, init, ty)?;
                base = self.types(&inner, rest)?;
            }
        }
        Ok(base)
    }

    /// Levels `s` at which the guard can be typed `s imm Boolean`, minimal
    /// elements only.
    fn guard_levels(&self, ctx: &TypingContext, guard: &Expr) -> Result<Vec<SecurityLevel>, TypeError> {
        let gset = self.types(ctx, guard)?;
        let levels: Vec<SecurityLevel> = gset
            .iter()
            .filter(|t| t.modifier == Modifier::Imm && t.class.as_str() == BOOLEAN)
            .map(|t| t.level.clone())
            .collect();
        if levels.is_empty() {
            return Err(err(
                TypeErrorCode::GuardNotBoolean,
                "If",
                format!("guard has type `{}`, expected `s imm Boolean`", principal_of(&gset)),
            )
            .at(guard.span));
        }
        Ok(self.lat.minimal(&levels))
    }

    fn candidate_signatures(&self, rset: &TypeSet, method: &str) -> Vec<crate::typechecker::Signature> {
        let classes: BTreeSet<&ClassName> = rset.iter().map(|t| &t.class).collect();
        classes
            .into_iter()
            .filter_map(|c| meth_types(self.ct, self.lat, c, method).ok())
            .flatten()
            .collect()
    }

    /// Principal type of `e`: the element of the base set from which all
    /// other base types follow by promotion and subsumption.
    /// For an assignment this is the assigned field type, not one of the
    /// statement-position void types.
    pub fn type_of(&self, ctx: &TypingContext, e: &Expr) -> Result<SifoType, TypeError> {
        let mut base = self.derive(ctx, e)?.base;
        if matches!(e.kind, ExprKind::FieldAssign { .. }) && base.iter().any(|t| !t.is_void()) {
            base.retain(|t| !t.is_void());
        }
        Ok(self.principal(&base))
    }

    fn principal(&self, base: &TypeSet) -> SifoType {
        base.iter()
            .find(|p| {
                let reach = self.close(&std::iter::once((*p).clone()).collect());
                base.iter().all(|b| reach.contains(b))
            })
            .or_else(|| base.iter().next())
            .cloned()
            .expect("derivations are nonempty")
    }

    /// Checks `e` against `required`.
    pub fn check_against(&self, ctx: &TypingContext, e: &Expr, required: &SifoType) -> Result<(), TypeError> {
        self.check_type_wf(required, "Subsumption")?;
        let d = self.derive(ctx, e)?;
        if d.all.contains(required) {
            Ok(())
        } else {
            Err(self.explain(ctx, e, required, "Subsumption").at(e.span))
        }
    }

    /// Why `e` (well typed) cannot be given `required`. Descends through
    /// sequencing forms to the expression that produces the value.
    fn explain(&self, ctx: &TypingContext, e: &Expr, required: &SifoType, rule: &str) -> TypeError {
        match &e.kind {
            ExprKind::Seq(_, second) => self.explain(ctx, second, required, rule).at(second.span),
            ExprKind::Decl { ty, name, rest, .. } => match ctx.extended(name.clone(), ty.clone()) {
                Some(inner) => self.explain(&inner, rest, required, rule).at(rest.span),
                None => self.mismatch(ctx, e, required, rule),
            },
            ExprKind::If {
                guard,
                then_branch,
                else_branch,
            } => {
                let Ok(levels) = self.guard_levels(ctx, guard) else {
                    return self.mismatch(ctx, e, required, rule);
                };
                let inner = ctx.restrict_mut(self.lat, &levels[0]);
                let ok = |b: &Expr| self.types(&inner, b).is_ok_and(|s| s.contains(required));
                let branch = if ok(then_branch) { else_branch } else { then_branch };
                self.explain(&inner, branch, required, rule).at(branch.span)
            }
            ExprKind::While { guard, body } => {
                let Ok(levels) = self.guard_levels(ctx, guard) else {
                    return self.mismatch(ctx, e, required, rule);
                };
                let inner = ctx.restrict_mut(self.lat, &levels[0]);
                self.explain(&inner, body, required, rule).at(body.span)
            }
            ExprKind::Call { recv, method, args } => {
                let (Ok(rset), Ok(asets)) = (
                    self.types(ctx, recv),
                    args.iter().map(|a| self.types(ctx, a)).collect::<Result<Vec<_>, _>>(),
                ) else {
                    return self.mismatch(ctx, e, required, rule);
                };
                let blocked = self.candidate_signatures(&rset, method).into_iter().any(|sig| {
                    sig.params.len() == args.len()
                        && rset.contains(&sig.receiver)
                        && sig.params.iter().zip(&asets).all(|(p, a)| a.contains(p))
                        && !sig.respects_receiver_level(self.lat)
                        && self.close(&std::iter::once(sig.ret.clone()).collect()).contains(required)
                });
                if blocked {
                    self.explain_call(&rset, method, args, &asets, Some(required))
                } else {
                    self.mismatch(ctx, e, required, rule)
                }
            }
            _ => self.mismatch(ctx, e, required, rule),
        }
    }

    /// Compares the principal type of a well-typed `e` with `required`.
    fn mismatch(&self, ctx: &TypingContext, e: &Expr, required: &SifoType, rule: &str) -> TypeError {
        let d = match self.derive(ctx, e) {
            Ok(d) => d,
            Err(er) => return er,
        };
        let same_class: TypeSet = d
            .base
            .iter()
            .filter(|t| self.ct.is_subclass(&t.class, &required.class))
            .cloned()
            .collect();
        let found = self.principal(if same_class.is_empty() { &d.base } else { &same_class });
        if !d.all.iter().any(|t| self.ct.is_subclass(&t.class, &required.class)) {
            return err(
                TypeErrorCode::ClassMismatch,
                rule,
                format!("expected `{required}`, found `{found}`: `{}` is not a subtype of `{}`", found.class, required.class),
            );
        }
        if !self.lat.flows(&found.level, &required.level) {
            return err(
                TypeErrorCode::FlowViolation,
                rule,
                format!(
                    "expected `{required}`, found `{found}`: information may not flow from `{}` to `{}`",
                    found.level, required.level
                ),
            );
        }
        if found.level != required.level
            && !d
                .all
                .iter()
                .any(|t| t.level == required.level && self.ct.is_subclass(&t.class, &required.class))
        {
            return err(
                TypeErrorCode::FlowViolation,
                rule,
                format!(
                    "expected `{required}`, found `{found}`: a `{}` value cannot be promoted from `{}` to `{}`; only imm and capsule values can",
                    found.modifier, found.level, required.level
                ),
            );
        }
        if required.modifier == Modifier::Capsule {
            return err(
                TypeErrorCode::PromotionFailed,
                "Prom",
                format!(
                    "expected `{required}`, found `{found}`: the value is reachable from mutable variables and cannot be promoted to capsule"
                ),
            );
        }
        let reason = if found.modifier.is_sub(required.modifier) {
            format!("no derivation gives the value modifier `{}` at level `{}`", required.modifier, required.level)
        } else {
            format!("`{}` is not a subtype of `{}`", found.modifier, required.modifier)
        };
        err(
            TypeErrorCode::ModifierViolation,
            rule,
            format!("expected `{required}`, found `{found}`: {reason}"),
        )
    }

    fn explain_assign(
        &self,
        ctx: &TypingContext,
        recv: &Expr,
        field: &str,
        value: &Expr,
        rset: &TypeSet,
    ) -> TypeError {
        const RULE: &str = "Field Assign";
        let with_field: Vec<&SifoType> = rset
            .iter()
            .filter(|t| self.ct.field(&t.class, field).is_some())
            .collect();
        if with_field.is_empty() {
            return err(
                TypeErrorCode::UnknownField,
                RULE,
                format!("no field `{field}` on receiver of type `{}`", principal_of(rset)),
            )
            .at(recv.span);
        }
        let muts: TypeSet = with_field
            .iter()
            .filter(|t| t.modifier == Modifier::Mut)
            .map(|t| (*t).clone())
            .collect();
        if muts.is_empty() {
            return err(
                TypeErrorCode::ModifierViolation,
                RULE,
                format!(
                    "cannot assign field `{field}` through a receiver of type `{}`; the receiver must be mut",
                    principal_of(rset)
                ),
            )
            .at(recv.span);
        }
        let t0 = self.principal(&muts);
        let fd = self.ct.field(&t0.class, field).expect("filtered above");
        match self.lub(&t0.level, &fd.ty.level) {
            Ok(level) => self.explain(ctx, value, &fd.ty.with_level(level), RULE).at(value.span),
            Err(e) => e,
        }
    }

    fn explain_call(
        &self,
        rset: &TypeSet,
        method: &str,
        args: &[Expr],
        asets: &[TypeSet],
        required: Option<&SifoType>,
    ) -> TypeError {
        const RULE: &str = "Call";
        let sigs = self.candidate_signatures(rset, method);
        if sigs.is_empty() {
            return err(
                TypeErrorCode::UnknownMethod,
                RULE,
                format!("no method `{method}` on receiver of type `{}`", principal_of(rset)),
            );
        }
        if sigs.iter().all(|s| s.params.len() != args.len()) {
            return err(
                TypeErrorCode::ArityMismatch,
                RULE,
                format!("`{method}` expects {} arguments, {} given", sigs[0].params.len(), args.len()),
            );
        }
        let fitting: Vec<&Signature> = sigs
            .iter()
            .filter(|s| s.params.len() == args.len() && rset.contains(&s.receiver))
            .collect();
        if fitting.is_empty() {
            let declared = &sigs[0];
            let found = rset.iter().next().expect("derivations are nonempty");
            let code = if self.lat.flows(&found.level, &declared.receiver.level)
                || found.modifier.is_sub(declared.receiver.modifier)
            {
                TypeErrorCode::ModifierViolation
            } else {
                TypeErrorCode::FlowViolation
            };
            return err(
                code,
                RULE,
                format!("receiver of type `{found}` matches no signature of `{method}`"),
            );
        }
        if let Some(req) = required {
            if let Some(sig) = fitting.iter().find(|s| {
                !s.respects_receiver_level(self.lat) && self.close(&std::iter::once(s.ret.clone()).collect()).contains(req)
            }) {
                return err(
                    TypeErrorCode::FlowViolation,
                    RULE,
                    format!(
                        "signature `{sig}` would leak the `{}` receiver: the result and every mut or capsule argument must be at least `{}`",
                        sig.receiver.level, sig.receiver.level
                    ),
                );
            }
        }
        // the fitting signature that matches the most arguments
        let best = fitting
            .iter()
            .max_by_key(|s| {
                s.params
                    .iter()
                    .zip(asets)
                    .take_while(|(p, a)| a.contains(*p))
                    .count()
            })
            .expect("nonempty");
        match best.params.iter().zip(asets).position(|(p, a)| !a.contains(p)) {
            Some(i) => {
                let found = asets[i].iter().next().expect("derivations are nonempty");
                let want = &best.params[i];
                let code = if !self.lat.flows(&found.level, &want.level) {
                    TypeErrorCode::FlowViolation
                } else if found.class != want.class && !self.ct.is_subclass(&found.class, &want.class) {
                    TypeErrorCode::ClassMismatch
                } else {
                    TypeErrorCode::ModifierViolation
                };
                err(
                    code,
                    RULE,
                    format!("argument {} of `{method}` has type `{found}`, expected `{want}`", i + 1),
                )
                .at(args[i].span)
            }
            None => err(
                TypeErrorCode::FlowViolation,
                RULE,
                format!(
                    "every signature of `{method}` accepting these arguments returns a level below the receiver level `{}`",
                    best.receiver.level
                ),
            ),
        }
    }

    /// Checks one method body in the context built from its header.
    /// Methods without a body are accepted.
    pub fn check_method(&self, class: &ClassName, def: &MethodDef) -> Result<(), Vec<TypeError>> {
        let Some(body) = &def.body else { return Ok(()) };
        let ctx = def.header.context(class);
        self.check_against(&ctx, body, &def.header.ret).map_err(|e| {
            vec![TypeError {
                message: format!("in `{class}.{}`: {}", def.header.name, e.message),
                ..e.at(def.header.span)
            }]
        })
    }

    /// Checks every method of every class and that each class and interface
    /// redeclares the headers of its supertypes.
    pub fn check_program(&self) -> Result<(), Vec<TypeError>> {
        let mut errors = Vec::new();
        for decl in self.ct.user_decls() {
            let rule = match decl.kind {
                DeclKind::Class => "C-Ok",
                DeclKind::Interface => "I-Ok",
            };
            let first_error = errors.len();
            for (sup, header) in self.ct.obligations(&decl.name) {
                let implemented = decl.methods.iter().any(|m| m.header.same_signature(header));
                if !implemented {
                    errors.push(
                        err(
                            TypeErrorCode::InterfaceUnimplemented,
                            rule,
                            format!(
                                "`{}` does not declare `{}` required by `{sup}` with an identical header",
                                decl.name, header.name
                            ),
                        )
                        .at(decl.span),
                    );
                }
            }
            if decl.kind == DeclKind::Class {
                for m in &decl.methods {
                    if let Err(es) = self.check_method(&decl.name, m) {
                        errors.extend(es);
                    }
                }
            }
            for e in &mut errors[first_error..] {
                e.file = e.file.take().or_else(|| decl.file.clone());
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

fn principal_of(set: &TypeSet) -> String {
    set.iter()
        .next()
        .map(|t| t.to_string())
        .unwrap_or_else(|| "?".to_string())
}
