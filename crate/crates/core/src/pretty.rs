//! Canonical source rendering. Output reparses to the same tree.

use crate::syntax::{operator_for_method, ClassDecl, DeclKind, Expr, ExprKind, MethodDef, MethodHeader, NOT_METHOD};

const INDENT: &str = "  ";

/// Binding strength of postfix and primary forms.
const POSTFIX: u8 = 8;
const UNARY: u8 = 7;

fn pad(depth: usize) -> String {
    INDENT.repeat(depth)
}

/// Renders an expression in expression position.
pub fn expr(e: &Expr) -> String {
    render(e, 0, 0)
}

/// Renders a statement sequence, one statement per line, each line
/// indented by `depth` levels and terminated by `;`.
pub fn block(e: &Expr, depth: usize) -> String {
    let mut lines = Vec::new();
    block_lines(e, depth, &mut lines);
    lines.join("\n")
}

fn block_lines(e: &Expr, depth: usize, out: &mut Vec<String>) {
    match &e.kind {
        ExprKind::Seq(first, second) => {
            out.push(format!("{}{};", pad(depth), render(first, 0, depth)));
            block_lines(second, depth, out);
        }
        ExprKind::Decl { ty, name, init, rest } => {
            out.push(format!("{}{ty} {name} = {};", pad(depth), render(init, 0, depth)));
            block_lines(rest, depth, out);
        }
        _ => out.push(format!("{}{};", pad(depth), render(e, 0, depth))),
    }
}

fn braced(e: &Expr, depth: usize) -> String {
    format!("{{\n{}\n{}}}", block(e, depth + 1), pad(depth))
}

fn args(list: &[Expr], depth: usize) -> String {
    list.iter().map(|a| render(a, 0, depth)).collect::<Vec<_>>().join(", ")
}

fn render(e: &Expr, min_prec: u8, depth: usize) -> String {
    let wrap = |s: String, prec: u8| if prec < min_prec { format!("({s})") } else { s };
    match &e.kind {
        ExprKind::Hole(id) => format!("?{id}"),
        ExprKind::Var(x) => x.clone(),
        ExprKind::Literal(l) => l.to_string(),
        ExprKind::FieldAccess { recv, field } => format!("{}.{field}", render(recv, POSTFIX, depth)),
        ExprKind::FieldAssign { recv, field, value } => wrap(
            format!("{}.{field} = {}", render(recv, POSTFIX, depth), render(value, 0, depth)),
            0,
        ),
        ExprKind::Call { recv, method, args: a } => {
            if let (Some((sym, prec)), 1) = (operator_for_method(method), a.len()) {
                return wrap(
                    format!("{} {sym} {}", render(recv, prec, depth), render(&a[0], prec + 1, depth)),
                    prec,
                );
            }
            if method == NOT_METHOD && a.is_empty() {
                return wrap(format!("!{}", render(recv, UNARY, depth)), UNARY);
            }
            format!("{}.{method}({})", render(recv, POSTFIX, depth), args(a, depth))
        }
        ExprKind::New { level, class, args: a } => format!("new {level} {class}({})", args(a, depth)),
        ExprKind::Seq(..) | ExprKind::Decl { .. } => {
            format!("(\n{}\n{})", block(e, depth + 1), pad(depth))
        }
        ExprKind::If {
            guard,
            then_branch,
            else_branch,
        } => format!(
            "if ({}) {} else {}",
            render(guard, 0, depth),
            braced(then_branch, depth),
            braced(else_branch, depth)
        ),
        ExprKind::While { guard, body } => {
            format!("while ({}) {}", render(guard, 0, depth), braced(body, depth))
        }
        ExprKind::Declassify(inner) => format!("declassify({})", render(inner, 0, depth)),
    }
}

pub fn header(h: &MethodHeader) -> String {
    let params = h
        .params
        .iter()
        .map(|p| format!("{} {}", p.ty, p.name))
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        "{} {} method {} {}({params})",
        h.receiver_level, h.receiver_modifier, h.ret, h.name
    )
}

/// A method at nesting depth `depth`.
pub fn method(m: &MethodDef, depth: usize) -> String {
    match &m.body {
        Some(body) => format!("{}{} {}", pad(depth), header(&m.header), braced(body, depth)),
        None => format!("{}{};", pad(depth), header(&m.header)),
    }
}

pub fn class_decl(d: &ClassDecl) -> String {
    let (kw, list_kw) = match d.kind {
        DeclKind::Class => ("class", "implements"),
        DeclKind::Interface => ("interface", "extends"),
    };
    let mut out = format!("{kw} {}", d.name);
    if !d.supers.is_empty() {
        let names: Vec<&str> = d.supers.iter().map(|s| s.as_str()).collect();
        out.push_str(&format!(" {list_kw} {}", names.join(", ")));
    }
    out.push_str(" {\n");
    for f in &d.fields {
        out.push_str(&format!("{}{} {};\n", pad(1), f.ty, f.name));
    }
    for m in &d.methods {
        out.push_str(&method(m, 1));
        out.push('\n');
    }
    out.push('}');
    out
}

/// All user declarations, separated by blank lines.
pub fn program<'a>(decls: impl IntoIterator<Item = &'a ClassDecl>) -> String {
    let parts: Vec<String> = decls.into_iter().filter(|d| !d.builtin).map(class_decl).collect();
    let mut out = parts.join("\n\n");
    out.push('\n');
    out
}

/// Collapses all whitespace runs, for comparisons that ignore layout.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::new();
    let mut prev_alnum = false;
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            pending_space = true;
            continue;
        }
        let alnum = c.is_alphanumeric() || c == '_';
        if pending_space && prev_alnum && alnum {
            out.push(' ');
        }
        pending_space = false;
        out.push(c);
        prev_alnum = alnum;
    }
    out
}
