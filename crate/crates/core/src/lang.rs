//! Source language: expressions and guarded atomic actions over a memory
//! environment, a builder that hands out fresh variables, and the type
//! checker.
//!
//! Variables are explicit identifiers annotated with their type, so the
//! checker is purely syntax-directed. Programs are assembled with
//! [`Builder`], whose `bind` takes a closure receiving the freshly bound
//! variable, much like `do`-notation:
//!
//! ```
//! use fesic::lang::{Action, Builder, Expr};
//! use fesic::types::{MemEnv, Ty};
//!
//! let mut b = Builder::new();
//! let a = b.fresh(Ty::Bool);
//! let c = b.fresh(Ty::Bool);
//! let (ea, ec) = (Expr::var(&a), Expr::var(&c));
//! let hadd = b.bind(Action::ret(ea.clone().and(ec.clone())), |b, carry| {
//!     b.bind(Action::ret(ea.xor(ec)), |_, sum| {
//!         Action::ret(Expr::tuple(vec![Expr::var(&carry), Expr::var(&sum)]))
//!     })
//! });
//! # let _ = hadd;
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::ops::BinOp;
use crate::types::{value_has_type, Mem, MemEnv, Ty, Value};

/// Variable identifier, unique within one program.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub u32);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// A typed variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    pub id: VarId,
    pub ty: Ty,
}

/// Reference to a memory element: its position in the environment together
/// with the shape the reference expects to find there.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MemberRef {
    pub index: usize,
    pub mem: Mem,
}

impl MemberRef {
    /// Reference to `env[index]`. Panics if `index` is out of range.
    pub fn of(env: &MemEnv, index: usize) -> Self {
        let mem = env
            .get(index)
            .unwrap_or_else(|| panic!("no memory element {index}"))
            .clone();
        MemberRef { index, mem }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(Var),
    Const(Value),
    Not(Box<Expr>),
    Binop(BinOp, Box<Expr>, Box<Expr>),
    Mux(Box<Expr>, Box<Expr>, Box<Expr>),
    Tuple(Vec<Expr>),
    Proj(Box<Expr>, usize),
}

impl Expr {
    pub fn var(v: &Var) -> Expr {
        Expr::Var(v.clone())
    }

    pub fn unit() -> Expr {
        Expr::Const(Value::Unit)
    }

    pub fn bool(b: bool) -> Expr {
        Expr::Const(Value::Bool(b))
    }

    pub fn word(width: u8, bits: u64) -> Expr {
        Expr::Const(Value::word(width, bits))
    }

    pub fn tuple(es: Vec<Expr>) -> Expr {
        Expr::Tuple(es)
    }

    pub fn mux(c: Expr, t: Expr, f: Expr) -> Expr {
        Expr::Mux(Box::new(c), Box::new(t), Box::new(f))
    }

    pub fn binop(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binop(op, Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Expr {
        Expr::Not(Box::new(self))
    }

    pub fn and(self, rhs: Expr) -> Expr {
        Expr::binop(BinOp::And, self, rhs)
    }

    pub fn or(self, rhs: Expr) -> Expr {
        Expr::binop(BinOp::Or, self, rhs)
    }

    pub fn xor(self, rhs: Expr) -> Expr {
        Expr::binop(BinOp::Xor, self, rhs)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, rhs: Expr) -> Expr {
        Expr::binop(BinOp::Add, self, rhs)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, rhs: Expr) -> Expr {
        Expr::binop(BinOp::Sub, self, rhs)
    }

    pub fn eq(self, rhs: Expr) -> Expr {
        Expr::binop(BinOp::Eq, self, rhs)
    }

    pub fn le(self, rhs: Expr) -> Expr {
        Expr::binop(BinOp::Le, self, rhs)
    }

    pub fn lt(self, rhs: Expr) -> Expr {
        Expr::binop(BinOp::Lt, self, rhs)
    }

    pub fn proj(self, index: usize) -> Expr {
        Expr::Proj(Box::new(self), index)
    }

    /// Synthesized type, assuming the expression is well typed. Returns
    /// `None` where no sensible type can be read off the syntax.
    pub fn ty(&self) -> Option<Ty> {
        match self {
            Expr::Var(v) => Some(v.ty.clone()),
            Expr::Const(v) => Some(v.ty()),
            Expr::Not(_) => Some(Ty::Bool),
            Expr::Binop(op, a, _) => op.result_ty(&a.ty()?),
            Expr::Mux(_, t, _) => t.ty(),
            Expr::Tuple(es) => es.iter().map(Expr::ty).collect::<Option<_>>().map(Ty::Tuple),
            Expr::Proj(e, i) => match e.ty()? {
                Ty::Tuple(ts) => ts.get(*i).cloned(),
                _ => None,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Return(Expr),
    /// Runs `first`, binds its result to the variable, then runs `rest`.
    Bind(Box<Action>, Var, Box<Action>),
    Assert(Expr),
    /// Runs the left action; if it aborts, its effects are discarded and
    /// the right action runs instead.
    OrElse(Box<Action>, Box<Action>),
    RegRead(MemberRef),
    RegWrite(MemberRef, Expr),
    InputRead(MemberRef),
    RegfileRead(MemberRef, Expr),
    RegfileWrite(MemberRef, Expr, Expr),
}

impl Action {
    pub fn ret(e: Expr) -> Action {
        Action::Return(e)
    }

    pub fn assert(e: Expr) -> Action {
        Action::Assert(e)
    }

    pub fn or_else(self, other: Action) -> Action {
        Action::OrElse(Box::new(self), Box::new(other))
    }

    pub fn reg_read(m: MemberRef) -> Action {
        Action::RegRead(m)
    }

    pub fn reg_write(m: MemberRef, e: Expr) -> Action {
        Action::RegWrite(m, e)
    }

    pub fn input_read(m: MemberRef) -> Action {
        Action::InputRead(m)
    }

    pub fn rf_read(m: MemberRef, addr: Expr) -> Action {
        Action::RegfileRead(m, addr)
    }

    pub fn rf_write(m: MemberRef, addr: Expr, data: Expr) -> Action {
        Action::RegfileWrite(m, addr, data)
    }

    /// Synthesized result type, assuming the action is well typed.
    pub fn result_ty(&self) -> Option<Ty> {
        match self {
            Action::Return(e) => e.ty(),
            Action::Bind(_, _, rest) => rest.result_ty(),
            Action::Assert(_) | Action::RegWrite(..) | Action::RegfileWrite(..) => Some(Ty::Unit),
            Action::OrElse(a, _) => a.result_ty(),
            Action::RegRead(m) | Action::InputRead(m) | Action::RegfileRead(m, _) => {
                Some(m.mem.ty().clone())
            }
        }
    }

    /// Number of action and expression nodes.
    pub fn size(&self) -> usize {
        fn expr_size(e: &Expr) -> usize {
            1 + match e {
                Expr::Var(_) | Expr::Const(_) => 0,
                Expr::Not(a) | Expr::Proj(a, _) => expr_size(a),
                Expr::Binop(_, a, b) => expr_size(a) + expr_size(b),
                Expr::Mux(a, b, c) => expr_size(a) + expr_size(b) + expr_size(c),
                Expr::Tuple(es) => es.iter().map(expr_size).sum(),
            }
        }
        1 + match self {
            Action::Return(e) | Action::Assert(e) | Action::RegWrite(_, e) => expr_size(e),
            Action::RegfileRead(_, e) => expr_size(e),
            Action::RegfileWrite(_, a, d) => expr_size(a) + expr_size(d),
            Action::Bind(a, _, k) => a.size() + k.size(),
            Action::OrElse(a, b) => a.size() + b.size(),
            Action::RegRead(_) | Action::InputRead(_) => 0,
        }
    }
}

/// Hands out fresh variables and assembles binding forms.
///
/// One builder per program; its counter is the only mutable state.
#[derive(Debug, Default)]
pub struct Builder {
    next: u32,
}

impl Builder {
    pub fn new() -> Self {
        Builder { next: 0 }
    }

    pub fn fresh(&mut self, ty: Ty) -> Var {
        let id = VarId(self.next);
        self.next += 1;
        Var { id, ty }
    }

    /// `do x <- first; k(x)`.
    pub fn bind(&mut self, first: Action, k: impl FnOnce(&mut Self, Var) -> Action) -> Action {
        let ty = first.result_ty().unwrap_or(Ty::Unit);
        let x = self.fresh(ty);
        let rest = k(self, x.clone());
        Action::Bind(Box::new(first), x, Box::new(rest))
    }

    /// `do _ <- first; rest`.
    pub fn seq(&mut self, first: Action, rest: Action) -> Action {
        self.bind(first, |_, _| rest)
    }

    /// `(do _ <- assert c; then) orElse otherwise`.
    ///
    /// If `then` aborts for a reason other than `c`, `otherwise` still runs.
    pub fn ifte(&mut self, c: Expr, then: Action, otherwise: Action) -> Action {
        self.seq(Action::assert(c), then).or_else(otherwise)
    }

    /// `ifte(c, a, ret ())`.
    pub fn when(&mut self, c: Expr, a: Action) -> Action {
        self.ifte(c, a, Action::ret(Expr::unit()))
    }
}

/// A type-checked action together with its memory environment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    env: MemEnv,
    action: Action,
    ty: Ty,
}

impl Program {
    pub fn new(env: MemEnv, action: Action) -> Result<Self, TypeError> {
        let ty = typecheck(&env, &action)?;
        Ok(Program { env, action, ty })
    }

    pub fn env(&self) -> &MemEnv {
        &self.env
    }

    pub fn action(&self) -> &Action {
        &self.action
    }

    /// Result type of the action.
    pub fn ty(&self) -> &Ty {
        &self.ty
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("in `{node}`: expected {expected}, found {found}")]
    Mismatch {
        node: String,
        expected: Ty,
        found: Ty,
    },
    #[error("in `{node}`: operator {op} does not accept operands of type {found}")]
    BadOperand { node: String, op: BinOp, found: Ty },
    #[error("in `{node}`: expected a tuple, found {found}")]
    NotATuple { node: String, found: Ty },
    #[error("in `{node}`: projection {index} out of range for arity {arity}")]
    ProjOutOfRange {
        node: String,
        index: usize,
        arity: usize,
    },
    #[error("in `{node}`: expected a word, found {found}")]
    NotAWord { node: String, found: Ty },
    #[error("variable {0} used before being bound")]
    Unbound(VarId),
    #[error("variable {var} annotated {annotated} but bound at {bound}")]
    Annotation {
        var: VarId,
        annotated: Ty,
        bound: Ty,
    },
    #[error("variable {0} bound more than once")]
    Rebound(VarId),
    #[error("constant {0:?} is not a well-formed value")]
    BadConst(Value),
    #[error("type {0} is not well formed")]
    IllFormedTy(Ty),
    #[error("memory element {0} is not well formed")]
    IllFormedMem(usize),
    #[error("in `{node}`: reference to element {index} expects {expected}, environment has {found}")]
    BadMember {
        node: String,
        index: usize,
        expected: Mem,
        found: String,
    },
    #[error("in `{node}`: element {index} ({found}) cannot be used this way")]
    WrongKind {
        node: String,
        index: usize,
        found: Mem,
    },
    #[error("in `{node}`: element {index} is an input and cannot be written")]
    InputWrite { node: String, index: usize },
}

/// Checks `a` against `env` and returns its result type.
pub fn typecheck(env: &MemEnv, a: &Action) -> Result<Ty, TypeError> {
    for (i, m) in env.iter().enumerate() {
        if !m.is_well_formed() {
            return Err(TypeError::IllFormedMem(i));
        }
    }
    let mut checker = Checker {
        env,
        scope: HashMap::new(),
        seen: HashSet::new(),
    };
    checker.action(a)
}

struct Checker<'a> {
    env: &'a MemEnv,
    scope: HashMap<VarId, Ty>,
    seen: HashSet<VarId>,
}

fn node_text(a: &Action) -> String {
    const LIMIT: usize = 80;
    let mut s = action_head(a);
    if s.len() > LIMIT {
        let mut cut = LIMIT;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
        s.push_str("...");
    }
    s
}

fn expr_text(e: &Expr) -> String {
    let s = e.to_string();
    if s.len() > 80 {
        format!("{}...", &s[..s.char_indices().nth(77).map_or(s.len(), |(i, _)| i)])
    } else {
        s
    }
}

fn action_head(a: &Action) -> String {
    match a {
        Action::Bind(_, x, _) => format!("do {} <- ...", x.id),
        Action::OrElse(..) => "... orElse ...".to_string(),
        other => pretty_action(other).replace('\n', " "),
    }
}

impl Checker<'_> {
    fn member(&self, node: &Action, m: &MemberRef) -> Result<(), TypeError> {
        match self.env.get(m.index) {
            Some(found) if *found == m.mem => Ok(()),
            found => Err(TypeError::BadMember {
                node: node_text(node),
                index: m.index,
                expected: m.mem.clone(),
                found: found.map_or_else(|| "nothing".to_string(), |f| f.to_string()),
            }),
        }
    }

    fn expect(&self, node: String, expected: &Ty, found: Ty) -> Result<(), TypeError> {
        if *expected == found {
            Ok(())
        } else {
            Err(TypeError::Mismatch {
                node,
                expected: expected.clone(),
                found,
            })
        }
    }

    fn action(&mut self, a: &Action) -> Result<Ty, TypeError> {
        match a {
            Action::Return(e) => self.expr(e),
            Action::Bind(first, x, rest) => {
                let t = self.action(first)?;
                if !x.ty.is_well_formed() {
                    return Err(TypeError::IllFormedTy(x.ty.clone()));
                }
                self.expect(node_text(a), &x.ty, t)?;
                if !self.seen.insert(x.id) {
                    return Err(TypeError::Rebound(x.id));
                }
                self.scope.insert(x.id, x.ty.clone());
                let result = self.action(rest);
                self.scope.remove(&x.id);
                result
            }
            Action::Assert(e) => {
                let t = self.expr(e)?;
                self.expect(node_text(a), &Ty::Bool, t)?;
                Ok(Ty::Unit)
            }
            Action::OrElse(l, r) => {
                let tl = self.action(l)?;
                let tr = self.action(r)?;
                self.expect(node_text(a), &tl, tr)?;
                Ok(tl)
            }
            Action::RegRead(m) => {
                self.member(a, m)?;
                match &m.mem {
                    Mem::Reg(t) => Ok(t.clone()),
                    other => Err(self.wrong_kind(a, m.index, other)),
                }
            }
            Action::InputRead(m) => {
                self.member(a, m)?;
                match &m.mem {
                    Mem::Input(t) => Ok(t.clone()),
                    other => Err(self.wrong_kind(a, m.index, other)),
                }
            }
            Action::RegWrite(m, e) => {
                self.member(a, m)?;
                match &m.mem {
                    Mem::Reg(t) => {
                        let te = self.expr(e)?;
                        self.expect(node_text(a), t, te)?;
                        Ok(Ty::Unit)
                    }
                    Mem::Input(_) => Err(TypeError::InputWrite {
                        node: node_text(a),
                        index: m.index,
                    }),
                    other => Err(self.wrong_kind(a, m.index, other)),
                }
            }
            Action::RegfileRead(m, addr) => {
                self.member(a, m)?;
                match &m.mem {
                    Mem::Regfile { addr_width, ty } => {
                        let ta = self.expr(addr)?;
                        self.expect(node_text(a), &Ty::Int(*addr_width), ta)?;
                        Ok(ty.clone())
                    }
                    other => Err(self.wrong_kind(a, m.index, other)),
                }
            }
            Action::RegfileWrite(m, addr, data) => {
                self.member(a, m)?;
                match &m.mem {
                    Mem::Regfile { addr_width, ty } => {
                        let ta = self.expr(addr)?;
                        self.expect(node_text(a), &Ty::Int(*addr_width), ta)?;
                        let td = self.expr(data)?;
                        self.expect(node_text(a), ty, td)?;
                        Ok(Ty::Unit)
                    }
                    Mem::Input(_) => Err(TypeError::InputWrite {
                        node: node_text(a),
                        index: m.index,
                    }),
                    other => Err(self.wrong_kind(a, m.index, other)),
                }
            }
        }
    }

    fn wrong_kind(&self, a: &Action, index: usize, found: &Mem) -> TypeError {
        TypeError::WrongKind {
            node: node_text(a),
            index,
            found: found.clone(),
        }
    }

    fn expr(&self, e: &Expr) -> Result<Ty, TypeError> {
        match e {
            Expr::Var(v) => match self.scope.get(&v.id) {
                None => Err(TypeError::Unbound(v.id)),
                Some(t) if *t != v.ty => Err(TypeError::Annotation {
                    var: v.id,
                    annotated: v.ty.clone(),
                    bound: t.clone(),
                }),
                Some(t) => Ok(t.clone()),
            },
            Expr::Const(v) => {
                let t = v.ty();
                if t.is_well_formed() && value_has_type(v, &t) {
                    Ok(t)
                } else {
                    Err(TypeError::BadConst(v.clone()))
                }
            }
            Expr::Not(a) => {
                let t = self.expr(a)?;
                self.expect(expr_text(e), &Ty::Bool, t)?;
                Ok(Ty::Bool)
            }
            Expr::Binop(op, a, b) => {
                let ta = self.expr(a)?;
                let tb = self.expr(b)?;
                let result = op.result_ty(&ta).ok_or_else(|| TypeError::BadOperand {
                    node: expr_text(e),
                    op: *op,
                    found: ta.clone(),
                })?;
                self.expect(expr_text(e), &ta, tb)?;
                Ok(result)
            }
            Expr::Mux(c, t, f) => {
                let tc = self.expr(c)?;
                self.expect(expr_text(e), &Ty::Bool, tc)?;
                let tt = self.expr(t)?;
                let tf = self.expr(f)?;
                self.expect(expr_text(e), &tt, tf)?;
                Ok(tt)
            }
            Expr::Tuple(es) => es
                .iter()
                .map(|x| self.expr(x))
                .collect::<Result<_, _>>()
                .map(Ty::Tuple),
            Expr::Proj(a, i) => match self.expr(a)? {
                Ty::Tuple(ts) => ts.get(*i).cloned().ok_or(TypeError::ProjOutOfRange {
                    node: expr_text(e),
                    index: *i,
                    arity: ts.len(),
                }),
                found => Err(TypeError::NotATuple {
                    node: expr_text(e),
                    found,
                }),
            },
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(v) => write!(f, "{}", v.id),
            Expr::Const(v) => write_const(f, v),
            Expr::Not(a) => write!(f, "!{a}"),
            Expr::Binop(op, a, b) => write!(f, "({a} {op} {b})"),
            Expr::Mux(c, t, e) => write!(f, "({c} ? {t} : {e})"),
            Expr::Tuple(es) => {
                write!(f, "[")?;
                for (i, e) in es.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, "]")
            }
            Expr::Proj(a, i) => write!(f, "{a}.{i}"),
        }
    }
}

/// Constants print with their width so dumps are unambiguous.
pub(crate) fn write_const(f: &mut impl fmt::Write, v: &Value) -> fmt::Result {
    match v {
        Value::Word { width, bits } => write!(f, "{bits}'{width}"),
        Value::Tuple(vs) => {
            write!(f, "[")?;
            for (i, v) in vs.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write_const(f, v)?;
            }
            write!(f, "]")
        }
        other => write!(f, "{other}"),
    }
}

/// Deterministic multi-line rendering of an action.
pub fn pretty_action(a: &Action) -> String {
    let mut out = String::new();
    write_action(&mut out, a, 0);
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn is_simple(a: &Action) -> bool {
    !matches!(a, Action::Bind(..) | Action::OrElse(..))
}

fn write_action(out: &mut String, a: &Action, depth: usize) {
    match a {
        Action::Return(e) => {
            let _ = write!(out, "ret {e}");
        }
        Action::Assert(e) => {
            let _ = write!(out, "assert {e}");
        }
        Action::RegRead(m) => {
            let _ = write!(out, "!m{}", m.index);
        }
        Action::InputRead(m) => {
            let _ = write!(out, "input m{}", m.index);
        }
        Action::RegWrite(m, e) => {
            let _ = write!(out, "m{} ::= {e}", m.index);
        }
        Action::RegfileRead(m, addr) => {
            let _ = write!(out, "m{}[{addr}]", m.index);
        }
        Action::RegfileWrite(m, addr, data) => {
            let _ = write!(out, "m{}[{addr}] ::= {data}", m.index);
        }
        Action::Bind(first, x, rest) => {
            let _ = write!(out, "do {} : {} <- ", x.id, x.ty);
            write_block(out, first, depth);
            out.push_str(";\n");
            indent(out, depth);
            write_action(out, rest, depth);
        }
        Action::OrElse(l, r) => {
            write_block(out, l, depth);
            out.push_str(" orElse ");
            write_block(out, r, depth);
        }
    }
}

fn write_block(out: &mut String, a: &Action, depth: usize) {
    if is_simple(a) {
        write_action(out, a, depth);
    } else {
        out.push_str("{\n");
        indent(out, depth + 1);
        write_action(out, a, depth + 1);
        out.push('\n');
        indent(out, depth);
        out.push('}');
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty_action(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counter_env(n: u8) -> MemEnv {
        MemEnv::new(vec![Mem::Reg(Ty::Int(n))])
    }

    #[test]
    fn return_of_boolean_and() {
        let a = Action::ret(Expr::bool(true).and(Expr::bool(false)));
        assert_eq!(typecheck(&MemEnv::default(), &a), Ok(Ty::Bool));
    }

    #[test]
    fn writing_an_input_is_rejected() {
        let env = MemEnv::new(vec![Mem::Input(Ty::Bool)]);
        let a = Action::reg_write(MemberRef::of(&env, 0), Expr::bool(true));
        assert!(matches!(
            typecheck(&env, &a),
            Err(TypeError::InputWrite { index: 0, .. })
        ));
    }

    #[test]
    fn mixed_width_add_is_rejected() {
        let a = Action::ret(Expr::word(4, 1).add(Expr::word(8, 1)));
        assert!(matches!(
            typecheck(&MemEnv::default(), &a),
            Err(TypeError::Mismatch { .. })
        ));
    }

    #[test]
    fn unbound_and_rebound_variables() {
        let mut b = Builder::new();
        let x = b.fresh(Ty::Bool);
        assert_eq!(
            typecheck(&MemEnv::default(), &Action::ret(Expr::var(&x))),
            Err(TypeError::Unbound(x.id))
        );
        let dup = Action::Bind(
            Box::new(Action::ret(Expr::bool(true))),
            x.clone(),
            Box::new(Action::Bind(
                Box::new(Action::ret(Expr::bool(true))),
                x.clone(),
                Box::new(Action::ret(Expr::unit())),
            )),
        );
        assert_eq!(
            typecheck(&MemEnv::default(), &dup),
            Err(TypeError::Rebound(x.id))
        );
    }

    #[test]
    fn or_else_binders_do_not_leak() {
        let mut b = Builder::new();
        let mut leaked = None;
        let left = b.bind(Action::ret(Expr::bool(true)), |_, x| {
            leaked = Some(x.clone());
            Action::ret(Expr::var(&x))
        });
        let x = leaked.unwrap();
        let a = left.or_else(Action::ret(Expr::var(&x)));
        assert_eq!(
            typecheck(&MemEnv::default(), &a),
            Err(TypeError::Unbound(x.id))
        );
    }

    #[test]
    fn annotation_must_match_binding() {
        let mut b = Builder::new();
        let a = b.bind(Action::ret(Expr::bool(true)), |_, x| {
            Action::ret(Expr::Var(Var {
                id: x.id,
                ty: Ty::Int(3),
            }))
        });
        assert!(matches!(
            typecheck(&MemEnv::default(), &a),
            Err(TypeError::Annotation { .. })
        ));
    }

    #[test]
    fn member_shape_must_match() {
        let env = counter_env(4);
        let bad = MemberRef {
            index: 0,
            mem: Mem::Reg(Ty::Int(8)),
        };
        assert!(matches!(
            typecheck(&env, &Action::reg_read(bad)),
            Err(TypeError::BadMember { .. })
        ));
        let missing = MemberRef {
            index: 3,
            mem: Mem::Reg(Ty::Int(4)),
        };
        assert!(matches!(
            typecheck(&env, &Action::reg_read(missing)),
            Err(TypeError::BadMember { .. })
        ));
    }

    #[test]
    fn projections_and_tuples() {
        let t = Expr::tuple(vec![Expr::bool(true), Expr::word(3, 5)]);
        let env = MemEnv::default();
        assert_eq!(
            typecheck(&env, &Action::ret(t.clone().proj(1))),
            Ok(Ty::Int(3))
        );
        assert!(matches!(
            typecheck(&env, &Action::ret(t.proj(2))),
            Err(TypeError::ProjOutOfRange { arity: 2, .. })
        ));
        assert!(matches!(
            typecheck(&env, &Action::ret(Expr::bool(true).proj(0))),
            Err(TypeError::NotATuple { .. })
        ));
    }

    #[test]
    fn regfile_address_width_checked() {
        let env = MemEnv::new(vec![Mem::Regfile {
            addr_width: 3,
            ty: Ty::Bool,
        }]);
        let m = MemberRef::of(&env, 0);
        assert_eq!(
            typecheck(&env, &Action::rf_read(m.clone(), Expr::word(3, 1))),
            Ok(Ty::Bool)
        );
        assert!(typecheck(&env, &Action::rf_read(m.clone(), Expr::word(4, 1))).is_err());
        assert!(matches!(
            typecheck(&env, &Action::reg_read(m)),
            Err(TypeError::WrongKind { .. })
        ));
    }

    #[test]
    fn counter_typechecks_over_single_register() {
        let env = counter_env(4);
        let mut b = Builder::new();
        let tick = b.fresh(Ty::Bool);
        let r = MemberRef::of(&env, 0);
        let count = b.bind(Action::reg_read(r.clone()), |b, x| {
            let bump = Action::reg_write(r.clone(), Expr::var(&x).add(Expr::word(4, 1)));
            let body = b.ifte(Expr::var(&tick), bump, Action::ret(Expr::unit()));
            b.seq(body, Action::ret(Expr::var(&x)))
        });
        // `tick` is a parameter, so bind it before checking.
        let closed = Action::Bind(
            Box::new(Action::ret(Expr::bool(true))),
            tick,
            Box::new(count),
        );
        assert_eq!(typecheck(&env, &closed), Ok(Ty::Int(4)));
    }

    #[test]
    fn pretty_printing_is_stable() {
        let env = counter_env(4);
        let mut b = Builder::new();
        let r = MemberRef::of(&env, 0);
        let a = b.bind(Action::reg_read(r.clone()), |b, x| {
            let w = Action::reg_write(r, Expr::var(&x).add(Expr::word(4, 1)));
            b.ifte(Expr::bool(true), w, Action::ret(Expr::unit()))
        });
        let expected = "do x0 : int4 <- !m0;\n{\n  do x1 : unit <- assert true;\n  m0 ::= (x0 + 1'4)\n} orElse ret ()";
        assert_eq!(pretty_action(&a), expected);
    }
}
