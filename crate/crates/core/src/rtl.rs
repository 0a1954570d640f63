//! Register-transfer-level blocks: a three-address telescope ending in a
//! guard, a value and at most one guarded write per memory element.
//!
//! [`compile_to_rtl`] lowers an [`IrBlock`](crate::ir::IrBlock) in two
//! steps: compound operands are hoisted into fresh bindings, then each
//! element's effect tree is linearized into a single write with
//! [`merge`] and enable multiplexers.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::ir::{EffTree, Frame, IrBlock, IrExpr};
use crate::lang::VarId;
use crate::ops::{eval_mux, eval_not, eval_proj, BinOp};
use crate::types::{Mem, MemEnv, MemState, Ty, Value};

/// Three-address expression: every operand is a variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RtlExpr {
    Var(VarId),
    Const(Value),
    Input(usize),
    Read(usize),
    ReadRf(usize, VarId),
    Not(VarId),
    Binop(BinOp, VarId, VarId),
    Mux(VarId, VarId, VarId),
    Tuple(Vec<VarId>),
    Proj(VarId, usize),
}

impl RtlExpr {
    pub fn operands(&self) -> Vec<VarId> {
        match self {
            RtlExpr::Const(_) | RtlExpr::Input(_) | RtlExpr::Read(_) => vec![],
            RtlExpr::Var(v) | RtlExpr::ReadRf(_, v) | RtlExpr::Not(v) | RtlExpr::Proj(v, _) => {
                vec![*v]
            }
            RtlExpr::Binop(_, a, b) => vec![*a, *b],
            RtlExpr::Mux(c, t, f) => vec![*c, *t, *f],
            RtlExpr::Tuple(vs) => vs.clone(),
        }
    }

    /// Rewrites every operand through `f`.
    pub fn map_vars(&self, mut f: impl FnMut(VarId) -> VarId) -> RtlExpr {
        match self {
            RtlExpr::Var(v) => RtlExpr::Var(f(*v)),
            RtlExpr::Const(c) => RtlExpr::Const(c.clone()),
            RtlExpr::Input(i) => RtlExpr::Input(*i),
            RtlExpr::Read(i) => RtlExpr::Read(*i),
            RtlExpr::ReadRf(i, a) => RtlExpr::ReadRf(*i, f(*a)),
            RtlExpr::Not(a) => RtlExpr::Not(f(*a)),
            RtlExpr::Binop(op, a, b) => RtlExpr::Binop(*op, f(*a), f(*b)),
            RtlExpr::Mux(c, t, e) => RtlExpr::Mux(f(*c), f(*t), f(*e)),
            RtlExpr::Tuple(vs) => RtlExpr::Tuple(vs.iter().map(|v| f(*v)).collect()),
            RtlExpr::Proj(a, i) => RtlExpr::Proj(f(*a), *i),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RtlBinding {
    pub var: VarId,
    pub ty: Ty,
    pub expr: RtlExpr,
}

/// The single write to one element. `addr` is present for register files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RtlWrite {
    pub data: VarId,
    pub addr: Option<VarId>,
    pub enable: VarId,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RtlBlock {
    pub bindings: Vec<RtlBinding>,
    pub guard: VarId,
    pub value: VarId,
    /// One slot per element of the memory environment.
    pub effects: Vec<Option<RtlWrite>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum RtlError {
    #[error("merging a register write with a register-file write")]
    KindMismatch,
    #[error("variable {0} bound twice")]
    Rebound(VarId),
    #[error("variable {0} used before being bound")]
    Unbound(VarId),
    #[error("binding {var}: declared {declared}, expression has type {actual}")]
    BindingType {
        var: VarId,
        declared: Ty,
        actual: String,
    },
    #[error("{what} {var} has type {found}, expected {expected}")]
    OperandType {
        what: &'static str,
        var: VarId,
        found: Ty,
        expected: Ty,
    },
    #[error("block has {found} effect slots for {expected} memory elements")]
    EffectCount { expected: usize, found: usize },
    #[error("element {0} is written but is an input")]
    InputWrite(usize),
    #[error("element {0}: write shape does not match the element kind")]
    WriteShape(usize),
    #[error("expression reads element {index} as the wrong kind")]
    ReadKind { index: usize },
}

impl RtlBlock {
    pub fn binding_count(&self) -> usize {
        self.bindings.len()
    }

    /// One past the largest variable bound in the block.
    pub fn next_var(&self) -> u32 {
        self.bindings.iter().map(|b| b.var.0 + 1).max().unwrap_or(0)
    }

    /// Full structural check: scoping, binding types, one write per
    /// writable element with the right shape.
    pub fn check(&self, env: &MemEnv) -> Result<(), RtlError> {
        let mut types: HashMap<VarId, &Ty> = HashMap::new();
        for b in &self.bindings {
            for v in b.expr.operands() {
                if !types.contains_key(&v) {
                    return Err(RtlError::Unbound(v));
                }
            }
            let actual = expr_ty(env, &b.expr, |v| types[&v].clone())?;
            if actual.as_ref() != Some(&b.ty) {
                return Err(RtlError::BindingType {
                    var: b.var,
                    declared: b.ty.clone(),
                    actual: actual.map_or_else(|| "none".to_string(), |t| t.to_string()),
                });
            }
            if types.insert(b.var, &b.ty).is_some() {
                return Err(RtlError::Rebound(b.var));
            }
        }
        let ty_of = |v: VarId| types.get(&v).copied().ok_or(RtlError::Unbound(v));
        let expect = |what, v: VarId, expected: &Ty| -> Result<(), RtlError> {
            let found = ty_of(v)?;
            if found == expected {
                Ok(())
            } else {
                Err(RtlError::OperandType {
                    what,
                    var: v,
                    found: found.clone(),
                    expected: expected.clone(),
                })
            }
        };
        expect("guard", self.guard, &Ty::Bool)?;
        ty_of(self.value)?;
        if self.effects.len() != env.len() {
            return Err(RtlError::EffectCount {
                expected: env.len(),
                found: self.effects.len(),
            });
        }
        for (index, (w, mem)) in self.effects.iter().zip(env.iter()).enumerate() {
            let Some(w) = w else { continue };
            expect("enable", w.enable, &Ty::Bool)?;
            match (mem, w.addr) {
                (Mem::Input(_), _) => return Err(RtlError::InputWrite(index)),
                (Mem::Reg(t), None) => expect("data", w.data, t)?,
                (Mem::Regfile { addr_width, ty }, Some(a)) => {
                    expect("data", w.data, ty)?;
                    expect("address", a, &Ty::Int(*addr_width))?;
                }
                _ => return Err(RtlError::WriteShape(index)),
            }
        }
        Ok(())
    }
}

/// Type of a three-address expression given the operand types, or `None`
/// if the operands do not fit the operator.
fn expr_ty(
    env: &MemEnv,
    e: &RtlExpr,
    ty: impl Fn(VarId) -> Ty,
) -> Result<Option<Ty>, RtlError> {
    Ok(match e {
        RtlExpr::Var(v) => Some(ty(*v)),
        RtlExpr::Const(c) => Some(c.ty()),
        RtlExpr::Input(i) => match env.get(*i) {
            Some(Mem::Input(t)) => Some(t.clone()),
            _ => return Err(RtlError::ReadKind { index: *i }),
        },
        RtlExpr::Read(i) => match env.get(*i) {
            Some(Mem::Reg(t)) => Some(t.clone()),
            _ => return Err(RtlError::ReadKind { index: *i }),
        },
        RtlExpr::ReadRf(i, a) => match env.get(*i) {
            Some(Mem::Regfile { addr_width, ty: t }) => {
                (ty(*a) == Ty::Int(*addr_width)).then(|| t.clone())
            }
            _ => return Err(RtlError::ReadKind { index: *i }),
        },
        RtlExpr::Not(a) => (ty(*a) == Ty::Bool).then_some(Ty::Bool),
        RtlExpr::Binop(op, a, b) => {
            let ta = ty(*a);
            if ta == ty(*b) {
                op.result_ty(&ta)
            } else {
                None
            }
        }
        RtlExpr::Mux(c, t, f) => {
            let tt = ty(*t);
            (ty(*c) == Ty::Bool && tt == ty(*f)).then_some(tt)
        }
        RtlExpr::Tuple(vs) => Some(Ty::Tuple(vs.iter().map(|v| ty(*v)).collect())),
        RtlExpr::Proj(a, i) => match ty(*a) {
            Ty::Tuple(ts) => ts.get(*i).cloned(),
            _ => None,
        },
    })
}

/// Appends fresh bindings to a telescope under construction.
pub struct Emitter<'a> {
    env: &'a MemEnv,
    bindings: Vec<RtlBinding>,
    types: HashMap<VarId, Ty>,
    next: u32,
}

impl<'a> Emitter<'a> {
    pub fn new(env: &'a MemEnv, first_fresh: u32) -> Self {
        Emitter {
            env,
            bindings: Vec::new(),
            types: HashMap::new(),
            next: first_fresh,
        }
    }

    pub fn ty(&self, v: VarId) -> &Ty {
        self.types
            .get(&v)
            .unwrap_or_else(|| panic!("unbound variable {v}"))
    }

    /// Binds `expr` to a fresh variable.
    pub fn emit(&mut self, expr: RtlExpr) -> VarId {
        let var = VarId(self.next);
        self.next += 1;
        self.emit_as(var, expr);
        var
    }

    fn emit_as(&mut self, var: VarId, expr: RtlExpr) {
        let ty = expr_ty(self.env, &expr, |v| self.ty(v).clone())
            .ok()
            .flatten()
            .unwrap_or_else(|| panic!("ill-typed expression {expr}"));
        self.types.insert(var, ty.clone());
        self.bindings.push(RtlBinding { var, ty, expr });
    }

    pub fn into_bindings(self) -> Vec<RtlBinding> {
        self.bindings
    }

    /// Hoists every compound operand of `e` into its own binding and
    /// returns the variable holding `e`'s value.
    fn flatten(&mut self, e: &IrExpr, rename: &HashMap<VarId, VarId>) -> VarId {
        let expr = self.flatten_top(e, rename);
        match expr {
            RtlExpr::Var(v) => v,
            other => self.emit(other),
        }
    }

    fn flatten_top(&mut self, e: &IrExpr, rename: &HashMap<VarId, VarId>) -> RtlExpr {
        let mut op = |e: &IrExpr| self.flatten(e, rename);
        match e {
            IrExpr::Var(v) => RtlExpr::Var(rename[v]),
            IrExpr::Const(c) => RtlExpr::Const(c.clone()),
            IrExpr::Input(i) => RtlExpr::Input(*i),
            IrExpr::Read(i) => RtlExpr::Read(*i),
            IrExpr::ReadRf(i, a) => RtlExpr::ReadRf(*i, op(a)),
            IrExpr::Not(a) => RtlExpr::Not(op(a)),
            IrExpr::Binop(o, a, b) => {
                let a = op(a);
                RtlExpr::Binop(*o, a, op(b))
            }
            IrExpr::Mux(c, t, f) => {
                let c = op(c);
                let t = op(t);
                RtlExpr::Mux(c, t, op(f))
            }
            IrExpr::Tuple(es) => RtlExpr::Tuple(es.iter().map(op).collect()),
            IrExpr::Proj(a, i) => RtlExpr::Proj(op(a), *i),
        }
    }
}

/// How [`merge`] resolves two writes that both fire.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MergeMode {
    /// The earlier write in program order wins.
    #[default]
    FirstWins,
    /// Deliberately wrong: the later write wins. Exists to check that the
    /// differential harness notices a broken pass.
    LastWins,
}

/// Collapses two writes to the same element, `a` before `b` in program
/// order, into one: the enable is `e_a || e_b` and data (and address) are
/// selected by `e_a`.
pub fn merge(em: &mut Emitter<'_>, a: RtlWrite, b: RtlWrite) -> Result<RtlWrite, RtlError> {
    merge_with(em, a, b, MergeMode::FirstWins)
}

fn merge_with(
    em: &mut Emitter<'_>,
    a: RtlWrite,
    b: RtlWrite,
    mode: MergeMode,
) -> Result<RtlWrite, RtlError> {
    if a.addr.is_some() != b.addr.is_some() {
        return Err(RtlError::KindMismatch);
    }
    let enable = em.emit(RtlExpr::Binop(BinOp::Or, a.enable, b.enable));
    let select = |em: &mut Emitter<'_>, x: VarId, y: VarId| match mode {
        MergeMode::FirstWins => em.emit(RtlExpr::Mux(a.enable, x, y)),
        MergeMode::LastWins => em.emit(RtlExpr::Mux(b.enable, y, x)),
    };
    let data = select(em, a.data, b.data);
    let addr = match (a.addr, b.addr) {
        (Some(x), Some(y)) => Some(select(em, x, y)),
        _ => None,
    };
    Ok(RtlWrite { data, addr, enable })
}

/// Flattens one element's effect tree into at most one write.
pub fn linearize(em: &mut Emitter<'_>, tree: &EffTree, rename: &HashMap<VarId, VarId>) -> Option<RtlWrite> {
    linearize_with(em, tree, rename, MergeMode::FirstWins)
}

fn linearize_with(
    em: &mut Emitter<'_>,
    tree: &EffTree,
    rename: &HashMap<VarId, VarId>,
    mode: MergeMode,
) -> Option<RtlWrite> {
    match tree {
        EffTree::Empty => None,
        EffTree::Write { data, addr, enable } => Some(RtlWrite {
            data: rename[data],
            addr: addr.map(|a| rename[&a]),
            enable: rename[enable],
        }),
        EffTree::Seq(x, y) => {
            let x = linearize_with(em, x, rename, mode);
            let y = linearize_with(em, y, rename, mode);
            match (x, y) {
                (Some(a), Some(b)) => {
                    Some(merge_with(em, a, b, mode).expect("writes to one element share a kind"))
                }
                (w, None) | (None, w) => w,
            }
        }
        EffTree::Branch {
            cond,
            then,
            otherwise,
        } => {
            let c = rename[cond];
            let x = linearize_with(em, then, rename, mode);
            let y = linearize_with(em, otherwise, rename, mode);
            match (x, y) {
                (None, None) => None,
                (Some(w), None) => {
                    let off = em.emit(RtlExpr::Const(Value::Bool(false)));
                    let enable = em.emit(RtlExpr::Mux(c, w.enable, off));
                    Some(RtlWrite { enable, ..w })
                }
                (None, Some(w)) => {
                    let off = em.emit(RtlExpr::Const(Value::Bool(false)));
                    let enable = em.emit(RtlExpr::Mux(c, off, w.enable));
                    Some(RtlWrite { enable, ..w })
                }
                (Some(a), Some(b)) => {
                    let data = em.emit(RtlExpr::Mux(c, a.data, b.data));
                    let addr = match (a.addr, b.addr) {
                        (Some(x), Some(y)) => Some(em.emit(RtlExpr::Mux(c, x, y))),
                        (None, None) => None,
                        _ => panic!("writes to one element share a kind"),
                    };
                    let enable = em.emit(RtlExpr::Mux(c, a.enable, b.enable));
                    Some(RtlWrite { data, addr, enable })
                }
            }
        }
    }
}

/// Lowers an IR block to RTL.
pub fn compile_to_rtl(env: &MemEnv, b: &IrBlock) -> RtlBlock {
    compile_to_rtl_with(env, b, MergeMode::FirstWins)
}

#[doc(hidden)]
pub fn compile_to_rtl_with(env: &MemEnv, b: &IrBlock, mode: MergeMode) -> RtlBlock {
    let first_fresh = b.bindings.iter().map(|x| x.var.0 + 1).max().unwrap_or(0);
    let mut em = Emitter::new(env, first_fresh);
    let mut rename = HashMap::new();
    for binding in &b.bindings {
        // The top-level node keeps the IR name; only sub-terms get fresh ones.
        let top = em.flatten_top(&binding.expr, &rename);
        em.emit_as(binding.var, top);
        rename.insert(binding.var, binding.var);
    }
    let effects = b
        .effects
        .iter()
        .map(|t| linearize_with(&mut em, t, &rename, mode))
        .collect();
    RtlBlock {
        bindings: em.into_bindings(),
        guard: rename[&b.guard],
        value: rename[&b.value],
        effects,
    }
}

pub(crate) fn eval_rtl_expr(frame: &Frame, state: &MemState, e: &RtlExpr) -> Value {
    match e {
        RtlExpr::Var(v) => frame.get(*v).clone(),
        RtlExpr::Const(c) => c.clone(),
        RtlExpr::Input(i) | RtlExpr::Read(i) => state.value(*i).clone(),
        RtlExpr::ReadRf(i, a) => {
            let addr = frame.get(*a).as_word().expect("address is a word");
            state.regfile(*i)[addr as usize].clone()
        }
        RtlExpr::Not(a) => eval_not(frame.get(*a)),
        RtlExpr::Binop(op, a, b) => op.eval(frame.get(*a), frame.get(*b)),
        RtlExpr::Mux(c, t, f) => eval_mux(frame.get(*c), frame.get(*t), frame.get(*f)),
        RtlExpr::Tuple(vs) => Value::Tuple(vs.iter().map(|v| frame.get(*v).clone()).collect()),
        RtlExpr::Proj(a, i) => eval_proj(frame.get(*a), *i),
    }
}

/// Next-state function of an RTL block: a false guard holds every element;
/// otherwise each write whose enable is true is committed.
pub fn rtl_next(state: &MemState, b: &RtlBlock) -> Option<(Value, MemState)> {
    let mut frame = Frame::with_capacity(b.bindings.iter().map(|x| x.var).max());
    for binding in &b.bindings {
        let v = eval_rtl_expr(&frame, state, &binding.expr);
        frame.set(binding.var, v);
    }
    if !frame.get(b.guard).as_bool().expect("guard is a bool") {
        return None;
    }
    let mut next = state.clone();
    for (index, w) in b.effects.iter().enumerate() {
        let Some(w) = w else { continue };
        if !frame.get(w.enable).as_bool().expect("enable is a bool") {
            continue;
        }
        let data = frame.get(w.data).clone();
        match w.addr {
            None => next.set_value(index, data),
            Some(a) => {
                let addr = frame.get(a).as_word().expect("address is a word");
                next.set_regfile_entry(index, addr as usize, data);
            }
        }
    }
    Some((frame.get(b.value).clone(), next))
}

impl fmt::Display for RtlExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RtlExpr::Var(v) => write!(f, "{v}"),
            RtlExpr::Const(c) => crate::lang::write_const(f, c),
            RtlExpr::Input(i) => write!(f, "input m{i}"),
            RtlExpr::Read(i) => write!(f, "!m{i}"),
            RtlExpr::ReadRf(i, a) => write!(f, "m{i}[{a}]"),
            RtlExpr::Not(a) => write!(f, "!{a}"),
            RtlExpr::Binop(op, a, b) => write!(f, "{a} {op} {b}"),
            RtlExpr::Mux(c, t, e) => write!(f, "{c} ? {t} : {e}"),
            RtlExpr::Tuple(vs) => {
                write!(f, "[")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
            RtlExpr::Proj(a, i) => write!(f, "{a}.{i}"),
        }
    }
}

/// Deterministic textual dump.
pub fn dump_rtl(b: &RtlBlock) -> String {
    let mut out = String::new();
    for binding in &b.bindings {
        let _ = writeln!(out, "{} : {} := {}", binding.var, binding.ty, binding.expr);
    }
    let _ = writeln!(out, "guard {}", b.guard);
    let _ = writeln!(out, "value {}", b.value);
    for (i, w) in b.effects.iter().enumerate() {
        match w {
            None => {}
            Some(RtlWrite {
                data,
                addr: None,
                enable,
            }) => {
                let _ = writeln!(out, "write m{i} := {data} when {enable}");
            }
            Some(RtlWrite {
                data,
                addr: Some(a),
                enable,
            }) => {
                let _ = writeln!(out, "write m{i}[{a}] := {data} when {enable}");
            }
        }
    }
    out
}
