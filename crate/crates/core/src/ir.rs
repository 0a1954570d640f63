//! First compilation pass: administrative normal form with control flow
//! turned into data flow.
//!
//! A source action becomes a telescope of named bindings followed by a
//! guard (is the step valid?), a value, and one tree of conditional writes
//! per memory element. Memory reads become ordinary pure expressions, since
//! they only ever observe the state at the start of the step.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use crate::lang::{Action, Expr, Program, VarId};
use crate::ops::{eval_mux, eval_not, eval_proj, BinOp};
use crate::types::{MemState, Ty, Value};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum IrExpr {
    Var(VarId),
    Const(Value),
    Not(Box<IrExpr>),
    Binop(BinOp, Box<IrExpr>, Box<IrExpr>),
    Mux(Box<IrExpr>, Box<IrExpr>, Box<IrExpr>),
    Tuple(Vec<IrExpr>),
    Proj(Box<IrExpr>, usize),
    Input(usize),
    Read(usize),
    ReadRf(usize, Box<IrExpr>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IrBinding {
    pub var: VarId,
    pub ty: Ty,
    pub expr: IrExpr,
}

/// Conditional writes to one memory element.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum EffTree {
    Empty,
    /// Fires iff `enable` holds. `addr` is present for register files.
    Write {
        data: VarId,
        addr: Option<VarId>,
        enable: VarId,
    },
    Branch {
        cond: VarId,
        then: Box<EffTree>,
        otherwise: Box<EffTree>,
    },
    /// Program order: when both sides fire, the first one wins.
    Seq(Box<EffTree>, Box<EffTree>),
}

impl EffTree {
    pub fn seq(first: EffTree, second: EffTree) -> EffTree {
        match (first, second) {
            (EffTree::Empty, t) | (t, EffTree::Empty) => t,
            (a, b) => EffTree::Seq(Box::new(a), Box::new(b)),
        }
    }

    pub fn branch(cond: VarId, then: EffTree, otherwise: EffTree) -> EffTree {
        match (then, otherwise) {
            (EffTree::Empty, EffTree::Empty) => EffTree::Empty,
            (then, otherwise) => EffTree::Branch {
                cond,
                then: Box::new(then),
                otherwise: Box::new(otherwise),
            },
        }
    }

    fn vars(&self, out: &mut Vec<VarId>) {
        match self {
            EffTree::Empty => {}
            EffTree::Write { data, addr, enable } => {
                out.push(*data);
                out.extend(addr);
                out.push(*enable);
            }
            EffTree::Branch {
                cond,
                then,
                otherwise,
            } => {
                out.push(*cond);
                then.vars(out);
                otherwise.vars(out);
            }
            EffTree::Seq(a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IrBlock {
    pub bindings: Vec<IrBinding>,
    pub guard: VarId,
    pub value: VarId,
    /// One tree per element of the memory environment.
    pub effects: Vec<EffTree>,
}

/// A scoping violation found by [`IrBlock::check_scoped`].
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ScopeError {
    #[error("variable {0} bound twice")]
    Rebound(VarId),
    #[error("variable {0} used before being bound")]
    Unbound(VarId),
}

impl IrBlock {
    /// Every variable is bound once and only used after its binding.
    pub fn check_scoped(&self) -> Result<(), ScopeError> {
        let mut bound = std::collections::HashSet::new();
        let mut used = Vec::new();
        for b in &self.bindings {
            used.clear();
            expr_vars(&b.expr, &mut used);
            if let Some(v) = used.iter().find(|v| !bound.contains(*v)) {
                return Err(ScopeError::Unbound(*v));
            }
            if !bound.insert(b.var) {
                return Err(ScopeError::Rebound(b.var));
            }
        }
        used.clear();
        used.push(self.guard);
        used.push(self.value);
        for t in &self.effects {
            t.vars(&mut used);
        }
        match used.iter().find(|v| !bound.contains(*v)) {
            Some(v) => Err(ScopeError::Unbound(*v)),
            None => Ok(()),
        }
    }
}

fn expr_vars(e: &IrExpr, out: &mut Vec<VarId>) {
    match e {
        IrExpr::Var(v) => out.push(*v),
        IrExpr::Const(_) | IrExpr::Input(_) | IrExpr::Read(_) => {}
        IrExpr::Not(a) | IrExpr::Proj(a, _) | IrExpr::ReadRf(_, a) => expr_vars(a, out),
        IrExpr::Binop(_, a, b) => {
            expr_vars(a, out);
            expr_vars(b, out);
        }
        IrExpr::Mux(a, b, c) => {
            expr_vars(a, out);
            expr_vars(b, out);
            expr_vars(c, out);
        }
        IrExpr::Tuple(es) => es.iter().for_each(|e| expr_vars(e, out)),
    }
}

struct Compiler {
    bindings: Vec<IrBinding>,
    next: u32,
    /// Source variable to the IR variable holding its value.
    subst: HashMap<VarId, VarId>,
    elements: usize,
}

impl Compiler {
    fn bind(&mut self, ty: Ty, expr: IrExpr) -> VarId {
        let var = VarId(self.next);
        self.next += 1;
        self.bindings.push(IrBinding { var, ty, expr });
        var
    }

    fn empty_effects(&self) -> Vec<EffTree> {
        vec![EffTree::Empty; self.elements]
    }

    fn expr(&self, e: &Expr) -> IrExpr {
        match e {
            Expr::Var(v) => IrExpr::Var(
                *self
                    .subst
                    .get(&v.id)
                    .unwrap_or_else(|| panic!("unbound variable {}", v.id)),
            ),
            Expr::Const(v) => IrExpr::Const(v.clone()),
            Expr::Not(a) => IrExpr::Not(Box::new(self.expr(a))),
            Expr::Binop(op, a, b) => {
                IrExpr::Binop(*op, Box::new(self.expr(a)), Box::new(self.expr(b)))
            }
            Expr::Mux(c, t, f) => IrExpr::Mux(
                Box::new(self.expr(c)),
                Box::new(self.expr(t)),
                Box::new(self.expr(f)),
            ),
            Expr::Tuple(es) => IrExpr::Tuple(es.iter().map(|e| self.expr(e)).collect()),
            Expr::Proj(a, i) => IrExpr::Proj(Box::new(self.expr(a)), *i),
        }
    }

    fn expr_ty(e: &Expr) -> Ty {
        e.ty().expect("expression checked by typecheck")
    }

    fn unit(&mut self) -> VarId {
        self.bind(Ty::Unit, IrExpr::Const(Value::Unit))
    }

    /// Compiles `a` under the current guard `g`, returning the new guard,
    /// the result variable and the per-element effects.
    fn action(&mut self, g: VarId, a: &Action) -> (VarId, VarId, Vec<EffTree>) {
        match a {
            Action::Return(e) => {
                let v = self.bind(Self::expr_ty(e), self.expr(e));
                (g, v, self.empty_effects())
            }
            Action::Assert(e) => {
                let cond = IrExpr::Binop(BinOp::And, Box::new(IrExpr::Var(g)), Box::new(self.expr(e)));
                let g2 = self.bind(Ty::Bool, cond);
                let u = self.unit();
                (g2, u, self.empty_effects())
            }
            Action::Bind(first, x, rest) => {
                let (g1, v1, e1) = self.action(g, first);
                self.subst.insert(x.id, v1);
                let (g2, v2, e2) = self.action(g1, rest);
                let effects = e1.into_iter().zip(e2).map(|(a, b)| EffTree::seq(a, b)).collect();
                (g2, v2, effects)
            }
            Action::OrElse(l, r) => {
                let ty = a.result_ty().expect("action checked by typecheck");
                let (ga, va, ea) = self.action(g, l);
                let (gb, vb, eb) = self.action(g, r);
                let guard = IrExpr::Binop(BinOp::Or, Box::new(IrExpr::Var(ga)), Box::new(IrExpr::Var(gb)));
                let g2 = self.bind(Ty::Bool, guard);
                let value = IrExpr::Mux(
                    Box::new(IrExpr::Var(ga)),
                    Box::new(IrExpr::Var(va)),
                    Box::new(IrExpr::Var(vb)),
                );
                let v = self.bind(ty, value);
                let effects = ea
                    .into_iter()
                    .zip(eb)
                    .map(|(x, y)| EffTree::branch(ga, x, y))
                    .collect();
                (g2, v, effects)
            }
            Action::RegRead(m) => {
                let v = self.bind(m.mem.ty().clone(), IrExpr::Read(m.index));
                (g, v, self.empty_effects())
            }
            Action::InputRead(m) => {
                let v = self.bind(m.mem.ty().clone(), IrExpr::Input(m.index));
                (g, v, self.empty_effects())
            }
            Action::RegfileRead(m, addr) => {
                let e = IrExpr::ReadRf(m.index, Box::new(self.expr(addr)));
                let v = self.bind(m.mem.ty().clone(), e);
                (g, v, self.empty_effects())
            }
            Action::RegWrite(m, e) => {
                let data = self.bind(Self::expr_ty(e), self.expr(e));
                let mut effects = self.empty_effects();
                effects[m.index] = EffTree::Write {
                    data,
                    addr: None,
                    enable: g,
                };
                let u = self.unit();
                (g, u, effects)
            }
            Action::RegfileWrite(m, addr, e) => {
                let a = self.bind(Self::expr_ty(addr), self.expr(addr));
                let data = self.bind(Self::expr_ty(e), self.expr(e));
                let mut effects = self.empty_effects();
                effects[m.index] = EffTree::Write {
                    data,
                    addr: Some(a),
                    enable: g,
                };
                let u = self.unit();
                (g, u, effects)
            }
        }
    }
}

/// Lowers a checked program to an [`IrBlock`].
pub fn compile_to_ir(program: &Program) -> IrBlock {
    let mut c = Compiler {
        bindings: Vec::new(),
        next: 0,
        subst: HashMap::new(),
        elements: program.env().len(),
    };
    let g0 = c.bind(Ty::Bool, IrExpr::Const(Value::Bool(true)));
    let (guard, value, effects) = c.action(g0, program.action());
    IrBlock {
        bindings: c.bindings,
        guard,
        value,
        effects,
    }
}

/// Dense variable store used by the block interpreters.
pub(crate) struct Frame {
    slots: Vec<Option<Value>>,
}

impl Frame {
    pub(crate) fn with_capacity(max_var: Option<VarId>) -> Self {
        Frame {
            slots: vec![None; max_var.map_or(0, |v| v.0 as usize + 1)],
        }
    }

    pub(crate) fn set(&mut self, v: VarId, value: Value) {
        let i = v.0 as usize;
        if i >= self.slots.len() {
            self.slots.resize(i + 1, None);
        }
        self.slots[i] = Some(value);
    }

    pub(crate) fn get(&self, v: VarId) -> &Value {
        self.slots
            .get(v.0 as usize)
            .and_then(Option::as_ref)
            .unwrap_or_else(|| panic!("unbound variable {v}"))
    }
}

fn eval(frame: &Frame, state: &MemState, e: &IrExpr) -> Value {
    match e {
        IrExpr::Var(v) => frame.get(*v).clone(),
        IrExpr::Const(v) => v.clone(),
        IrExpr::Not(a) => eval_not(&eval(frame, state, a)),
        IrExpr::Binop(op, a, b) => op.eval(&eval(frame, state, a), &eval(frame, state, b)),
        IrExpr::Mux(c, t, f) => eval_mux(
            &eval(frame, state, c),
            &eval(frame, state, t),
            &eval(frame, state, f),
        ),
        IrExpr::Tuple(es) => Value::Tuple(es.iter().map(|e| eval(frame, state, e)).collect()),
        IrExpr::Proj(a, i) => eval_proj(&eval(frame, state, a), *i),
        IrExpr::Input(i) | IrExpr::Read(i) => state.value(*i).clone(),
        IrExpr::ReadRf(i, a) => {
            let addr = eval(frame, state, a).as_word().expect("address is a word");
            state.regfile(*i)[addr as usize].clone()
        }
    }
}

fn fold(frame: &Frame, t: &EffTree) -> Option<(Option<u64>, Value)> {
    match t {
        EffTree::Empty => None,
        EffTree::Write { data, addr, enable } => {
            if frame.get(*enable).as_bool().expect("enable is a bool") {
                let a = addr.map(|a| frame.get(a).as_word().expect("address is a word"));
                Some((a, frame.get(*data).clone()))
            } else {
                None
            }
        }
        EffTree::Branch {
            cond,
            then,
            otherwise,
        } => {
            if frame.get(*cond).as_bool().expect("condition is a bool") {
                fold(frame, then)
            } else {
                fold(frame, otherwise)
            }
        }
        EffTree::Seq(a, b) => fold(frame, a).or_else(|| fold(frame, b)),
    }
}

/// Next-state function of an IR block.
pub fn eval_ir(state: &MemState, b: &IrBlock) -> Option<(Value, MemState)> {
    let mut frame = Frame::with_capacity(b.bindings.iter().map(|x| x.var).max());
    for binding in &b.bindings {
        let v = eval(&frame, state, &binding.expr);
        frame.set(binding.var, v);
    }
    if !frame.get(b.guard).as_bool().expect("guard is a bool") {
        return None;
    }
    let mut next = state.clone();
    for (index, tree) in b.effects.iter().enumerate() {
        match fold(&frame, tree) {
            None => {}
            Some((None, v)) => next.set_value(index, v),
            Some((Some(a), v)) => next.set_regfile_entry(index, a as usize, v),
        }
    }
    Some((frame.get(b.value).clone(), next))
}

impl fmt::Display for IrExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IrExpr::Var(v) => write!(f, "{v}"),
            IrExpr::Const(v) => crate::lang::write_const(f, v),
            IrExpr::Not(a) => write!(f, "!{a}"),
            IrExpr::Binop(op, a, b) => write!(f, "({a} {op} {b})"),
            IrExpr::Mux(c, t, e) => write!(f, "({c} ? {t} : {e})"),
            IrExpr::Tuple(es) => {
                write!(f, "[")?;
                for (i, e) in es.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, "]")
            }
            IrExpr::Proj(a, i) => write!(f, "{a}.{i}"),
            IrExpr::Input(i) => write!(f, "input m{i}"),
            IrExpr::Read(i) => write!(f, "!m{i}"),
            IrExpr::ReadRf(i, a) => write!(f, "m{i}[{a}]"),
        }
    }
}

impl fmt::Display for EffTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EffTree::Empty => write!(f, "none"),
            EffTree::Write {
                data,
                addr: None,
                enable,
            } => write!(f, "write {data} when {enable}"),
            EffTree::Write {
                data,
                addr: Some(a),
                enable,
            } => write!(f, "write {data} at {a} when {enable}"),
            EffTree::Branch {
                cond,
                then,
                otherwise,
            } => write!(f, "if {cond} then ({then}) else ({otherwise})"),
            EffTree::Seq(a, b) => write!(f, "seq({a}, {b})"),
        }
    }
}

/// Deterministic textual dump.
pub fn dump_ir(b: &IrBlock) -> String {
    let mut out = String::new();
    for binding in &b.bindings {
        let _ = writeln!(out, "{} : {} := {}", binding.var, binding.ty, binding.expr);
    }
    let _ = writeln!(out, "guard {}", b.guard);
    let _ = writeln!(out, "value {}", b.value);
    for (i, t) in b.effects.iter().enumerate() {
        let _ = writeln!(out, "effect m{i}: {t}");
    }
    out
}
