//! Reference interpreter for source actions.
//!
//! A step reads the state, accumulates a pending update and commits it.
//! Reads always consult the state as it was at the start of the step, never
//! the pending update. This interpreter is the oracle every compilation
//! stage is compared against.

use std::rc::Rc;

use thiserror::Error;

use crate::lang::{Action, Expr, Program, VarId};
use crate::ops::{eval_mux, eval_not, eval_proj};
use crate::types::{commit, value_has_type, Delta, Mem, MemEnv, MemState, Value};

/// Persistent variable environment. Extending returns a new environment and
/// leaves the original untouched, so alternative branches cannot see each
/// other's bindings.
#[derive(Clone, Debug, Default)]
pub struct Env(Option<Rc<EnvNode>>);

#[derive(Debug)]
struct EnvNode {
    id: VarId,
    value: Value,
    next: Env,
}

impl Env {
    pub fn new() -> Self {
        Env(None)
    }

    pub fn extend(&self, id: VarId, value: Value) -> Env {
        Env(Some(Rc::new(EnvNode {
            id,
            value,
            next: self.clone(),
        })))
    }

    pub fn lookup(&self, id: VarId) -> Option<&Value> {
        let mut cur = self.0.as_deref();
        while let Some(node) = cur {
            if node.id == id {
                return Some(&node.value);
            }
            cur = node.next.0.as_deref();
        }
        None
    }
}

/// Outcome of evaluating an action: `None` means it aborted.
pub type StepResult = Option<(Value, Delta)>;

pub fn eval_expr(env: &Env, e: &Expr) -> Value {
    match e {
        Expr::Var(v) => env
            .lookup(v.id)
            .unwrap_or_else(|| panic!("unbound variable {}", v.id))
            .clone(),
        Expr::Const(v) => v.clone(),
        Expr::Not(a) => eval_not(&eval_expr(env, a)),
        Expr::Binop(op, a, b) => op.eval(&eval_expr(env, a), &eval_expr(env, b)),
        Expr::Mux(c, t, f) => {
            // Only the selected arm is evaluated; both are total anyway.
            match eval_expr(env, c) {
                Value::Bool(true) => eval_expr(env, t),
                Value::Bool(false) => eval_expr(env, f),
                other => eval_mux(&other, &Value::Unit, &Value::Unit),
            }
        }
        Expr::Tuple(es) => Value::Tuple(es.iter().map(|x| eval_expr(env, x)).collect()),
        Expr::Proj(a, i) => eval_proj(&eval_expr(env, a), *i),
    }
}

fn address(v: &Value) -> u64 {
    v.as_word().expect("register-file address is a word")
}

/// Big-step evaluation of `a` in state `state` with pending update `delta`.
pub fn eval_action(
    mem_env: &MemEnv,
    state: &MemState,
    delta: Delta,
    env: &Env,
    a: &Action,
) -> StepResult {
    match a {
        Action::Return(e) => Some((eval_expr(env, e), delta)),
        Action::Bind(first, x, rest) => {
            let (v, delta) = eval_action(mem_env, state, delta, env, first)?;
            eval_action(mem_env, state, delta, &env.extend(x.id, v), rest)
        }
        Action::Assert(e) => match eval_expr(env, e) {
            Value::Bool(true) => Some((Value::Unit, delta)),
            Value::Bool(false) => None,
            other => panic!("assertion on non-boolean {other:?}"),
        },
        Action::OrElse(l, r) => eval_action(mem_env, state, delta.clone(), env, l)
            .or_else(|| eval_action(mem_env, state, delta, env, r)),
        Action::RegRead(m) | Action::InputRead(m) => Some((state.value(m.index).clone(), delta)),
        Action::RegfileRead(m, addr) => {
            let a = address(&eval_expr(env, addr));
            Some((state.regfile(m.index)[a as usize].clone(), delta))
        }
        Action::RegWrite(m, e) => {
            let v = eval_expr(env, e);
            let mut delta = delta;
            delta
                .insert(mem_env, m.index, None, v)
                .expect("write checked by typecheck");
            Some((Value::Unit, delta))
        }
        Action::RegfileWrite(m, addr, data) => {
            let a = address(&eval_expr(env, addr));
            let v = eval_expr(env, data);
            let mut delta = delta;
            delta
                .insert(mem_env, m.index, Some(a), v)
                .expect("write checked by typecheck");
            Some((Value::Unit, delta))
        }
    }
}

/// One clock cycle: evaluate from an empty update and commit it. `None`
/// means the action aborted and the state is held.
pub fn next(state: &MemState, program: &Program) -> Option<(Value, MemState)> {
    let env = program.env();
    let (v, delta) = eval_action(env, state, Delta::empty(env), &Env::new(), program.action())?;
    Some((v, commit(state, &delta)))
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("expected {expected} input traces, got {found}")]
    TraceCount { expected: usize, found: usize },
    #[error("trace for input element {index} has {len} values, {cycles} cycles requested")]
    TraceTooShort {
        index: usize,
        len: usize,
        cycles: usize,
    },
    #[error("cycle {cycle}: value {value} does not fit input element {index}")]
    TraceValue {
        cycle: usize,
        index: usize,
        value: Value,
    },
    #[error("initial state does not match the memory environment")]
    BadInitialState,
}

/// One simulated cycle: the output (absent when the step aborted) and the
/// state after commit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cycle {
    pub output: Option<Value>,
    pub state: MemState,
}

/// Runs `cycles` steps of an arbitrary next-state function. Before each
/// step the cycle's input values are written into the state. `traces` holds
/// one list per `Input` element, in declaration order.
pub fn simulate_with(
    mem_env: &MemEnv,
    initial: &MemState,
    traces: &[Vec<Value>],
    cycles: usize,
    mut step: impl FnMut(&MemState) -> Option<(Value, MemState)>,
) -> Result<Vec<Cycle>, SimError> {
    if !initial.conforms(mem_env) {
        return Err(SimError::BadInitialState);
    }
    let inputs: Vec<usize> = mem_env.inputs().collect();
    if traces.len() != inputs.len() {
        return Err(SimError::TraceCount {
            expected: inputs.len(),
            found: traces.len(),
        });
    }
    for (&index, trace) in inputs.iter().zip(traces) {
        if trace.len() < cycles {
            return Err(SimError::TraceTooShort {
                index,
                len: trace.len(),
                cycles,
            });
        }
    }
    let mut state = initial.clone();
    let mut out = Vec::with_capacity(cycles);
    for cycle in 0..cycles {
        for (&index, trace) in inputs.iter().zip(traces) {
            let v = &trace[cycle];
            let Some(Mem::Input(t)) = mem_env.get(index) else {
                unreachable!()
            };
            if !value_has_type(v, t) {
                return Err(SimError::TraceValue {
                    cycle,
                    index,
                    value: v.clone(),
                });
            }
            state.set_value(index, v.clone());
        }
        let output = match step(&state) {
            Some((v, next)) => {
                state = next;
                Some(v)
            }
            None => None,
        };
        out.push(Cycle {
            output,
            state: state.clone(),
        });
    }
    Ok(out)
}

/// Clocked execution of a source program.
pub fn simulate(
    initial: &MemState,
    program: &Program,
    traces: &[Vec<Value>],
    cycles: usize,
) -> Result<Vec<Cycle>, SimError> {
    simulate_with(program.env(), initial, traces, cycles, |s| next(s, program))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{Builder, MemberRef};
    use crate::types::Ty;

    fn reg_env() -> MemEnv {
        MemEnv::new(vec![Mem::Reg(Ty::Int(4))])
    }

    fn run(env: &MemEnv, a: Action, state: &MemState) -> Option<(Value, MemState)> {
        next(state, &Program::new(env.clone(), a).expect("well typed"))
    }

    #[test]
    fn expression_examples() {
        let env = Env::new();
        assert_eq!(
            eval_expr(&env, &Expr::bool(true).and(Expr::bool(false))),
            Value::Bool(false)
        );
        assert_eq!(
            eval_expr(&env, &Expr::word(4, 12).add(Expr::word(4, 7))),
            Value::word(4, 3)
        );
        let m = Expr::mux(Expr::bool(true), Expr::word(3, 1), Expr::word(3, 2));
        assert_eq!(eval_expr(&env, &m), Value::word(3, 1));
    }

    #[test]
    fn assert_false_aborts() {
        let env = MemEnv::default();
        let s = MemState::zeroed(&env);
        assert_eq!(run(&env, Action::assert(Expr::bool(false)), &s), None);
    }

    #[test]
    fn aborted_left_branch_discards_its_write() {
        let env = reg_env();
        let r = MemberRef::of(&env, 0);
        let mut b = Builder::new();
        let left = b.seq(
            Action::reg_write(r, Expr::word(4, 1)),
            Action::assert(Expr::bool(false)),
        );
        let left = b.seq(left, Action::ret(Expr::word(4, 9)));
        let a = left.or_else(Action::ret(Expr::word(4, 0)));
        let s = MemState::zeroed(&env);
        let prog = Program::new(env.clone(), a).unwrap();
        let (v, delta) =
            eval_action(&env, &s, Delta::empty(&env), &Env::new(), prog.action()).unwrap();
        assert_eq!(v, Value::word(4, 0));
        assert!(delta.is_empty());
    }

    #[test]
    fn double_write_commits_first() {
        let env = reg_env();
        let r = MemberRef::of(&env, 0);
        let mut b = Builder::new();
        let a = b.seq(
            Action::reg_write(r.clone(), Expr::word(4, 1)),
            Action::reg_write(r, Expr::word(4, 2)),
        );
        let (v, s) = run(&env, a, &MemState::zeroed(&env)).unwrap();
        assert_eq!(v, Value::Unit);
        assert_eq!(s.value(0), &Value::word(4, 1));
    }

    #[test]
    fn reads_see_the_old_state() {
        let env = reg_env();
        let r = MemberRef::of(&env, 0);
        let mut b = Builder::new();
        let a = b.seq(
            Action::reg_write(r.clone(), Expr::word(4, 7)),
            Action::reg_read(r),
        );
        let mut s = MemState::zeroed(&env);
        s.set_value(0, Value::word(4, 3));
        let (v, s2) = run(&env, a, &s).unwrap();
        assert_eq!(v, Value::word(4, 3));
        assert_eq!(s2.value(0), &Value::word(4, 7));
    }

    #[test]
    fn ifte_on_true_constant() {
        let mut b = Builder::new();
        let a = b.ifte(
            Expr::bool(true),
            Action::ret(Expr::word(4, 1)),
            Action::ret(Expr::word(4, 2)),
        );
        let env = MemEnv::default();
        let (v, _) = run(&env, a, &MemState::zeroed(&env)).unwrap();
        assert_eq!(v, Value::word(4, 1));
    }

    #[test]
    fn regfile_read_and_write() {
        let env = MemEnv::new(vec![Mem::Regfile {
            addr_width: 2,
            ty: Ty::Int(4),
        }]);
        let rf = MemberRef::of(&env, 0);
        let mut b = Builder::new();
        let a = b.bind(Action::rf_read(rf.clone(), Expr::word(2, 1)), |b, x| {
            b.seq(
                Action::rf_write(rf.clone(), Expr::word(2, 3), Expr::var(&x)),
                Action::rf_write(rf, Expr::word(2, 0), Expr::word(4, 15)),
            )
        });
        let mut s = MemState::zeroed(&env);
        s.set_regfile_entry(0, 1, Value::word(4, 6));
        let (_, s2) = run(&env, a, &s).unwrap();
        let w = |b| Value::word(4, b);
        assert_eq!(s2.regfile(0), &[w(0), w(6), w(0), w(6)]);
    }

    #[test]
    fn simulate_argument_errors() {
        let env = MemEnv::new(vec![Mem::Input(Ty::Bool)]);
        let prog = Program::new(env.clone(), Action::ret(Expr::unit())).unwrap();
        let s = MemState::zeroed(&env);
        assert_eq!(
            simulate(&s, &prog, &[], 1),
            Err(SimError::TraceCount {
                expected: 1,
                found: 0
            })
        );
        assert!(matches!(
            simulate(&s, &prog, &[vec![Value::Bool(true)]], 2),
            Err(SimError::TraceTooShort { len: 1, .. })
        ));
        assert!(matches!(
            simulate(&s, &prog, &[vec![Value::word(2, 1)]], 1),
            Err(SimError::TraceValue { .. })
        ));
        assert_eq!(simulate(&s, &prog, &[vec![]], 0), Ok(vec![]));
    }

    #[test]
    fn return_only_action_keeps_state() {
        let env = MemEnv::new(vec![Mem::Reg(Ty::Int(3)), Mem::Input(Ty::Bool)]);
        let prog = Program::new(env.clone(), Action::ret(Expr::word(3, 2))).unwrap();
        let mut s = MemState::zeroed(&env);
        s.set_value(0, Value::word(3, 5));
        let trace = vec![vec![Value::Bool(true), Value::Bool(false), Value::Bool(true)]];
        let cycles = simulate(&s, &prog, &trace, 3).unwrap();
        assert!(cycles.iter().all(|c| c.state.value(0) == &Value::word(3, 5)));
    }
}
