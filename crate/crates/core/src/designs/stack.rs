//! A stack machine: reference interpreter, assembler, and the circuit
//! executing one instruction per cycle.
//!
//! Circuit state, by element index:
//!
//! | index | element                       |
//! |-------|-------------------------------|
//! | 0     | code, `2^n` × `(int4 * intn)` |
//! | 1     | program counter               |
//! | 2     | stack, `2^n` words            |
//! | 3     | stack pointer                 |
//! | 4     | store, `2^n` words            |
//!
//! The stack grows upward from entry 0; `sp` is the number of live
//! entries. Any step the words cannot represent aborts, holding all state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::lang::{Action, Builder, Expr, MemberRef, Program};
use crate::types::{mask, Mem, MemEnv, MemState, Ty, Value};

pub const CODE: usize = 0;
pub const PC: usize = 1;
pub const STACK: usize = 2;
pub const SP: usize = 3;
pub const STORE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cond {
    Eq,
    Ne,
    Le,
    Gt,
}

impl Cond {
    pub const ALL: [Cond; 4] = [Cond::Eq, Cond::Ne, Cond::Le, Cond::Gt];

    /// `c n1 n2`, where `n2` was on top of the stack.
    pub fn holds(self, n1: u64, n2: u64) -> bool {
        match self {
            Cond::Eq => n1 == n2,
            Cond::Ne => n1 != n2,
            Cond::Le => n1 <= n2,
            Cond::Gt => n1 > n2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Cond::Eq => "eq",
            Cond::Ne => "ne",
            Cond::Le => "le",
            Cond::Gt => "gt",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Instr {
    Const(u64),
    Var(u64),
    Setvar(u64),
    Add,
    Sub,
    Bfwd(u64),
    Bbwd(u64),
    Bcond(Cond, u64),
    Halt,
}

pub mod opcode {
    pub const CONST: u64 = 0;
    pub const VAR: u64 = 1;
    pub const SETVAR: u64 = 2;
    pub const ADD: u64 = 3;
    pub const SUB: u64 = 4;
    pub const BFWD: u64 = 5;
    pub const BBWD: u64 = 6;
    pub const BCOND_EQ: u64 = 7;
    pub const BCOND_NE: u64 = 8;
    pub const BCOND_LE: u64 = 9;
    pub const BCOND_GT: u64 = 10;
    pub const HALT: u64 = 15;
}

impl Instr {
    /// `(opcode, operand)`.
    pub fn encode(self) -> (u64, u64) {
        use opcode::*;
        match self {
            Instr::Const(k) => (CONST, k),
            Instr::Var(x) => (VAR, x),
            Instr::Setvar(x) => (SETVAR, x),
            Instr::Add => (ADD, 0),
            Instr::Sub => (SUB, 0),
            Instr::Bfwd(d) => (BFWD, d),
            Instr::Bbwd(d) => (BBWD, d),
            Instr::Bcond(Cond::Eq, d) => (BCOND_EQ, d),
            Instr::Bcond(Cond::Ne, d) => (BCOND_NE, d),
            Instr::Bcond(Cond::Le, d) => (BCOND_LE, d),
            Instr::Bcond(Cond::Gt, d) => (BCOND_GT, d),
            Instr::Halt => (HALT, 0),
        }
    }

    /// Inverse of [`Instr::encode`]. Opcodes 11 to 14 are unassigned;
    /// operand-less instructions must carry a zero operand.
    pub fn decode(op: u64, arg: u64) -> Option<Instr> {
        use opcode::*;
        let bare = |i| (arg == 0).then_some(i);
        match op {
            CONST => Some(Instr::Const(arg)),
            VAR => Some(Instr::Var(arg)),
            SETVAR => Some(Instr::Setvar(arg)),
            ADD => bare(Instr::Add),
            SUB => bare(Instr::Sub),
            BFWD => Some(Instr::Bfwd(arg)),
            BBWD => Some(Instr::Bbwd(arg)),
            BCOND_EQ => Some(Instr::Bcond(Cond::Eq, arg)),
            BCOND_NE => Some(Instr::Bcond(Cond::Ne, arg)),
            BCOND_LE => Some(Instr::Bcond(Cond::Le, arg)),
            BCOND_GT => Some(Instr::Bcond(Cond::Gt, arg)),
            HALT => bare(Instr::Halt),
            _ => None,
        }
    }

    pub fn operand(self) -> u64 {
        self.encode().1
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Const(k) => write!(f, "const {k}"),
            Instr::Var(x) => write!(f, "var {x}"),
            Instr::Setvar(x) => write!(f, "setvar {x}"),
            Instr::Add => f.write_str("add"),
            Instr::Sub => f.write_str("sub"),
            Instr::Bfwd(d) => write!(f, "bfwd {d}"),
            Instr::Bbwd(d) => write!(f, "bbwd {d}"),
            Instr::Bcond(c, d) => write!(f, "bcond {} {d}", c.name()),
            Instr::Halt => f.write_str("halt"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic `{word}`")]
    UnknownMnemonic { line: usize, word: String },
    #[error("line {line}: unknown condition `{word}`")]
    UnknownCondition { line: usize, word: String },
    #[error("line {line}: `{mnemonic}` expects {expected} operand(s)")]
    Arity {
        line: usize,
        mnemonic: String,
        expected: usize,
    },
    #[error("line {line}: `{word}` is not a number")]
    BadNumber { line: usize, word: String },
    #[error("line {line}: operand {value} does not fit in {width} bits")]
    OperandOverflow { line: usize, value: u64, width: u8 },
    #[error("program has {len} instructions, code memory holds {capacity}")]
    TooLong { len: usize, capacity: usize },
}

/// Parses assembly text: one `mnemonic [operand]` per line, `#` starts a
/// comment, blank lines are ignored.
pub fn parse_program(text: &str) -> Result<Vec<Instr>, AsmError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let words: Vec<&str> = raw
            .split('#')
            .next()
            .unwrap_or("")
            .split_whitespace()
            .collect();
        let Some((&mnemonic, args)) = words.split_first() else {
            continue;
        };
        let arity = |expected: usize| {
            if args.len() == expected {
                Ok(())
            } else {
                Err(AsmError::Arity {
                    line,
                    mnemonic: mnemonic.to_string(),
                    expected,
                })
            }
        };
        let num = |word: &str| {
            word.parse::<u64>().map_err(|_| AsmError::BadNumber {
                line,
                word: word.to_string(),
            })
        };
        let instr = match mnemonic {
            "add" | "sub" | "halt" => {
                arity(0)?;
                match mnemonic {
                    "add" => Instr::Add,
                    "sub" => Instr::Sub,
                    _ => Instr::Halt,
                }
            }
            "const" | "var" | "setvar" | "bfwd" | "bbwd" => {
                arity(1)?;
                let k = num(args[0])?;
                match mnemonic {
                    "const" => Instr::Const(k),
                    "var" => Instr::Var(k),
                    "setvar" => Instr::Setvar(k),
                    "bfwd" => Instr::Bfwd(k),
                    _ => Instr::Bbwd(k),
                }
            }
            "bcond" => {
                arity(2)?;
                let c = Cond::ALL
                    .into_iter()
                    .find(|c| c.name() == args[0])
                    .ok_or_else(|| AsmError::UnknownCondition {
                        line,
                        word: args[0].to_string(),
                    })?;
                Instr::Bcond(c, num(args[1])?)
            }
            other => {
                return Err(AsmError::UnknownMnemonic {
                    line,
                    word: other.to_string(),
                })
            }
        };
        out.push(instr);
    }
    Ok(out)
}

/// Encodes a program for an `n`-bit machine. Error line numbers count
/// instructions from 1.
pub fn encode_program(code: &[Instr], n: u8) -> Result<Vec<(u64, u64)>, AsmError> {
    let capacity = 1usize << n;
    if code.len() > capacity {
        return Err(AsmError::TooLong {
            len: code.len(),
            capacity,
        });
    }
    code.iter()
        .enumerate()
        .map(|(i, instr)| {
            let (op, arg) = instr.encode();
            if arg > mask(n) {
                Err(AsmError::OperandOverflow {
                    line: i + 1,
                    value: arg,
                    width: n,
                })
            } else {
                Ok((op, arg))
            }
        })
        .collect()
}

/// Parses and encodes in one go.
pub fn assemble(text: &str, n: u8) -> Result<Vec<(u64, u64)>, AsmError> {
    encode_program(&parse_program(text)?, n)
}

/// Computes the tenth Fibonacci number into identifier 0.
pub const FIBONACCI: &str = include_str!("../../examples/fibonacci.asm");
/// Sums 1 through 5 into identifier 0.
pub const SUM: &str = include_str!("../../examples/sum.asm");

/// Reference machine state over unbounded naturals (here `u64`, with
/// overflow treated as stuck).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VmState {
    pub code: Vec<Instr>,
    pub pc: u64,
    /// Bottom of the stack first; the top is the last element.
    pub stack: Vec<u64>,
    /// Identifiers absent from the map hold 0.
    pub store: BTreeMap<u64, u64>,
}

impl VmState {
    pub fn new(code: Vec<Instr>) -> Self {
        VmState {
            code,
            pc: 0,
            stack: Vec::new(),
            store: BTreeMap::new(),
        }
    }

    pub fn load(&self, x: u64) -> u64 {
        self.store.get(&x).copied().unwrap_or(0)
    }

    /// True if every field fits an `n`-bit machine.
    pub fn fits(&self, n: u8) -> bool {
        let m = mask(n);
        self.code.len() as u64 <= m + 1
            && self.pc <= m
            && self.stack.len() as u64 <= m
            && self.stack.iter().all(|v| *v <= m)
            && self.store.iter().all(|(k, v)| *k <= m && *v <= m)
            && self.code.iter().all(|i| i.operand() <= m)
    }
}

/// One transition, or `None` when no rule applies.
pub fn vm_step(s: &VmState) -> Option<VmState> {
    let instr = *s.code.get(usize::try_from(s.pc).ok()?)?;
    let mut t = s.clone();
    let next = s.pc.checked_add(1)?;
    t.pc = next;
    match instr {
        Instr::Const(k) => t.stack.push(k),
        Instr::Var(x) => t.stack.push(s.load(x)),
        Instr::Setvar(x) => {
            let v = t.stack.pop()?;
            t.store.insert(x, v);
        }
        Instr::Add | Instr::Sub => {
            let n2 = t.stack.pop()?;
            let n1 = t.stack.pop()?;
            t.stack.push(match instr {
                Instr::Add => n1.checked_add(n2)?,
                _ => n1.saturating_sub(n2),
            });
        }
        Instr::Bfwd(d) => t.pc = next.checked_add(d)?,
        Instr::Bbwd(d) => t.pc = next.checked_sub(d)?,
        Instr::Bcond(c, d) => {
            let n2 = t.stack.pop()?;
            let n1 = t.stack.pop()?;
            if c.holds(n1, n2) {
                t.pc = next.checked_add(d)?;
            }
        }
        Instr::Halt => return None,
    }
    Some(t)
}

/// Steps until stuck or `max_steps` transitions; returns the final state and
/// the number of transitions taken.
pub fn vm_run(s: &VmState, max_steps: usize) -> (VmState, usize) {
    let mut s = s.clone();
    for k in 0..max_steps {
        match vm_step(&s) {
            Some(t) => s = t,
            None => return (s, k),
        }
    }
    (s, max_steps)
}

pub fn instr_ty(n: u8) -> Ty {
    Ty::pair(Ty::Int(4), Ty::Int(n))
}

pub fn machine_env(n: u8) -> MemEnv {
    MemEnv::new(vec![
        Mem::Regfile {
            addr_width: n,
            ty: instr_ty(n),
        },
        Mem::Reg(Ty::Int(n)),
        Mem::Regfile {
            addr_width: n,
            ty: Ty::Int(n),
        },
        Mem::Reg(Ty::Int(n)),
        Mem::Regfile {
            addr_width: n,
            ty: Ty::Int(n),
        },
    ])
}

struct Machine {
    n: u8,
    pc_reg: MemberRef,
    stack: MemberRef,
    sp_reg: MemberRef,
    store: MemberRef,
    pc: Expr,
    sp: Expr,
    arg: Expr,
}

impl Machine {
    fn w(&self, k: u64) -> Expr {
        Expr::word(self.n, k)
    }

    fn not_max(&self, e: Expr) -> Expr {
        e.eq(self.w(mask(self.n))).not()
    }

    fn next_pc(&self) -> Expr {
        self.pc.clone().add(self.w(1))
    }

    fn advance(&self) -> Action {
        Action::reg_write(self.pc_reg.clone(), self.next_pc())
    }

    fn set_sp(&self, e: Expr) -> Action {
        Action::reg_write(self.sp_reg.clone(), e)
    }

    fn stack_at(&self, offset: u64) -> Action {
        Action::rf_read(self.stack.clone(), self.sp.clone().sub(self.w(offset)))
    }

    fn push(&self, b: &mut Builder, v: Expr) -> Action {
        let check = Action::assert(self.not_max(self.pc.clone()).and(self.not_max(self.sp.clone())));
        let write = Action::rf_write(self.stack.clone(), self.sp.clone(), v);
        let sp = self.set_sp(self.sp.clone().add(self.w(1)));
        let rest = b.seq(sp, self.advance());
        let rest = b.seq(write, rest);
        b.seq(check, rest)
    }

    fn i_const(&self, b: &mut Builder) -> Action {
        self.push(b, self.arg.clone())
    }

    fn i_var(&self, b: &mut Builder) -> Action {
        b.bind(
            Action::rf_read(self.store.clone(), self.arg.clone()),
            |b, v| self.push(b, Expr::var(&v)),
        )
    }

    fn i_setvar(&self, b: &mut Builder) -> Action {
        let check = Action::assert(
            self.not_max(self.pc.clone())
                .and(self.sp.clone().eq(self.w(0)).not()),
        );
        let body = b.bind(self.stack_at(1), |b, v| {
            let write = Action::rf_write(self.store.clone(), self.arg.clone(), Expr::var(&v));
            let sp = self.set_sp(self.sp.clone().sub(self.w(1)));
            let rest = b.seq(sp, self.advance());
            b.seq(write, rest)
        });
        b.seq(check, body)
    }

    /// Pops `n2` then `n1` and hands both to `k`.
    fn pop2(&self, b: &mut Builder, k: impl FnOnce(&mut Builder, Expr, Expr) -> Action) -> Action {
        let check = Action::assert(
            self.not_max(self.pc.clone())
                .and(self.w(1).lt(self.sp.clone())),
        );
        let body = b.bind(self.stack_at(1), |b, n2| {
            b.bind(self.stack_at(2), |b, n1| k(b, Expr::var(&n1), Expr::var(&n2)))
        });
        b.seq(check, body)
    }

    fn i_arith(&self, b: &mut Builder, add: bool) -> Action {
        self.pop2(b, |b, n1, n2| {
            let result = if add {
                n1.clone().add(n2)
            } else {
                Expr::mux(n2.clone().le(n1.clone()), n1.clone().sub(n2), self.w(0))
            };
            b.bind(Action::ret(result), |b, r| {
                let r = Expr::var(&r);
                // Only addition can leave the word range.
                let no_overflow = Action::assert(if add { n1.le(r.clone()) } else { Expr::bool(true) });
                let write = Action::rf_write(self.stack.clone(), self.sp.clone().sub(self.w(2)), r);
                let sp = self.set_sp(self.sp.clone().sub(self.w(1)));
                let rest = b.seq(sp, self.advance());
                let rest = b.seq(write, rest);
                b.seq(no_overflow, rest)
            })
        })
    }

    fn i_bfwd(&self, b: &mut Builder) -> Action {
        b.bind(Action::ret(self.next_pc()), |b, t1| {
            let t1 = Expr::var(&t1);
            let target = t1.clone().add(self.arg.clone());
            let check = Action::assert(
                self.not_max(self.pc.clone())
                    .and(t1.le(target.clone())),
            );
            b.seq(check, Action::reg_write(self.pc_reg.clone(), target))
        })
    }

    fn i_bbwd(&self, b: &mut Builder) -> Action {
        // pc + 1 - d must be a natural that fits in n bits.
        let ok = Expr::mux(
            self.arg.clone().eq(self.w(0)),
            self.not_max(self.pc.clone()),
            self.arg.clone().sub(self.w(1)).le(self.pc.clone()),
        );
        let target = self.next_pc().sub(self.arg.clone());
        b.seq(
            Action::assert(ok),
            Action::reg_write(self.pc_reg.clone(), target),
        )
    }

    fn i_bcond(&self, b: &mut Builder, c: Cond) -> Action {
        self.pop2(b, |b, n1, n2| {
            let taken = match c {
                Cond::Eq => n1.eq(n2),
                Cond::Ne => n1.eq(n2).not(),
                Cond::Le => n1.le(n2),
                Cond::Gt => n2.lt(n1),
            };
            b.bind(Action::ret(taken), |b, taken| {
                b.bind(Action::ret(self.next_pc()), |b, t1| {
                    let taken = Expr::var(&taken);
                    let t1 = Expr::var(&t1);
                    let target = t1.clone().add(self.arg.clone());
                    let check =
                        Action::assert(taken.clone().not().or(t1.clone().le(target.clone())));
                    let sp = self.set_sp(self.sp.clone().sub(self.w(2)));
                    let pc = Action::reg_write(self.pc_reg.clone(), Expr::mux(taken, target, t1));
                    let rest = b.seq(sp, pc);
                    b.seq(check, rest)
                })
            })
        })
    }
}

/// One machine step: fetch, dispatch on the opcode, execute.
pub fn stack_machine(b: &mut Builder, env: &MemEnv, n: u8) -> Action {
    let member = |i| MemberRef::of(env, i);
    b.bind(Action::reg_read(member(PC)), |b, pc| {
        b.bind(Action::rf_read(member(CODE), Expr::var(&pc)), |b, instr| {
            b.bind(Action::reg_read(member(SP)), |b, sp| {
                let m = Machine {
                    n,
                    pc_reg: member(PC),
                    stack: member(STACK),
                    sp_reg: member(SP),
                    store: member(STORE),
                    pc: Expr::var(&pc),
                    sp: Expr::var(&sp),
                    arg: Expr::var(&instr).proj(1),
                };
                let op = Expr::var(&instr).proj(0);
                let cases = [
                    (opcode::CONST, m.i_const(b)),
                    (opcode::VAR, m.i_var(b)),
                    (opcode::SETVAR, m.i_setvar(b)),
                    (opcode::ADD, m.i_arith(b, true)),
                    (opcode::SUB, m.i_arith(b, false)),
                    (opcode::BFWD, m.i_bfwd(b)),
                    (opcode::BBWD, m.i_bbwd(b)),
                    (opcode::BCOND_EQ, m.i_bcond(b, Cond::Eq)),
                    (opcode::BCOND_NE, m.i_bcond(b, Cond::Ne)),
                    (opcode::BCOND_LE, m.i_bcond(b, Cond::Le)),
                    (opcode::BCOND_GT, m.i_bcond(b, Cond::Gt)),
                ];
                // Halt and unassigned opcodes fall through to the abort.
                let mut act = Action::assert(Expr::bool(false));
                for (code, body) in cases.into_iter().rev() {
                    act = b.ifte(op.clone().eq(Expr::word(4, code)), body, act);
                }
                act
            })
        })
    })
}

pub fn stack_machine_program(n: u8) -> Program {
    let env = machine_env(n);
    let mut b = Builder::new();
    let a = stack_machine(&mut b, &env, n);
    Program::new(env, a).expect("stack machine typechecks")
}

fn instr_value(n: u8, (op, arg): (u64, u64)) -> Value {
    Value::Tuple(vec![Value::word(4, op), Value::word(n, arg)])
}

/// Circuit state with `code` loaded, the rest of code memory filled with
/// `halt`, and everything else zero.
pub fn load(n: u8, code: &[Instr]) -> Result<MemState, AsmError> {
    let words = encode_program(code, n)?;
    let mut s = MemState::zeroed(&machine_env(n));
    for addr in 0..1usize << n {
        let w = words.get(addr).copied().unwrap_or(Instr::Halt.encode());
        s.set_regfile_entry(CODE, addr, instr_value(n, w));
    }
    Ok(s)
}

/// Circuit state encoding `s`, if `s` fits.
pub fn encode_state(n: u8, s: &VmState) -> Option<MemState> {
    if !s.fits(n) {
        return None;
    }
    let mut m = load(n, &s.code).ok()?;
    m.set_value(PC, Value::word(n, s.pc));
    m.set_value(SP, Value::word(n, s.stack.len() as u64));
    for (i, v) in s.stack.iter().enumerate() {
        m.set_regfile_entry(STACK, i, Value::word(n, *v));
    }
    for (x, v) in &s.store {
        m.set_regfile_entry(STORE, *x as usize, Value::word(n, *v));
    }
    Some(m)
}

fn word(v: &Value) -> u64 {
    v.as_word().expect("machine words")
}

/// The correspondence between reference and circuit states: code, program
/// counter, live stack and every identifier the state or code mentions.
pub fn states_related(n: u8, s: &VmState, m: &MemState) -> bool {
    if !s.fits(n) {
        return false;
    }
    let code = m.regfile(CODE);
    let code_ok = s.code.iter().enumerate().all(|(i, instr)| {
        let Some(fields) = code[i].as_tuple() else {
            return false;
        };
        Instr::decode(word(&fields[0]), word(&fields[1])) == Some(*instr)
    });
    let stack = m.regfile(STACK);
    let stack_ok = word(m.value(SP)) == s.stack.len() as u64
        && s.stack.iter().zip(stack).all(|(v, c)| *v == word(c));
    let mut ids: BTreeSet<u64> = s.store.keys().copied().collect();
    for instr in &s.code {
        if let Instr::Var(x) | Instr::Setvar(x) = instr {
            ids.insert(*x);
        }
    }
    let store = m.regfile(STORE);
    let store_ok = ids.iter().all(|x| word(&store[*x as usize]) == s.load(*x));
    code_ok && word(m.value(PC)) == s.pc && stack_ok && store_ok
}

/// A random program of `len` instructions biased toward ones that run:
/// small constants, few identifiers, short branches.
pub fn random_program<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<Instr> {
    (0..len)
        .map(|_| match rng.random_range(0..100) {
            0..=24 => Instr::Const(rng.random_range(0..16)),
            25..=39 => Instr::Var(rng.random_range(0..4)),
            40..=54 => Instr::Setvar(rng.random_range(0..4)),
            55..=64 => Instr::Add,
            65..=74 => Instr::Sub,
            75..=79 => Instr::Bfwd(rng.random_range(0..4)),
            80..=86 => Instr::Bbwd(rng.random_range(0..8)),
            87..=97 => Instr::Bcond(Cond::ALL[rng.random_range(0..4)], rng.random_range(0..4)),
            _ => Instr::Halt,
        })
        .collect()
}
