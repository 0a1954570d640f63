//! Circuit generators: small textbook circuits, a bitonic sorter and a
//! stack machine, each with the oracle it is tested against.

use std::fmt;

use thiserror::Error;

use crate::lang::{Action, Builder, Expr, MemberRef, Program, Var};
use crate::types::{Mem, MemEnv, Ty};

pub mod sorter;
pub mod stack;

/// Half adder over two Boolean variables: `(carry, sum)`.
pub fn hadd(b: &mut Builder, x: &Var, y: &Var) -> Action {
    let carry = Expr::var(x).and(Expr::var(y));
    let sum = Expr::var(x).xor(Expr::var(y));
    b.bind(Action::ret(carry), |b, carry| {
        b.bind(Action::ret(sum), |_, sum| {
            Action::ret(Expr::tuple(vec![Expr::var(&carry), Expr::var(&sum)]))
        })
    })
}

/// Half adder fed from two Boolean inputs.
pub fn hadd_program() -> Program {
    let env = MemEnv::new(vec![Mem::Input(Ty::Bool), Mem::Input(Ty::Bool)]);
    let mut b = Builder::new();
    let a = b.bind(Action::input_read(MemberRef::of(&env, 0)), |b, x| {
        b.bind(Action::input_read(MemberRef::of(&env, 1)), |b, y| hadd(b, &x, &y))
    });
    Program::new(env, a).expect("half adder typechecks")
}

/// `count`: returns the old register value and increments it when `tick`.
pub fn count(b: &mut Builder, reg: &MemberRef, width: u8, tick: &Var) -> Action {
    b.bind(Action::reg_read(reg.clone()), |b, x| {
        let incr = Action::reg_write(reg.clone(), Expr::var(&x).add(Expr::word(width, 1)));
        let body = b.when(Expr::var(tick), incr);
        b.seq(body, Action::ret(Expr::var(&x)))
    })
}

/// Counter of width `n` whose tick comes from an input.
pub fn counter_program(n: u8) -> Program {
    let env = MemEnv::new(vec![Mem::Reg(Ty::Int(n)), Mem::Input(Ty::Bool)]);
    let reg = MemberRef::of(&env, 0);
    let mut b = Builder::new();
    let a = b.bind(Action::input_read(MemberRef::of(&env, 1)), |b, tick| {
        count(b, &reg, n, &tick)
    });
    Program::new(env, a).expect("counter typechecks")
}

/// Two writes to one register in one step, the first one conditional on
/// an input. Only a correct first-write-wins merge compiles it faithfully.
pub fn double_write_program() -> Program {
    let env = MemEnv::new(vec![Mem::Reg(Ty::Int(4)), Mem::Input(Ty::Bool)]);
    let r = MemberRef::of(&env, 0);
    let mut b = Builder::new();
    let a = b.bind(Action::input_read(MemberRef::of(&env, 1)), |b, c| {
        let first = b.when(Expr::var(&c), Action::reg_write(r.clone(), Expr::word(4, 1)));
        b.seq(first, Action::reg_write(r, Expr::word(4, 2)))
    });
    Program::new(env, a).expect("double write typechecks")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Design {
    Hadd,
    Counter { n: u8 },
    Sorter { n: usize, width: u8 },
    StackMachine { n: u8 },
    DoubleWrite,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{design}: {message}")]
pub struct DesignError {
    pub design: &'static str,
    pub message: String,
}

pub const COUNTER_WIDTHS: std::ops::RangeInclusive<u8> = 1..=64;
pub const SORTER_DEPTHS: std::ops::RangeInclusive<usize> = 1..=5;
pub const SORTER_WIDTHS: std::ops::RangeInclusive<u8> = 1..=64;
pub const STACK_WIDTHS: std::ops::RangeInclusive<u8> = 2..=16;

impl Design {
    pub fn name(&self) -> &'static str {
        match self {
            Design::Hadd => "hadd",
            Design::Counter { .. } => "counter",
            Design::Sorter { .. } => "sorter",
            Design::StackMachine { .. } => "stackmachine",
            Design::DoubleWrite => "doublewrite",
        }
    }

    /// Checks the size parameters against the documented ranges.
    pub fn validate(&self) -> Result<(), DesignError> {
        let err = |message: String| {
            Err(DesignError {
                design: self.name(),
                message,
            })
        };
        match *self {
            Design::Counter { n } if !COUNTER_WIDTHS.contains(&n) => {
                err(format!("n must be in {COUNTER_WIDTHS:?}, got {n}"))
            }
            Design::Sorter { n, .. } if !SORTER_DEPTHS.contains(&n) => {
                err(format!("n must be in {SORTER_DEPTHS:?}, got {n}"))
            }
            Design::Sorter { width, .. } if !SORTER_WIDTHS.contains(&width) => {
                err(format!("width must be in {SORTER_WIDTHS:?}, got {width}"))
            }
            Design::StackMachine { n } if !STACK_WIDTHS.contains(&n) => {
                err(format!("n must be in {STACK_WIDTHS:?}, got {n}"))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Program, DesignError> {
        self.validate()?;
        Ok(match *self {
            Design::Hadd => hadd_program(),
            Design::Counter { n } => counter_program(n),
            Design::Sorter { n, width } => sorter::sorter_program(n, width),
            Design::StackMachine { n } => stack::stack_machine_program(n),
            Design::DoubleWrite => double_write_program(),
        })
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Design::Counter { n } => write!(f, "counter(n={n})"),
            Design::Sorter { n, width } => write!(f, "sorter(n={n}, width={width})"),
            Design::StackMachine { n } => write!(f, "stackmachine(n={n})"),
            other => f.write_str(other.name()),
        }
    }
}

/// The designs every pass is checked against.
pub fn corpus() -> Vec<Design> {
    let mut out = vec![Design::Hadd, Design::Counter { n: 4 }, Design::Counter { n: 8 }];
    for n in 1..=3 {
        for width in [4, 8] {
            out.push(Design::Sorter { n, width });
        }
    }
    out.push(Design::StackMachine { n: 8 });
    out
}
