//! A compiler from guarded atomic actions to register-transfer-level code
//! and Verilog.
//!
//! Programs are built with [`lang::Builder`] over a declared memory
//! environment and checked into a [`lang::Program`]. The pipeline lowers them
//! through [`ir`], [`rtl`], [`cse`] and [`bdd`]; every stage has its own
//! interpreter so the next-state function can be compared stage by stage
//! against the reference semantics in [`sem`].

pub mod bdd;
pub mod cse;
pub mod designs;
pub mod difftest;
pub mod ir;
pub mod lang;
pub mod ops;
pub mod pipeline;
pub mod rtl;
pub mod sem;
pub mod types;
pub mod verilog;

pub use lang::{Action, Builder, Expr, MemberRef, Program, TypeError, Var, VarId};
pub use pipeline::{compile, fesic, Compiled, PassOptions};
pub use rtl::{rtl_next, RtlBlock};
pub use sem::next;
pub use types::{Mem, MemEnv, MemState, Ty, Value};
