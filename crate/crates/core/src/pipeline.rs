//! The full compiler: source → IR → RTL → CSE → BDD.

use crate::bdd::{bdd_pass_with, BddStats, DEFAULT_NODE_BUDGET};
use crate::cse::cse;
use crate::ir::{compile_to_ir, IrBlock};
use crate::lang::Program;
use crate::rtl::{compile_to_rtl_with, MergeMode, RtlBlock};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PassOptions {
    pub cse: bool,
    pub bdd: bool,
    pub bdd_budget: usize,
    #[doc(hidden)]
    pub merge: MergeMode,
}

impl Default for PassOptions {
    fn default() -> Self {
        PassOptions {
            cse: true,
            bdd: true,
            bdd_budget: DEFAULT_NODE_BUDGET,
            merge: MergeMode::FirstWins,
        }
    }
}

/// Every intermediate result of one compilation.
#[derive(Clone, Debug)]
pub struct Compiled {
    pub ir: IrBlock,
    pub rtl: RtlBlock,
    pub cse: Option<RtlBlock>,
    pub bdd: Option<RtlBlock>,
    pub bdd_stats: Option<BddStats>,
}

/// Binding counts after each stage; `None` for disabled passes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageStats {
    pub ir: usize,
    pub rtl: usize,
    pub cse: Option<usize>,
    pub bdd: Option<usize>,
    pub bdd_nodes: Option<usize>,
}

impl Compiled {
    /// The last stage that ran.
    pub fn output(&self) -> &RtlBlock {
        self.bdd
            .as_ref()
            .or(self.cse.as_ref())
            .unwrap_or(&self.rtl)
    }

    pub fn stats(&self) -> StageStats {
        StageStats {
            ir: self.ir.bindings.len(),
            rtl: self.rtl.binding_count(),
            cse: self.cse.as_ref().map(RtlBlock::binding_count),
            bdd: self.bdd.as_ref().map(RtlBlock::binding_count),
            bdd_nodes: self.bdd_stats.map(|s| s.store_nodes),
        }
    }
}

pub fn compile(program: &Program, opts: PassOptions) -> Compiled {
    let ir = compile_to_ir(program);
    let rtl = compile_to_rtl_with(program.env(), &ir, opts.merge);
    let cse = opts.cse.then(|| cse(&rtl));
    let (bdd, bdd_stats) = if opts.bdd {
        let input = cse.as_ref().unwrap_or(&rtl);
        let (b, s) = bdd_pass_with(input, opts.bdd_budget);
        (Some(b), Some(s))
    } else {
        (None, None)
    };
    Compiled {
        ir,
        rtl,
        cse,
        bdd,
        bdd_stats,
    }
}

/// Compiles with every pass enabled and returns the final block.
pub fn fesic(program: &Program) -> RtlBlock {
    let mut c = compile(program, PassOptions::default());
    c.bdd.take().expect("bdd pass enabled")
}
