//! Common-subexpression elimination by value numbering.
//!
//! Bindings are visited in order with their operands already rewritten to
//! canonical variables, so an expression over canonical operands stands
//! for its whole symbolic value. Reads are included: every read in a cycle
//! sees the state before any write, so two reads of the same location agree.

use std::collections::HashMap;

use crate::lang::VarId;
use crate::rtl::{RtlBlock, RtlExpr, RtlWrite};

/// Symbolic value of a binding: its expression over canonical operands,
/// with commutative operands sorted.
pub type SymVal = RtlExpr;

fn normalize(e: RtlExpr) -> SymVal {
    match e {
        RtlExpr::Binop(op, a, b) if op.is_commutative() && b < a => RtlExpr::Binop(op, b, a),
        other => other,
    }
}

pub fn cse(b: &RtlBlock) -> RtlBlock {
    let mut canon: HashMap<VarId, VarId> = HashMap::new();
    let mut seen: HashMap<SymVal, VarId> = HashMap::new();
    let mut bindings = Vec::with_capacity(b.bindings.len());
    for binding in &b.bindings {
        let expr = normalize(binding.expr.map_vars(|v| canon.get(&v).copied().unwrap_or(v)));
        if let RtlExpr::Var(y) = expr {
            canon.insert(binding.var, y);
            continue;
        }
        if let Some(&earlier) = seen.get(&expr) {
            canon.insert(binding.var, earlier);
            continue;
        }
        seen.insert(expr.clone(), binding.var);
        let mut kept = binding.clone();
        kept.expr = expr;
        bindings.push(kept);
    }
    let route = |v: VarId| canon.get(&v).copied().unwrap_or(v);
    RtlBlock {
        bindings,
        guard: route(b.guard),
        value: route(b.value),
        effects: b
            .effects
            .iter()
            .map(|w| {
                w.map(|w| RtlWrite {
                    data: route(w.data),
                    addr: w.addr.map(route),
                    enable: route(w.enable),
                })
            })
            .collect(),
    }
}

/// True if no two bindings of `b` carry the same symbolic value.
pub fn has_unique_symvals(b: &RtlBlock) -> bool {
    let mut seen = std::collections::HashSet::new();
    b.bindings
        .iter()
        .all(|x| seen.insert(normalize(x.expr.clone())))
}
