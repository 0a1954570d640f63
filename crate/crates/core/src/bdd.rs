//! Reduced ordered binary decision diagrams and the Boolean simplification
//! pass built on them.
//!
//! The store hash-conses nodes, so two node ids are equal exactly when they
//! denote the same function. [`bdd_pass`] tags each Boolean binding with a
//! node and drops bindings whose function was already computed.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::lang::VarId;
use crate::ops::BinOp;
use crate::rtl::{RtlBlock, RtlExpr, RtlWrite};
use crate::types::{Ty, Value};

pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub const FALSE: NodeId = NodeId(0);
    pub const TRUE: NodeId = NodeId(1);

    pub fn is_const(self) -> bool {
        self.0 < 2
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("BDD node budget of {0} nodes exhausted")]
pub struct Overflow(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Node {
    var: u32,
    low: NodeId,
    high: NodeId,
}

const LEAF_VAR: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct BddStore {
    nodes: Vec<Node>,
    unique: HashMap<(u32, NodeId, NodeId), NodeId>,
    ite_cache: HashMap<(NodeId, NodeId, NodeId), NodeId>,
    budget: usize,
}

impl Default for BddStore {
    fn default() -> Self {
        Self::with_budget(DEFAULT_NODE_BUDGET)
    }
}

impl BddStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// A store that refuses to grow past `budget` nodes (leaves included).
    pub fn with_budget(budget: usize) -> Self {
        let leaf = |_| Node {
            var: LEAF_VAR,
            low: NodeId::FALSE,
            high: NodeId::FALSE,
        };
        BddStore {
            nodes: (0..2).map(leaf).collect(),
            unique: HashMap::new(),
            ite_cache: HashMap::new(),
            budget: budget.max(2),
        }
    }

    /// Number of nodes, the two leaves included.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn var_of(&self, n: NodeId) -> u32 {
        self.nodes[n.index()].var
    }

    fn mk(&mut self, var: u32, low: NodeId, high: NodeId) -> Result<NodeId, Overflow> {
        if low == high {
            return Ok(low);
        }
        if let Some(&n) = self.unique.get(&(var, low, high)) {
            return Ok(n);
        }
        debug_assert!(var < self.var_of(low) && var < self.var_of(high));
        if self.nodes.len() >= self.budget {
            return Err(Overflow(self.budget));
        }
        let n = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { var, low, high });
        self.unique.insert((var, low, high), n);
        Ok(n)
    }

    pub fn mk_var(&mut self, var: u32) -> Result<NodeId, Overflow> {
        assert!(var != LEAF_VAR, "variable index reserved for leaves");
        self.mk(var, NodeId::FALSE, NodeId::TRUE)
    }

    pub fn constant(b: bool) -> NodeId {
        if b {
            NodeId::TRUE
        } else {
            NodeId::FALSE
        }
    }

    fn cofactors(&self, n: NodeId, var: u32) -> (NodeId, NodeId) {
        let node = self.nodes[n.index()];
        if node.var == var {
            (node.low, node.high)
        } else {
            (n, n)
        }
    }

    pub fn ite(&mut self, c: NodeId, t: NodeId, e: NodeId) -> Result<NodeId, Overflow> {
        if c == NodeId::TRUE || t == e {
            return Ok(t);
        }
        if c == NodeId::FALSE {
            return Ok(e);
        }
        if t == NodeId::TRUE && e == NodeId::FALSE {
            return Ok(c);
        }
        if let Some(&n) = self.ite_cache.get(&(c, t, e)) {
            return Ok(n);
        }
        let top = self.var_of(c).min(self.var_of(t)).min(self.var_of(e));
        let (c0, c1) = self.cofactors(c, top);
        let (t0, t1) = self.cofactors(t, top);
        let (e0, e1) = self.cofactors(e, top);
        let low = self.ite(c0, t0, e0)?;
        let high = self.ite(c1, t1, e1)?;
        let n = self.mk(top, low, high)?;
        self.ite_cache.insert((c, t, e), n);
        Ok(n)
    }

    pub fn not(&mut self, x: NodeId) -> Result<NodeId, Overflow> {
        self.ite(x, NodeId::FALSE, NodeId::TRUE)
    }

    pub fn and(&mut self, x: NodeId, y: NodeId) -> Result<NodeId, Overflow> {
        self.ite(x, y, NodeId::FALSE)
    }

    pub fn or(&mut self, x: NodeId, y: NodeId) -> Result<NodeId, Overflow> {
        self.ite(x, NodeId::TRUE, y)
    }

    pub fn xor(&mut self, x: NodeId, y: NodeId) -> Result<NodeId, Overflow> {
        let ny = self.not(y)?;
        self.ite(x, ny, y)
    }

    /// Evaluates `n` under an assignment of its variables.
    pub fn eval(&self, mut n: NodeId, assignment: impl Fn(u32) -> bool) -> bool {
        while !n.is_const() {
            let node = self.nodes[n.index()];
            n = if assignment(node.var) {
                node.high
            } else {
                node.low
            };
        }
        n == NodeId::TRUE
    }

    /// Full scan of the reduction invariants: no redundant tests, no
    /// duplicate triples, variables increasing toward the leaves.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.check_invariants_from(2)
    }

    /// Checks nodes `from..` only. Nodes never change once created, so after
    /// a successful check of the earlier prefix this covers the whole store.
    /// Duplicates are ruled out by each node owning its unique-table entry.
    pub fn check_invariants_from(&self, from: usize) -> Result<(), String> {
        if self.unique.len() != self.nodes.len() - 2 {
            return Err(format!(
                "unique table holds {} entries for {} nodes",
                self.unique.len(),
                self.nodes.len() - 2
            ));
        }
        for (i, node) in self.nodes.iter().enumerate().skip(from.max(2)) {
            if node.low == node.high {
                return Err(format!("n{i} has equal children"));
            }
            for child in [node.low, node.high] {
                if child.index() >= i {
                    return Err(format!("n{i} points forward to {child}"));
                }
                if node.var >= self.var_of(child) {
                    return Err(format!("n{i} is not ordered above {child}"));
                }
            }
            if self.unique.get(&(node.var, node.low, node.high)) != Some(&NodeId(i as u32)) {
                return Err(format!("n{i} is not the unique node for its triple"));
            }
        }
        Ok(())
    }
}

/// What the pass did, for reporting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BddStats {
    pub store_nodes: usize,
    pub eliminated: usize,
    pub overflows: usize,
}

pub fn bdd_pass(b: &RtlBlock) -> RtlBlock {
    bdd_pass_with(b, DEFAULT_NODE_BUDGET).0
}

pub fn bdd_pass_with(b: &RtlBlock, budget: usize) -> (RtlBlock, BddStats) {
    let mut store = BddStore::with_budget(budget);
    let mut next_bdd_var = 0u32;
    let mut node_of: HashMap<VarId, NodeId> = HashMap::new();
    let mut holder: HashMap<NodeId, VarId> = HashMap::new();
    let mut canon: HashMap<VarId, VarId> = HashMap::new();
    let mut stats = BddStats::default();
    let mut bindings = Vec::with_capacity(b.bindings.len());

    for binding in &b.bindings {
        let expr = binding
            .expr
            .map_vars(|v| canon.get(&v).copied().unwrap_or(v));
        if let RtlExpr::Var(y) = expr {
            canon.insert(binding.var, y);
            stats.eliminated += 1;
            continue;
        }
        if binding.ty != Ty::Bool {
            bindings.push(crate::rtl::RtlBinding { expr, ..binding.clone() });
            continue;
        }
        let known = |v: &VarId| node_of.get(v).copied();
        let structured = match &expr {
            RtlExpr::Const(Value::Bool(c)) => Some(Ok(BddStore::constant(*c))),
            RtlExpr::Not(a) => known(a).map(|a| store.not(a)),
            RtlExpr::Binop(op @ (BinOp::And | BinOp::Or | BinOp::Xor), x, y) => {
                match (known(x), known(y)) {
                    (Some(x), Some(y)) => Some(match op {
                        BinOp::And => store.and(x, y),
                        BinOp::Or => store.or(x, y),
                        _ => store.xor(x, y),
                    }),
                    _ => None,
                }
            }
            RtlExpr::Mux(c, t, e) => match (known(c), known(t), known(e)) {
                (Some(c), Some(t), Some(e)) => Some(store.ite(c, t, e)),
                _ => None,
            },
            _ => None,
        };
        let node = structured.unwrap_or_else(|| {
            let v = next_bdd_var;
            next_bdd_var += 1;
            store.mk_var(v)
        });
        match node {
            Err(_) => {
                stats.overflows += 1;
                bindings.push(crate::rtl::RtlBinding { expr, ..binding.clone() });
            }
            Ok(n) => {
                if let Some(&earlier) = holder.get(&n) {
                    canon.insert(binding.var, earlier);
                    stats.eliminated += 1;
                    continue;
                }
                let expr = if n.is_const() {
                    RtlExpr::Const(Value::Bool(n == NodeId::TRUE))
                } else {
                    expr
                };
                node_of.insert(binding.var, n);
                holder.insert(n, binding.var);
                bindings.push(crate::rtl::RtlBinding { expr, ..binding.clone() });
            }
        }
    }
    debug_assert_eq!(store.check_invariants(), Ok(()));
    stats.store_nodes = store.len();

    let route = |v: VarId| canon.get(&v).copied().unwrap_or(v);
    let out = RtlBlock {
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
    };
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rtl::{rtl_next, RtlBinding};
    use crate::types::{Mem, MemEnv, MemState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basic_identities() {
        let mut s = BddStore::new();
        let x = s.mk_var(0).unwrap();
        let y = s.mk_var(1).unwrap();
        let nx = s.not(x).unwrap();
        assert_eq!(s.and(x, nx), Ok(NodeId::FALSE));
        assert_eq!(s.or(x, NodeId::TRUE), Ok(NodeId::TRUE));
        let a = s.xor(x, y).unwrap();
        let b = s.xor(x, y).unwrap();
        assert_eq!(a, b);
        let c = s.xor(y, x).unwrap();
        assert_eq!(a, c);
        s.check_invariants().unwrap();
    }

    #[test]
    fn invariant_check_rejects_corruption() {
        let mut s = BddStore::new();
        let x = s.mk_var(0).unwrap();
        let y = s.mk_var(1).unwrap();
        s.and(x, y).unwrap();
        s.check_invariants().unwrap();

        let mut dup = s.clone();
        let copy = dup.nodes[x.index()];
        dup.nodes.push(copy);
        assert!(dup.check_invariants().is_err());

        let mut unordered = s.clone();
        let n = NodeId(unordered.nodes.len() as u32);
        let node = Node { var: 1, low: NodeId::FALSE, high: x };
        unordered.nodes.push(node);
        unordered.unique.insert((1, NodeId::FALSE, x), n);
        assert!(unordered.check_invariants_from(n.index()).is_err());
    }

    #[test]
    fn eval_follows_edges() {
        let mut s = BddStore::new();
        assert!(s.eval(NodeId::TRUE, |_| false));
        let v = s.mk_var(3).unwrap();
        assert!(!s.eval(v, |i| i != 3));
    }

    #[test]
    fn ite_matches_its_expansion() {
        let mut s = BddStore::new();
        let vars: Vec<_> = (0..3).map(|i| s.mk_var(i).unwrap()).collect();
        let (c, t, f) = (vars[0], vars[1], vars[2]);
        let n = s.ite(c, t, f).unwrap();
        for row in 0..8u32 {
            let bit = |i: u32| row >> i & 1 == 1;
            let expected = (bit(0) && bit(1)) || (!bit(0) && bit(2));
            assert_eq!(s.eval(n, bit), expected, "row {row}");
        }
    }

    #[test]
    fn budget_overflow_is_reported() {
        let mut s = BddStore::with_budget(4);
        let x = s.mk_var(0).unwrap();
        let y = s.mk_var(1).unwrap();
        assert_eq!(s.and(x, y), Err(Overflow(4)));
        s.check_invariants().unwrap();
    }

    #[derive(Clone, Debug)]
    enum F {
        Var(u32),
        Const(bool),
        Not(Box<F>),
        And(Box<F>, Box<F>),
        Or(Box<F>, Box<F>),
        Xor(Box<F>, Box<F>),
        Ite(Box<F>, Box<F>, Box<F>),
    }

    fn random_formula(rng: &mut ChaCha8Rng, vars: u32, depth: u32) -> F {
        if depth == 0 || rng.random_bool(0.2) {
            return if rng.random_bool(0.1) {
                F::Const(rng.random())
            } else {
                F::Var(rng.random_range(0..vars))
            };
        }
        let op = rng.random_range(0..5);
        let mut sub = || Box::new(random_formula(rng, vars, depth - 1));
        match op {
            0 => F::Not(sub()),
            1 => F::And(sub(), sub()),
            2 => F::Or(sub(), sub()),
            3 => F::Xor(sub(), sub()),
            _ => F::Ite(sub(), sub(), sub()),
        }
    }

    fn truth(f: &F, row: u32) -> bool {
        match f {
            F::Var(i) => row >> i & 1 == 1,
            F::Const(b) => *b,
            F::Not(a) => !truth(a, row),
            F::And(a, b) => truth(a, row) && truth(b, row),
            F::Or(a, b) => truth(a, row) || truth(b, row),
            F::Xor(a, b) => truth(a, row) ^ truth(b, row),
            F::Ite(c, t, e) => {
                if truth(c, row) {
                    truth(t, row)
                } else {
                    truth(e, row)
                }
            }
        }
    }

    fn build(s: &mut BddStore, f: &F) -> NodeId {
        match f {
            F::Var(i) => s.mk_var(*i).unwrap(),
            F::Const(b) => BddStore::constant(*b),
            F::Not(a) => {
                let a = build(s, a);
                s.not(a).unwrap()
            }
            F::And(a, b) | F::Or(a, b) | F::Xor(a, b) => {
                let (x, y) = (build(s, a), build(s, b));
                match f {
                    F::And(..) => s.and(x, y),
                    F::Or(..) => s.or(x, y),
                    _ => s.xor(x, y),
                }
                .unwrap()
            }
            F::Ite(c, t, e) => {
                let (c, t, e) = (build(s, c), build(s, t), build(s, e));
                s.ite(c, t, e).unwrap()
            }
        }
    }

    #[test]
    fn canonicity_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = BddStore::new();
        let mut equal_pairs = 0;
        for _ in 0..2000 {
            let vars = rng.random_range(1..=4);
            let f = random_formula(&mut rng, vars, 4);
            let g = random_formula(&mut rng, vars, 4);
            let same = (0..1u32 << vars).all(|r| truth(&f, r) == truth(&g, r));
            equal_pairs += same as usize;
            assert_eq!(build(&mut s, &f) == build(&mut s, &g), same);
        }
        assert!(equal_pairs > 0);
        s.check_invariants().unwrap();
    }

    fn bind(var: u32, expr: RtlExpr) -> RtlBinding {
        RtlBinding {
            var: VarId(var),
            ty: Ty::Bool,
            expr,
        }
    }

    fn single_reg_block(bindings: Vec<RtlBinding>, guard: u32, enable: u32) -> RtlBlock {
        RtlBlock {
            bindings,
            guard: VarId(guard),
            value: VarId(guard),
            effects: vec![
                Some(RtlWrite {
                    data: VarId(0),
                    addr: None,
                    enable: VarId(enable),
                }),
                None,
            ],
        }
    }

    fn env() -> MemEnv {
        MemEnv::new(vec![Mem::Reg(Ty::Bool), Mem::Input(Ty::Bool)])
    }

    #[test]
    fn equivalent_bindings_collapse() {
        let b = single_reg_block(
            vec![
                bind(0, RtlExpr::Input(1)),
                bind(1, RtlExpr::Const(Value::Bool(true))),
                bind(2, RtlExpr::Binop(BinOp::And, VarId(0), VarId(1))),
                bind(3, RtlExpr::Var(VarId(0))),
            ],
            2,
            3,
        );
        let out = bdd_pass(&b);
        out.check(&env()).unwrap();
        assert_eq!(out.bindings.len(), 2);
        assert_eq!(out.guard, VarId(0));
        assert_eq!(out.effects[0].unwrap().enable, VarId(0));
    }

    #[test]
    fn tautological_guard_becomes_true() {
        let b = single_reg_block(
            vec![
                bind(0, RtlExpr::Read(0)),
                bind(1, RtlExpr::Not(VarId(0))),
                bind(2, RtlExpr::Binop(BinOp::Or, VarId(0), VarId(1))),
            ],
            2,
            0,
        );
        let out = bdd_pass(&b);
        let g = out.bindings.iter().find(|x| x.var == out.guard).unwrap();
        assert_eq!(g.expr, RtlExpr::Const(Value::Bool(true)));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..64 {
            let s = MemState::random(&env(), &mut rng);
            assert_eq!(rtl_next(&s, &out), rtl_next(&s, &b));
        }
    }

    #[test]
    fn overflow_keeps_bindings_verbatim() {
        let b = single_reg_block(
            vec![
                bind(0, RtlExpr::Read(0)),
                bind(1, RtlExpr::Input(1)),
                bind(2, RtlExpr::Binop(BinOp::And, VarId(0), VarId(1))),
                bind(3, RtlExpr::Binop(BinOp::And, VarId(1), VarId(0))),
            ],
            2,
            3,
        );
        let (out, stats) = bdd_pass_with(&b, 3);
        assert!(stats.overflows > 0);
        out.check(&env()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..64 {
            let s = MemState::random(&env(), &mut rng);
            assert_eq!(rtl_next(&s, &out), rtl_next(&s, &b));
        }
        let (full, _) = bdd_pass_with(&b, DEFAULT_NODE_BUDGET);
        assert_eq!(full.bindings.len(), 3);
    }
}
