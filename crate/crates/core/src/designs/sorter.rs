//! Bitonic sorter over complete binary trees of `2^n` leaves.
//!
//! The `spec_*` functions are the reference recursions on ordinary trees;
//! the circuit functions build actions with the same recursive shape.

use rayon::prelude::*;

use crate::lang::{Action, Builder, Expr, MemberRef, Program};
use crate::pipeline::fesic;
use crate::rtl::rtl_next;
use crate::types::{Mem, MemEnv, MemState, Ty, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tree<A> {
    Leaf(A),
    Node(Box<Tree<A>>, Box<Tree<A>>),
}

impl<A> Tree<A> {
    pub fn node(l: Tree<A>, r: Tree<A>) -> Tree<A> {
        Tree::Node(Box::new(l), Box::new(r))
    }

    /// Builds a tree of depth `n` from exactly `2^n` leaves.
    pub fn from_leaves(n: usize, leaves: Vec<A>) -> Option<Tree<A>> {
        if leaves.len() != 1 << n {
            return None;
        }
        let mut level: Vec<Tree<A>> = leaves.into_iter().map(Tree::Leaf).collect();
        while level.len() > 1 {
            let mut next = Vec::with_capacity(level.len() / 2);
            let mut it = level.into_iter();
            while let (Some(l), Some(r)) = (it.next(), it.next()) {
                next.push(Tree::node(l, r));
            }
            level = next;
        }
        level.pop()
    }

    pub fn depth(&self) -> usize {
        match self {
            Tree::Leaf(_) => 0,
            Tree::Node(l, _) => 1 + l.depth(),
        }
    }

    pub fn leaves(&self) -> Vec<&A> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a A>) {
        match self {
            Tree::Leaf(x) => out.push(x),
            Tree::Node(l, r) => {
                l.collect(out);
                r.collect(out);
            }
        }
    }

    pub fn leaf(&self) -> &A {
        match self {
            Tree::Leaf(x) => x,
            Tree::Node(..) => panic!("leaf of a node"),
        }
    }

    pub fn left(&self) -> &Tree<A> {
        match self {
            Tree::Node(l, _) => l,
            Tree::Leaf(_) => panic!("left of a leaf"),
        }
    }

    pub fn right(&self) -> &Tree<A> {
        match self {
            Tree::Node(_, r) => r,
            Tree::Leaf(_) => panic!("right of a leaf"),
        }
    }
}

pub fn spec_reverse<A: Clone>(t: &Tree<A>) -> Tree<A> {
    match t {
        Tree::Leaf(x) => Tree::Leaf(x.clone()),
        Tree::Node(l, r) => {
            let r = spec_reverse(r);
            let l = spec_reverse(l);
            Tree::node(r, l)
        }
    }
}

/// Pairwise compare-and-swap of two trees of equal depth.
pub fn spec_min_max_swap<A: Clone>(
    cmp: &impl Fn(&A, &A) -> (A, A),
    l: &Tree<A>,
    r: &Tree<A>,
) -> (Tree<A>, Tree<A>) {
    match (l, r) {
        (Tree::Leaf(x), Tree::Leaf(y)) => {
            let (x, y) = cmp(x, y);
            (Tree::Leaf(x), Tree::Leaf(y))
        }
        _ => {
            let (a, b) = spec_min_max_swap(cmp, l.left(), r.left());
            let (c, d) = spec_min_max_swap(cmp, l.right(), r.right());
            (Tree::node(a, c), Tree::node(b, d))
        }
    }
}

/// Sorts a bitonic tree.
pub fn spec_merge<A: Clone>(cmp: &impl Fn(&A, &A) -> (A, A), t: &Tree<A>) -> Tree<A> {
    match t {
        Tree::Leaf(x) => Tree::Leaf(x.clone()),
        Tree::Node(l, r) => {
            let (a, b) = spec_min_max_swap(cmp, l, r);
            Tree::node(spec_merge(cmp, &a), spec_merge(cmp, &b))
        }
    }
}

pub fn spec_sort<A: Clone>(cmp: &impl Fn(&A, &A) -> (A, A), t: &Tree<A>) -> Tree<A> {
    match t {
        Tree::Leaf(x) => Tree::Leaf(x.clone()),
        Tree::Node(l, r) => {
            let l = spec_sort(cmp, l);
            let r = spec_sort(cmp, r);
            spec_merge(cmp, &Tree::node(l, spec_reverse(&r)))
        }
    }
}

pub fn min_max<T: Ord + Clone>(a: &T, b: &T) -> (T, T) {
    if b < a {
        (b.clone(), a.clone())
    } else {
        (a.clone(), b.clone())
    }
}

/// Type of a depth-`n` tree flattened into nested pairs.
pub fn domain(n: usize, leaf: &Ty) -> Ty {
    (0..n).fold(leaf.clone(), |t, _| Ty::pair(t.clone(), t))
}

/// Views an expression of type `domain n` as a tree of projections.
pub fn tree_of(n: usize, e: Expr) -> Tree<Expr> {
    if n == 0 {
        Tree::Leaf(e)
    } else {
        Tree::node(tree_of(n - 1, e.clone().proj(0)), tree_of(n - 1, e.proj(1)))
    }
}

/// `do x <- first; k(tree of x)` for a `first` of type `domain n`.
pub fn bind_tree(
    b: &mut Builder,
    n: usize,
    first: Action,
    k: impl FnOnce(&mut Builder, Tree<Expr>) -> Action,
) -> Action {
    b.bind(first, |b, x| k(b, tree_of(n, Expr::var(&x))))
}

fn reverse(b: &mut Builder, t: &Tree<Expr>) -> Action {
    match t {
        Tree::Leaf(x) => Action::ret(x.clone()),
        Tree::Node(l, r) => {
            let rev_r = reverse(b, r);
            b.bind(rev_r, |b, r| {
                let rev_l = reverse(b, l);
                b.bind(rev_l, |_, l| {
                    Action::ret(Expr::tuple(vec![Expr::var(&r), Expr::var(&l)]))
                })
            })
        }
    }
}

/// `(min, max)` of two words.
pub fn cmp(b: &mut Builder, x: Expr, y: Expr) -> Action {
    b.bind(Action::ret(y.clone().lt(x.clone())), |_, c| {
        let c = Expr::var(&c);
        Action::ret(Expr::tuple(vec![
            Expr::mux(c.clone(), y.clone(), x.clone()),
            Expr::mux(c, x, y),
        ]))
    })
}

fn min_max_swap(b: &mut Builder, l: &Tree<Expr>, r: &Tree<Expr>) -> Action {
    match (l, r) {
        (Tree::Leaf(x), Tree::Leaf(y)) => cmp(b, x.clone(), y.clone()),
        _ => {
            let p = l.depth() - 1;
            let first = min_max_swap(b, l.left(), r.left());
            bind_tree(b, p + 1, first, |b, ab| {
                let second = min_max_swap(b, l.right(), r.right());
                bind_tree(b, p + 1, second, |_, cd| {
                    let (a, bb) = (ab.left(), ab.right());
                    let (c, d) = (cd.left(), cd.right());
                    Action::ret(Expr::tuple(vec![
                        Expr::tuple(vec![flatten(a), flatten(c)]),
                        Expr::tuple(vec![flatten(bb), flatten(d)]),
                    ]))
                })
            })
        }
    }
}

/// The nested-pair expression denoted by a tree of expressions.
fn flatten(t: &Tree<Expr>) -> Expr {
    match t {
        Tree::Leaf(x) => x.clone(),
        Tree::Node(l, r) => Expr::tuple(vec![flatten(l), flatten(r)]),
    }
}

fn merge(b: &mut Builder, t: &Tree<Expr>) -> Action {
    match t {
        Tree::Leaf(x) => Action::ret(x.clone()),
        Tree::Node(l, r) => {
            let n = t.depth();
            let swapped = min_max_swap(b, l, r);
            bind_tree(b, n, swapped, |b, ab| {
                let merge_a = merge(b, ab.left());
                b.bind(merge_a, |b, x| {
                    let merge_b = merge(b, ab.right());
                    b.bind(merge_b, |_, y| {
                        Action::ret(Expr::tuple(vec![Expr::var(&x), Expr::var(&y)]))
                    })
                })
            })
        }
    }
}

fn sort(b: &mut Builder, t: &Tree<Expr>) -> Action {
    match t {
        Tree::Leaf(x) => Action::ret(x.clone()),
        Tree::Node(l, r) => {
            let p = l.depth();
            let sort_l = sort(b, l);
            b.bind(sort_l, |b, sl| {
                let sort_r = sort(b, r);
                bind_tree(b, p, sort_r, |b, sr| {
                    let rev = reverse(b, &sr);
                    b.bind(rev, |b, rr| {
                        let t = Tree::node(tree_of(p, Expr::var(&sl)), tree_of(p, Expr::var(&rr)));
                        merge(b, &t)
                    })
                })
            })
        }
    }
}

/// Sorting circuit over an expression of type `domain n (int width)`.
pub fn sorter(b: &mut Builder, n: usize, input: Expr) -> Action {
    sort(b, &tree_of(n, input))
}

/// The sorter reading its `2^n` words from one input element.
pub fn sorter_program(n: usize, width: u8) -> Program {
    let env = MemEnv::new(vec![Mem::Input(domain(n, &Ty::Int(width)))]);
    let mut b = Builder::new();
    let a = b.bind(Action::input_read(MemberRef::of(&env, 0)), |b, x| {
        sorter(b, n, Expr::var(&x))
    });
    Program::new(env, a).expect("sorter typechecks")
}

/// Packs `2^n` words into a `domain n` value.
pub fn value_of_leaves(n: usize, width: u8, leaves: &[u64]) -> Value {
    let t = Tree::from_leaves(n, leaves.iter().map(|x| Value::word(width, *x)).collect())
        .expect("2^n leaves");
    tree_value(&t)
}

fn tree_value(t: &Tree<Value>) -> Value {
    match t {
        Tree::Leaf(v) => v.clone(),
        Tree::Node(l, r) => Value::Tuple(vec![tree_value(l), tree_value(r)]),
    }
}

/// Leaves of a nested-pair value, left to right.
pub fn leaves_of_value(v: &Value) -> Vec<u64> {
    match v {
        Value::Tuple(vs) => vs.iter().flat_map(leaves_of_value).collect(),
        other => vec![other.as_word().expect("leaf is a word")],
    }
}

/// Input state for one sorter run.
pub fn sorter_state(program: &Program, n: usize, width: u8, leaves: &[u64]) -> MemState {
    let mut s = MemState::zeroed(program.env());
    s.set_value(0, value_of_leaves(n, width, leaves));
    s
}

/// Runs the compiled sorter on every sequence of zeros and ones and
/// reports whether each output is sorted.
pub fn check_zero_one(n: usize, width: u8) -> bool {
    let program = sorter_program(n, width);
    let rtl = fesic(&program);
    let len = 1usize << n;
    (0u64..1 << len).into_par_iter().all(|mask| {
        let leaves: Vec<u64> = (0..len).map(|i| mask >> i & 1).collect();
        let s = sorter_state(&program, n, width, &leaves);
        match rtl_next(&s, &rtl) {
            Some((out, _)) => leaves_of_value(&out).windows(2).all(|w| w[0] <= w[1]),
            None => false,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sem::next;

    fn leaves(vs: &[u64]) -> Tree<u64> {
        let n = vs.len().trailing_zeros() as usize;
        Tree::from_leaves(n, vs.to_vec()).unwrap()
    }

    #[test]
    fn spec_reverse_swaps_everything() {
        let t = leaves(&[1, 2, 3, 4]);
        assert_eq!(spec_reverse(&t), leaves(&[4, 3, 2, 1]));
    }

    #[test]
    fn spec_base_case_is_cmp() {
        let (a, b) = spec_min_max_swap(&min_max, &Tree::Leaf(5), &Tree::Leaf(2));
        assert_eq!((a, b), (Tree::Leaf(2), Tree::Leaf(5)));
    }

    #[test]
    fn spec_sort_small() {
        let sorted = spec_sort(&min_max, &leaves(&[3, 1, 2, 0]));
        assert_eq!(sorted.leaves(), vec![&0, &1, &2, &3]);
    }

    fn run_circuit(n: usize, width: u8, input: &[u64]) -> Vec<u64> {
        let p = sorter_program(n, width);
        let (out, _) = next(&sorter_state(&p, n, width, input), &p).unwrap();
        leaves_of_value(&out)
    }

    #[test]
    fn circuit_sorts_small_cases() {
        assert_eq!(run_circuit(1, 4, &[5, 2]), vec![2, 5]);
        assert_eq!(run_circuit(2, 4, &[3, 1, 2, 0]), vec![0, 1, 2, 3]);
        assert_eq!(run_circuit(3, 8, &[0, 1, 2, 3, 4, 5, 6, 7]), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn result_type_is_domain() {
        let p = sorter_program(2, 4);
        assert_eq!(p.ty(), &domain(2, &Ty::Int(4)));
    }

    #[test]
    fn zero_one_small() {
        assert!(check_zero_one(1, 4));
        assert!(check_zero_one(2, 4));
    }
}
