//! Acceptance suite. Runs every criterion in order, prints one line per
//! criterion with its wall time and limit, and exits non-zero if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use fesic::bdd::{BddStore, NodeId};
use fesic::cse::{cse, has_unique_symvals};
use fesic::designs::sorter::{
    check_zero_one, leaves_of_value, min_max, sorter_program, sorter_state, spec_sort, Tree,
};
use fesic::designs::stack::{
    load, parse_program, random_program, stack_machine_program, states_related, vm_step, VmState,
    FIBONACCI,
};
use fesic::designs::{corpus, Design};
use fesic::difftest::{difftest, trial_state, Stage};
use fesic::ir::{compile_to_ir, eval_ir};
use fesic::verilog::{emit_verilog, lint};
use fesic::{
    compile, fesic, next, rtl_next, Action, Builder, Expr, Mem, MemEnv, MemState, MemberRef,
    PassOptions, Program, Ty, Value,
};

const SEED: u64 = 0x5eed;
const STATES: u64 = 1000;

type Outcome = Result<String, String>;

/// Name, time limit in seconds, check.
type Criterion = (&'static str, u64, fn() -> Outcome);

/// Name, action, expected value and register afterwards.
type Scenario = (&'static str, Action, Option<(Value, u64)>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1. Source semantics against the final compiled block.
fn end_to_end() -> Outcome {
    let designs = corpus();
    for d in &designs {
        let p = d.build().map_err(|e| e.to_string())?;
        let out = fesic(&p);
        let bad = (0..STATES).into_par_iter().find_first(|&k| {
            let s = trial_state(p.env(), SEED, k);
            next(&s, &p) != rtl_next(&s, &out)
        });
        if let Some(k) = bad {
            return Err(format!("{d}: trial {k} differs"));
        }
    }
    Ok(format!("{} designs x {STATES} states, bit-exact", designs.len()))
}

// 2. The same equality at every pass boundary.
fn per_pass() -> Outcome {
    let designs = corpus();
    for d in &designs {
        let p = d.build().map_err(|e| e.to_string())?;
        let r = difftest(&p, PassOptions::default(), SEED, STATES);
        ensure(r.stages == [Stage::Ir, Stage::Rtl, Stage::Cse, Stage::Bdd], || {
            format!("{d}: stages {:?}", r.stages)
        })?;
        ensure(r.passed(), || format!("{d}: {r}"))?;
    }
    Ok(format!("{} designs x {STATES} states at ir, rtl, cse, bdd", designs.len()))
}

// 3. The sorter: zero-one principle at n=4, random sequences checked
// against a library sort and the reference recursion.
fn sorter() -> Outcome {
    ensure(check_zero_one(4, 4), || "n=4: some 0/1 sequence unsorted".into())?;
    for n in 1..=4usize {
        for width in [4u8, 8] {
            let p = sorter_program(n, width);
            let rtl = fesic(&p);
            let len = 1usize << n;
            let bad = (0..1000u64).into_par_iter().find_first(|&k| {
                let mut rng = ChaCha8Rng::seed_from_u64(SEED);
                rng.set_stream(k);
                let input: Vec<u64> = (0..len).map(|_| rng.random_range(0..1 << width)).collect();
                let Some((out, _)) = rtl_next(&sorter_state(&p, n, width, &input), &rtl) else {
                    return true;
                };
                let got = leaves_of_value(&out);
                let mut expected = input.clone();
                expected.sort_unstable();
                let tree = Tree::from_leaves(n, input).unwrap();
                let reference: Vec<u64> =
                    spec_sort(&min_max, &tree).leaves().into_iter().copied().collect();
                got != expected || got != reference
            });
            if let Some(k) = bad {
                return Err(format!("n={n} width={width}: random sequence {k} wrong"));
            }
        }
    }
    Ok("65536 zero/one sequences at n=4; 8 x 1000 random sequences".into())
}

fn fib(k: u64) -> u64 {
    let (mut a, mut b) = (0u64, 1u64);
    for _ in 0..k {
        (a, b) = (b, a + b);
    }
    a
}

/// Steps the reference VM and the compiled circuit together while the VM
/// stays within the machine's bounds. Returns the final VM state.
fn lockstep(n: u8, block: &fesic::RtlBlock, mut s: VmState, max: usize) -> Result<VmState, String> {
    let mut m = load(n, &s.code).map_err(|e| e.to_string())?;
    ensure(states_related(n, &s, &m), || "initial states unrelated".into())?;
    for step in 0..max {
        let Some(s2) = vm_step(&s) else { break };
        if !s2.fits(n) {
            break;
        }
        let Some((_, m2)) = rtl_next(&m, block) else {
            return Err(format!("circuit stuck at step {step}, pc {}", s.pc));
        };
        ensure(states_related(n, &s2, &m2), || format!("states diverge at step {step}"))?;
        s = s2;
        m = m2;
    }
    Ok(s)
}

// 4. The stack machine against the reference VM.
fn stack_machine() -> Outcome {
    let n = 8;
    let block = fesic(&stack_machine_program(n));
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for i in 0..20 {
        let len = rng.random_range(1..=32);
        let code = random_program(&mut rng, len);
        lockstep(n, &block, VmState::new(code), 1000).map_err(|e| format!("program {i}: {e}"))?;
    }
    let code = parse_program(FIBONACCI).map_err(|e| e.to_string())?;
    let s = lockstep(n, &block, VmState::new(code), 1000)?;
    ensure(vm_step(&s).is_none(), || "fibonacci did not halt within 1000 steps".into())?;
    ensure(s.load(0) == fib(10), || format!("fibonacci stored {}", s.load(0)))?;
    Ok(format!("20 random programs related; fibonacci stores {}", fib(10)))
}

fn reg4() -> MemEnv {
    MemEnv::new(vec![Mem::Reg(Ty::Int(4))])
}

fn write(env: &MemEnv, v: u64) -> Action {
    Action::reg_write(MemberRef::of(env, 0), Expr::word(4, v))
}

// 5. The three write/abort scenarios, under the source semantics and every
// compiled stage.
fn micro_suite() -> Outcome {
    let env = reg4();
    let mut b = Builder::new();
    let double = b.seq(write(&env, 1), write(&env, 2));
    let abort = b.seq(Action::assert(Expr::bool(false)), Action::ret(Expr::word(4, 7)));
    let discarded = b.seq(write(&env, 1), abort).or_else(Action::ret(Expr::word(4, 0)));
    let held = b.seq(write(&env, 3), Action::assert(Expr::bool(false)));
    let cases: [Scenario; 3] = [
        ("double write", double, Some((Value::Unit, 1))),
        ("aborted left branch", discarded, Some((Value::word(4, 0), 5))),
        ("assert false", held, None),
    ];
    let mut start = MemState::zeroed(&env);
    start.set_value(0, Value::word(4, 5));
    for (name, action, expected) in cases {
        let p = Program::new(env.clone(), action).map_err(|e| format!("{name}: {e}"))?;
        let expected = expected.map(|(v, r)| {
            let mut s = start.clone();
            s.set_value(0, Value::word(4, r));
            (v, s)
        });
        let c = compile(&p, PassOptions::default());
        let ir = compile_to_ir(&p);
        let runs = [
            ("source", next(&start, &p)),
            ("ir", eval_ir(&start, &ir)),
            ("rtl", rtl_next(&start, &c.rtl)),
            ("final", rtl_next(&start, c.output())),
        ];
        for (who, got) in runs {
            ensure(got == expected, || format!("{name} under {who}: {got:?}"))?;
        }
    }
    Ok("3 scenarios under source, ir and rtl interpreters".into())
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

fn formula(rng: &mut ChaCha8Rng, vars: u32, depth: u32) -> F {
    if depth == 0 || rng.random_bool(0.2) {
        return if rng.random_bool(0.1) {
            F::Const(rng.random())
        } else {
            F::Var(rng.random_range(0..vars))
        };
    }
    let op = rng.random_range(0..5);
    let mut sub = || Box::new(formula(rng, vars, depth - 1));
    match op {
        0 => F::Not(sub()),
        1 => F::And(sub(), sub()),
        2 => F::Or(sub(), sub()),
        3 => F::Xor(sub(), sub()),
        _ => F::Ite(sub(), sub(), sub()),
    }
}

/// An equivalent formula of different shape: operands swapped, negations
/// pushed through De Morgan, xor and ite expanded.
fn rewrite(f: &F) -> F {
    let b = |f: &F| Box::new(rewrite(f));
    let not = |f: F| F::Not(Box::new(f));
    match f {
        F::Var(i) => F::Not(Box::new(F::Not(Box::new(F::Var(*i))))),
        F::Const(c) => F::Const(*c),
        F::Not(a) => match &**a {
            F::And(x, y) => F::Or(Box::new(not(rewrite(y))), Box::new(not(rewrite(x)))),
            F::Or(x, y) => F::And(Box::new(not(rewrite(y))), Box::new(not(rewrite(x)))),
            _ => F::Not(b(a)),
        },
        F::And(x, y) => F::And(b(y), b(x)),
        F::Or(x, y) => F::Or(b(y), b(x)),
        F::Xor(x, y) => F::Or(
            Box::new(F::And(b(x), Box::new(not(rewrite(y))))),
            Box::new(F::And(Box::new(not(rewrite(x))), b(y))),
        ),
        F::Ite(c, t, e) => F::Or(
            Box::new(F::And(b(c), b(t))),
            Box::new(F::And(Box::new(not(rewrite(c))), b(e))),
        ),
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

/// Builds `f`, checking the store's reduction invariants after each
/// operation. `checked` is the prefix of the store already verified.
fn build(s: &mut BddStore, checked: &mut usize, f: &F) -> Result<NodeId, String> {
    let n = match f {
        F::Var(i) => s.mk_var(*i),
        F::Const(b) => Ok(BddStore::constant(*b)),
        F::Not(a) => {
            let a = build(s, checked, a)?;
            s.not(a)
        }
        F::And(x, y) | F::Or(x, y) | F::Xor(x, y) => {
            let (a, b) = (build(s, checked, x)?, build(s, checked, y)?);
            match f {
                F::And(..) => s.and(a, b),
                F::Or(..) => s.or(a, b),
                _ => s.xor(a, b),
            }
        }
        F::Ite(c, t, e) => {
            let (c, t, e) = (build(s, checked, c)?, build(s, checked, t)?, build(s, checked, e)?);
            s.ite(c, t, e)
        }
    }
    .map_err(|e| e.to_string())?;
    s.check_invariants_from(*checked)?;
    *checked = s.len();
    Ok(n)
}

// 6. BDD canonicity: equal node iff equal truth table.
fn bdd_canonicity() -> Outcome {
    const PAIRS: u64 = 10_000;
    let counts = (0..PAIRS)
        .into_par_iter()
        .map(|k| -> Result<bool, String> {
            let mut rng = ChaCha8Rng::seed_from_u64(SEED);
            rng.set_stream(k);
            let vars = rng.random_range(1..=10);
            let f = formula(&mut rng, vars, 6);
            let g = if rng.random_bool(0.5) { rewrite(&f) } else { formula(&mut rng, vars, 6) };
            let mut s = BddStore::new();
            let mut checked = 0;
            let a = build(&mut s, &mut checked, &f)?;
            let b = build(&mut s, &mut checked, &g)?;
            s.check_invariants()?;
            let same = (0..1u32 << vars).all(|row| truth(&f, row) == truth(&g, row));
            for row in 0..1u32 << vars {
                ensure(s.eval(a, |i| row >> i & 1 == 1) == truth(&f, row), || {
                    format!("pair {k}: wrong function")
                })?;
            }
            ensure(same == (a == b), || format!("pair {k}: equivalent {same}, nodes {a:?} {b:?}"))?;
            Ok(same)
        })
        .collect::<Result<Vec<bool>, String>>()?;
    let equal = counts.iter().filter(|e| **e).count();
    Ok(format!("{PAIRS} pairs, {equal} equivalent, invariants after every operation"))
}

// 7. CSE on every corpus circuit.
fn cse_properties() -> Outcome {
    let designs = corpus();
    for d in &designs {
        let p = d.build().map_err(|e| e.to_string())?;
        let c = compile(&p, PassOptions::default());
        let once = c.cse.as_ref().ok_or("cse did not run")?;
        ensure(once.binding_count() <= c.rtl.binding_count(), || format!("{d}: bindings grew"))?;
        ensure(cse(once) == *once, || format!("{d}: not idempotent"))?;
        ensure(has_unique_symvals(once), || format!("{d}: duplicate symbolic values"))?;
        once.check(p.env()).map_err(|e| format!("{d}: {e}"))?;
    }
    Ok(format!("{} designs: shrinks, idempotent, unique values", designs.len()))
}

// 8. Golden Verilog and lints.
fn backend() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for (design, module) in [
        (Design::Counter { n: 4 }, "counter"),
        (Design::Sorter { n: 2, width: 4 }, "sorter"),
    ] {
        let p = design.build().map_err(|e| e.to_string())?;
        let text = emit_verilog(p.env(), &fesic(&p), module).map_err(|e| e.to_string())?;
        let golden = std::fs::read_to_string(dir.join(format!("{module}.v"))).map_err(|e| e.to_string())?;
        ensure(text == golden, || format!("{module}.v differs"))?;
    }
    let designs = corpus();
    let mut files = 0;
    for d in designs.iter().chain([&Design::DoubleWrite]) {
        let p = d.build().map_err(|e| e.to_string())?;
        let c = compile(&p, PassOptions::default());
        for b in [&c.rtl, c.output()] {
            let text = emit_verilog(p.env(), b, "top").map_err(|e| e.to_string())?;
            lint(&text).map_err(|e| format!("{d}: {e}"))?;
            files += 1;
        }
    }
    Ok(format!("2 golden files match; {files} emitted modules lint clean"))
}

fn main() {
    // Quiet the default hook; failures are reported in the summary line.
    panic::set_hook(Box::new(|_| {}));
    let criteria: [Criterion; 8] = [
        ("1 end-to-end correctness", 60, end_to_end),
        ("2 per-pass preservation", 120, per_pass),
        ("3 sorter", 300, sorter),
        ("4 stack machine", 60, stack_machine),
        ("5 write and abort scenarios", 5, micro_suite),
        ("6 bdd canonicity", 30, bdd_canonicity),
        ("7 cse properties", 30, cse_properties),
        ("8 backend determinism", 5, backend),
    ];
    let mut failed = 0;
    for (name, limit, run) in criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
        let took = start.elapsed();
        let result = result.and_then(|detail| {
            ensure(took <= Duration::from_secs(limit), || format!("over time limit: {detail}"))
                .map(|_| detail)
        });
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d.as_str()),
            Err(e) => {
                failed += 1;
                ("FAIL", e.as_str())
            }
        };
        println!("{tag} {name} ({:.2}s, limit {limit}s): {detail}", took.as_secs_f64());
    }
    println!("acceptance: {} of 8 criteria pass", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
