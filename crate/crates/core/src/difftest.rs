//! Differential testing of the compiler against the source semantics.
//!
//! Each trial draws a state from its own ChaCha stream, so trial `k` of a
//! given seed is the same state no matter how trials are scheduled.

use std::fmt::{self, Write as _};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ir::eval_ir;
use crate::lang::Program;
use crate::pipeline::{compile, Compiled, PassOptions};
use crate::rtl::rtl_next;
use crate::sem::next;
use crate::types::{Cell, MemEnv, MemState, Value};

type Step = Option<(Value, MemState)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ir,
    Rtl,
    Cse,
    Bdd,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ir => "ir",
            Stage::Rtl => "rtl",
            Stage::Cse => "cse",
            Stage::Bdd => "bdd",
        })
    }
}

/// The state drawn for trial `trial` of `seed`.
pub fn trial_state(env: &MemEnv, seed: u64, trial: u64) -> MemState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    MemState::random(env, &mut rng)
}

/// Steps of every compiled stage that ran, in pipeline order.
pub fn stage_steps(c: &Compiled, s: &MemState) -> Vec<(Stage, Step)> {
    let mut out = vec![(Stage::Ir, eval_ir(s, &c.ir)), (Stage::Rtl, rtl_next(s, &c.rtl))];
    if let Some(b) = &c.cse {
        out.push((Stage::Cse, rtl_next(s, b)));
    }
    if let Some(b) = &c.bdd {
        out.push((Stage::Bdd, rtl_next(s, b)));
    }
    out
}

/// First stage whose step differs from the source semantics on `s`.
pub fn first_divergence(program: &Program, c: &Compiled, s: &MemState) -> Option<Stage> {
    let expected = next(s, program);
    stage_steps(c, s)
        .into_iter()
        .find(|(_, got)| *got != expected)
        .map(|(stage, _)| stage)
}

#[derive(Clone, Debug)]
pub struct Divergence {
    pub trial: u64,
    pub stage: Stage,
    pub original: MemState,
    pub minimized: MemState,
    pub expected: Step,
    pub actual: Step,
}

#[derive(Clone, Debug)]
pub struct DiffReport {
    pub seed: u64,
    pub trials: u64,
    pub stages: Vec<Stage>,
    pub divergence: Option<Divergence>,
    env: MemEnv,
}

impl DiffReport {
    pub fn passed(&self) -> bool {
        self.divergence.is_none()
    }
}

/// Runs `trials` random states through the source semantics and every
/// compiled stage, stopping at the lowest-numbered diverging trial.
pub fn difftest(program: &Program, opts: PassOptions, seed: u64, trials: u64) -> DiffReport {
    let compiled = compile(program, opts);
    let env = program.env();
    let failure = (0..trials)
        .into_par_iter()
        .find_first(|&k| first_divergence(program, &compiled, &trial_state(env, seed, k)).is_some());
    let divergence = failure.map(|trial| {
        let original = trial_state(env, seed, trial);
        let stage = first_divergence(program, &compiled, &original).expect("trial diverged");
        let minimized = minimize(&original, |s| {
            first_divergence(program, &compiled, s) == Some(stage)
        });
        let actual = stage_steps(&compiled, &minimized)
            .into_iter()
            .find(|(st, _)| *st == stage)
            .map(|(_, step)| step)
            .expect("stage ran");
        Divergence {
            trial,
            stage,
            expected: next(&minimized, program),
            actual,
            original,
            minimized,
        }
    });
    DiffReport {
        seed,
        trials,
        stages: stage_steps(&compiled, &MemState::zeroed(env))
            .into_iter()
            .map(|(s, _)| s)
            .collect(),
        divergence,
        env: env.clone(),
    }
}

/// Greedily zeroes locations of `s` while `still_fails` keeps holding.
pub fn minimize(s: &MemState, still_fails: impl Fn(&MemState) -> bool) -> MemState {
    let mut cur = s.clone();
    loop {
        let mut changed = false;
        for index in 0..cur.cells().len() {
            let addrs = match cur.cell(index) {
                Cell::Regfile(vs) => (0..vs.len()).map(Some).collect(),
                _ => vec![None],
            };
            for addr in addrs {
                let mut trial = cur.clone();
                match addr {
                    None => {
                        let v = cur.value(index);
                        if *v == v.ty().zero() {
                            continue;
                        }
                        trial.set_value(index, v.ty().zero());
                    }
                    Some(a) => {
                        let v = &cur.regfile(index)[a];
                        if *v == v.ty().zero() {
                            continue;
                        }
                        trial.set_regfile_entry(index, a, v.ty().zero());
                    }
                }
                if still_fails(&trial) {
                    cur = trial;
                    changed = true;
                }
            }
        }
        if !changed {
            return cur;
        }
    }
}

/// One line per element; register files list only non-zero entries.
pub fn format_state(env: &MemEnv, s: &MemState) -> String {
    let mut out = String::new();
    for (i, (cell, mem)) in s.cells().iter().zip(env.iter()).enumerate() {
        let _ = match cell {
            Cell::Input(v) | Cell::Reg(v) => writeln!(out, "  m{i} : {mem} = {v}"),
            Cell::Regfile(vs) => {
                let nonzero: Vec<String> = vs
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != v.ty().zero())
                    .map(|(a, v)| format!("{a}: {v}"))
                    .collect();
                writeln!(out, "  m{i} : {mem} = {{{}}}", nonzero.join(", "))
            }
        };
    }
    out
}

fn format_step(env: &MemEnv, step: &Step) -> String {
    match step {
        None => "  aborted\n".to_string(),
        Some((v, s)) => format!("  value {v}\n{}", format_state(env, s)),
    }
}

impl fmt::Display for DiffReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let stages: Vec<String> = self.stages.iter().map(Stage::to_string).collect();
        writeln!(
            f,
            "seed {}, {} trials, stages {}",
            self.seed,
            self.trials,
            stages.join(" ")
        )?;
        match &self.divergence {
            None => writeln!(f, "PASS"),
            Some(d) => {
                writeln!(f, "FAIL: trial {} diverges at stage {}", d.trial, d.stage)?;
                writeln!(f, "minimized state:")?;
                f.write_str(&format_state(&self.env, &d.minimized))?;
                writeln!(f, "source semantics:")?;
                f.write_str(&format_step(&self.env, &d.expected))?;
                writeln!(f, "{} stage:", d.stage)?;
                f.write_str(&format_step(&self.env, &d.actual))
            }
        }
    }
}
