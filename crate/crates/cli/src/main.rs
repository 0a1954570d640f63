//! Command-line driver: compile, simulate, difftest and stats over the
//! built-in designs.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fesic::designs::stack::{self, FIBONACCI};
use fesic::designs::Design;
use fesic::difftest::difftest;
use fesic::ir::dump_ir;
use fesic::lang::pretty_action;
use fesic::rtl::{dump_rtl, MergeMode};
use fesic::sem::{simulate_with, Cycle};
use fesic::verilog::{emit_testbench, emit_verilog, lint};
use fesic::{compile, next, rtl_next, Compiled, MemState, PassOptions, Program};

mod input;

use input::{parse_trace, Watch};

#[derive(Parser)]
#[command(name = "fesic", version, about = "Compile guarded atomic actions to Verilog")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a design to Verilog, or dump one of its stages.
    Compile(CompileArgs),
    /// Run a design cycle by cycle.
    Simulate(SimulateArgs),
    /// Compare every compiled stage with the source semantics on random states.
    Difftest(DifftestArgs),
    /// Binding counts after each stage.
    Stats(DesignArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Example {
    Sorter,
    Stackmachine,
    Counter,
    Hadd,
    Doublewrite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DumpStage {
    Source,
    Ir,
    Rtl,
    Cse,
    Bdd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Fault {
    MergeLastWins,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long, value_enum)]
    example: Example,
    /// Size: counter and stack machine word width, sorter depth (2^n inputs).
    #[arg(long)]
    n: Option<u32>,
    /// Sorter word width.
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    no_cse: bool,
    #[arg(long)]
    no_bdd: bool,
    #[arg(long, value_enum, hide = true)]
    fault: Option<Fault>,
}

#[derive(Args)]
struct CompileArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Write the Verilog here instead of standard output.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Print this stage on standard output.
    #[arg(long, value_enum)]
    dump: Option<DumpStage>,
    /// Verilog module name.
    #[arg(long, default_value = "top")]
    module: String,
    /// Also write a self-checking testbench driven by `--trace`.
    #[arg(long, requires = "trace")]
    testbench: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    cycles: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// One line per cycle with every input's value, in declaration order.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    cycles: usize,
    /// Assembly program for the stack machine (default: Fibonacci).
    #[arg(long)]
    program: Option<PathBuf>,
    /// Location to print each cycle: `elem` or `elem:addr`.
    #[arg(long)]
    watch: Vec<String>,
    /// Run the reference semantics instead of the compiled block.
    #[arg(long)]
    source: bool,
}

#[derive(Args)]
struct DifftestArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
}

fn narrow<T: TryFrom<u32>>(v: u32, what: &str) -> Result<T> {
    T::try_from(v).map_err(|_| anyhow::anyhow!("{what} {v} is out of range"))
}

impl DesignArgs {
    fn design(&self) -> Result<Design> {
        let d = match self.example {
            Example::Hadd => Design::Hadd,
            Example::Doublewrite => Design::DoubleWrite,
            Example::Counter => Design::Counter {
                n: narrow(self.n.unwrap_or(4), "n")?,
            },
            Example::Stackmachine => Design::StackMachine {
                n: narrow(self.n.unwrap_or(8), "n")?,
            },
            Example::Sorter => Design::Sorter {
                n: narrow(self.n.unwrap_or(2), "n")?,
                width: narrow(self.width.unwrap_or(8), "width")?,
            },
        };
        d.validate()?;
        Ok(d)
    }

    fn options(&self) -> PassOptions {
        PassOptions {
            cse: !self.no_cse,
            bdd: !self.no_bdd,
            merge: match self.fault {
                Some(Fault::MergeLastWins) => MergeMode::LastWins,
                None => MergeMode::FirstWins,
            },
            ..PassOptions::default()
        }
    }

    fn build(&self) -> Result<(Design, Program)> {
        let d = self.design()?;
        let p = d.build()?;
        Ok((d, p))
    }
}

fn read(path: &PathBuf) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &PathBuf, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Input traces for `cycles` cycles; designs without inputs need no file.
fn traces(p: &Program, trace: Option<&PathBuf>, cycles: usize) -> Result<Vec<Vec<fesic::Value>>> {
    let has_inputs = p.env().inputs().next().is_some();
    match trace {
        Some(path) => parse_trace(p.env(), &read(path)?, cycles),
        None if !has_inputs || cycles == 0 => Ok(vec![Vec::new(); p.env().inputs().count()]),
        None => bail!("this design reads inputs; pass --trace"),
    }
}

fn cmd_compile(args: &CompileArgs) -> Result<ExitCode> {
    let (_, p) = args.design.build()?;
    let c = compile(&p, args.design.options());
    if let Some(stage) = args.dump {
        let text = match stage {
            DumpStage::Source => pretty_action(p.action()) + "\n",
            DumpStage::Ir => dump_ir(&c.ir),
            DumpStage::Rtl => dump_rtl(&c.rtl),
            DumpStage::Cse => match &c.cse {
                Some(b) => dump_rtl(b),
                None => bail!("--dump cse with --no-cse"),
            },
            DumpStage::Bdd => match &c.bdd {
                Some(b) => dump_rtl(b),
                None => bail!("--dump bdd with --no-bdd"),
            },
        };
        print!("{text}");
    }
    let verilog = emit_verilog(p.env(), c.output(), &args.module)?;
    if let Err(e) = lint(&verilog) {
        bail!("emitted Verilog fails its lint: {e}");
    }
    match &args.output {
        Some(path) => write(path, &verilog)?,
        None if args.dump.is_none() => print!("{verilog}"),
        None => {}
    }
    if let Some(tb) = &args.testbench {
        let traces = traces(&p, args.trace.as_ref(), args.cycles)?;
        let rows: Vec<Vec<fesic::Value>> = (0..args.cycles)
            .map(|k| traces.iter().map(|t| t[k].clone()).collect())
            .collect();
        write(tb, &emit_testbench(p.env(), c.output(), &args.module, &rows)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<ExitCode> {
    let (design, p) = args.design.build()?;
    let watches = args
        .watch
        .iter()
        .map(|w| Watch::parse(w, p.env()))
        .collect::<Result<Vec<_>>>()?;
    let initial = match design {
        Design::StackMachine { n } => {
            let text = match &args.program {
                Some(path) => read(path)?,
                None => FIBONACCI.to_string(),
            };
            stack::load(n, &stack::parse_program(&text)?)?
        }
        _ if args.program.is_some() => bail!("--program only applies to the stack machine"),
        _ => MemState::zeroed(p.env()),
    };
    let traces = traces(&p, args.trace.as_ref(), args.cycles)?;
    let c: Compiled = compile(&p, args.design.options());
    let block = c.output();
    let cycles: Vec<Cycle> = if args.source {
        simulate_with(p.env(), &initial, &traces, args.cycles, |s| next(s, &p))?
    } else {
        simulate_with(p.env(), &initial, &traces, args.cycles, |s| rtl_next(s, block))?
    };
    for (k, cycle) in cycles.iter().enumerate() {
        let mut line = match &cycle.output {
            Some(v) => format!("cycle {k}: valid=1 out={v}"),
            None => format!("cycle {k}: valid=0 out=-"),
        };
        for w in &watches {
            line.push_str(&format!(" {}={}", w.label(), w.read(&cycle.state)));
        }
        println!("{line}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_difftest(args: &DifftestArgs) -> Result<ExitCode> {
    let (design, p) = args.design.build()?;
    let report = difftest(&p, args.design.options(), args.seed, args.trials);
    print!("difftest {design}: {report}");
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_stats(args: &DesignArgs) -> Result<ExitCode> {
    let (design, p) = args.build()?;
    let s = compile(&p, args.options()).stats();
    let opt = |v: Option<usize>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
    println!("design {design}");
    println!("stage  bindings");
    println!("ir     {}", s.ir);
    println!("rtl    {}", s.rtl);
    println!("cse    {}", opt(s.cse));
    println!("bdd    {}", opt(s.bdd));
    println!("bdd store nodes: {}", opt(s.bdd_nodes));
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Compile(a) => cmd_compile(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Difftest(a) => cmd_difftest(a),
        Command::Stats(a) => cmd_stats(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
