//! Parsing of trace files and `--watch` specifications.

use anyhow::{anyhow, bail, Context, Result};
use fesic::types::Cell;
use fesic::{Mem, MemEnv, MemState, Ty, Value};

/// Reads one value of type `t` from the front of `words`. Tuples take their
/// scalar components in order; booleans are `0` or `1`.
fn take_value<'a>(t: &Ty, words: &mut impl Iterator<Item = &'a str>) -> Result<Value> {
    match t {
        Ty::Unit => Ok(Value::Unit),
        Ty::Bool => match words.next() {
            Some("0") => Ok(Value::Bool(false)),
            Some("1") => Ok(Value::Bool(true)),
            Some(w) => bail!("`{w}` is not a boolean (expected 0 or 1)"),
            None => bail!("missing value"),
        },
        Ty::Int(width) => {
            let w = words.next().ok_or_else(|| anyhow!("missing value"))?;
            let bits: u64 = w.parse().with_context(|| format!("`{w}` is not a number"))?;
            if bits & !fesic::types::mask(*width) != 0 {
                bail!("{bits} does not fit in {width} bits");
            }
            Ok(Value::word(*width, bits))
        }
        Ty::Tuple(ts) => ts
            .iter()
            .map(|t| take_value(t, words))
            .collect::<Result<Vec<_>>>()
            .map(Value::Tuple),
    }
}

/// Parses a trace: one line per cycle holding the values of every input
/// element in declaration order. Returns one list per input element.
pub fn parse_trace(env: &MemEnv, text: &str, cycles: usize) -> Result<Vec<Vec<Value>>> {
    let input_tys: Vec<&Ty> = env
        .iter()
        .filter_map(|m| match m {
            Mem::Input(t) => Some(t),
            _ => None,
        })
        .collect();
    let mut traces = vec![Vec::new(); input_tys.len()];
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .take(cycles)
        .collect();
    if lines.len() < cycles {
        bail!("trace has {} cycles, {cycles} requested", lines.len());
    }
    for (lineno, line) in lines {
        let mut words = line.split_whitespace();
        for (trace, t) in traces.iter_mut().zip(&input_tys) {
            let v = take_value(t, &mut words).with_context(|| format!("trace line {lineno}"))?;
            trace.push(v);
        }
        if let Some(extra) = words.next() {
            bail!("trace line {lineno}: unexpected value `{extra}`");
        }
    }
    Ok(traces)
}

/// A watched location: element index plus, for register files, an address.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Watch {
    pub elem: usize,
    pub addr: Option<usize>,
}

impl Watch {
    pub fn parse(spec: &str, env: &MemEnv) -> Result<Watch> {
        let (elem, addr) = match spec.split_once(':') {
            Some((e, a)) => (e, Some(a)),
            None => (spec, None),
        };
        let elem: usize = elem
            .parse()
            .with_context(|| format!("watch `{spec}`: bad element index"))?;
        let mem = env
            .get(elem)
            .ok_or_else(|| anyhow!("watch `{spec}`: no element {elem}"))?;
        let addr = match (mem, addr) {
            (Mem::Regfile { addr_width, .. }, Some(a)) => {
                let a: usize = a
                    .parse()
                    .with_context(|| format!("watch `{spec}`: bad address"))?;
                if a >> addr_width != 0 {
                    bail!("watch `{spec}`: address out of range");
                }
                Some(a)
            }
            (Mem::Regfile { .. }, None) => bail!("watch `{spec}`: register file needs an address"),
            (_, Some(_)) => bail!("watch `{spec}`: element {elem} has no addresses"),
            (_, None) => None,
        };
        Ok(Watch { elem, addr })
    }

    pub fn label(&self) -> String {
        match self.addr {
            Some(a) => format!("m{}[{a}]", self.elem),
            None => format!("m{}", self.elem),
        }
    }

    pub fn read<'a>(&self, s: &'a MemState) -> &'a Value {
        match (s.cell(self.elem), self.addr) {
            (Cell::Regfile(vs), Some(a)) => &vs[a],
            (Cell::Input(v) | Cell::Reg(v), None) => v,
            _ => unreachable!("watch validated against the environment"),
        }
    }
}
