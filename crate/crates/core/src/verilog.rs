//! Verilog-2001 emission for RTL blocks.
//!
//! Tuples are packed little-endian: element 0 occupies the least
//! significant bits, zero-width elements take no bits. Every binding becomes
//! a wire with one continuous assignment; every writable element becomes a
//! register (or memory array) updated by one clocked process, gated by
//! `valid && enable` and synchronously reset to zero.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::lang::VarId;
use crate::ops::BinOp;
use crate::rtl::{rtl_next, RtlBlock, RtlError, RtlExpr};
use crate::types::{Mem, MemEnv, MemState, Ty, Value};

/// Number of bits used to represent a value of type `t`.
pub fn flatten_width(t: &Ty) -> usize {
    match t {
        Ty::Unit => 0,
        Ty::Bool => 1,
        Ty::Int(n) => *n as usize,
        Ty::Tuple(ts) => ts.iter().map(flatten_width).sum(),
    }
}

/// Bits of `v`, least significant first.
pub fn pack_bits(v: &Value) -> Vec<bool> {
    let mut out = Vec::new();
    pack_into(v, &mut out);
    out
}

fn pack_into(v: &Value, out: &mut Vec<bool>) {
    match v {
        Value::Unit => {}
        Value::Bool(b) => out.push(*b),
        Value::Word { width, bits } => out.extend((0..*width).map(|i| bits >> i & 1 == 1)),
        Value::Tuple(vs) => vs.iter().for_each(|v| pack_into(v, out)),
    }
}

fn binary_literal(bits: &[bool]) -> String {
    let digits: String = bits
        .iter()
        .rev()
        .map(|b| if *b { '1' } else { '0' })
        .collect();
    format!("{}'b{}", bits.len(), digits)
}

fn literal(v: &Value) -> String {
    match v {
        Value::Bool(b) => format!("1'b{}", *b as u8),
        Value::Word { width, bits } => format!("{width}'d{bits}"),
        _ => binary_literal(&pack_bits(v)),
    }
}

fn range(width: usize) -> String {
    if width == 1 {
        String::new()
    } else {
        format!("[{}:0] ", width - 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum VerilogError {
    #[error("block is not structurally valid: {0}")]
    Structural(#[from] RtlError),
    #[error("`{0}` is not a valid module name")]
    ModuleName(String),
}

fn wire(v: VarId) -> String {
    format!("v{}", v.0)
}

struct Widths<'a> {
    env: &'a MemEnv,
    of: HashMap<VarId, &'a Ty>,
}

impl Widths<'_> {
    fn var(&self, v: VarId) -> usize {
        flatten_width(self.of[&v])
    }

    fn expr(&self, e: &RtlExpr) -> String {
        match e {
            RtlExpr::Var(y) => wire(*y),
            RtlExpr::Const(c) => literal(c),
            RtlExpr::Input(i) => format!("in{i}"),
            RtlExpr::Read(i) => format!("m{i}"),
            RtlExpr::ReadRf(i, a) => format!("m{i}[{}]", wire(*a)),
            RtlExpr::Not(a) => format!("~{}", wire(*a)),
            RtlExpr::Binop(op, a, b) => {
                let sym = match op {
                    BinOp::And => "&",
                    BinOp::Or => "|",
                    other => other.symbol(),
                };
                format!("{} {sym} {}", wire(*a), wire(*b))
            }
            RtlExpr::Mux(c, t, f) => format!("{} ? {} : {}", wire(*c), wire(*t), wire(*f)),
            RtlExpr::Tuple(vs) => {
                let parts: Vec<_> = vs
                    .iter()
                    .rev()
                    .filter(|v| self.var(**v) > 0)
                    .map(|v| wire(*v))
                    .collect();
                format!("{{{}}}", parts.join(", "))
            }
            RtlExpr::Proj(a, i) => {
                let Ty::Tuple(ts) = self.of[a] else {
                    unreachable!("projection from a non-tuple passed the checker")
                };
                let lo: usize = ts[..*i].iter().map(flatten_width).sum();
                let w = flatten_width(&ts[*i]);
                if w == 1 {
                    format!("{}[{lo}]", wire(*a))
                } else {
                    format!("{}[{}:{lo}]", wire(*a), lo + w - 1)
                }
            }
        }
    }
}

/// Emits a synthesizable module for `b`. Refuses blocks that fail
/// [`RtlBlock::check`].
pub fn emit_verilog(env: &MemEnv, b: &RtlBlock, module: &str) -> Result<String, VerilogError> {
    if !is_identifier(module) {
        return Err(VerilogError::ModuleName(module.to_string()));
    }
    b.check(env)?;
    let widths = Widths {
        env,
        of: b.bindings.iter().map(|x| (x.var, &x.ty)).collect(),
    };
    let out_width = widths.var(b.value);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "// Tuples are packed little-endian: element 0 occupies the least significant bits."
    );
    let mut ports = vec!["input wire clk".to_string(), "input wire rst".to_string()];
    for (i, mem) in env.iter().enumerate() {
        if let Mem::Input(t) = mem {
            let w = flatten_width(t);
            if w > 0 {
                ports.push(format!("input wire {}in{i}", range(w)));
            }
        }
    }
    ports.push("output wire valid".to_string());
    if out_width > 0 {
        ports.push(format!("output wire {}out", range(out_width)));
    }
    let _ = writeln!(s, "module {module} (");
    let _ = writeln!(s, "  {}", ports.join(",\n  "));
    let _ = writeln!(s, ");");

    for (i, mem) in widths.env.iter().enumerate() {
        match mem {
            Mem::Input(_) => {}
            Mem::Reg(t) => {
                let w = flatten_width(t);
                if w > 0 {
                    let _ = writeln!(s, "  reg {}m{i};", range(w));
                }
            }
            Mem::Regfile { addr_width, ty } => {
                let w = flatten_width(ty);
                if w > 0 {
                    let depth = 1u64 << addr_width;
                    let _ = writeln!(s, "  reg {}m{i} [0:{}];", range(w), depth - 1);
                }
            }
        }
    }
    for binding in &b.bindings {
        let w = flatten_width(&binding.ty);
        if w > 0 {
            let _ = writeln!(s, "  wire {}{};", range(w), wire(binding.var));
        }
    }
    for binding in &b.bindings {
        if flatten_width(&binding.ty) > 0 {
            let _ = writeln!(
                s,
                "  assign {} = {};",
                wire(binding.var),
                widths.expr(&binding.expr)
            );
        }
    }
    let _ = writeln!(s, "  assign valid = {};", wire(b.guard));
    if out_width > 0 {
        let _ = writeln!(s, "  assign out = {};", wire(b.value));
    }

    for (i, mem) in env.iter().enumerate() {
        let w = flatten_width(mem.ty());
        if !mem.is_writable() || w == 0 {
            continue;
        }
        let write = b.effects[i];
        match mem {
            Mem::Reg(_) => {
                let _ = writeln!(s, "  always @(posedge clk) begin");
                let _ = writeln!(s, "    if (rst) m{i} <= {w}'d0;");
                if let Some(wr) = write {
                    let _ = writeln!(
                        s,
                        "    else if (valid && {}) m{i} <= {};",
                        wire(wr.enable),
                        wire(wr.data)
                    );
                }
                let _ = writeln!(s, "  end");
            }
            Mem::Regfile { addr_width, .. } => {
                let depth = 1u64 << addr_width;
                let _ = writeln!(s, "  integer i{i};");
                let _ = writeln!(s, "  always @(posedge clk) begin");
                let _ = writeln!(s, "    if (rst) begin");
                let _ = writeln!(
                    s,
                    "      for (i{i} = 0; i{i} < {depth}; i{i} = i{i} + 1) m{i}[i{i}] <= {w}'d0;"
                );
                let _ = writeln!(s, "    end");
                if let Some(wr) = write {
                    let addr = wr.addr.expect("register-file write has an address");
                    let _ = writeln!(
                        s,
                        "    else if (valid && {}) m{i}[{}] <= {};",
                        wire(wr.enable),
                        wire(addr),
                        wire(wr.data)
                    );
                }
                let _ = writeln!(s, "  end");
            }
            Mem::Input(_) => unreachable!(),
        }
    }
    let _ = writeln!(s, "endmodule");
    Ok(s)
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

const KEYWORDS: &[&str] = &[
    "module",
    "endmodule",
    "input",
    "output",
    "wire",
    "reg",
    "assign",
    "always",
    "posedge",
    "begin",
    "end",
    "if",
    "else",
    "for",
    "integer",
    "initial",
];

/// Identifiers in a line, skipping sized literals such as `4'd3`.
fn identifiers(line: &str) -> Vec<&str> {
    let bytes = line.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'\'' {
                i += 2;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
            }
        } else if c.is_ascii_alphabetic() || c == b'_' || c == b'$' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$')
            {
                i += 1;
            }
            out.push(&line[start..i]);
        } else if c == b'"' {
            i += 1;
            while i < bytes.len() && bytes[i] != b'"' {
                i += 1;
            }
            i += 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Smoke-grammar check for emitted text: balanced `module`/`endmodule`,
/// every identifier declared before use, every wire assigned once and every
/// register assigned from a single process.
pub fn lint(text: &str) -> Result<(), String> {
    let mut depth = 0i32;
    let mut declared: HashSet<String> = HashSet::new();
    let mut assigned: HashSet<String> = HashSet::new();
    let mut reg_owner: HashMap<String, usize> = HashMap::new();
    let mut process = 0usize;
    let mut in_process = false;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split("//").next().unwrap_or("").trim();
        let lineno = n + 1;
        if line.is_empty() {
            continue;
        }
        let ids = identifiers(line);
        match ids.first().copied() {
            Some("module") => {
                depth += 1;
                if depth > 1 {
                    return Err(format!("line {lineno}: nested module"));
                }
                continue;
            }
            Some("endmodule") => {
                depth -= 1;
                if depth < 0 {
                    return Err(format!("line {lineno}: endmodule without module"));
                }
                declared.clear();
                assigned.clear();
                reg_owner.clear();
                continue;
            }
            _ => {}
        }
        if depth == 0 {
            return Err(format!("line {lineno}: text outside a module"));
        }
        let kind = ids.first().copied();
        match kind {
            Some("input" | "output" | "wire" | "reg" | "integer") => {
                let name = ids
                    .iter()
                    .copied()
                    .find(|id| !KEYWORDS.contains(id))
                    .ok_or_else(|| format!("line {lineno}: declaration without a name"))?;
                if !declared.insert(name.to_string()) {
                    return Err(format!("line {lineno}: `{name}` declared twice"));
                }
                continue;
            }
            Some("always") => {
                process += 1;
                in_process = true;
            }
            Some("assign") => {
                let target = ids[1];
                if !assigned.insert(target.to_string()) {
                    return Err(format!("line {lineno}: `{target}` assigned twice"));
                }
            }
            _ => {}
        }
        for id in &ids {
            if !KEYWORDS.contains(id) && !id.starts_with('$') && !declared.contains(*id) {
                return Err(format!("line {lineno}: `{id}` used before declaration"));
            }
        }
        if in_process {
            if let Some(pos) = line.find("<=") {
                let lhs = &line[..pos];
                // The target is the last identifier before `<=` that is not an index.
                let lhs = lhs.rsplit(')').next().unwrap_or(lhs);
                let target = lhs.split('[').next().unwrap_or(lhs);
                if let Some(reg) = identifiers(target).last() {
                    let owner = *reg_owner.entry(reg.to_string()).or_insert(process);
                    if owner != process {
                        return Err(format!("line {lineno}: `{reg}` driven by two processes"));
                    }
                }
            }
            if line == "end" {
                in_process = false;
            }
        }
    }
    if depth != 0 {
        return Err("unterminated module".to_string());
    }
    Ok(())
}

/// Emits a self-checking testbench that resets the module, drives
/// `inputs[k]` on cycle `k` and compares `valid` and `out` against the
/// reference simulation of `b` from the all-zero state.
pub fn emit_testbench(
    env: &MemEnv,
    b: &RtlBlock,
    module: &str,
    inputs: &[Vec<Value>],
) -> Result<String, VerilogError> {
    b.check(env)?;
    let input_elems: Vec<usize> = env.inputs().collect();
    let out_width = b
        .bindings
        .iter()
        .find(|x| x.var == b.value)
        .map_or(0, |x| flatten_width(&x.ty));
    let mut s = String::new();
    let _ = writeln!(s, "module {module}_tb;");
    let _ = writeln!(s, "  reg clk;");
    let _ = writeln!(s, "  reg rst;");
    let mut conns = vec![".clk(clk)".to_string(), ".rst(rst)".to_string()];
    for &i in &input_elems {
        let w = flatten_width(env.get(i).unwrap().ty());
        if w > 0 {
            let _ = writeln!(s, "  reg {}in{i};", range(w));
            conns.push(format!(".in{i}(in{i})"));
        }
    }
    let _ = writeln!(s, "  wire valid;");
    conns.push(".valid(valid)".to_string());
    if out_width > 0 {
        let _ = writeln!(s, "  wire {}out;", range(out_width));
        conns.push(".out(out)".to_string());
    }
    let _ = writeln!(s, "  integer errors;");
    let _ = writeln!(s, "  {module} dut ({});", conns.join(", "));
    let _ = writeln!(s, "  initial begin");
    let _ = writeln!(s, "    errors = 0;");
    let _ = writeln!(s, "    clk = 0;");
    let _ = writeln!(s, "    rst = 1;");
    let _ = writeln!(s, "    #1 clk = 1;");
    let _ = writeln!(s, "    #1 clk = 0;");
    let _ = writeln!(s, "    rst = 0;");
    let mut state = MemState::zeroed(env);
    for (k, row) in inputs.iter().enumerate() {
        for (&i, v) in input_elems.iter().zip(row) {
            state.set_value(i, v.clone());
            if !pack_bits(v).is_empty() {
                let _ = writeln!(s, "    in{i} = {};", binary_literal(&pack_bits(v)));
            }
        }
        let _ = writeln!(s, "    #1;");
        let step = rtl_next(&state, b);
        let _ = writeln!(
            s,
            "    if (valid !== 1'b{}) begin errors = errors + 1; $display(\"cycle {k}: valid mismatch\"); end",
            step.is_some() as u8
        );
        if let Some((value, next)) = step {
            if out_width > 0 {
                let _ = writeln!(
                    s,
                    "    if (out !== {}) begin errors = errors + 1; $display(\"cycle {k}: out mismatch\"); end",
                    binary_literal(&pack_bits(&value))
                );
            }
            state = next;
        }
        let _ = writeln!(s, "    clk = 1;");
        let _ = writeln!(s, "    #1 clk = 0;");
    }
    let _ = writeln!(
        s,
        "    if (errors == 0) $display(\"PASS\"); else $display(\"FAIL %0d\", errors);"
    );
    let _ = writeln!(s, "    $finish;");
    let _ = writeln!(s, "  end");
    let _ = writeln!(s, "endmodule");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::VarId;
    use crate::rtl::{RtlBinding, RtlWrite};

    #[test]
    fn widths() {
        assert_eq!(flatten_width(&Ty::Tuple(vec![Ty::Bool, Ty::Int(3)])), 4);
        assert_eq!(flatten_width(&Ty::Unit), 0);
        assert_eq!(flatten_width(&Ty::Int(8)), 8);
    }

    #[test]
    fn packing_is_little_endian() {
        let v = Value::Tuple(vec![Value::Bool(true), Value::Unit, Value::word(3, 0b100)]);
        assert_eq!(pack_bits(&v), vec![true, false, false, true]);
        assert_eq!(literal(&v), "4'b1001");
    }

    fn bind(var: u32, ty: Ty, expr: RtlExpr) -> RtlBinding {
        RtlBinding {
            var: VarId(var),
            ty,
            expr,
        }
    }

    fn one_reg() -> (MemEnv, RtlBlock) {
        let env = MemEnv::new(vec![Mem::Reg(Ty::Int(4))]);
        let b = RtlBlock {
            bindings: vec![
                bind(0, Ty::Int(4), RtlExpr::Read(0)),
                bind(1, Ty::Int(4), RtlExpr::Const(Value::word(4, 1))),
                bind(2, Ty::Int(4), RtlExpr::Binop(BinOp::Add, VarId(0), VarId(1))),
                bind(3, Ty::Bool, RtlExpr::Const(Value::Bool(true))),
                bind(4, Ty::Unit, RtlExpr::Const(Value::Unit)),
            ],
            guard: VarId(3),
            value: VarId(4),
            effects: vec![Some(RtlWrite {
                data: VarId(2),
                addr: None,
                enable: VarId(3),
            })],
        };
        (env, b)
    }

    #[test]
    fn single_register_module() {
        let (env, b) = one_reg();
        let text = emit_verilog(&env, &b, "count").unwrap();
        lint(&text).unwrap();
        assert_eq!(text.matches("always @(posedge clk)").count(), 1);
        assert_eq!(text.matches(" <= ").count() - text.matches("if (rst)").count(), 1);
        assert!(!text.contains("assign out") && !text.contains("wire out"));
        assert_eq!(text, emit_verilog(&env, &b, "count").unwrap());
    }

    #[test]
    fn refuses_invalid_blocks() {
        let (env, mut b) = one_reg();
        b.effects.push(None);
        assert!(matches!(
            emit_verilog(&env, &b, "x"),
            Err(VerilogError::Structural(_))
        ));
        let (env, b) = one_reg();
        assert!(emit_verilog(&env, &b, "2bad").is_err());
    }

    #[test]
    fn lint_rejects_malformed_text() {
        assert!(lint("module a ();\n  assign x = 1'b0;\nendmodule\n").is_err());
        assert!(lint("module a ();\n  wire x;\n  assign x = 1'b0;\n  assign x = 1'b1;\nendmodule\n").is_err());
        assert!(lint("module a ();\n  wire x;\n").is_err());
        let two_drivers = "module a (\n  input wire clk\n);\n  reg r;\n  always @(posedge clk) begin\n    r <= 1'b0;\n  end\n  always @(posedge clk) begin\n    r <= 1'b1;\n  end\nendmodule\n";
        assert!(lint(two_drivers).unwrap_err().contains("two processes"));
    }

    #[test]
    fn testbench_lints() {
        let (env, b) = one_reg();
        let design = emit_verilog(&env, &b, "count").unwrap();
        let tb = emit_testbench(&env, &b, "count", &[vec![], vec![]]).unwrap();
        lint(&design).unwrap();
        assert!(tb.contains("count dut"));
    }
}
