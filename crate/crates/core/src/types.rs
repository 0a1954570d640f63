//! Circuit types, memory-element declarations, runtime values, machine state
//! and pending updates.
//!
//! Everything here is a plain immutable value. The interpreters for every
//! compilation stage share these definitions, which is what makes their
//! results directly comparable.

use std::fmt;

use rand::Rng;
use thiserror::Error;

/// Widest supported machine word.
pub const MAX_WIDTH: u8 = 64;

/// Widest supported register-file address. A register file with address
/// width `n` is materialized as `2^n` values, so this bounds memory use.
pub const MAX_ADDR_WIDTH: u8 = 20;

/// Reified circuit type.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ty {
    Unit,
    Bool,
    /// Unsigned word of the given width in bits.
    Int(u8),
    Tuple(Vec<Ty>),
}

impl Ty {
    pub fn pair(a: Ty, b: Ty) -> Ty {
        Ty::Tuple(vec![a, b])
    }

    /// Every `Int` width, recursively, lies in `1..=MAX_WIDTH`.
    pub fn is_well_formed(&self) -> bool {
        match self {
            Ty::Unit | Ty::Bool => true,
            Ty::Int(w) => (1..=MAX_WIDTH).contains(w),
            Ty::Tuple(ts) => ts.iter().all(Ty::is_well_formed),
        }
    }

    /// The all-zero value of this type (`false` for booleans).
    pub fn zero(&self) -> Value {
        match self {
            Ty::Unit => Value::Unit,
            Ty::Bool => Value::Bool(false),
            Ty::Int(w) => Value::Word { width: *w, bits: 0 },
            Ty::Tuple(ts) => Value::Tuple(ts.iter().map(Ty::zero).collect()),
        }
    }

    /// Draws a value uniformly: words uniform in `[0, 2^w)`, fair booleans.
    pub fn random_value<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        match self {
            Ty::Unit => Value::Unit,
            Ty::Bool => Value::Bool(rng.random()),
            Ty::Int(w) => Value::word(*w, rng.random::<u64>()),
            Ty::Tuple(ts) => Value::Tuple(ts.iter().map(|t| t.random_value(rng)).collect()),
        }
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Unit => write!(f, "unit"),
            Ty::Bool => write!(f, "bool"),
            Ty::Int(w) => write!(f, "int{w}"),
            Ty::Tuple(ts) => {
                write!(f, "(")?;
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " * ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// A declared memory element.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Mem {
    /// Driven by the outside world, read-only for the circuit.
    Input(Ty),
    Reg(Ty),
    /// `2^addr_width` entries of `ty`.
    Regfile { addr_width: u8, ty: Ty },
}

impl Mem {
    /// Type of the value(s) held by this element.
    pub fn ty(&self) -> &Ty {
        match self {
            Mem::Input(t) | Mem::Reg(t) => t,
            Mem::Regfile { ty, .. } => ty,
        }
    }

    pub fn is_writable(&self) -> bool {
        !matches!(self, Mem::Input(_))
    }

    pub fn addr_width(&self) -> Option<u8> {
        match self {
            Mem::Regfile { addr_width, .. } => Some(*addr_width),
            _ => None,
        }
    }

    pub fn is_well_formed(&self) -> bool {
        match self {
            Mem::Input(t) | Mem::Reg(t) => t.is_well_formed(),
            Mem::Regfile { addr_width, ty } => {
                (1..=MAX_ADDR_WIDTH).contains(addr_width) && ty.is_well_formed()
            }
        }
    }
}

impl fmt::Display for Mem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mem::Input(t) => write!(f, "input {t}"),
            Mem::Reg(t) => write!(f, "reg {t}"),
            Mem::Regfile { addr_width, ty } => write!(f, "regfile[{addr_width}] {ty}"),
        }
    }
}

/// The ordered list of memory elements a circuit may touch. The position of
/// an element is its identity.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct MemEnv(Vec<Mem>);

impl MemEnv {
    pub fn new(mems: Vec<Mem>) -> Self {
        MemEnv(mems)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Mem> {
        self.0.get(index)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Mem> {
        self.0.iter()
    }

    /// Indices of the `Input` elements, in declaration order.
    pub fn inputs(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, m)| matches!(m, Mem::Input(_)))
            .map(|(i, _)| i)
    }
}

/// Runtime value.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Unit,
    Bool(bool),
    /// `bits < 2^width` always holds for values built through [`Value::word`].
    Word { width: u8, bits: u64 },
    Tuple(Vec<Value>),
}

/// All-ones mask of the given width.
pub fn mask(width: u8) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

impl Value {
    /// Builds a word, reducing `bits` modulo `2^width`.
    pub fn word(width: u8, bits: u64) -> Value {
        Value::Word {
            width,
            bits: bits & mask(width),
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_word(&self) -> Option<u64> {
        match self {
            Value::Word { bits, .. } => Some(*bits),
            _ => None,
        }
    }

    pub fn as_tuple(&self) -> Option<&[Value]> {
        match self {
            Value::Tuple(vs) => Some(vs),
            _ => None,
        }
    }

    /// Structural type of the value. Meaningful only for well-formed values.
    pub fn ty(&self) -> Ty {
        match self {
            Value::Unit => Ty::Unit,
            Value::Bool(_) => Ty::Bool,
            Value::Word { width, .. } => Ty::Int(*width),
            Value::Tuple(vs) => Ty::Tuple(vs.iter().map(Value::ty).collect()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => write!(f, "()"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Word { bits, .. } => write!(f, "{bits}"),
            Value::Tuple(vs) => {
                write!(f, "(")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// True iff `v` structurally inhabits `t`.
pub fn value_has_type(v: &Value, t: &Ty) -> bool {
    match (v, t) {
        (Value::Unit, Ty::Unit) | (Value::Bool(_), Ty::Bool) => true,
        (Value::Word { width, bits }, Ty::Int(w)) => width == w && *bits & !mask(*w) == 0,
        (Value::Tuple(vs), Ty::Tuple(ts)) => {
            vs.len() == ts.len() && vs.iter().zip(ts).all(|(v, t)| value_has_type(v, t))
        }
        _ => false,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("no memory element at index {0}")]
    NoSuchElement(usize),
    #[error("memory element {0} is an input and cannot be written")]
    InputWrite(usize),
    #[error("value {value} does not have type {expected} (element {index})")]
    TypeMismatch {
        index: usize,
        value: Value,
        expected: Ty,
    },
    #[error("address {addr} out of range for element {index}")]
    AddressOutOfRange { index: usize, addr: u64 },
    #[error("element {0}: address given for a register, or missing for a register file")]
    AddressShape(usize),
    #[error("state shape does not match the memory environment")]
    ShapeMismatch,
}

/// Contents of one memory element.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Cell {
    Input(Value),
    Reg(Value),
    Regfile(Vec<Value>),
}

/// Machine state: one cell per declared memory element.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MemState {
    cells: Vec<Cell>,
}

impl MemState {
    pub fn from_cells(cells: Vec<Cell>) -> Self {
        MemState { cells }
    }

    /// Every location holds the zero value of its type.
    pub fn zeroed(env: &MemEnv) -> Self {
        Self::from_fn(env, |t| t.zero())
    }

    /// Uniformly random contents, entry-wise for register files.
    pub fn random<R: Rng + ?Sized>(env: &MemEnv, rng: &mut R) -> Self {
        Self::from_fn(env, |t| t.random_value(rng))
    }

    fn from_fn(env: &MemEnv, mut f: impl FnMut(&Ty) -> Value) -> Self {
        let cells = env
            .iter()
            .map(|m| match m {
                Mem::Input(t) => Cell::Input(f(t)),
                Mem::Reg(t) => Cell::Reg(f(t)),
                Mem::Regfile { addr_width, ty } => {
                    Cell::Regfile((0..1usize << addr_width).map(|_| f(ty)).collect())
                }
            })
            .collect();
        MemState { cells }
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, index: usize) -> &Cell {
        &self.cells[index]
    }

    /// Value of an input or register.
    pub fn value(&self, index: usize) -> &Value {
        match &self.cells[index] {
            Cell::Input(v) | Cell::Reg(v) => v,
            Cell::Regfile(_) => panic!("element {index} is a register file"),
        }
    }

    pub fn regfile(&self, index: usize) -> &[Value] {
        match &self.cells[index] {
            Cell::Regfile(vs) => vs,
            _ => panic!("element {index} is not a register file"),
        }
    }

    /// Overwrites an input or register value without type checking.
    pub fn set_value(&mut self, index: usize, v: Value) {
        match &mut self.cells[index] {
            Cell::Input(slot) | Cell::Reg(slot) => *slot = v,
            Cell::Regfile(_) => panic!("element {index} is a register file"),
        }
    }

    pub fn set_regfile_entry(&mut self, index: usize, addr: usize, v: Value) {
        match &mut self.cells[index] {
            Cell::Regfile(vs) => vs[addr] = v,
            _ => panic!("element {index} is not a register file"),
        }
    }

    /// Shape and every stored value agree with `env`.
    pub fn conforms(&self, env: &MemEnv) -> bool {
        self.cells.len() == env.len()
            && self.cells.iter().zip(env.iter()).all(|(c, m)| match (c, m) {
                (Cell::Input(v), Mem::Input(t)) | (Cell::Reg(v), Mem::Reg(t)) => {
                    value_has_type(v, t)
                }
                (Cell::Regfile(vs), Mem::Regfile { addr_width, ty }) => {
                    vs.len() == 1usize << addr_width && vs.iter().all(|v| value_has_type(v, ty))
                }
                _ => false,
            })
    }

    /// Total number of scalar locations (inputs, registers, regfile entries).
    pub fn location_count(&self) -> usize {
        self.cells
            .iter()
            .map(|c| match c {
                Cell::Regfile(vs) => vs.len(),
                _ => 1,
            })
            .sum()
    }
}

/// One pending write.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Pending {
    /// Present exactly for register files.
    pub addr: Option<u64>,
    pub value: Value,
}

/// Pending updates of one step: at most one per writable element.
///
/// Register-file occupancy is per element, not per address: a register
/// file has a single write port.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Delta {
    slots: Vec<Option<Pending>>,
}

impl Delta {
    pub fn empty(env: &MemEnv) -> Self {
        Delta {
            slots: vec![None; env.len()],
        }
    }

    pub fn slot(&self, index: usize) -> Option<&Pending> {
        self.slots.get(index).and_then(Option::as_ref)
    }

    pub fn is_empty(&self) -> bool {
        self.slots.iter().all(Option::is_none)
    }

    /// Records a write unless the element already has one pending, in
    /// which case `self` is left unchanged (first write in program order
    /// wins). Returns whether the write was recorded.
    pub fn insert(
        &mut self,
        env: &MemEnv,
        index: usize,
        addr: Option<u64>,
        value: Value,
    ) -> Result<bool, StateError> {
        let mem = env.get(index).ok_or(StateError::NoSuchElement(index))?;
        match (mem, addr) {
            (Mem::Input(_), _) => return Err(StateError::InputWrite(index)),
            (Mem::Reg(_), None) => {}
            (Mem::Regfile { addr_width, .. }, Some(a)) => {
                if a >> addr_width != 0 {
                    return Err(StateError::AddressOutOfRange { index, addr: a });
                }
            }
            _ => return Err(StateError::AddressShape(index)),
        }
        if !value_has_type(&value, mem.ty()) {
            return Err(StateError::TypeMismatch {
                index,
                value,
                expected: mem.ty().clone(),
            });
        }
        if self.slots.len() != env.len() {
            return Err(StateError::ShapeMismatch);
        }
        let slot = &mut self.slots[index];
        if slot.is_some() {
            return Ok(false);
        }
        *slot = Some(Pending { addr, value });
        Ok(true)
    }
}

/// Applies every pending write of `delta` to a copy of `state`.
pub fn commit(state: &MemState, delta: &Delta) -> MemState {
    let mut next = state.clone();
    for (index, pending) in delta.slots.iter().enumerate() {
        let Some(p) = pending else { continue };
        match (&mut next.cells[index], p.addr) {
            (Cell::Reg(slot), None) => *slot = p.value.clone(),
            (Cell::Regfile(vs), Some(a)) => vs[a as usize] = p.value.clone(),
            _ => panic!("pending write does not match the shape of element {index}"),
        }
    }
    next
}
