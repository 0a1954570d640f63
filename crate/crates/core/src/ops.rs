//! Primitive operators shared by every language level.

use std::fmt;

use crate::types::{Ty, Value};

/// Binary operators. Boolean connectives take `bool` operands; the word
/// operators take two `int n` operands of equal width. Arithmetic is modulo
/// `2^n` and comparisons are unsigned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    And,
    Or,
    Xor,
    Add,
    Sub,
    Eq,
    Le,
    Lt,
}

impl BinOp {
    pub const ALL: [BinOp; 8] = [
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::Add,
        BinOp::Sub,
        BinOp::Eq,
        BinOp::Le,
        BinOp::Lt,
    ];

    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            BinOp::And | BinOp::Or | BinOp::Xor | BinOp::Add | BinOp::Eq
        )
    }

    pub fn is_boolean(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or | BinOp::Xor)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::Xor => "^",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Eq => "==",
            BinOp::Le => "<=",
            BinOp::Lt => "<",
        }
    }

    /// Result type for operands of type `operand`, or `None` if the operator
    /// does not accept that operand type.
    pub fn result_ty(self, operand: &Ty) -> Option<Ty> {
        match (self, operand) {
            (BinOp::And | BinOp::Or | BinOp::Xor, Ty::Bool) => Some(Ty::Bool),
            (BinOp::Add | BinOp::Sub, Ty::Int(w)) => Some(Ty::Int(*w)),
            (BinOp::Eq | BinOp::Le | BinOp::Lt, Ty::Int(_)) => Some(Ty::Bool),
            _ => None,
        }
    }

    /// Applies the operator. Panics on operands the checker would reject.
    pub fn eval(self, a: &Value, b: &Value) -> Value {
        match (self, a, b) {
            (BinOp::And, Value::Bool(x), Value::Bool(y)) => Value::Bool(*x && *y),
            (BinOp::Or, Value::Bool(x), Value::Bool(y)) => Value::Bool(*x || *y),
            (BinOp::Xor, Value::Bool(x), Value::Bool(y)) => Value::Bool(*x ^ *y),
            (
                op,
                Value::Word { width, bits: x },
                Value::Word {
                    width: w2,
                    bits: y,
                },
            ) if width == w2 => match op {
                BinOp::Add => Value::word(*width, x.wrapping_add(*y)),
                BinOp::Sub => Value::word(*width, x.wrapping_sub(*y)),
                BinOp::Eq => Value::Bool(x == y),
                BinOp::Le => Value::Bool(x <= y),
                BinOp::Lt => Value::Bool(x < y),
                _ => panic!("ill-typed operands for {op:?}: {a:?}, {b:?}"),
            },
            _ => panic!("ill-typed operands for {self:?}: {a:?}, {b:?}"),
        }
    }
}

impl fmt::Display for BinOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

pub fn eval_not(v: &Value) -> Value {
    match v {
        Value::Bool(b) => Value::Bool(!b),
        _ => panic!("negation of non-boolean {v:?}"),
    }
}

pub fn eval_mux(c: &Value, t: &Value, f: &Value) -> Value {
    match c {
        Value::Bool(true) => t.clone(),
        Value::Bool(false) => f.clone(),
        _ => panic!("mux condition is not a boolean: {c:?}"),
    }
}

pub fn eval_proj(v: &Value, index: usize) -> Value {
    match v {
        Value::Tuple(vs) => vs[index].clone(),
        _ => panic!("projection out of non-tuple {v:?}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Brute-force table over all 4-bit operand pairs, computed with plain
    // integer arithmetic rather than the masking in `Value::word`.
    #[test]
    fn word_ops_match_integer_table() {
        for x in 0u64..16 {
            for y in 0u64..16 {
                let (a, b) = (Value::word(4, x), Value::word(4, y));
                assert_eq!(BinOp::Add.eval(&a, &b).as_word(), Some((x + y) % 16));
                assert_eq!(
                    BinOp::Sub.eval(&a, &b).as_word(),
                    Some((x + 16 - y) % 16)
                );
                assert_eq!(BinOp::Eq.eval(&a, &b), Value::Bool(x == y));
                assert_eq!(BinOp::Le.eval(&a, &b), Value::Bool(x <= y));
                assert_eq!(BinOp::Lt.eval(&a, &b), Value::Bool(x < y));
            }
        }
        assert_eq!(
            BinOp::Add.eval(&Value::word(4, 12), &Value::word(4, 7)),
            Value::word(4, 3)
        );
    }

    #[test]
    fn full_width_words_wrap() {
        let max = Value::word(64, u64::MAX);
        assert_eq!(
            BinOp::Add.eval(&max, &Value::word(64, 1)),
            Value::word(64, 0)
        );
    }

    #[test]
    fn result_types() {
        assert_eq!(BinOp::And.result_ty(&Ty::Bool), Some(Ty::Bool));
        assert_eq!(BinOp::Add.result_ty(&Ty::Bool), None);
        assert_eq!(BinOp::Lt.result_ty(&Ty::Int(8)), Some(Ty::Bool));
        assert_eq!(BinOp::Eq.result_ty(&Ty::Bool), None);
    }
}
