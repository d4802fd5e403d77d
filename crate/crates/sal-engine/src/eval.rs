//! Expression evaluation against a row and the feature map.

use std::cmp::Ordering;

use sal_ast::{BinaryOp, TypedExpr, KEY_SEPARATOR};

use crate::error::EvalError;
use crate::feature_map::{Feature, FeatureMap};
use crate::tuple::{Row, Value};

/// Result of evaluating an expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar<'a> {
    Num(f64),
    Bool(bool),
    Str(&'a str),
}

impl Scalar<'_> {
    pub fn as_bool(self) -> Option<bool> {
        match self {
            Scalar::Bool(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_num(self) -> Option<f64> {
        match self {
            Scalar::Num(v) => Some(v),
            _ => None,
        }
    }

    pub fn to_value(self) -> Value {
        match self {
            Scalar::Num(v) => Value::Float(v),
            Scalar::Bool(b) => Value::Int(b as i64),
            Scalar::Str(s) => Value::Str(s.to_string()),
        }
    }
}

/// Build the key string of `row` from `columns` into `out`.
pub fn build_key(row: &Row, columns: &[usize], out: &mut String) {
    out.clear();
    for (i, &c) in columns.iter().enumerate() {
        if i > 0 {
            out.push(KEY_SEPARATOR);
        }
        row[c].write_to(out);
    }
}

pub fn key_of(row: &Row, columns: &[usize]) -> String {
    let mut k = String::new();
    build_key(row, columns, &mut k);
    k
}

/// Evaluates `expr` for `row`. Feature references read the slot of the
/// key formed from the row's key columns; `prev(column, back)` supplies
/// history values for TRANSFORM.
pub fn evaluate_expression<'a>(
    expr: &'a TypedExpr,
    row: &'a Row,
    features: &FeatureMap,
    prev: &dyn Fn(usize, usize) -> Option<f64>,
) -> Result<Scalar<'a>, EvalError> {
    Ok(match expr {
        TypedExpr::Num(v) => Scalar::Num(*v),
        TypedExpr::Str(s) => Scalar::Str(s),
        TypedExpr::Column { index, .. } => match &row[*index] {
            Value::Str(s) => Scalar::Str(s),
            v => Scalar::Num(v.as_f64().expect("numeric column")),
        },
        TypedExpr::Prev { column, back } => {
            Scalar::Num(prev(*column, *back).ok_or(EvalError::NotReady)?)
        }
        TypedExpr::Feature { id, key_columns } => {
            let key = key_of(row, key_columns);
            Scalar::Num(
                features
                    .read(&key, *id, |f| f.and_then(Feature::as_scalar))
                    .ok_or(EvalError::NotReady)?,
            )
        }
        TypedExpr::TopKValue {
            id,
            index,
            key_columns,
        } => {
            let key = key_of(row, key_columns);
            Scalar::Num(
                features
                    .read(&key, *id, |f| match f {
                        Some(Feature::TopK(items)) => {
                            Some(items.get(*index).map_or(0.0, |(_, v)| *v))
                        }
                        _ => None,
                    })
                    .ok_or(EvalError::NotReady)?,
            )
        }
        TypedExpr::Neg(inner) => match evaluate_expression(inner, row, features, prev)? {
            Scalar::Num(v) => Scalar::Num(-v),
            _ => return Err(EvalError::TypeMismatch),
        },
        TypedExpr::Binary { op, lhs, rhs, .. } => {
            let l = evaluate_expression(lhs, row, features, prev)?;
            let r = evaluate_expression(rhs, row, features, prev)?;
            binary(*op, l, r)?
        }
    })
}

fn binary<'a>(op: BinaryOp, l: Scalar<'a>, r: Scalar<'a>) -> Result<Scalar<'a>, EvalError> {
    if op.is_comparison() {
        let ord = match (l, r) {
            (Scalar::Num(a), Scalar::Num(b)) => a.partial_cmp(&b).ok_or(EvalError::NonFinite)?,
            (Scalar::Str(a), Scalar::Str(b)) => a.cmp(b),
            (Scalar::Bool(a), Scalar::Bool(b)) => a.cmp(&b),
            _ => return Err(EvalError::TypeMismatch),
        };
        return Ok(Scalar::Bool(match op {
            BinaryOp::Lt => ord == Ordering::Less,
            BinaryOp::Le => ord != Ordering::Greater,
            BinaryOp::Gt => ord == Ordering::Greater,
            BinaryOp::Ge => ord != Ordering::Less,
            BinaryOp::Eq => ord == Ordering::Equal,
            BinaryOp::Ne => ord != Ordering::Equal,
            _ => unreachable!("comparison operator"),
        }));
    }
    let (Scalar::Num(a), Scalar::Num(b)) = (l, r) else {
        return Err(EvalError::TypeMismatch);
    };
    let v = match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => {
            if b == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            a / b
        }
        _ => unreachable!("arithmetic operator"),
    };
    if v.is_finite() {
        Ok(Scalar::Num(v))
    } else {
        Err(EvalError::NonFinite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sal_ast::{ExprType, FieldType};

    fn num(v: f64) -> Box<TypedExpr> {
        Box::new(TypedExpr::Num(v))
    }

    fn bin(op: BinaryOp, lhs: Box<TypedExpr>, rhs: Box<TypedExpr>, ty: ExprType) -> TypedExpr {
        TypedExpr::Binary { op, lhs, rhs, ty }
    }

    fn no_prev(_: usize, _: usize) -> Option<f64> {
        None
    }

    #[test]
    fn constant_arithmetic() {
        let e = bin(
            BinaryOp::Add,
            Box::new(bin(BinaryOp::Mul, num(2.0), num(3.0), ExprType::Num)),
            num(4.0),
            ExprType::Num,
        );
        let m = FeatureMap::new(Vec::<String>::new());
        assert_eq!(
            evaluate_expression(&e, &vec![], &m, &no_prev),
            Ok(Scalar::Num(10.0))
        );
    }

    #[test]
    fn feature_threshold_and_not_ready() {
        let m = FeatureMap::new(["Feature1"]);
        let e = bin(
            BinaryOp::Gt,
            Box::new(TypedExpr::Feature {
                id: 0,
                key_columns: vec![0],
            }),
            num(1000.0),
            ExprType::Bool,
        );
        let row = vec![Value::Str("D".into())];
        assert_eq!(
            evaluate_expression(&e, &row, &m, &no_prev),
            Err(EvalError::NotReady)
        );
        m.update_insert("D", "Feature1", Feature::Scalar(1200.0));
        assert_eq!(
            evaluate_expression(&e, &row, &m, &no_prev),
            Ok(Scalar::Bool(true))
        );
    }

    #[test]
    fn topk_missing_entry_is_zero() {
        let m = FeatureMap::new(["top2"]);
        m.update_insert("D", "top2", Feature::TopK(vec![("80".into(), 0.95)]));
        let v = |i| {
            Box::new(TypedExpr::TopKValue {
                id: 0,
                index: i,
                key_columns: vec![0],
            })
        };
        let e = bin(
            BinaryOp::Gt,
            Box::new(bin(BinaryOp::Add, v(0), v(1), ExprType::Num)),
            num(0.9),
            ExprType::Bool,
        );
        let row = vec![Value::Str("D".into())];
        assert_eq!(
            evaluate_expression(&e, &row, &m, &no_prev),
            Ok(Scalar::Bool(true))
        );
    }

    #[test]
    fn division_by_zero_and_prev() {
        let m = FeatureMap::new(Vec::<String>::new());
        let col = Box::new(TypedExpr::Column {
            index: 0,
            ty: FieldType::Float,
        });
        let e = bin(BinaryOp::Div, num(1.0), col.clone(), ExprType::Num);
        let row = vec![Value::Float(0.0)];
        assert_eq!(
            evaluate_expression(&e, &row, &m, &no_prev),
            Err(EvalError::DivisionByZero)
        );
        let diff = bin(
            BinaryOp::Sub,
            col,
            Box::new(TypedExpr::Prev { column: 0, back: 1 }),
            ExprType::Num,
        );
        let row = vec![Value::Float(25.0)];
        let hist = |_: usize, back: usize| (back == 1).then_some(10.0);
        assert_eq!(
            evaluate_expression(&diff, &row, &m, &hist),
            Ok(Scalar::Num(15.0))
        );
        assert_eq!(
            evaluate_expression(&diff, &row, &m, &no_prev),
            Err(EvalError::NotReady)
        );
    }

    #[test]
    fn string_comparison() {
        let m = FeatureMap::new(Vec::<String>::new());
        let e = bin(
            BinaryOp::Eq,
            Box::new(TypedExpr::Column {
                index: 0,
                ty: FieldType::Str,
            }),
            Box::new(TypedExpr::Str("TCP".into())),
            ExprType::Bool,
        );
        let row = vec![Value::Str("TCP".into())];
        assert_eq!(
            evaluate_expression(&e, &row, &m, &no_prev),
            Ok(Scalar::Bool(true))
        );
    }

    #[test]
    fn keys_use_separator() {
        let a = vec![Value::Str("a".into()), Value::Str("bc".into())];
        let b = vec![Value::Str("ab".into()), Value::Str("c".into())];
        assert_ne!(key_of(&a, &[0, 1]), key_of(&b, &[0, 1]));
        assert_eq!(key_of(&a, &[1, 0]), "bc\u{1f}a");
    }
}
