//! Tuples: typed values, rows and the netflow record.

use std::fmt;

use sal_ast::{FieldType, TupleSchema};

use crate::error::TupleError;

/// One field value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            Value::Str(_) => None,
        }
    }

    /// Parse `text` as a value of type `ty`.
    pub fn parse(text: &str, ty: FieldType) -> Option<Value> {
        match ty {
            FieldType::Str => Some(Value::Str(text.to_string())),
            FieldType::Int => text.parse().ok().map(Value::Int),
            FieldType::Float => text
                .parse::<f64>()
                .ok()
                .filter(|f| f.is_finite())
                .map(Value::Float),
        }
    }

    /// Append the textual form used in key strings and CSV output.
    pub fn write_to(&self, out: &mut String) {
        use fmt::Write;
        match self {
            Value::Int(i) => write!(out, "{i}").expect("write to String"),
            Value::Float(f) => write!(out, "{f}").expect("write to String"),
            Value::Str(s) => out.push_str(s),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

/// Field values in schema order.
pub type Row = Vec<Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Benign,
    Malicious,
    Unknown,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Malicious => "malicious",
            Label::Unknown => "unknown",
        }
    }

    pub fn parse(text: &str) -> Option<Label> {
        match text.trim().to_ascii_lowercase().as_str() {
            "benign" => Some(Label::Benign),
            "malicious" => Some(Label::Malicious),
            "unknown" => Some(Label::Unknown),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Column name of the optional trailing label.
pub const LABEL_COLUMN: &str = "Label";

/// One netflow record.
#[derive(Debug, Clone, PartialEq)]
pub struct NetflowTuple {
    pub time_seconds: f64,
    pub parse_date: String,
    pub ip_layer_protocol: String,
    pub source_ip: String,
    pub dest_ip: String,
    pub source_port: i64,
    pub dest_port: i64,
    pub duration_seconds: f64,
    pub src_payload_bytes: i64,
    pub dest_payload_bytes: i64,
    pub src_total_bytes: i64,
    pub dest_total_bytes: i64,
    pub src_packet_count: i64,
    pub dest_packet_count: i64,
    pub label: Option<Label>,
}

impl NetflowTuple {
    /// Column names in input order, without the label.
    pub fn columns() -> Vec<&'static str> {
        sal_ast::schema::NETFLOW_COLUMNS
            .iter()
            .map(|(n, _)| *n)
            .collect()
    }

    /// CSV header, with the label column when `labeled`.
    pub fn header(labeled: bool) -> String {
        let mut h = Self::columns().join(",");
        if labeled {
            h.push(',');
            h.push_str(LABEL_COLUMN);
        }
        h
    }

    /// Check a header line against the expected column order. Returns
    /// whether a label column is present.
    pub fn check_header(line: &str) -> Result<bool, TupleError> {
        let got: Vec<&str> = line
            .trim_end_matches('\r')
            .split(',')
            .map(str::trim)
            .collect();
        let want = Self::columns();
        let labeled = got.len() == want.len() + 1 && got.last() == Some(&LABEL_COLUMN);
        let names = if labeled {
            &got[..want.len()]
        } else {
            &got[..]
        };
        if names != want.as_slice() {
            let position = names
                .iter()
                .zip(&want)
                .position(|(g, w)| g != w)
                .unwrap_or(names.len().min(want.len()));
            return Err(TupleError::Header {
                expected: Self::header(false),
                position,
                found: names.get(position).map(|s| s.to_string()),
            });
        }
        Ok(labeled)
    }

    /// Parse one CSV line (no quoting) with an optional trailing label.
    pub fn from_csv_line(line: &str) -> Result<NetflowTuple, TupleError> {
        let fields: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
        let n = sal_ast::schema::NETFLOW_COLUMNS.len();
        if fields.len() != n && fields.len() != n + 1 {
            return Err(TupleError::FieldCount {
                expected: n,
                found: fields.len(),
            });
        }
        let int = |i: usize| -> Result<i64, TupleError> {
            fields[i]
                .trim()
                .parse()
                .map_err(|_| TupleError::bad(i, fields[i]))
        };
        let float = |i: usize| -> Result<f64, TupleError> {
            fields[i]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|f| f.is_finite())
                .ok_or_else(|| TupleError::bad(i, fields[i]))
        };
        let text = |i: usize| fields[i].trim().to_string();
        let label = match fields.get(n) {
            None => None,
            Some(s) if s.trim().is_empty() => None,
            Some(s) => Some(Label::parse(s).ok_or_else(|| TupleError::bad(n, s))?),
        };
        let t = NetflowTuple {
            time_seconds: float(0)?,
            parse_date: text(1),
            ip_layer_protocol: text(2),
            source_ip: text(3),
            dest_ip: text(4),
            source_port: int(5)?,
            dest_port: int(6)?,
            duration_seconds: float(7)?,
            src_payload_bytes: int(8)?,
            dest_payload_bytes: int(9)?,
            src_total_bytes: int(10)?,
            dest_total_bytes: int(11)?,
            src_packet_count: int(12)?,
            dest_packet_count: int(13)?,
            label,
        };
        t.validate()?;
        Ok(t)
    }

    /// Counts and durations are non-negative, IPs non-empty.
    pub fn validate(&self) -> Result<(), TupleError> {
        let counts = [
            self.src_payload_bytes,
            self.dest_payload_bytes,
            self.src_total_bytes,
            self.dest_total_bytes,
            self.src_packet_count,
            self.dest_packet_count,
        ];
        if let Some(i) = counts.iter().position(|&c| c < 0) {
            return Err(TupleError::Invariant(format!(
                "{} is negative",
                Self::columns()[8 + i]
            )));
        }
        if self.duration_seconds < 0.0 {
            return Err(TupleError::Invariant("DurationSeconds is negative".into()));
        }
        if self.source_ip.is_empty() || self.dest_ip.is_empty() {
            return Err(TupleError::Invariant("empty IP address".into()));
        }
        Ok(())
    }

    /// CSV line without a trailing newline; the label is appended when
    /// `with_label` is set (empty if absent).
    pub fn to_csv_line(&self, with_label: bool) -> String {
        let mut out = String::with_capacity(160);
        for (i, v) in self.to_row().iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            v.write_to(&mut out);
        }
        if with_label {
            out.push(',');
            if let Some(l) = self.label {
                out.push_str(l.as_str());
            }
        }
        out
    }

    pub fn to_row(&self) -> Row {
        vec![
            Value::Float(self.time_seconds),
            Value::Str(self.parse_date.clone()),
            Value::Str(self.ip_layer_protocol.clone()),
            Value::Str(self.source_ip.clone()),
            Value::Str(self.dest_ip.clone()),
            Value::Int(self.source_port),
            Value::Int(self.dest_port),
            Value::Float(self.duration_seconds),
            Value::Int(self.src_payload_bytes),
            Value::Int(self.dest_payload_bytes),
            Value::Int(self.src_total_bytes),
            Value::Int(self.dest_total_bytes),
            Value::Int(self.src_packet_count),
            Value::Int(self.dest_packet_count),
        ]
    }
}

/// Parse a comma-separated line against an arbitrary schema.
pub fn parse_row(line: &str, schema: &TupleSchema) -> Result<Row, TupleError> {
    let fields: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
    parse_fields(&fields, schema)
}

/// Like [`parse_row`], but accepts one extra trailing label field.
pub fn parse_labeled_row(
    line: &str,
    schema: &TupleSchema,
) -> Result<(Row, Option<Label>), TupleError> {
    let mut fields: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
    let mut label = None;
    if fields.len() == schema.len() + 1 {
        let text = fields.pop().expect("non-empty");
        label = Some(Label::parse(text.trim()).ok_or_else(|| TupleError::bad(schema.len(), text))?);
    }
    Ok((parse_fields(&fields, schema)?, label))
}

fn parse_fields(fields: &[&str], schema: &TupleSchema) -> Result<Row, TupleError> {
    if fields.len() != schema.len() {
        return Err(TupleError::FieldCount {
            expected: schema.len(),
            found: fields.len(),
        });
    }
    fields
        .iter()
        .zip(&schema.columns)
        .enumerate()
        .map(|(i, (f, c))| Value::parse(f.trim(), c.ty).ok_or_else(|| TupleError::bad(i, f)))
        .collect()
}
