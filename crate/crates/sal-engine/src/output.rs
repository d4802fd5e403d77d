//! Feature CSV rows.

use std::fmt::Write;
use std::str::FromStr;

use crate::engine::Cell;
use crate::graph::DataflowGraph;
use crate::tuple::{Label, Row, LABEL_COLUMN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Rows end with the tuple's label; input must be labeled.
    Train,
    Test,
    FeaturesOnly,
}

impl Mode {
    pub fn writes_label(self) -> bool {
        self == Mode::Train
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Mode::Train),
            "test" => Ok(Mode::Test),
            "features-only" => Ok(Mode::FeaturesOnly),
            other => Err(format!(
                "unknown mode `{other}` (expected train, test or features-only)"
            )),
        }
    }
}

/// Header: tuple columns, feature names, then `Label` in train mode.
pub fn csv_header(graph: &DataflowGraph, mode: Mode) -> String {
    let root = &graph.program.streams[graph.program.root];
    let mut cols: Vec<&str> = root.columns.iter().map(|c| c.name.as_str()).collect();
    cols.extend(graph.feature_names());
    if mode.writes_label() {
        cols.push(LABEL_COLUMN);
    }
    cols.join(",")
}

/// One output line (no newline). Empty cells stand for features that are
/// not ready.
pub fn format_row(row: &Row, cells: &[Cell], label: Option<Label>, mode: Mode) -> String {
    let mut out = String::with_capacity(256);
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        v.write_to(&mut out);
    }
    for c in cells {
        out.push(',');
        if let Cell::Value(v) = c {
            write!(out, "{v}").expect("write to String");
        }
    }
    if mode.writes_label() {
        out.push(',');
        if let Some(l) = label {
            out.push_str(l.as_str());
        }
    }
    out
}
