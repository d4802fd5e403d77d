//! Generating the ave/var feature pipeline.

use anyhow::{bail, Result};
use sal_ast::{FieldType, TupleSchema};

pub const DEFAULT_FIELDS: [&str; 7] = [
    "SrcTotalBytes",
    "DestTotalBytes",
    "DurationSeconds",
    "SrcPayloadBytes",
    "DestPayloadBytes",
    "SrcPacketCount",
    "DestPacketCount",
];

pub const DEFAULT_GROUPINGS: [&str; 2] = ["DestIp", "SourceIp"];

const OPERATORS: [&str; 2] = ["ave", "var"];

fn column_type(schema: &TupleSchema, name: &str) -> Option<FieldType> {
    schema.columns.iter().find(|c| c.name == name).map(|c| c.ty)
}

/// Feature name for `op` over `field` grouped by `grouping`.
pub fn feature_name(op: &str, field: &str, grouping: &str) -> String {
    let mut op = op.to_string();
    op[..1].make_ascii_uppercase();
    format!("{op}{field}By{grouping}")
}

/// SAL source computing ave and var of every field per grouping:
/// 2 * |fields| * |groupings| features.
pub fn gen_pipeline(fields: &[&str], groupings: &[&str], window: u64) -> Result<String> {
    let schema = TupleSchema::netflow();
    if fields.is_empty() || groupings.is_empty() {
        bail!("at least one field and one grouping are required");
    }
    if window == 0 {
        bail!("window size must be positive");
    }
    let known = |kind: &str, name: &str| -> Result<FieldType> {
        column_type(&schema, name).ok_or_else(|| {
            let names: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
            anyhow::anyhow!(
                "unknown {kind} `{name}` (netflow columns: {})",
                names.join(", ")
            )
        })
    };
    for f in fields {
        if known("field", f)? == FieldType::Str {
            bail!("field `{f}` is not numeric");
        }
    }
    for g in groupings {
        known("grouping", g)?;
    }
    for (i, g) in groupings.iter().enumerate() {
        if groupings[..i].contains(g) {
            bail!("grouping `{g}` given twice");
        }
    }
    for (i, f) in fields.iter().enumerate() {
        if fields[..i].contains(f) {
            bail!("field `{f}` given twice");
        }
    }

    let mut out = String::new();
    out.push_str("// Preamble Statements\n");
    out.push_str(&format!("WindowSize = {window};\n\n"));
    out.push_str("// Connection Statements\n");
    out.push_str("Netflows = VastStream(\"localhost\", 9999);\n\n");
    out.push_str("// Partition Statements\n");
    out.push_str(&format!(
        "PARTITION Netflows By {};\n",
        groupings.join(", ")
    ));
    for g in groupings {
        let hash = if g.ends_with("Ip") {
            "IpHashFunction"
        } else {
            "StringHashFunction"
        };
        out.push_str(&format!("HASH {g} WITH {hash};\n"));
    }
    out.push_str("\n// Pipeline Statements\n");
    for g in groupings {
        let stream = format!("FlowsBy{g}");
        out.push_str(&format!("{stream} = STREAM Netflows BY {g};\n"));
        for f in fields {
            for op in OPERATORS {
                out.push_str(&format!(
                    "{} = FOREACH {stream} GENERATE {op}({f});\n",
                    feature_name(op, f, g)
                ));
            }
        }
    }
    Ok(out)
}
