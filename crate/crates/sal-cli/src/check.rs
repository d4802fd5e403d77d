//! Program loading with diagnostics and exit codes.

use std::fmt::Write;
use std::path::Path;

use sal_ast::{check, SalError, TupleSchema, TypedProgram};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SYNTAX: i32 = 1;
pub const EXIT_SEMANTIC: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug)]
pub struct CheckOutcome {
    pub code: i32,
    /// Diagnostics, one per line, for stderr.
    pub diagnostics: String,
    pub program: Option<TypedProgram>,
}

/// Parse and validate the program at `path` against the netflow schema.
pub fn check_file(path: &Path) -> CheckOutcome {
    let name = path.display();
    let source = match std::fs::read_to_string(path) {
        Ok(s) => s,
        Err(e) => {
            return CheckOutcome {
                code: EXIT_IO,
                diagnostics: format!("{name}: cannot read: {e}\n"),
                program: None,
            }
        }
    };
    let mut diagnostics = String::new();
    match check(&source, &TupleSchema::netflow()) {
        Ok(program) => {
            for w in &program.warnings {
                writeln!(diagnostics, "{name}:{w}").expect("write to String");
            }
            CheckOutcome {
                code: EXIT_OK,
                diagnostics,
                program: Some(program),
            }
        }
        Err(e) => {
            for d in e.diagnostics() {
                writeln!(diagnostics, "{name}:{d}").expect("write to String");
            }
            let code = match e {
                SalError::Lexical(_) | SalError::Syntax(_) => EXIT_SYNTAX,
                SalError::Semantic(_) => EXIT_SEMANTIC,
            };
            CheckOutcome {
                code,
                diagnostics,
                program: None,
            }
        }
    }
}

/// Load a program for execution, turning any failure into an error that
/// carries the diagnostics.
pub fn load_program(path: &Path) -> anyhow::Result<TypedProgram> {
    let outcome = check_file(path);
    eprint!("{}", outcome.diagnostics);
    outcome.program.ok_or_else(|| {
        anyhow::anyhow!(
            "{} does not check (exit code {})",
            path.display(),
            outcome.code
        )
    })
}
