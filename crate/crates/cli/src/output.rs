use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// CSV: a `# meta {json}` line, then header and rows.
/// JSON: `{"meta": ..., "rows": [...]}`.
pub fn emit<R: Serialize>(meta: &Value, rows: &[R], format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(File::create(p).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?),
        None => Box::new(io::stdout().lock()),
    };
    write_table(sink, meta, rows, format).map_err(|e| CliError::Internal(e.to_string()))
}

fn write_table<R: Serialize>(
    mut sink: Box<dyn Write>,
    meta: &Value,
    rows: &[R],
    format: Format,
) -> Result<(), Box<dyn std::error::Error>> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut sink, &json!({ "meta": meta, "rows": rows }))?;
            writeln!(sink)?;
        }
        Format::Csv => {
            writeln!(sink, "# meta {}", serde_json::to_string(meta)?)?;
            let mut w = csv::Writer::from_writer(sink);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
