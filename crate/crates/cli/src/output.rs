use std::io::{self, Write};

use clap::ValueEnum;
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Human,
}

pub struct Output {
    pub format: Format,
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_row(w: &mut impl Write, cells: impl IntoIterator<Item = String>) -> io::Result<()> {
    let line: Vec<String> = cells.into_iter().map(|c| csv_escape(&c)).collect();
    writeln!(w, "{}", line.join(","))
}

impl Output {
    /// One record: pretty JSON, a two-line CSV of its scalar fields, or text.
    pub fn emit(&self, value: &Value, human: &str) -> io::Result<()> {
        let mut stdout = io::stdout().lock();
        match self.format {
            Format::Json => {
                writeln!(stdout, "{}", serde_json::to_string_pretty(value)?)?;
                eprintln!("{human}");
            }
            Format::Human => writeln!(stdout, "{human}")?,
            Format::Csv => {
                let scalars: Vec<(&String, &Value)> = value
                    .as_object()
                    .map(|m| m.iter().filter(|(_, v)| !v.is_object() && !v.is_array()).collect())
                    .unwrap_or_default();
                write_row(&mut stdout, scalars.iter().map(|(k, _)| k.to_string()))?;
                write_row(&mut stdout, scalars.iter().map(|(_, v)| cell(v)))?;
            }
        }
        Ok(())
    }

    /// Like [`Output::emit`], but CSV lists `columns` of the objects in array `rows`.
    pub fn emit_table(&self, value: &Value, rows: &str, columns: &[&str], human: &str) -> io::Result<()> {
        if self.format != Format::Csv {
            return self.emit(value, human);
        }
        let mut stdout = io::stdout().lock();
        let items = value[rows].as_array().cloned().unwrap_or_default();
        write_row(&mut stdout, columns.iter().map(|c| c.to_string()))?;
        for item in &items {
            write_row(&mut stdout, columns.iter().map(|c| cell(&item[*c])))?;
        }
        Ok(())
    }
}
