//! File formats.
//!
//! * Matrices: UTF-8 TSV, optional `#` comment lines first, then a header row
//!   whose first cell is empty followed by column ids, then one row per row id.
//!   Numbers carry 9 significant digits.
//! * Corpora: JSON lines `{"id": ..., "text": ...}`.
//! * Script documents: JSON lines `{"category": ..., "text": ...}`.
//! * Taxonomies: `child<TAB>parent` edge list plus `node<TAB>probability`.
//! * Label maps: `instance<TAB>category`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{Registry, Table};
use crate::error::{Error, Result};

/// A corpus document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

/// A script document describing one composite category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptDocument {
    pub category: String,
    pub text: String,
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Formats `v` with 9 significant digits, like C's `%.9g`.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in {:e} output");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_fraction(format!("{v:.decimals$}"))
    } else {
        format!("{}e{}", trim_fraction(mantissa.to_string()), exp)
    }
}

fn trim_fraction(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

/// Serializes a table; each comment becomes a leading `# ` line.
pub fn format_table(table: &Table, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    for col in table.cols().iter() {
        out.push('\t');
        out.push_str(col);
    }
    out.push('\n');
    for (i, name) in table.rows().iter().enumerate() {
        out.push_str(name);
        for &v in table.row(i) {
            out.push('\t');
            out.push_str(&format_number(v));
        }
        out.push('\n');
    }
    out
}

/// Parses a matrix TSV; returns the table and its comment lines (without `#`).
pub fn parse_table(text: &str, context: &str) -> Result<(Table, Vec<String>)> {
    let mut comments = Vec::new();
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.starts_with('#') => {
                comments.push(l.trim_start_matches('#').trim().to_string())
            }
            Some((_, l)) => break l,
            None => return Err(Error::parse(context, "missing header row")),
        }
    };
    let mut cells = header.split('\t');
    if !cells.next().unwrap_or_default().trim().is_empty() {
        return Err(Error::parse(context, "first cell of the header row must be empty"));
    }
    let cols = Registry::new(cells).map_err(|e| Error::parse(context, e.to_string()))?;

    let mut rows = Registry::default();
    let mut values = Vec::new();
    for (lineno, line) in lines {
        let mut cells = line.split('\t');
        let id = cells.next().unwrap_or_default();
        rows.push(id)
            .map_err(|e| Error::parse(context, format!("line {}: {e}", lineno + 1)))?;
        let before = values.len();
        for cell in cells {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::parse(context, format!("line {}: bad number `{cell}`", lineno + 1))
            })?;
            values.push(v);
        }
        if values.len() - before != cols.len() {
            return Err(Error::parse(
                context,
                format!(
                    "line {}: expected {} values, found {}",
                    lineno + 1,
                    cols.len(),
                    values.len() - before
                ),
            ));
        }
    }
    let values = Array2::from_shape_vec((rows.len(), cols.len()), values)
        .map_err(|e| Error::parse(context, e.to_string()))?;
    let table = Table::new(rows, cols, values).map_err(|e| Error::parse(context, e.to_string()))?;
    Ok((table, comments))
}

pub fn read_table(path: &Path) -> Result<(Table, Vec<String>)> {
    parse_table(&read_to_string(path)?, &path.display().to_string())
}

pub fn write_table(path: &Path, table: &Table, comments: &[String]) -> Result<()> {
    write_string(path, &format_table(table, comments))
}

/// Parses one JSON object per non-blank line.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str, context: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::parse(context, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn format_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable record"));
        out.push('\n');
    }
    out
}

pub fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    parse_jsonl(&read_to_string(path)?, &path.display().to_string())
}

pub fn read_scripts(path: &Path) -> Result<Vec<ScriptDocument>> {
    parse_jsonl(&read_to_string(path)?, &path.display().to_string())
}

/// Two-column TSV records (`#` comments and blank lines skipped).
pub fn parse_pairs(text: &str, context: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != 2 {
            return Err(Error::parse(
                context,
                format!("line {}: expected 2 tab-separated fields, found {}", i + 1, cells.len()),
            ));
        }
        out.push((cells[0].trim().to_string(), cells[1].trim().to_string()));
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    parse_pairs(&read_to_string(path)?, &path.display().to_string())
}

/// `node<TAB>probability` records.
pub fn read_probabilities(path: &Path) -> Result<Vec<(String, f64)>> {
    let ctx = path.display().to_string();
    read_pairs(path)?
        .into_iter()
        .map(|(n, p)| {
            let p: f64 = p
                .parse()
                .map_err(|_| Error::parse(&ctx, format!("bad probability `{p}` for `{n}`")))?;
            Ok((n, p))
        })
        .collect()
}

pub fn format_pairs<'a, I>(pairs: I) -> String
where
    I: IntoIterator<Item = (&'a String, &'a String)>,
{
    let mut out = String::new();
    for (a, b) in pairs {
        let _ = writeln!(out, "{a}\t{b}");
    }
    out
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_to_string(path)?)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}
