use anyhow::{bail, Context, Result};
use pacsketch::listdsl::{DslExample, DslType, DslValue};
use pacsketch::sketch_ir::{Expr, Valuation};
use pacsketch::SCHEMA_VERSION;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

/// A program file: the expression wrapped with its schema version. A bare
/// expression is accepted on input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProgramDoc {
    pub schema_version: u32,
    pub program: Expr,
}

impl ProgramDoc {
    pub fn new(program: Expr) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            program,
        }
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).context("reading stdin")?;
        return Ok(s);
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn check_version(v: u32, what: &str) -> Result<()> {
    if v != SCHEMA_VERSION {
        bail!("{what} has schema_version {v}; this build reads version {SCHEMA_VERSION}");
    }
    Ok(())
}

pub fn read_program(path: &Path) -> Result<Expr> {
    let text = read_text(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{} is not JSON", path.display()))?;
    if value.get("program").is_some() {
        let doc: ProgramDoc =
            serde_json::from_value(value).with_context(|| format!("{} is not a program file", path.display()))?;
        check_version(doc.schema_version, "program file")?;
        return Ok(doc.program);
    }
    serde_json::from_value(value).with_context(|| format!("{} is not a program", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn parse_jsonl_line<T: for<'de> Deserialize<'de>>(line: &str, origin: &str, lineno: usize) -> Result<Option<T>> {
    let line = line.trim();
    if line.is_empty() {
        return Ok(None);
    }
    serde_json::from_str(line)
        .map(Some)
        .with_context(|| format!("{origin}:{lineno}: malformed record"))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = read_text(path)?;
    let origin = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(v) = parse_jsonl_line(line, &origin, i + 1)? {
            out.push(v);
        }
    }
    Ok(out)
}

pub fn read_valuations(path: &Path) -> Result<Vec<Valuation>> {
    let data: Vec<Valuation> = read_jsonl(path)?;
    for (i, v) in data.iter().enumerate() {
        v.check_disjoint().with_context(|| format!("{}: record {}", path.display(), i + 1))?;
    }
    Ok(data)
}

/// DSL examples: one JSON array of input values per line.
pub fn read_examples(path: &Path, types: &[DslType]) -> Result<Vec<DslExample>> {
    let rows: Vec<Vec<serde_json::Value>> = read_jsonl(path)?;
    let mut next_id = 0;
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != types.len() {
                bail!("{}:{}: expected {} inputs, found {}", path.display(), i + 1, types.len(), row.len());
            }
            row.iter()
                .zip(types)
                .map(|(v, t)| DslValue::from_json(v, t, &mut next_id))
                .collect::<Result<_, _>>()
                .with_context(|| format!("{}:{}", path.display(), i + 1))
        })
        .collect()
}

/// Streams JSONL records from a reader, calling `f` for each.
pub fn for_each_jsonl<T, R, F>(reader: R, origin: &str, mut f: F) -> Result<()>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
    F: FnMut(T) -> Result<()>,
{
    for (i, line) in reader.lines().enumerate() {
        let line = line.with_context(|| format!("reading {origin}"))?;
        if let Some(v) = parse_jsonl_line(&line, origin, i + 1)? {
            f(v)?;
        }
    }
    Ok(())
}

/// Reads `path` like `tail -f`, stopping after `idle` without new data
/// (never, if `None`).
pub fn follow_jsonl<T, F>(path: &Path, idle: Option<std::time::Duration>, mut f: F) -> Result<()>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(T) -> Result<()>,
{
    use std::time::{Duration, Instant};
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = BufReader::new(file);
    let origin = path.display().to_string();
    let mut pending = String::new();
    let mut lineno = 0;
    let mut last = Instant::now();
    loop {
        let read = reader.read_line(&mut pending).with_context(|| format!("reading {origin}"))?;
        if read > 0 && pending.ends_with('\n') {
            lineno += 1;
            if let Some(v) = parse_jsonl_line(&pending, &origin, lineno)? {
                f(v)?;
            }
            pending.clear();
            last = Instant::now();
            continue;
        }
        if read > 0 {
            last = Instant::now();
        }
        if idle.is_some_and(|d| last.elapsed() >= d) {
            if !pending.trim().is_empty() {
                lineno += 1;
                if let Some(v) = parse_jsonl_line(&pending, &origin, lineno)? {
                    f(v)?;
                }
            }
            return Ok(());
        }
        std::thread::sleep(Duration::from_millis(50));
    }
}

/// Writes pretty JSON to `path`, or to stdout when `path` is `None`.
pub fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => io::stdout().lock().write_all(text.as_bytes()).context("writing stdout"),
    }
}

/// Writes one compact JSON document per line.
pub fn write_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>, path: Option<&Path>) -> Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(&item)?);
        text.push('\n');
    }
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => io::stdout().lock().write_all(text.as_bytes()).context("writing stdout"),
    }
}
