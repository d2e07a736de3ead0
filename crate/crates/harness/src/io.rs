//! CSV artifacts. Every file starts with `# key: value` metadata lines,
//! followed by a header row and numeric rows written with 17 significant
//! digits so that values round-trip exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Ordered metadata lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metadata(pub Vec<(String, String)>);

impl Metadata {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.push(key, value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A numeric table as read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub meta: Metadata,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// `#` lines after the data, e.g. an abort notice.
    pub trailer: Vec<String>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("no column `{name}`"))?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }
}

pub struct CsvSink {
    writer: csv::Writer<BufWriter<File>>,
    columns: usize,
}

impl CsvSink {
    pub fn create(path: &Path, schema: &str, meta: &Metadata, header: &[&str]) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        writeln!(out, "# schema: {schema}/{SCHEMA_VERSION}")?;
        for (k, v) in &meta.0 {
            writeln!(out, "# {k}: {v}")?;
        }
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(header)?;
        Ok(Self {
            writer,
            columns: header.len(),
        })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        if fields.len() != self.columns {
            bail!("row has {} fields, header {}", fields.len(), self.columns);
        }
        self.writer.write_record(fields)?;
        Ok(())
    }

    /// Appends a trailing `#` line and closes the file.
    pub fn finish_with_note(self, note: Option<&str>) -> Result<()> {
        let mut out = self.writer.into_inner().map_err(|e| anyhow::anyhow!("flushing csv: {e}"))?;
        if let Some(note) = note {
            writeln!(out, "# {note}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        self.finish_with_note(None)
    }
}

/// Reads a table and checks its schema name and version.
pub fn read_table(path: &Path, schema: &str) -> Result<Table> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut meta = Metadata::default();
    let mut trailer = Vec::new();
    let mut body = String::new();
    let mut seen_header = false;
    for line in BufReader::new(file).lines() {
        let line = line?;
        match line.strip_prefix("# ") {
            Some(rest) if !seen_header => {
                let (k, v) = rest.split_once(": ").with_context(|| format!("bad metadata line `{line}`"))?;
                meta.push(k, v);
            }
            Some(rest) => trailer.push(rest.to_string()),
            None => {
                seen_header = true;
                body.push_str(&line);
                body.push('\n');
            }
        }
    }
    let expected = format!("{schema}/{SCHEMA_VERSION}");
    if meta.get("schema") != Some(expected.as_str()) {
        bail!("{}: expected schema {expected}, found {:?}", path.display(), meta.get("schema"));
    }
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().with_context(|| format!("non-numeric field `{f}`")))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table {
        meta,
        header,
        rows,
        trailer,
    })
}
