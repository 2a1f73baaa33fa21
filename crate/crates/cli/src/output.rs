//! CSV and JSON writers. Every file starts with `#` comment lines holding
//! the resolved settings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

/// 17 significant digits in scientific notation.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// `# key = value` lines for the header of an output file, keys sorted.
/// Values are JSON scalars and arrays, which read back as TOML.
pub fn header<S: Serialize>(command: &str, settings: &S) -> anyhow::Result<String> {
    let serde_json::Value::Object(fields) = serde_json::to_value(settings)? else {
        anyhow::bail!("settings must serialize to a table");
    };
    let mut out = format!("# cdquench {} {command}\n", env!("CARGO_PKG_VERSION"));
    for (key, value) in &fields {
        out.push_str(&format!("# {key} = {value}\n"));
    }
    Ok(out)
}

/// A CSV file under construction.
pub struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
    trailer: Vec<String>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &str, columns: &[&str]) -> anyhow::Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut inner = BufWriter::new(file);
        inner.write_all(header.as_bytes())?;
        let mut writer = csv::WriterBuilder::new().from_writer(inner);
        writer.write_record(columns)?;
        Ok(CsvOut {
            path: path.to_path_buf(),
            writer,
            trailer: Vec::new(),
        })
    }

    pub fn row<I, T>(&mut self, fields: I) -> anyhow::Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    /// Records a failed cell as a trailing comment line.
    pub fn failure(&mut self, what: &str, err: &dyn std::fmt::Display) {
        self.trailer.push(format!("# failed {what}: {err}\n"));
    }

    pub fn finish(self) -> anyhow::Result<PathBuf> {
        let mut inner = self.writer.into_inner().map_err(|e| e.into_error())?;
        for line in &self.trailer {
            inner.write_all(line.as_bytes())?;
        }
        inner.flush()?;
        Ok(self.path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<String> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    Ok(text)
}
