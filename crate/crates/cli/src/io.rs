//! Output files: CSV with 17 significant digits, LF line endings, written
//! whole-file atomically (temp file + rename).

use std::path::Path;

use anyhow::{Context, Result};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `content` atomically: the target never holds a partial file.
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{file_name}.tmp"));
    std::fs::write(&tmp, content).with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("cannot move output into place at {}", path.display()))?;
    Ok(())
}

pub struct CsvBuilder {
    buf: String,
}

impl CsvBuilder {
    pub fn new(header: &[&str]) -> CsvBuilder {
        let mut buf = String::new();
        buf.push_str(&header.join(","));
        buf.push('\n');
        CsvBuilder { buf }
    }

    pub fn row(&mut self, values: &[f64]) {
        let cols: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
        self.buf.push_str(&cols.join(","));
        self.buf.push('\n');
    }

    pub fn row_mixed(&mut self, label: &str, values: &[f64]) {
        self.buf.push_str(label);
        for &v in values {
            self.buf.push(',');
            self.buf.push_str(&fmt_f64(v));
        }
        self.buf.push('\n');
    }

    pub fn finish(self, path: &Path) -> Result<()> {
        write_atomic(path, self.buf.as_bytes())
    }
}
