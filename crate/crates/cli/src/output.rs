//! CSV assembly with `# key=value` header lines.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[(String, String)], columns: &[&str]) -> Self {
        let mut text = String::new();
        for (k, v) in header {
            let _ = writeln!(text, "# {k}={v}");
        }
        text.push_str(&columns.join(","));
        text.push('\n');
        Csv { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn emit(&self, out: Option<&Path>) -> Result<()> {
        match out {
            Some(path) => std::fs::write(path, &self.text)
                .with_context(|| format!("cannot write {}", path.display())),
            None => {
                use std::io::Write;
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(self.text.as_bytes())?;
                stdout.flush()?;
                Ok(())
            }
        }
    }
}
