//! CSV assembly: `#` metadata, one header row, LF line endings.

use std::fmt::Write;

/// Round-trip formatting with 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct Table {
    sweep: Option<String>,
    meta: String,
    header: Option<String>,
    rows: String,
}

impl Table {
    pub fn new(version: &str, sweep: Option<&str>) -> Self {
        Self {
            sweep: sweep.map(str::to_string),
            meta: format!("# levyfun {version}\n"),
            header: None,
            rows: String::new(),
        }
    }

    pub fn meta(&mut self, label: Option<f64>, lines: Vec<String>) {
        for l in lines {
            match (&self.sweep, label) {
                (Some(name), Some(v)) => writeln!(self.meta, "# [{name} = {}] {l}", num(v)),
                _ => writeln!(self.meta, "# {l}"),
            }
            .unwrap();
        }
    }

    /// Sets the column names; repeated calls across sweep values must agree.
    pub fn header(&mut self, cols: &[&str]) {
        let mut h = String::new();
        if let Some(name) = &self.sweep {
            h.push_str(name);
            h.push(',');
        }
        h.push_str(&cols.join(","));
        debug_assert!(self.header.as_ref().is_none_or(|old| *old == h));
        self.header = Some(h);
    }

    pub fn row(&mut self, label: Option<f64>, cells: &[String]) {
        if let (Some(_), Some(v)) = (&self.sweep, label) {
            self.rows.push_str(&num(v));
            self.rows.push(',');
        }
        self.rows.push_str(&cells.join(","));
        self.rows.push('\n');
    }

    pub fn finish(self) -> String {
        let mut out = self.meta;
        if let Some(h) = self.header {
            out.push_str(&h);
            out.push('\n');
        }
        out.push_str(&self.rows);
        out
    }
}
