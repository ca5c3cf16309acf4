//! CSV tables, checks and the verdict file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A CSV table; rows may be ragged.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    /// LF line endings, header first, `.` decimals in shortest round-trip form.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .flexible(true)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }
}

/// Formats any displayable cell.
pub fn cell(x: impl std::fmt::Display) -> String {
    x.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Warn,
    Fail,
}

impl Status {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub value: f64,
    /// Human-readable acceptance rule, e.g. `"< 0.04"`.
    pub rule: String,
}

impl Check {
    pub fn new(name: impl Into<String>, ok: bool, value: f64, rule: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: Status::from_bool(ok),
            value,
            rule: rule.into(),
        }
    }

    pub fn warn(name: impl Into<String>, value: f64, rule: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: Status::Warn,
            value,
            rule: rule.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub suite: String,
    pub overall: Status,
    pub checks: Vec<Check>,
}

impl Verdict {
    pub fn new(suite: &str, checks: Vec<Check>) -> Self {
        let overall = checks.iter().map(|c| c.status).max().unwrap_or(Status::Pass);
        Self {
            suite: suite.into(),
            overall,
            checks,
        }
    }

    pub fn failed(&self) -> bool {
        self.overall == Status::Fail
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_lf_and_keeps_ragged_rows() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![cell(1.5), cell(-0.25)]);
        t.push(vec![cell(1), cell(2), cell(3)]);
        let text = String::from_utf8(t.to_bytes().unwrap()).unwrap();
        assert_eq!(text, "a,b\n1.5,-0.25\n1,2,3\n");
    }

    #[test]
    fn overall_is_worst_status() {
        let v = Verdict::new("x", vec![Check::new("a", true, 0.0, ""), Check::warn("b", 1.0, "")]);
        assert_eq!(v.overall, Status::Warn);
        assert!(!v.failed());
        let v = Verdict::new("x", vec![Check::new("a", false, 0.0, ""), Check::warn("b", 1.0, "")]);
        assert!(v.failed());
    }
}
