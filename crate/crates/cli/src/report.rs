//! Run reports shared by every subcommand.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Warn,
}

impl Status {
    pub fn from_bool(ok: bool) -> Status {
        if ok { Status::Pass } else { Status::Fail }
    }

    fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Warn => "WARN",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub measured: Value,
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    pub fn new(name: impl Into<String>, status: Status, measured: impl Into<Value>, tolerance: Option<f64>) -> Check {
        Check {
            name: name.into(),
            status,
            measured: measured.into(),
            tolerance,
            note: None,
        }
    }

    /// `measured < tolerance`.
    pub fn below(name: impl Into<String>, measured: f64, tolerance: f64) -> Check {
        Check::new(name, Status::from_bool(measured < tolerance), measured, Some(tolerance))
    }

    pub fn equal(name: impl Into<String>, measured: usize, expected: usize) -> Check {
        let mut c = Check::new(name, Status::from_bool(measured == expected), measured, None);
        if measured != expected {
            c.note = Some(format!("expected {expected}"));
        }
        c
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Check {
        self.note = Some(note.into());
        self
    }
}

/// Field order is part of the output contract.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub input_digest: String,
    pub checks: Vec<Check>,
    pub failures: usize,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl RunReport {
    pub fn new(command: &str, inputs: &[&[u8]]) -> RunReport {
        let mut h = Sha256::new();
        for part in inputs {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
        RunReport {
            command: command.to_string(),
            input_digest: format!("sha256:{}", hex::encode(h.finalize())),
            checks: Vec::new(),
            failures: 0,
            pass: true,
            wall_time_s: None,
            details: None,
        }
    }

    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn finish(&mut self) {
        self.failures = self.checks.iter().filter(|c| c.status == Status::Fail).count();
        self.pass = self.failures == 0;
    }

    pub fn render_text(&self) -> String {
        let mut out = format!("{} ({})\n", self.command, self.input_digest);
        for c in &self.checks {
            let measured = match &c.measured {
                Value::Number(n) if n.is_f64() => format!("{:.3e}", n.as_f64().unwrap_or(f64::NAN)),
                Value::String(s) => s.clone(),
                v => v.to_string(),
            };
            out += &format!("  {} {:<40} {measured}", c.status.label(), c.name);
            if let Some(t) = c.tolerance {
                out += &format!(" (tol {t:.0e})");
            }
            if let Some(n) = &c.note {
                out += &format!("  {n}");
            }
            out.push('\n');
        }
        out += &format!("{} check(s) failed\n", self.failures);
        if let Some(t) = self.wall_time_s {
            out += &format!("wall time {t:.3}s\n");
        }
        out
    }
}
