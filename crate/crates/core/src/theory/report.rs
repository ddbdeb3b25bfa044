//! Verification report: one row per checked property instance.

use crate::Result;

/// One measured property with its pass/fail verdict.
#[derive(Clone, Debug)]
pub struct CheckRow {
    pub property: String,
    /// Cluster or case identifier; "-" where not applicable.
    pub case: String,
    /// Inflation radius of the check; 0 where not applicable.
    pub delta: f64,
    /// Refinement level (1-based); 0 where not applicable.
    pub level: usize,
    pub measured: f64,
    pub pass: bool,
}

impl CheckRow {
    pub fn new(
        property: impl Into<String>,
        case: impl Into<String>,
        delta: f64,
        level: usize,
        measured: f64,
        pass: bool,
    ) -> Self {
        CheckRow { property: property.into(), case: case.into(), delta, level, measured, pass }
    }
}

/// A table of check rows with a global verdict.
#[derive(Clone, Debug, Default)]
pub struct VerificationReport {
    pub rows: Vec<CheckRow>,
}

impl VerificationReport {
    pub fn push(&mut self, row: CheckRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = CheckRow>) {
        self.rows.extend(rows);
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn first_failure(&self) -> Option<&CheckRow> {
        self.rows.iter().find(|r| !r.pass)
    }

    /// Fixed-width text table, deterministic for identical inputs.
    pub fn write_text(&self, out: &mut impl std::io::Write) -> Result<()> {
        writeln!(
            out,
            "{:<32} {:<14} {:>12} {:>5} {:>14} {:>6}",
            "property", "cluster", "delta", "level", "measured", "status"
        )?;
        for row in &self.rows {
            writeln!(
                out,
                "{:<32} {:<14} {:>12.4e} {:>5} {:>14.6e} {:>6}",
                row.property,
                row.case,
                row.delta,
                row.level,
                row.measured,
                if row.pass { "pass" } else { "FAIL" }
            )?;
        }
        let verdict = if self.all_pass() { "ALL PASS" } else { "FAILED" };
        writeln!(out, "verdict: {verdict} ({} rows)", self.rows.len())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("report text is ASCII")
    }
}
