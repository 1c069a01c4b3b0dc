//! Structured experiment results.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    /// human-readable requirement, e.g. "<= 1e-6"
    pub requirement: String,
}

#[derive(Debug, Clone, Serialize, PartialEq, Default)]
pub struct Curve {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Curve {
    pub fn new(columns: &[&str]) -> Self {
        Curve { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, PartialEq, Default)]
pub struct ExperimentReport {
    pub name: String,
    pub params: BTreeMap<String, Value>,
    pub metrics: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    pub curves: BTreeMap<String, Curve>,
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    pub fn new(name: &str) -> Self {
        ExperimentReport { name: name.to_string(), ..Default::default() }
    }

    pub fn param(&mut self, key: &str, v: impl Serialize) -> &mut Self {
        self.params.insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
        self
    }

    pub fn metric(&mut self, key: &str, v: impl Serialize) -> &mut Self {
        self.metrics.insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
        self
    }

    pub fn metric_f64(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).and_then(Value::as_f64)
    }

    pub fn check(&mut self, name: &str, passed: bool, observed: f64, requirement: impl Into<String>) -> bool {
        self.checks.push(Check { name: name.to_string(), passed, observed, requirement: requirement.into() });
        passed
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub fn curve(&mut self, key: &str, c: Curve) {
        self.curves.insert(key.to_string(), c);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    /// Folds another report in, prefixing its keys.
    pub fn absorb(&mut self, prefix: &str, other: ExperimentReport) {
        for (k, v) in other.metrics {
            self.metrics.insert(format!("{prefix}.{k}"), v);
        }
        for mut c in other.checks {
            c.name = format!("{prefix}.{}", c.name);
            self.checks.push(c);
        }
        for (k, v) in other.curves {
            self.curves.insert(format!("{prefix}.{k}"), v);
        }
        self.warnings.extend(other.warnings.into_iter().map(|w| format!("{prefix}: {w}")));
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `report.json`, `curves/<name>.csv` and `summary.txt` under `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("curves"))?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        for (k, c) in &self.curves {
            let f = std::fs::File::create(dir.join("curves").join(format!("{k}.csv")))?;
            c.write_csv(std::io::BufWriter::new(f))?;
        }
        std::fs::write(dir.join("summary.txt"), self.summary())?;
        Ok(())
    }

    /// One `PASS|FAIL name observed requirement` line per check, then the verdict.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{} {} observed={:.6e} required {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.observed,
                c.requirement
            ));
        }
        s.push_str(&format!("{} {}\n", self.name, if self.passed() { "PASS" } else { "FAIL" }));
        s
    }
}
