//! Verification ledgers: one CSV row per numerical check.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

/// `margin = bound − measured` for upper bounds and `measured − bound` for lower bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub seed: u64,
    pub quantity: String,
    pub measured: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: Status,
}

impl Row {
    /// `measured ≤ bound`.
    pub fn upper(seed: u64, quantity: impl Into<String>, measured: f64, bound: f64) -> Self {
        let margin = bound - measured;
        Self { seed, quantity: quantity.into(), measured, bound, margin, pass: status(margin >= 0.0) }
    }

    /// `measured ≥ bound`.
    pub fn lower(seed: u64, quantity: impl Into<String>, measured: f64, bound: f64) -> Self {
        let margin = measured - bound;
        Self { seed, quantity: quantity.into(), measured, bound, margin, pass: status(margin >= 0.0) }
    }

    /// A recorded value with no bound attached.
    pub fn info(seed: u64, quantity: impl Into<String>, measured: f64) -> Self {
        Self { seed, quantity: quantity.into(), measured, bound: f64::NAN, margin: f64::NAN, pass: Status::Pass }
    }

    pub fn skipped(seed: u64, quantity: impl Into<String>) -> Self {
        Self {
            seed,
            quantity: quantity.into(),
            measured: f64::NAN,
            bound: f64::NAN,
            margin: f64::NAN,
            pass: Status::Skipped,
        }
    }

    pub fn failed(seed: u64, quantity: impl Into<String>, message: &str) -> Self {
        log::error!("seed {seed}: {message}");
        Self { pass: Status::Fail, ..Self::skipped(seed, quantity) }
    }
}

fn status(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ledger {
    pub rows: Vec<Row>,
}

impl Ledger {
    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = Row>) {
        self.rows.extend(rows);
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.pass == Status::Fail).count()
    }

    pub fn skipped(&self) -> usize {
        self.rows.iter().filter(|r| r.pass == Status::Skipped).count()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["seed", "quantity", "measured", "bound", "margin", "pass"])?;
        for r in &self.rows {
            let pass = match r.pass {
                Status::Pass => "pass",
                Status::Fail => "fail",
                Status::Skipped => "skipped",
            };
            w.write_record([
                r.seed.to_string(),
                r.quantity.clone(),
                fmt(r.measured),
                fmt(r.bound),
                fmt(r.margin),
                pass.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_and_csv() {
        let mut l = Ledger::default();
        l.push(Row::upper(1, "a,b", 1.0, 2.0));
        l.push(Row::lower(2, "c", 1.0, 2.0));
        l.push(Row::skipped(3, "d"));
        assert_eq!((l.failures(), l.skipped()), (1, 1));
        let csv = l.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "seed,quantity,measured,bound,margin,pass");
        assert_eq!(lines[1], "1,\"a,b\",1e0,2e0,1e0,pass");
        assert_eq!(lines[2], "2,c,1e0,2e0,-1e0,fail");
        assert_eq!(lines[3], "3,d,,,,skipped");
    }
}
