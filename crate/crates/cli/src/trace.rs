//! CSV trace files.
//!
//! The first line is a `#` comment naming the format version and the
//! column set; the second is the header row. Floats are written with 17
//! significant digits so a trace pins down every value bit for bit. Empty
//! fields mean "not defined at this row" (a relay's ratio before it has
//! heard anything, or a command before the cycle froze).

use std::io::Write;

use apportion_core::netsim::CycleOutcome;
use apportion_core::scenario::{DayTrace, DispatchRecord};
use sha2::{Digest, Sha256};

pub const FORMAT: &str = "apportion-trace v1";

pub const COLUMNS: [&str; 15] = [
    "cycle", "hours", "step", "time_s", "node", "r", "s", "ratio", "z", "y", "theta", "frozen", "pi_star",
    "delivered", "kind",
];

/// Bit-exact float text; empty for NaN.
pub fn float(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.16e}")
    }
}

struct Row<'a> {
    record: &'a DispatchRecord,
    step: u64,
    node: usize,
    r: f64,
    s: f64,
    z: f64,
    y: f64,
    theta: u64,
    frozen: bool,
    kind: &'static str,
}

fn fields(row: &Row, consensus_period_s: f64, last: bool) -> Vec<String> {
    let ratio = if row.s == 0.0 { f64::NAN } else { row.r / row.s };
    let (pi, delivered) = if last && row.frozen {
        (float(row.record.commands[row.node]), float(row.record.delivered[row.node]))
    } else {
        (String::new(), String::new())
    };
    vec![
        row.record.cycle.to_string(),
        float(row.record.hours),
        row.step.to_string(),
        float(row.record.hours * 3600.0 + row.step as f64 * consensus_period_s),
        (row.node + 1).to_string(),
        float(row.r),
        float(row.s),
        float(ratio),
        float(row.z),
        float(row.y),
        row.theta.to_string(),
        u8::from(row.frozen).to_string(),
        pi,
        delivered,
        row.kind.to_string(),
    ]
}

fn cycle_rows<'a>(record: &'a DispatchRecord, outcome: &'a CycleOutcome, verbose: bool) -> Vec<(Row<'a>, bool)> {
    if verbose {
        let last_step = outcome.steps;
        outcome
            .trace
            .states
            .iter()
            .map(|s| {
                let row = Row {
                    record,
                    step: s.step,
                    node: s.node.0,
                    r: s.r,
                    s: s.s,
                    z: s.z,
                    y: s.y,
                    theta: s.theta,
                    frozen: s.frozen,
                    kind: "state",
                };
                (row, s.step == last_step)
            })
            .collect()
    } else {
        outcome
            .trace
            .checkpoints
            .iter()
            .map(|c| {
                let row = Row {
                    record,
                    step: c.step,
                    node: c.node.0,
                    r: c.r,
                    s: c.s,
                    z: c.z,
                    y: c.y,
                    theta: c.theta,
                    frozen: c.frozen,
                    kind: "checkpoint",
                };
                (row, c.frozen)
            })
            .collect()
    }
}

/// Renders the whole day as trace bytes.
pub fn render(day: &DayTrace, consensus_period_s: f64, verbose: bool) -> csv::Result<Vec<u8>> {
    let mut out = Vec::new();
    writeln!(out, "# {FORMAT} columns={}", COLUMNS.join(","))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for record in &day.dispatches {
        let Some(outcome) = record.outcome() else { continue };
        for (row, last) in cycle_rows(record, outcome, verbose) {
            w.write_record(fields(&row, consensus_period_s, last))?;
        }
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_every_bit() {
        for v in [0.1, 1.0 / 3.0, 6001.0, -2.5e-300, f64::MAX] {
            let text = float(v);
            assert_eq!(text.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{text}");
        }
        assert_eq!(float(f64::NAN), "");
        assert_eq!(float(f64::INFINITY), "inf");
    }

    #[test]
    fn hash_is_hex_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
