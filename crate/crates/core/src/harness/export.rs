use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::{ExperimentConfig, SweepResult};
use crate::trace::RunTrace;

/// Column order of trace CSV files.
pub const CSV_COLUMNS: [&str; 10] = [
    "round",
    "comm_rounds",
    "sent_numbers",
    "calls_full",
    "calls_stoch",
    "calls_comp",
    "calls_value",
    "subopt",
    "consensus_err",
    "wall_ms",
];

/// Writes the records of `trace` as CSV; an empty trace gives the header only.
pub fn write_csv<W: Write>(trace: &RunTrace, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for rec in &trace.records {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// A trace with the config that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceDocument {
    #[serde(default)]
    pub config: Option<ExperimentConfig>,
    pub trace: RunTrace,
}

pub fn write_json<W: Write>(doc: &TraceDocument, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, doc)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_json(path: &Path) -> Result<TraceDocument> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Writes `sweep.json` plus one CSV per successful cell and repeat into `dir`.
pub fn write_sweep(result: &SweepResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, cell) in result.cells.iter().enumerate() {
        if let Some(outcome) = &cell.outcome {
            for (j, trace) in outcome.traces.iter().enumerate() {
                let file = fs::File::create(dir.join(format!("cell{i:03}_rep{j:02}.csv")))?;
                write_csv(trace, std::io::BufWriter::new(file))?;
            }
        }
    }
    let file = fs::File::create(dir.join("sweep.json"))?;
    let mut out = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, result)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_sweep(dir: &Path) -> Result<SweepResult> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join("sweep.json"))?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::tests::SGD_CONFIG;
    use crate::harness::run_experiment;
    use crate::objectives::OracleCounts;
    use crate::trace::{StopReason, TraceRecord};

    fn small_trace() -> RunTrace {
        let mut t = RunTrace::new("sgd", 3, 2);
        t.records.push(TraceRecord {
            round: 0,
            comm_rounds: 0,
            sent_numbers: 0,
            calls_full: 0,
            calls_stoch: 0,
            calls_comp: 0,
            calls_value: 0,
            subopt: 0.5,
            consensus_err: 0.0,
            wall_ms: 0.0,
        });
        t.records.push(TraceRecord {
            round: 1,
            comm_rounds: 1,
            sent_numbers: 8,
            calls_full: 0,
            calls_stoch: 1,
            calls_comp: 0,
            calls_value: 0,
            subopt: 0.125,
            consensus_err: 1e-3,
            wall_ms: 0.0,
        });
        t.stop = Some(StopReason::RoundLimit);
        t
    }

    #[test]
    fn empty_trace_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&RunTrace::new("x", 0, 1), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", CSV_COLUMNS.join(",")));
    }

    #[test]
    fn golden_csv() {
        let mut buf = Vec::new();
        write_csv(&small_trace(), &mut buf).unwrap();
        let golden = "round,comm_rounds,sent_numbers,calls_full,calls_stoch,calls_comp,calls_value,subopt,consensus_err,wall_ms\n\
                      0,0,0,0,0,0,0,0.5,0.0,0.0\n\
                      1,1,8,0,1,0,0,0.125,0.001,0.0\n";
        assert_eq!(String::from_utf8(buf).unwrap(), golden);
    }

    #[test]
    fn json_round_trip() {
        let mut trace = small_trace();
        trace.ledger.node_mut(1).stochastic = 1;
        trace.meta.insert("chi".into(), 2.5);
        let doc = TraceDocument { config: Some(ExperimentConfig::from_json(SGD_CONFIG).unwrap()), trace };
        let mut buf = Vec::new();
        write_json(&doc, &mut buf).unwrap();
        let back: TraceDocument = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.trace.ledger.node(1), OracleCounts { stochastic: 1, ..Default::default() });
    }

    #[test]
    fn identical_runs_give_identical_bytes() {
        let cfg = ExperimentConfig::from_json(SGD_CONFIG).unwrap();
        let bytes = || {
            let out = run_experiment(&cfg).unwrap();
            let mut buf = Vec::new();
            write_csv(&out.traces[0], &mut buf).unwrap();
            buf
        };
        assert_eq!(bytes(), bytes());
    }
}
