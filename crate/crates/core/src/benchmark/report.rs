use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{io_err, BenchError, BenchTrace, PLOT_CSV, SUMMARY_CSV, SUMMARY_TXT};
use crate::objective::ObjectiveSpec;

/// Marker for a mean over an empty population.
pub const UNDEFINED: &str = "NA";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub objective: String,
    /// "single" or "multi".
    pub group: String,
    /// "loose" or "strict".
    pub threshold: String,
    /// Signed property list, e.g. `+LogP-TPSA`.
    pub label: String,
    pub n: usize,
    pub valid: usize,
    pub hits: usize,
    pub aborted: usize,
    /// Mean similarity with invalid outcomes counted as 0.
    pub sim_all: Option<f64>,
    pub sim_valid: Option<f64>,
    pub sim_hits: Option<f64>,
}

impl SummaryRow {
    pub fn validity_pct(&self) -> f64 {
        pct(self.valid, self.n)
    }

    pub fn hit_pct(&self) -> f64 {
        pct(self.hits, self.n)
    }
}

fn pct(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * k as f64 / n as f64
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn fmt_sim(x: Option<f64>) -> String {
    x.map_or_else(|| UNDEFINED.to_string(), |v| format!("{v:.4}"))
}

/// Metric rows in `objectives` order, folded from the trace stream.
pub fn aggregate(traces: &[BenchTrace], objectives: &[String]) -> Vec<SummaryRow> {
    objectives
        .iter()
        .map(|name| {
            let group: Vec<&BenchTrace> = traces.iter().filter(|t| &t.objective == name).collect();
            let (arity, threshold, label) = match group.first() {
                Some(t) => spec_labels(&t.trace.objective),
                None => ObjectiveSpec::resolve(name)
                    .map(|s| spec_labels(&s))
                    .unwrap_or_else(|_| ("multi".into(), "strict".into(), name.clone())),
            };
            let similarity = |t: &BenchTrace| t.trace.outcome.similarity.unwrap_or(0.0);
            let all: Vec<f64> = group.iter().map(|t| if t.counted_valid() { similarity(t) } else { 0.0 }).collect();
            let valid: Vec<f64> = group.iter().filter(|t| t.counted_valid()).map(|t| similarity(t)).collect();
            let hits: Vec<f64> = group.iter().filter(|t| t.counted_hit()).map(|t| similarity(t)).collect();
            SummaryRow {
                objective: name.clone(),
                group: arity,
                threshold,
                label,
                n: group.len(),
                valid: valid.len(),
                hits: hits.len(),
                aborted: group.iter().filter(|t| t.trace.aborted.is_some()).count(),
                sim_all: mean(&all),
                sim_valid: mean(&valid),
                sim_hits: mean(&hits),
            }
        })
        .collect()
}

fn spec_labels(spec: &ObjectiveSpec) -> (String, String, String) {
    (spec.arity_label().to_string(), spec.threshold_label().to_string(), spec.direction_label())
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "objective,group,threshold,n,valid,hits,aborted,validity_pct,hit_pct,sim_all,sim_valid,sim_hits\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:.1},{:.1},{},{},{}",
            r.objective,
            r.group,
            r.threshold,
            r.n,
            r.valid,
            r.hits,
            r.aborted,
            r.validity_pct(),
            r.hit_pct(),
            fmt_sim(r.sim_all),
            fmt_sim(r.sim_valid),
            fmt_sim(r.sim_hits)
        );
    }
    out
}

/// Rows grouped single/multi, then by signed property list with loose rows
/// above strict ones. Similarity is over valid outcomes.
pub fn summary_text(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    for (group, title) in [("single", "Single-property objectives"), ("multi", "Multi-property objectives")] {
        let members: Vec<&SummaryRow> = rows.iter().filter(|r| r.group == group).collect();
        if members.is_empty() {
            continue;
        }
        let _ = writeln!(out, "{title}");
        let _ = writeln!(out, "{:<16} {:<6} {:>5} {:>9} {:>7} {:>10}", "objective", "thr", "n", "valid %", "hit %", "similarity");
        let mut labels: Vec<&str> = Vec::new();
        for r in &members {
            if !labels.contains(&r.label.as_str()) {
                labels.push(&r.label);
            }
        }
        for label in labels {
            let mut first = true;
            for thr in ["loose", "strict"] {
                for r in members.iter().filter(|r| r.label == label && r.threshold == thr) {
                    let _ = writeln!(
                        out,
                        "{:<16} {:<6} {:>5} {:>9.1} {:>7.1} {:>10}",
                        if first { label } else { "" },
                        thr,
                        r.n,
                        r.validity_pct(),
                        r.hit_pct(),
                        fmt_sim(r.sim_valid)
                    );
                    first = false;
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn plot_csv(rows: &[SummaryRow], mode: &str) -> String {
    let mut out = String::from("objective,mode,hit,similarity\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.1},{}", r.objective, mode, r.hit_pct(), fmt_sim(r.sim_valid));
    }
    out
}

pub fn write_reports(dir: &Path, rows: &[SummaryRow], mode: &str) -> Result<(), BenchError> {
    for (name, body) in [
        (SUMMARY_CSV, summary_csv(rows)),
        (SUMMARY_TXT, summary_text(rows)),
        (PLOT_CSV, plot_csv(rows, mode)),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(objective: &str, label: &str, threshold: &str, n: usize, valid: usize, hits: usize) -> SummaryRow {
        SummaryRow {
            objective: objective.into(),
            group: "single".into(),
            threshold: threshold.into(),
            label: label.into(),
            n,
            valid,
            hits,
            aborted: 0,
            sim_all: None,
            sim_valid: None,
            sim_hits: None,
        }
    }

    #[test]
    fn metric_arithmetic() {
        let r = row("x", "+LogP", "loose", 4, 3, 2);
        assert_eq!(r.validity_pct(), 75.0);
        assert_eq!(r.hit_pct(), 50.0);
        assert!(summary_csv(&[r]).lines().nth(1).unwrap().ends_with("75.0,50.0,NA,NA,NA"));
    }

    #[test]
    fn text_table_puts_strict_under_loose() {
        let rows = [
            row("single/strict/+LogP", "+LogP", "strict", 1, 1, 1),
            row("single/loose/+LogP", "+LogP", "loose", 1, 1, 1),
        ];
        let text = summary_text(&rows);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[2].starts_with("+LogP") && lines[2].contains("loose"));
        assert!(lines[3].contains("strict"));
        assert_eq!(summary_csv(&rows).lines().count(), 3);
        assert_eq!(plot_csv(&rows, "agentdrug").lines().next().unwrap(), "objective,mode,hit,similarity");
    }
}
