//! CSV and JSON result files.
//!
//! Rule CSV: one column per non-target variable (state name, or `*` for the
//! neutral gene), then a column named after the target holding the
//! consequent state, then `probability` (empty for impossible antecedents).

use serde::Serialize;

use crate::brute::{AntecedentScope, BruteForceReport};
use crate::error::{Error, Result};
use crate::ga::GaTrace;
use crate::network::BayesianNetwork;
use crate::rule::Rule;

pub const NEUTRAL: &str = "*";

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn write_rules_csv(net: &BayesianNetwork, target: usize, rules: &[(Rule, Option<f64>)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = (0..net.len())
        .filter(|&v| v != target)
        .map(|v| net.variable(v).name())
        .collect();
    header.push(net.variable(target).name());
    header.push("probability");
    w.write_record(&header).map_err(csv_err)?;
    for (rule, p) in rules {
        let mut row: Vec<String> = (0..net.len())
            .filter(|&v| v != target)
            .map(|v| match rule.genes()[v] {
                Some(s) => net.variable(v).states()[s].clone(),
                None => NEUTRAL.to_string(),
            })
            .collect();
        row.push(net.variable(target).states()[rule.target_state()].clone());
        row.push(p.map(|x| x.to_string()).unwrap_or_default());
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)
}

/// Prefixes the 1-based data row to an error message.
fn at_row(row: usize, e: Error) -> Error {
    match e {
        Error::Argument(m) => Error::Argument(format!("row {row}: {m}")),
        other => Error::Argument(format!("row {row}: {other}")),
    }
}

/// Reads rules back from the rule CSV. Column order may differ from the
/// writer's; errors name the 1-based data row.
pub fn read_rules_csv(net: &BayesianNetwork, target: usize, text: &str) -> Result<Vec<Rule>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = r.headers().map_err(csv_err)?.clone();
    let mut columns = Vec::with_capacity(headers.len());
    for h in headers.iter() {
        columns.push(match h {
            "probability" => None,
            name => Some(
                net.variable_id(name)
                    .ok_or_else(|| Error::Argument(format!("header: unknown variable `{name}`")))?,
            ),
        });
    }
    if !columns.contains(&Some(target)) {
        return Err(Error::Argument(format!(
            "header: missing target column `{}`",
            net.variable(target).name()
        )));
    }
    let mut rules = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| at_row(row, csv_err(e)))?;
        let mut genes = vec![None; net.len()];
        let mut target_state = None;
        for (field, col) in rec.iter().zip(&columns) {
            let Some(v) = *col else { continue };
            if v == target {
                target_state = Some(net.require_state(v, field).map_err(|e| at_row(row, e))?);
            } else if field != NEUTRAL {
                genes[v] = Some(net.require_state(v, field).map_err(|e| at_row(row, e))?);
            }
        }
        let ts = target_state.ok_or_else(|| Error::Argument(format!("row {row}: missing target state")))?;
        rules.push(Rule::new(net, target, ts, genes).map_err(|e| at_row(row, e))?);
    }
    Ok(rules)
}

pub fn write_trace_csv(trace: &GaTrace) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for rec in &trace.records {
        w.serialize(rec).map_err(csv_err)?;
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForceSummary {
    pub network: String,
    pub target: String,
    pub threshold: f64,
    pub scope: AntecedentScope,
    pub candidates: usize,
    pub zero_evidence: usize,
    pub rule_count: usize,
    pub average_probability: Option<f64>,
}

impl BruteForceSummary {
    pub fn new(net: &BayesianNetwork, report: &BruteForceReport) -> Self {
        BruteForceSummary {
            network: net.name().to_string(),
            target: net.variable(report.target).name().to_string(),
            threshold: report.threshold,
            scope: report.scope,
            candidates: report.candidates,
            zero_evidence: report.zero_evidence,
            rule_count: report.rule_count(),
            average_probability: report.average_probability(),
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}
