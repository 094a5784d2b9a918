//! Exhaustive rule enumeration baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::posterior;
use crate::network::{Assignment, BayesianNetwork};
use crate::rule::Rule;

/// Absolute slack of the inclusive threshold test. Posteriors that equal the
/// threshold in exact arithmetic can land a few ulps below it depending on
/// elimination order; they are retained.
pub const THRESHOLD_SLACK: f64 = 1e-12;

/// Which variables may appear in an antecedent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AntecedentScope {
    /// Every non-target variable.
    #[default]
    AllVariables,
    /// Only the target's Markov blanket. Variables outside it cannot change
    /// `P(Ψ|Φ)` once the blanket is fixed, so this drops redundant variants.
    MarkovBlanket,
}

impl std::str::FromStr for AntecedentScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "all-variables" => Ok(AntecedentScope::AllVariables),
            "blanket" | "markov-blanket" => Ok(AntecedentScope::MarkovBlanket),
            _ => Err(Error::Argument(format!(
                "unknown antecedent scope `{s}` (all, blanket)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceReport {
    pub target: usize,
    pub threshold: f64,
    pub scope: AntecedentScope,
    /// Retained rules in enumeration order.
    pub rules: Vec<(Rule, f64)>,
    /// `(Φ-assignment, Ψ)` pairs considered, including impossible ones.
    pub candidates: usize,
    /// Candidates skipped because the antecedent has zero probability.
    pub zero_evidence: usize,
}

impl BruteForceReport {
    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    /// `None` when nothing passed the threshold.
    pub fn average_probability(&self) -> Option<f64> {
        average_probability(&self.rules).ok()
    }
}

/// Arithmetic mean of the rule probabilities.
pub fn average_probability(rules: &[(Rule, f64)]) -> Result<f64> {
    if rules.is_empty() {
        return Err(Error::EmptySet("no rules to average".into()));
    }
    Ok(rules.iter().map(|(_, p)| p).sum::<f64>() / rules.len() as f64)
}

/// Closed-form candidate count: (Π (s_i + 1) − 1) · s_target over the
/// variables in scope.
pub fn candidate_count(net: &BayesianNetwork, target: usize, scope: AntecedentScope) -> Result<usize> {
    let vars = scope_variables(net, target, scope)?;
    let assignments: usize = vars.iter().map(|&v| net.cardinality(v) + 1).product();
    Ok((assignments - 1) * net.cardinality(target))
}

fn scope_variables(net: &BayesianNetwork, target: usize, scope: AntecedentScope) -> Result<Vec<usize>> {
    if target >= net.len() {
        return Err(Error::Argument(format!("target id {target} out of range")));
    }
    Ok(match scope {
        AntecedentScope::AllVariables => (0..net.len()).filter(|&v| v != target).collect(),
        AntecedentScope::MarkovBlanket => net.markov_blanket(target)?.into_iter().collect(),
    })
}

/// Enumerates every non-empty antecedent over the scope and every target
/// state, keeping rules with `P(Ψ|Φ) >= threshold` (up to [`THRESHOLD_SLACK`]).
pub fn enumerate_all_rules(
    net: &BayesianNetwork,
    target: usize,
    threshold: f64,
    scope: AntecedentScope,
) -> Result<BruteForceReport> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Argument(format!(
            "threshold must lie in [0, 1], got {threshold}"
        )));
    }
    let vars = scope_variables(net, target, scope)?;
    // digit 0 = absent, d > 0 = state d − 1
    let radix: Vec<usize> = vars.iter().map(|&v| net.cardinality(v) + 1).collect();
    let total: usize = radix.iter().product();
    let card = net.cardinality(target);

    let per_index: Vec<(Vec<(Rule, f64)>, bool)> = (1..total)
        .into_par_iter()
        .map(|mut code| {
            let mut genes = vec![None; net.len()];
            for k in (0..vars.len()).rev() {
                let d = code % radix[k];
                code /= radix[k];
                if d > 0 {
                    genes[vars[k]] = Some(d - 1);
                }
            }
            let evidence = Assignment::from_values(genes.clone());
            match posterior(net, target, &evidence) {
                Ok(dist) => {
                    let kept = (0..card)
                        .filter(|&s| dist[s] >= threshold - THRESHOLD_SLACK)
                        .map(|s| (Rule::from_parts(target, s, genes.clone()), dist[s]))
                        .collect();
                    (kept, false)
                }
                Err(Error::ZeroEvidence) => (Vec::new(), true),
                Err(e) => panic!("enumerated evidence invalid: {e}"),
            }
        })
        .collect();

    let zero_evidence = per_index.iter().filter(|(_, z)| *z).count() * card;
    Ok(BruteForceReport {
        target,
        threshold,
        scope,
        rules: per_index.into_iter().flat_map(|(r, _)| r).collect(),
        candidates: (total - 1) * card,
        zero_evidence,
    })
}
