//! Rules, chromosomes and their fitness.
//!
//! A rule holds one gene per network variable. `None` is the neutral
//! "don't care" gene; the target variable's slot is always `None` and its
//! value lives in `target_state` instead.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::inference::{posterior, PosteriorCache};
use crate::network::{Assignment, BayesianNetwork};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rule {
    target: usize,
    target_state: usize,
    genes: Vec<Option<usize>>,
}

impl Rule {
    pub fn new(net: &BayesianNetwork, target: usize, target_state: usize, genes: Vec<Option<usize>>) -> Result<Self> {
        if target >= net.len() {
            return Err(Error::Argument(format!("target id {target} out of range")));
        }
        if genes.len() != net.len() {
            return Err(Error::Argument(format!(
                "rule has {} genes, network has {} variables",
                genes.len(),
                net.len()
            )));
        }
        if target_state >= net.cardinality(target) {
            return Err(Error::Argument(format!("target state {target_state} out of range")));
        }
        if genes[target].is_some() {
            return Err(Error::Argument("the target slot of a rule must stay neutral".into()));
        }
        for (v, g) in genes.iter().enumerate() {
            if let Some(s) = *g {
                if s >= net.cardinality(v) {
                    return Err(Error::Argument(format!(
                        "state {s} invalid for `{}`",
                        net.variable(v).name()
                    )));
                }
            }
        }
        Ok(Rule {
            target,
            target_state,
            genes,
        })
    }

    /// Builds a rule without validation. Callers guarantee the invariants.
    pub(crate) fn from_parts(target: usize, target_state: usize, genes: Vec<Option<usize>>) -> Self {
        debug_assert!(genes[target].is_none());
        Rule {
            target,
            target_state,
            genes,
        }
    }

    /// Parses `a=x and b=y => t=z`. The antecedent may be empty or `TRUE`.
    pub fn parse(net: &BayesianNetwork, text: &str) -> Result<Self> {
        let (lhs, rhs) = text
            .split_once("=>")
            .ok_or_else(|| Error::Argument(format!("rule `{text}` lacks `=>`")))?;
        let (tvar, tstate) = parse_literal(net, rhs.trim())?;
        let mut genes = vec![None; net.len()];
        let lhs = lhs.trim();
        if !lhs.is_empty() && lhs != "TRUE" {
            for lit in lhs.split(" and ") {
                let (v, s) = parse_literal(net, lit.trim())?;
                if genes[v].is_some() {
                    return Err(Error::Argument(format!(
                        "`{}` appears twice in `{text}`",
                        net.variable(v).name()
                    )));
                }
                genes[v] = Some(s);
            }
        }
        Rule::new(net, tvar, tstate, genes)
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn target_state(&self) -> usize {
        self.target_state
    }

    pub fn genes(&self) -> &[Option<usize>] {
        &self.genes
    }

    pub(crate) fn genes_mut(&mut self) -> &mut [Option<usize>] {
        &mut self.genes
    }

    pub(crate) fn set_target_state(&mut self, s: usize) {
        self.target_state = s;
    }

    /// Non-neutral antecedent genes as `(variable, state)`.
    pub fn antecedent(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.genes.iter().enumerate().filter_map(|(v, g)| g.map(|s| (v, s)))
    }

    /// Number of non-neutral genes in the antecedent.
    pub fn specificity(&self) -> usize {
        self.genes.iter().filter(|g| g.is_some()).count()
    }

    pub fn evidence(&self) -> Assignment {
        Assignment::from_values(self.genes.clone())
    }

    /// `P(consequent | antecedent)`, or `ZeroEvidence`.
    pub fn probability(&self, net: &BayesianNetwork) -> Result<f64> {
        Ok(posterior(net, self.target, &self.evidence())?[self.target_state])
    }

    pub fn display<'a>(&'a self, net: &'a BayesianNetwork) -> RuleDisplay<'a> {
        RuleDisplay { rule: self, net }
    }
}

fn parse_literal(net: &BayesianNetwork, lit: &str) -> Result<(usize, usize)> {
    let (name, state) = lit
        .split_once('=')
        .ok_or_else(|| Error::Argument(format!("`{lit}` is not of the form var=state")))?;
    let v = net.require_variable(name.trim())?;
    let s = net.require_state(v, state.trim())?;
    Ok((v, s))
}

/// Renders `asia=no and either=yes => dysp=yes`.
pub struct RuleDisplay<'a> {
    rule: &'a Rule,
    net: &'a BayesianNetwork,
}

impl fmt::Display for RuleDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lits: Vec<String> = self
            .rule
            .antecedent()
            .map(|(v, s)| {
                let var = self.net.variable(v);
                format!("{}={}", var.name(), var.states()[s])
            })
            .collect();
        let lhs = if lits.is_empty() {
            "TRUE".to_string()
        } else {
            lits.join(" and ")
        };
        let t = self.net.variable(self.rule.target);
        write!(f, "{lhs} => {}={}", t.name(), t.states()[self.rule.target_state])
    }
}

/// A GA individual: a non-empty, variable-length rule set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Chromosome {
    rules: Vec<Rule>,
}

impl Chromosome {
    pub fn new(rules: Vec<Rule>) -> Result<Self> {
        if rules.is_empty() {
            return Err(Error::Argument("a chromosome needs at least one rule".into()));
        }
        Ok(Chromosome { rules })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub(crate) fn rules_mut(&mut self) -> &mut Vec<Rule> {
        &mut self.rules
    }

    pub fn into_rules(self) -> Vec<Rule> {
        self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Distinct rules in canonical (sorted) order.
    pub fn unique_rules(&self) -> Vec<&Rule> {
        self.rules.iter().collect::<BTreeSet<_>>().into_iter().collect()
    }
}

/// β and γ of the generality term, plus the target variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessParams {
    pub beta: f64,
    pub gamma: f64,
    pub target: usize,
}

impl FitnessParams {
    pub fn new(beta: f64, gamma: f64, target: usize) -> Result<Self> {
        let p = FitnessParams { beta, gamma, target };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!(
                "gamma must be a finite value >= 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Result of scoring one rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleFit {
    pub value: f64,
    /// `P(Ψ|Φ)`, absent when the antecedent has zero probability.
    pub probability: Option<f64>,
    /// Set when `T_i = 0` and `β = 0` leave the generality term undefined.
    pub degenerate: bool,
}

fn generality(specificity: usize, p: &FitnessParams) -> Option<f64> {
    let base = specificity as f64 + p.beta;
    if base == 0.0 {
        return None;
    }
    Some(1.0 / base.powf(p.gamma))
}

fn score(rule: &Rule, p: &FitnessParams, probability: Option<f64>) -> RuleFit {
    match generality(rule.specificity(), p) {
        None => RuleFit {
            value: 0.0,
            probability,
            degenerate: true,
        },
        Some(g) => RuleFit {
            value: probability.map_or(0.0, |pr| g * pr),
            probability,
            degenerate: false,
        },
    }
}

/// `(1 / (T_i + β)^γ) · P(Ψ|Φ)`; zero when the antecedent is impossible.
pub fn rule_fit(rule: &Rule, net: &BayesianNetwork, p: &FitnessParams) -> RuleFit {
    let probability = match rule.probability(net) {
        Ok(x) => Some(x),
        Err(Error::ZeroEvidence) => None,
        Err(e) => panic!("rule invalid for network: {e}"),
    };
    score(rule, p, probability)
}

/// Balance-weighted sum of `rule_fit` over the distinct rules, given any
/// per-rule scorer. Sums in canonical rule order so the result does not
/// depend on rule order in the chromosome.
fn balanced_sum(c: &Chromosome, mut fit: impl FnMut(&Rule) -> f64) -> f64 {
    let unique = c.unique_rules();
    let n = unique.len() as f64;
    let mut per_class: BTreeMap<usize, usize> = BTreeMap::new();
    for r in &unique {
        *per_class.entry(r.target_state).or_default() += 1;
    }
    unique
        .iter()
        .map(|r| ((n - per_class[&r.target_state] as f64) / n).sqrt() * fit(r))
        .sum()
}

/// Chromosome fitness: Σ sqrt((N − N_i)/N) · fit(R_i) over distinct rules.
pub fn chromosome_fitness(c: &Chromosome, net: &BayesianNetwork, p: &FitnessParams) -> f64 {
    balanced_sum(c, |r| rule_fit(r, net, p).value)
}

/// Fitness evaluation backed by a posterior cache, used by the GA.
pub struct Scorer<'a> {
    cache: PosteriorCache<'a>,
    params: FitnessParams,
}

impl<'a> Scorer<'a> {
    pub fn new(net: &'a BayesianNetwork, params: FitnessParams) -> Self {
        Scorer {
            cache: PosteriorCache::new(net, params.target),
            params,
        }
    }

    pub fn network(&self) -> &'a BayesianNetwork {
        self.cache.network()
    }

    pub fn params(&self) -> &FitnessParams {
        &self.params
    }

    pub fn cache(&self) -> &PosteriorCache<'a> {
        &self.cache
    }

    pub fn probability(&self, rule: &Rule) -> Option<f64> {
        match self.cache.probability(rule.genes(), rule.target_state) {
            Ok(x) => Some(x),
            Err(Error::ZeroEvidence) => None,
            Err(e) => panic!("rule invalid for network: {e}"),
        }
    }

    pub fn rule_fit(&self, rule: &Rule) -> RuleFit {
        score(rule, &self.params, self.probability(rule))
    }

    pub fn fitness(&self, c: &Chromosome) -> f64 {
        balanced_sum(c, |r| self.rule_fit(r).value)
    }
}
