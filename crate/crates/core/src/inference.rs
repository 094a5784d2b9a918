//! Exact inference on discrete networks.
//!
//! [`posterior`] runs variable elimination over the ancestral closure of the
//! query, eliminating hidden variables in greedy min-degree order (ties by
//! ascending id). [`enumerate_posterior`] sums the full joint and serves as
//! the independent oracle for tests.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use rand::Rng;

use crate::error::{Error, Result};
use crate::network::{Assignment, BayesianNetwork};

/// `P(target = state | evidence)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Query {
    pub target: usize,
    pub state: usize,
    pub evidence: Assignment,
}

impl Query {
    pub fn new(target: usize, state: usize, evidence: Assignment) -> Self {
        Query {
            target,
            state,
            evidence,
        }
    }

    fn validate(&self, net: &BayesianNetwork) -> Result<()> {
        check_target(net, self.target, &self.evidence)?;
        if self.state >= net.cardinality(self.target) {
            return Err(Error::Argument(format!(
                "state index {} invalid for `{}`",
                self.state,
                net.variable(self.target).name()
            )));
        }
        Ok(())
    }
}

fn check_target(net: &BayesianNetwork, target: usize, evidence: &Assignment) -> Result<()> {
    if target >= net.len() {
        return Err(Error::Argument(format!("target id {target} out of range")));
    }
    net.check_assignment(evidence)?;
    if evidence.get(target).is_some() {
        return Err(Error::Argument(format!(
            "target `{}` also appears in the evidence",
            net.variable(target).name()
        )));
    }
    Ok(())
}

/// Product of CPT entries for a full assignment.
pub fn joint_probability(net: &BayesianNetwork, full: &Assignment) -> Result<f64> {
    net.check_assignment(full)?;
    if !full.is_full() {
        return Err(Error::Argument("joint probability needs a full assignment".into()));
    }
    let state = |v: usize| full.get(v).expect("full assignment");
    Ok((0..net.len()).map(|v| net.cpt_row(v, state)[state(v)]).product())
}

pub fn query(net: &BayesianNetwork, q: &Query) -> Result<f64> {
    q.validate(net)?;
    Ok(posterior(net, q.target, &q.evidence)?[q.state])
}

pub fn enumerate_query(net: &BayesianNetwork, q: &Query) -> Result<f64> {
    q.validate(net)?;
    Ok(enumerate_posterior(net, q.target, &q.evidence)?[q.state])
}

/// Full-joint enumeration of `P(target | evidence)`.
pub fn enumerate_posterior(net: &BayesianNetwork, target: usize, evidence: &Assignment) -> Result<Vec<f64>> {
    check_target(net, target, evidence)?;
    let n = net.len();
    let mut states = vec![0usize; n];
    for (v, s) in evidence.iter() {
        states[v] = s;
    }
    let free: Vec<usize> = (0..n).filter(|&v| evidence.get(v).is_none()).collect();
    let mut acc = vec![0.0; net.cardinality(target)];
    loop {
        let full = Assignment::full(states.clone());
        acc[states[target]] += joint_probability(net, &full)?;
        // odometer over the free variables, last one fastest
        let mut k = free.len();
        loop {
            if k == 0 {
                return normalize(acc);
            }
            k -= 1;
            let v = free[k];
            states[v] += 1;
            if states[v] < net.cardinality(v) {
                break;
            }
            states[v] = 0;
        }
    }
}

fn normalize(mut acc: Vec<f64>) -> Result<Vec<f64>> {
    let z: f64 = acc.iter().sum();
    if z <= 0.0 {
        return Err(Error::ZeroEvidence);
    }
    for x in &mut acc {
        *x /= z;
    }
    Ok(acc)
}

#[derive(Debug, Clone)]
struct Factor {
    /// Ascending variable ids; the last one varies fastest in `values`.
    vars: Vec<usize>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Factor {
    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.vars.len()];
        for k in (0..self.vars.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.cards[k + 1];
        }
        strides
    }

    /// Stride of each of `vars` inside this factor (0 when absent).
    fn strides_in(&self, vars: &[usize]) -> Vec<usize> {
        let own = self.strides();
        vars.iter()
            .map(|v| self.vars.iter().position(|w| w == v).map_or(0, |k| own[k]))
            .collect()
    }

    fn from_cpt(net: &BayesianNetwork, child: usize, evidence: &Assignment) -> Factor {
        let mut scope: Vec<usize> = net.parents(child).to_vec();
        scope.push(child);
        let mut vars: Vec<usize> = scope.iter().copied().filter(|&v| evidence.get(v).is_none()).collect();
        vars.sort_unstable();
        let cards: Vec<usize> = vars.iter().map(|&v| net.cardinality(v)).collect();
        let size: usize = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut digits = vec![0usize; vars.len()];
        for _ in 0..size {
            let state_of = |v: usize| match evidence.get(v) {
                Some(s) => s,
                None => digits[vars.iter().position(|&w| w == v).expect("in scope")],
            };
            values.push(net.cpt_row(child, state_of)[state_of(child)]);
            increment(&mut digits, &cards);
        }
        Factor { vars, cards, values }
    }

    fn product(&self, other: &Factor) -> Factor {
        let vars: Vec<usize> = self
            .vars
            .iter()
            .chain(&other.vars)
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let cards: Vec<usize> = vars
            .iter()
            .map(|v| {
                self.vars
                    .iter()
                    .position(|w| w == v)
                    .map(|k| self.cards[k])
                    .unwrap_or_else(|| other.cards[other.vars.iter().position(|w| w == v).unwrap()])
            })
            .collect();
        let sa = self.strides_in(&vars);
        let sb = other.strides_in(&vars);
        let size: usize = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut digits = vec![0usize; vars.len()];
        let (mut ia, mut ib) = (0usize, 0usize);
        for _ in 0..size {
            values.push(self.values[ia] * other.values[ib]);
            // increment, keeping both linear indices in step
            let mut k = vars.len();
            while k > 0 {
                k -= 1;
                digits[k] += 1;
                ia += sa[k];
                ib += sb[k];
                if digits[k] < cards[k] {
                    break;
                }
                ia -= sa[k] * cards[k];
                ib -= sb[k] * cards[k];
                digits[k] = 0;
            }
        }
        Factor { vars, cards, values }
    }

    fn sum_out(&self, v: usize) -> Factor {
        let k = self.vars.iter().position(|&w| w == v).expect("variable in factor");
        let strides = self.strides();
        let (stride, card) = (strides[k], self.cards[k]);
        let outer = self.values.len() / (stride * card);
        let mut values = Vec::with_capacity(outer * stride);
        for o in 0..outer {
            for i in 0..stride {
                let base = o * stride * card + i;
                values.push((0..card).map(|j| self.values[base + j * stride]).sum());
            }
        }
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(k);
        cards.remove(k);
        Factor { vars, cards, values }
    }
}

fn increment(digits: &mut [usize], cards: &[usize]) {
    for k in (0..digits.len()).rev() {
        digits[k] += 1;
        if digits[k] < cards[k] {
            return;
        }
        digits[k] = 0;
    }
}

/// `P(target | evidence)` for every target state, by variable elimination.
pub fn posterior(net: &BayesianNetwork, target: usize, evidence: &Assignment) -> Result<Vec<f64>> {
    check_target(net, target, evidence)?;
    let relevant = net.ancestral_closure(std::iter::once(target).chain(evidence.iter().map(|(v, _)| v)));

    let mut factors: Vec<Factor> = (0..net.len())
        .filter(|&v| relevant[v])
        .map(|v| Factor::from_cpt(net, v, evidence))
        .collect();

    // Interaction graph of the evidence-reduced factors (moral graph restricted
    // to the unobserved relevant variables).
    let mut neighbors: HashMap<usize, BTreeSet<usize>> = HashMap::new();
    for f in &factors {
        for &a in &f.vars {
            let entry = neighbors.entry(a).or_default();
            entry.extend(f.vars.iter().copied().filter(|&b| b != a));
        }
    }
    let mut hidden: BTreeSet<usize> = neighbors.keys().copied().filter(|&v| v != target).collect();

    while let Some(&v) = hidden
        .iter()
        .min_by_key(|&&v| (neighbors.get(&v).map_or(0, BTreeSet::len), v))
    {
        hidden.remove(&v);
        let (touching, rest): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.vars.contains(&v));
        factors = rest;
        let mut iter = touching.into_iter();
        if let Some(first) = iter.next() {
            let merged = iter.fold(first, |acc, f| acc.product(&f));
            factors.push(merged.sum_out(v));
        }
        let adj = neighbors.remove(&v).unwrap_or_default();
        for &a in &adj {
            let entry = neighbors.get_mut(&a).expect("symmetric");
            entry.remove(&v);
            entry.extend(adj.iter().copied().filter(|&b| b != a));
        }
    }

    let card = net.cardinality(target);
    let mut acc = vec![1.0; card];
    for f in &factors {
        match f.vars.as_slice() {
            [] => acc.iter_mut().for_each(|x| *x *= f.values[0]),
            [v] if *v == target => acc.iter_mut().zip(&f.values).for_each(|(x, y)| *x *= y),
            _ => unreachable!("only the target may remain after elimination"),
        }
    }
    normalize(acc)
}

/// Prior marginal of every variable.
pub fn marginals(net: &BayesianNetwork) -> Vec<Vec<f64>> {
    let empty = Assignment::empty(net.len());
    (0..net.len())
        .map(|v| posterior(net, v, &empty).expect("empty evidence has probability one"))
        .collect()
}

/// Draws one full assignment, each variable from its CPT row given the
/// already-sampled parents, in topological order.
pub fn ancestral_sample<R: Rng + ?Sized>(net: &BayesianNetwork, rng: &mut R) -> Assignment {
    let mut states = vec![0usize; net.len()];
    for &v in net.topological_order() {
        let row = net.cpt_row(v, |p| states[p]);
        states[v] = sample_categorical(row, rng);
    }
    Assignment::full(states)
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    // u landed in rounding slack past the last cumulative value
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Evidence → posterior, `None` for impossible evidence.
type Memo = HashMap<Vec<Option<usize>>, Option<Arc<[f64]>>>;

/// Memoized posteriors for one target variable, keyed by evidence.
///
/// Safe to share between threads; a cache hit returns exactly what a fresh
/// [`posterior`] call would.
pub struct PosteriorCache<'a> {
    net: &'a BayesianNetwork,
    target: usize,
    memo: RwLock<Memo>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<'a> PosteriorCache<'a> {
    pub fn new(net: &'a BayesianNetwork, target: usize) -> Self {
        PosteriorCache {
            net,
            target,
            memo: RwLock::new(HashMap::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn network(&self) -> &'a BayesianNetwork {
        self.net
    }

    pub fn target(&self) -> usize {
        self.target
    }

    /// Target distribution given the evidence, or `ZeroEvidence`.
    pub fn distribution(&self, evidence: &[Option<usize>]) -> Result<Arc<[f64]>> {
        if let Some(hit) = self.memo.read().expect("cache lock").get(evidence) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return hit.clone().ok_or(Error::ZeroEvidence);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let computed = match posterior(self.net, self.target, &Assignment::from_values(evidence.to_vec())) {
            Ok(d) => Some(Arc::<[f64]>::from(d)),
            Err(Error::ZeroEvidence) => None,
            Err(e) => return Err(e),
        };
        self.memo
            .write()
            .expect("cache lock")
            .insert(evidence.to_vec(), computed.clone());
        computed.ok_or(Error::ZeroEvidence)
    }

    pub fn probability(&self, evidence: &[Option<usize>], state: usize) -> Result<f64> {
        Ok(self.distribution(evidence)?[state])
    }

    /// `(hits, misses)` so far.
    pub fn stats(&self) -> (usize, usize) {
        (self.hits.load(Ordering::Relaxed), self.misses.load(Ordering::Relaxed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bif::load_bundled;
    use crate::network::{Cpt, Variable};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn root(p_yes: f64) -> BayesianNetwork {
        BayesianNetwork::new(
            "root",
            vec![Variable::new(0, "R", vec!["yes".into(), "no".into()]).unwrap()],
            vec![Cpt::new(0, vec![], vec![vec![p_yes, 1.0 - p_yes]])],
        )
        .unwrap()
    }

    #[test]
    fn single_factor_joint() {
        let net = root(0.01);
        assert_eq!(joint_probability(&net, &Assignment::full(vec![0])).unwrap(), 0.01);
        assert!(joint_probability(&net, &Assignment::empty(1)).is_err());
    }

    #[test]
    fn root_prior_with_empty_evidence() {
        let net = load_bundled("asia").unwrap();
        let asia = net.require_variable("asia").unwrap();
        let p = query(&net, &Query::new(asia, 0, Assignment::empty(net.len()))).unwrap();
        assert_eq!(p, 0.01);
    }

    #[test]
    fn asia_all_no_joint_matches_hand_product() {
        let net = load_bundled("asia").unwrap();
        let all_no = Assignment::full(vec![1; 8]);
        // asia, tub|asia=no, smoke, lung|smoke=no, bronc|smoke=no,
        // either|lung=no,tub=no, xray|either=no, dysp|bronc=no,either=no
        let hand = 0.99 * 0.99 * 0.5 * 0.99 * 0.7 * 1.0 * 0.95 * 0.9;
        assert!((joint_probability(&net, &all_no).unwrap() - hand).abs() < 1e-15);
    }

    #[test]
    fn target_in_evidence_rejected() {
        let net = load_bundled("asia").unwrap();
        let ev = Assignment::empty(8).with(7, 0);
        assert!(matches!(posterior(&net, 7, &ev), Err(Error::Argument(_))));
    }

    #[test]
    fn contradictory_evidence_is_zero_evidence() {
        let net = load_bundled("asia").unwrap();
        let v = |n| net.require_variable(n).unwrap();
        // tub = yes forces either = yes
        let ev = Assignment::empty(8).with(v("tub"), 0).with(v("either"), 1);
        assert_eq!(posterior(&net, v("dysp"), &ev), Err(Error::ZeroEvidence));
        assert_eq!(enumerate_posterior(&net, v("dysp"), &ev), Err(Error::ZeroEvidence));
    }

    #[test]
    fn deterministic_network_samples_the_unique_assignment() {
        let b = |id, n: &str| Variable::new(id, n, vec!["a".into(), "b".into()]).unwrap();
        let net = BayesianNetwork::new(
            "det",
            vec![b(0, "X"), b(1, "Y")],
            vec![
                Cpt::new(0, vec![], vec![vec![0.0, 1.0]]),
                Cpt::new(1, vec![0], vec![vec![0.0, 1.0], vec![1.0, 0.0]]),
            ],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            assert_eq!(ancestral_sample(&net, &mut rng), Assignment::full(vec![1, 0]));
        }
    }

    #[test]
    fn cache_agrees_with_direct_posterior() {
        let net = load_bundled("survey").unwrap();
        let t = net.require_variable("T").unwrap();
        let cache = PosteriorCache::new(&net, t);
        let ev = vec![Some(1), None, Some(0), None, Some(1), None];
        let a = cache.distribution(&ev).unwrap();
        let b = cache.distribution(&ev).unwrap();
        assert_eq!(&*a, &*b);
        assert_eq!(
            &*a,
            posterior(&net, t, &Assignment::from_values(ev)).unwrap().as_slice()
        );
        assert_eq!(cache.stats(), (1, 1));
    }
}
