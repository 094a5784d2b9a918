//! Genetic rule extraction: BN-guided initialization, tournament selection,
//! structural crossover and mutation over rule sets, μ+λ survival, and a
//! local search over the rules inside the best chromosomes.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{ancestral_sample, marginals, sample_categorical};
use crate::network::BayesianNetwork;
use crate::rule::{Chromosome, FitnessParams, Rule, Scorer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub pop_size: usize,
    pub gen_max: usize,
    /// Fraction of the population handed to local search each generation.
    pub alpha: f64,
    pub gen_max_local: usize,
    pub tournament_size: usize,
    /// Chance that a sampled antecedent gene is replaced by the neutral gene.
    pub mask_prob: f64,
    pub max_rules: usize,
    pub init_rules_range: (usize, usize),
    /// Parent pairs bred per generation; half the population by default.
    pub pairs_per_generation: usize,
    pub seed: u64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            pop_size: 50,
            gen_max: 200,
            alpha: 0.1,
            gen_max_local: 10,
            tournament_size: 2,
            mask_prob: 0.5,
            max_rules: 6,
            init_rules_range: (2, 6),
            pairs_per_generation: 25,
            seed: 0,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.pop_size < 2 {
            return fail(format!("pop_size must be >= 2, got {}", self.pop_size));
        }
        if self.gen_max < 1 {
            return fail("gen_max must be >= 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if self.gen_max_local < 1 {
            return fail("gen_max_local must be >= 1".into());
        }
        if self.tournament_size < 2 || self.tournament_size > self.pop_size {
            return fail(format!(
                "tournament_size must lie in [2, pop_size], got {}",
                self.tournament_size
            ));
        }
        if !(0.0..=1.0).contains(&self.mask_prob) {
            return fail(format!("mask_prob must lie in [0, 1], got {}", self.mask_prob));
        }
        if self.max_rules < 1 {
            return fail("max_rules must be >= 1".into());
        }
        let (lo, hi) = self.init_rules_range;
        if lo < 1 || lo > hi || hi > self.max_rules {
            return fail(format!(
                "init_rules_range [{lo}, {hi}] must satisfy 1 <= lo <= hi <= max_rules ({})",
                self.max_rules
            ));
        }
        if self.pairs_per_generation < 1 {
            return fail("pairs_per_generation must be >= 1".into());
        }
        FitnessParams {
            beta: self.beta,
            gamma: self.gamma,
            target: 0,
        }
        .validate()
    }

    pub fn fitness_params(&self, target: usize) -> FitnessParams {
        FitnessParams {
            beta: self.beta,
            gamma: self.gamma,
            target,
        }
    }

    pub fn local_search_count(&self) -> usize {
        ((self.alpha * self.pop_size as f64).ceil() as usize).clamp(1, self.pop_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_size: usize,
}

/// Per-generation statistics. Generation 0 is the initial population.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaTrace {
    pub records: Vec<GenerationRecord>,
}

impl GaTrace {
    pub fn is_nondecreasing(&self) -> bool {
        self.records.windows(2).all(|w| w[1].best_fitness >= w[0].best_fitness)
    }

    /// Generation of the last strict increase of the best fitness (0 if none).
    pub fn last_improvement(&self) -> usize {
        self.records
            .windows(2)
            .rev()
            .find(|w| w[1].best_fitness > w[0].best_fitness)
            .map(|w| w[1].generation)
            .unwrap_or(0)
    }
}

/// Samples new rules and gene values from the network's distribution.
pub struct RuleFactory<'a> {
    net: &'a BayesianNetwork,
    target: usize,
    mask_prob: f64,
    marginals: Vec<Vec<f64>>,
}

impl<'a> RuleFactory<'a> {
    pub fn new(net: &'a BayesianNetwork, target: usize, mask_prob: f64) -> Self {
        RuleFactory {
            net,
            target,
            mask_prob,
            marginals: marginals(net),
        }
    }

    pub fn new_rule<R: Rng + ?Sized>(&self, rng: &mut R) -> Rule {
        new_rule(self.net, self.target, rng, self.mask_prob)
    }

    /// Fresh value for slot `var`: neutral with `mask_prob`, otherwise a
    /// state drawn from the variable's marginal. The target slot always gets
    /// a state.
    fn resample<R: Rng + ?Sized>(&self, var: usize, rng: &mut R) -> Option<usize> {
        let masked = rng.random_bool(self.mask_prob);
        if var != self.target && masked {
            None
        } else {
            Some(sample_categorical(&self.marginals[var], rng))
        }
    }
}

/// One rule from an ancestral sample: the consequent is the sampled target
/// state and each antecedent gene is neutralized with probability `mask_prob`.
pub fn new_rule<R: Rng + ?Sized>(net: &BayesianNetwork, target: usize, rng: &mut R, mask_prob: f64) -> Rule {
    let sample = ancestral_sample(net, rng);
    let genes = (0..net.len())
        .map(|v| {
            let masked = rng.random_bool(mask_prob);
            if v == target || masked {
                None
            } else {
                sample.get(v)
            }
        })
        .collect();
    Rule::from_parts(target, sample.get(target).expect("full sample"), genes)
}

pub fn initialize_population<R: Rng + ?Sized>(
    factory: &RuleFactory<'_>,
    cfg: &GaConfig,
    rng: &mut R,
) -> Vec<Chromosome> {
    let (lo, hi) = cfg.init_rules_range;
    (0..cfg.pop_size)
        .map(|_| {
            let n = rng.random_range(lo..=hi);
            let rules = (0..n).map(|_| factory.new_rule(rng)).collect();
            Chromosome::new(rules).expect("lo >= 1")
        })
        .collect()
}

/// Best of `k` distinct uniformly drawn indices; ties go to the contestant
/// drawn first, so equal fitness means uniform selection.
pub fn tournament_select<R: Rng + ?Sized>(fitnesses: &[f64], k: usize, rng: &mut R) -> usize {
    assert!(!fitnesses.is_empty() && k >= 1 && k <= fitnesses.len());
    // `index::sample` returns the indices in random order
    index::sample(rng, fitnesses.len(), k)
        .into_iter()
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if fitnesses[b] >= fitnesses[i] => Some(b),
            _ => Some(i),
        })
        .expect("k >= 1")
}

/// Pools both parents' rules, shuffles, and splits ⌈n/2⌉ / ⌊n/2⌋.
pub fn structural_crossover<R: Rng + ?Sized>(
    p1: &Chromosome,
    p2: &Chromosome,
    rng: &mut R,
) -> (Chromosome, Chromosome) {
    let mut pool: Vec<Rule> = p1.rules().iter().chain(p2.rules()).cloned().collect();
    pool.shuffle(rng);
    let second = pool.split_off(pool.len().div_ceil(2));
    (
        Chromosome::new(pool).expect("both parents non-empty"),
        Chromosome::new(second).expect("pool has at least two rules"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationKind {
    Insert,
    Delete,
}

/// `max(1, round(|z|))` with `z ~ N(0, 1)`.
pub fn mutation_count<R: Rng + ?Sized>(rng: &mut R) -> usize {
    let z: f64 = rng.sample(StandardNormal);
    (z.abs().round() as usize).max(1)
}

/// Inserts or deletes (equal odds) a normally distributed number of rules.
pub fn structural_mutation<R: Rng + ?Sized>(
    c: &Chromosome,
    factory: &RuleFactory<'_>,
    max_rules: usize,
    rng: &mut R,
) -> (Chromosome, MutationKind) {
    let kind = if rng.random_bool(0.5) {
        MutationKind::Insert
    } else {
        MutationKind::Delete
    };
    let count = mutation_count(rng);
    (apply_mutation(c, kind, count, factory, max_rules, rng), kind)
}

/// Applies a structural mutation of known kind and size, keeping the rule
/// count within `[1, max_rules]`.
pub fn apply_mutation<R: Rng + ?Sized>(
    c: &Chromosome,
    kind: MutationKind,
    count: usize,
    factory: &RuleFactory<'_>,
    max_rules: usize,
    rng: &mut R,
) -> Chromosome {
    let mut out = c.clone();
    let rules = out.rules_mut();
    match kind {
        MutationKind::Insert => {
            let room = max_rules.saturating_sub(rules.len());
            for _ in 0..count.min(room) {
                rules.push(factory.new_rule(rng));
            }
        }
        MutationKind::Delete => {
            let removable = rules.len().saturating_sub(1);
            for _ in 0..count.min(removable) {
                let at = rng.random_range(0..rules.len());
                rules.remove(at);
            }
        }
    }
    out
}

/// One-point crossover of two rules' gene vectors; each child keeps its
/// head parent's consequent.
fn one_point_crossover<R: Rng + ?Sized>(a: &Rule, b: &Rule, rng: &mut R) -> (Rule, Rule) {
    let n = a.genes().len();
    let cut = if n > 1 { rng.random_range(1..n) } else { 0 };
    let splice = |head: &Rule, tail: &Rule| {
        let genes = head.genes()[..cut]
            .iter()
            .chain(&tail.genes()[cut..])
            .copied()
            .collect();
        Rule::from_parts(head.target(), head.target_state(), genes)
    };
    (splice(a, b), splice(b, a))
}

/// Local crossover then local mutation of one chromosome.
fn local_variant<R: Rng + ?Sized>(c: &Chromosome, factory: &RuleFactory<'_>, rng: &mut R) -> Chromosome {
    let mut child = c.clone();
    let rules = child.rules_mut();
    if rules.len() >= 2 {
        let pair = index::sample(rng, rules.len(), 2);
        let (i, j) = (pair.index(0), pair.index(1));
        let (x, y) = one_point_crossover(&rules[i], &rules[j], rng);
        rules[i] = x;
        rules[j] = y;
    }
    let n = factory.net.len();
    for _ in 0..mutation_count(rng) {
        let r = rng.random_range(0..rules.len());
        let v = rng.random_range(0..n);
        let value = factory.resample(v, rng);
        if v == factory.target {
            rules[r].set_target_state(value.expect("target slot always sampled"));
        } else {
            rules[r].genes_mut()[v] = value;
        }
    }
    child
}

/// Runs `gen_max_local` rounds over `slice`, replacing a chromosome only when
/// its variant is strictly fitter. `fitness` stays aligned with `slice`.
pub fn local_search<R: Rng + ?Sized>(
    slice: &mut [Chromosome],
    fitness: &mut [f64],
    scorer: &Scorer<'_>,
    factory: &RuleFactory<'_>,
    gen_max_local: usize,
    rng: &mut R,
) {
    assert_eq!(slice.len(), fitness.len());
    for _ in 0..gen_max_local {
        for (c, f) in slice.iter_mut().zip(fitness.iter_mut()) {
            let child = local_variant(c, factory, rng);
            let cf = scorer.fitness(&child);
            if cf > *f {
                *c = child;
                *f = cf;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub best: Chromosome,
    pub best_fitness: f64,
    pub trace: GaTrace,
    /// Final population, best first.
    pub population: Vec<Chromosome>,
}

fn record(generation: usize, pop: &[Chromosome], fit: &[f64]) -> GenerationRecord {
    let best = (0..fit.len()).fold(0, |b, i| if fit[i] > fit[b] { i } else { b });
    GenerationRecord {
        generation,
        best_fitness: fit[best],
        mean_fitness: fit.iter().sum::<f64>() / fit.len() as f64,
        best_size: pop[best].len(),
    }
}

/// Runs the full evolutionary loop for `target`.
pub fn run(net: &BayesianNetwork, target: usize, cfg: &GaConfig) -> Result<GaOutcome> {
    cfg.validate()?;
    if target >= net.len() {
        return Err(Error::Argument(format!("target id {target} out of range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scorer = Scorer::new(net, cfg.fitness_params(target));
    let factory = RuleFactory::new(net, target, cfg.mask_prob);

    let mut pop = initialize_population(&factory, cfg, &mut rng);
    let mut fit: Vec<f64> = pop.iter().map(|c| scorer.fitness(c)).collect();
    let mut trace = GaTrace {
        records: vec![record(0, &pop, &fit)],
    };
    let top = cfg.local_search_count();

    for generation in 1..=cfg.gen_max {
        let mut children = Vec::with_capacity(2 * cfg.pairs_per_generation);
        for _ in 0..cfg.pairs_per_generation {
            let a = tournament_select(&fit, cfg.tournament_size, &mut rng);
            let b = tournament_select(&fit, cfg.tournament_size, &mut rng);
            let (c1, c2) = structural_crossover(&pop[a], &pop[b], &mut rng);
            for c in [c1, c2] {
                let (m, _) = structural_mutation(&c, &factory, cfg.max_rules, &mut rng);
                let f = scorer.fitness(&m);
                children.push((m, f));
            }
        }

        // local search on the best of parents ∪ children, then μ+λ survival;
        // the stable sorts keep earlier entries ahead of equally fit ones
        let mut merged: Vec<(Chromosome, f64)> = pop.into_iter().zip(fit).chain(children).collect();
        merged.sort_by(|x, y| y.1.total_cmp(&x.1));
        let (mut all, mut all_fit): (Vec<_>, Vec<_>) = merged.into_iter().unzip();
        local_search(
            &mut all[..top],
            &mut all_fit[..top],
            &scorer,
            &factory,
            cfg.gen_max_local,
            &mut rng,
        );
        let mut merged: Vec<(Chromosome, f64)> = all.into_iter().zip(all_fit).collect();
        merged.sort_by(|x, y| y.1.total_cmp(&x.1));
        merged.truncate(cfg.pop_size);
        (pop, fit) = merged.into_iter().unzip();

        trace.records.push(record(generation, &pop, &fit));
    }

    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&i, &j| fit[j].total_cmp(&fit[i]));
    let population: Vec<Chromosome> = order.iter().map(|&i| pop[i].clone()).collect();
    Ok(GaOutcome {
        best: population[0].clone(),
        best_fitness: fit[order[0]],
        trace,
        population,
    })
}

/// Distinct rules of a chromosome with `P(Ψ|Φ)`; impossible antecedents are
/// dropped.
pub fn extracted_rules(c: &Chromosome, net: &BayesianNetwork) -> Vec<(Rule, f64)> {
    c.unique_rules()
        .into_iter()
        .filter_map(|r| r.probability(net).ok().map(|p| (r.clone(), p)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bif::load_bundled;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn default_config_is_valid() {
        GaConfig::default().validate().unwrap();
    }

    #[test]
    fn config_validation() {
        let bad = [
            GaConfig {
                gen_max_local: 0,
                ..Default::default()
            },
            GaConfig {
                pop_size: 1,
                ..Default::default()
            },
            GaConfig {
                alpha: 0.0,
                ..Default::default()
            },
            GaConfig {
                tournament_size: 1,
                ..Default::default()
            },
            GaConfig {
                init_rules_range: (0, 3),
                ..Default::default()
            },
            GaConfig {
                init_rules_range: (3, 7),
                ..Default::default()
            },
            GaConfig {
                beta: 2.0,
                ..Default::default()
            },
            GaConfig {
                mask_prob: 1.5,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn config_json_fields_are_optional() {
        let cfg: GaConfig = serde_json::from_str(r#"{"pop_size": 20, "init_rules_range": [2, 4]}"#).unwrap();
        assert_eq!(cfg.pop_size, 20);
        assert_eq!(cfg.init_rules_range, (2, 4));
        assert_eq!(cfg.gen_max, 200);
        assert!(serde_json::from_str::<GaConfig>(r#"{"popsize": 20}"#).is_err());
    }

    #[test]
    fn mask_extremes() {
        let net = load_bundled("asia").unwrap();
        let dysp = net.require_variable("dysp").unwrap();
        let mut r = rng(1);
        for _ in 0..50 {
            assert_eq!(new_rule(&net, dysp, &mut r, 1.0).specificity(), 0);
            let full = new_rule(&net, dysp, &mut r, 0.0);
            assert_eq!(full.specificity(), 7);
            let mut states: Vec<usize> = full.genes().iter().map(|g| g.unwrap_or(0)).collect();
            states[dysp] = full.target_state();
            let p = crate::inference::joint_probability(&net, &crate::network::Assignment::full(states)).unwrap();
            assert!(p > 0.0);
        }
    }

    #[test]
    fn population_shape_and_determinism() {
        let net = load_bundled("asia").unwrap();
        let cfg = GaConfig::default();
        let factory = RuleFactory::new(&net, 7, cfg.mask_prob);
        let a = initialize_population(&factory, &cfg, &mut rng(9));
        let b = initialize_population(&factory, &cfg, &mut rng(9));
        assert_eq!(a.len(), 50);
        assert_eq!(a, b);
        assert!(a.iter().all(|c| (2..=6).contains(&c.len())));
    }

    #[test]
    fn tournament_over_everyone_picks_global_best() {
        let fit = [0.3, 0.95, 0.1, 0.9, 0.5];
        let mut r = rng(4);
        for _ in 0..100 {
            assert_eq!(tournament_select(&fit, fit.len(), &mut r), 1);
        }
        let tied = [0.9, 0.1, 0.9];
        let picks: std::collections::BTreeSet<usize> = (0..100).map(|_| tournament_select(&tied, 3, &mut r)).collect();
        assert_eq!(picks, [0, 2].into());
        assert_eq!(tournament_select(&[0.0, 1.0], 2, &mut r), 1);
        assert_eq!(tournament_select(&[1.0, 0.0], 2, &mut r), 0);
    }

    #[test]
    fn crossover_sizes() {
        let net = load_bundled("asia").unwrap();
        let f = RuleFactory::new(&net, 7, 0.5);
        let mut r = rng(2);
        let mk = |n: usize, r: &mut ChaCha8Rng| Chromosome::new((0..n).map(|_| f.new_rule(r)).collect()).unwrap();
        let (p3, p5) = (mk(3, &mut r), mk(5, &mut r));
        let (a, b) = structural_crossover(&p3, &p5, &mut r);
        assert_eq!((a.len(), b.len()), (4, 4));
        let (p2, p3) = (mk(2, &mut r), mk(3, &mut r));
        let (a, b) = structural_crossover(&p2, &p3, &mut r);
        assert_eq!((a.len(), b.len()), (3, 2));
    }

    #[test]
    fn mutation_clamps() {
        let net = load_bundled("asia").unwrap();
        let f = RuleFactory::new(&net, 7, 0.5);
        let mut r = rng(5);
        let one = Chromosome::new(vec![f.new_rule(&mut r)]).unwrap();
        assert_eq!(apply_mutation(&one, MutationKind::Delete, 3, &f, 30, &mut r).len(), 1);
        let three = Chromosome::new((0..3).map(|_| f.new_rule(&mut r)).collect()).unwrap();
        assert_eq!(apply_mutation(&three, MutationKind::Insert, 2, &f, 30, &mut r).len(), 5);
        assert_eq!(apply_mutation(&three, MutationKind::Insert, 2, &f, 4, &mut r).len(), 4);
    }

    #[test]
    fn local_mutation_keeps_target_slot_neutral() {
        let net = load_bundled("survey").unwrap();
        let t = net.require_variable("T").unwrap();
        let f = RuleFactory::new(&net, t, 0.5);
        let mut r = rng(6);
        let mut c = Chromosome::new((0..4).map(|_| f.new_rule(&mut r)).collect()).unwrap();
        for _ in 0..500 {
            c = local_variant(&c, &f, &mut r);
            for rule in c.rules() {
                Rule::new(&net, t, rule.target_state(), rule.genes().to_vec()).unwrap();
            }
        }
    }
}
