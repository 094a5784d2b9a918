//! Sampling-based checks against binomial bounds. Every test uses a fixed
//! seed, so outcomes are reproducible.

use chainminer::bif::load_bundled;
use chainminer::ga::{mutation_count, new_rule, structural_mutation, tournament_select, MutationKind, RuleFactory};
use chainminer::inference::{ancestral_sample, enumerate_posterior, marginals};
use chainminer::rule::Chromosome;
use chainminer::Assignment;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn asia_root_frequency() {
    let net = load_bundled("asia").unwrap();
    let asia = net.require_variable("asia").unwrap();
    let no = net.require_state(asia, "no").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 100_000;
    let hits = (0..n)
        .filter(|_| ancestral_sample(&net, &mut rng).get(asia) == Some(no))
        .count();
    let freq = hits as f64 / n as f64;
    assert!((freq - 0.99).abs() <= 0.01, "{freq}");
}

#[test]
fn empirical_marginals_within_three_sigma() {
    for name in ["asia", "survey"] {
        let net = load_bundled(name).unwrap();
        let n = 100_000;
        let mut counts: Vec<Vec<usize>> = (0..net.len()).map(|v| vec![0; net.cardinality(v)]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..n {
            for (v, s) in ancestral_sample(&net, &mut rng).iter() {
                counts[v][s] += 1;
            }
        }
        let fast = marginals(&net);
        for v in 0..net.len() {
            let exact = enumerate_posterior(&net, v, &Assignment::empty(net.len())).unwrap();
            for s in 0..net.cardinality(v) {
                assert!((fast[v][s] - exact[s]).abs() < 1e-12);
                let freq = counts[v][s] as f64 / n as f64;
                let bound = 3.0 * binomial_sigma(exact[s], n);
                assert!(
                    (freq - exact[s]).abs() <= bound,
                    "{name} {} state {s}: {freq} vs {}",
                    net.variable(v).name(),
                    exact[s]
                );
            }
        }
    }
}

#[test]
fn initial_rules_follow_the_network() {
    let net = load_bundled("asia").unwrap();
    let dysp = net.require_variable("dysp").unwrap();
    let asia = net.require_variable("asia").unwrap();
    let no = net.require_state(asia, "no").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (mut set, mut hits) = (0, 0);
    for _ in 0..20_000 {
        let r = new_rule(&net, dysp, &mut rng, 0.5);
        if let Some(s) = r.genes()[asia] {
            set += 1;
            hits += usize::from(s == no);
        }
    }
    let freq = hits as f64 / set as f64;
    assert!((freq - 0.99).abs() <= 0.01, "{freq}");
    // the mask neutralizes about half the genes
    assert!((set as f64 / 20_000.0 - 0.5).abs() <= 3.0 * binomial_sigma(0.5, 20_000));
}

#[test]
fn tournament_is_uniform_on_equal_fitness() {
    let fitness = [0.5; 10];
    let draws = 10_000;
    let mut counts = [0usize; 10];
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..draws {
        counts[tournament_select(&fitness, 2, &mut rng)] += 1;
    }
    let p = 0.1;
    let bound = 3.0 * binomial_sigma(p, draws);
    for (i, c) in counts.iter().enumerate() {
        let freq = *c as f64 / draws as f64;
        assert!((freq - p).abs() <= bound, "index {i}: {freq}");
    }
}

#[test]
fn insert_and_delete_are_equally_likely() {
    let net = load_bundled("asia").unwrap();
    let f = RuleFactory::new(&net, 7, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let c = Chromosome::new((0..5).map(|_| f.new_rule(&mut rng)).collect()).unwrap();
    let n = 10_000;
    let inserts = (0..n)
        .filter(|_| structural_mutation(&c, &f, 30, &mut rng).1 == MutationKind::Insert)
        .count();
    let freq = inserts as f64 / n as f64;
    assert!((freq - 0.5).abs() <= 3.0 * binomial_sigma(0.5, n), "{freq}");
}

#[test]
fn mutation_count_distribution() {
    // P(max(1, round|z|) = 1) = P(|z| < 1.5) = 2Φ(1.5) − 1
    let p_one = 0.866_385_597_462_284;
    // P(count = 2) = P(1.5 <= |z| < 2.5) = 2(Φ(2.5) − Φ(1.5))
    let p_two = 0.121_195_071_886_164;
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut counts = [0usize; 8];
    for _ in 0..n {
        counts[mutation_count(&mut rng).min(7)] += 1;
    }
    assert_eq!(counts[0], 0);
    for (k, p) in [(1, p_one), (2, p_two)] {
        let freq = counts[k] as f64 / n as f64;
        assert!((freq - p).abs() <= 3.0 * binomial_sigma(p, n), "count {k}: {freq}");
    }
}
