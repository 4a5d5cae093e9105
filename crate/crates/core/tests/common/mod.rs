#![allow(dead_code)]

use convlogic::dataset::Dataset;
use convlogic::synth::{generate_synthetic, PlantedLiteral as L, PlantedRule, SynthConfig};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rule(when: &[L], then: usize) -> PlantedRule {
    PlantedRule::new(when.to_vec(), then)
}

/// Three planted class rules over 12 kernels; unmatched samples go to class 2.
pub fn planted_config(n: usize, seed: u64) -> SynthConfig {
    SynthConfig::new(
        n,
        vec![12],
        3,
        seed,
        vec![vec![
            rule(&[L::pos(0), L::pos(1)], 0),
            rule(&[L::neg(0), L::pos(2)], 1),
            rule(&[L::pos(0), L::neg(1), L::pos(3)], 1),
        ]],
    )
}

pub fn planted(n: usize, seed: u64) -> Dataset {
    generate_synthetic(&planted_config(n, seed)).unwrap()
}

/// 12 input kernels, 8 planted hidden concepts, 3 classes.
pub fn two_boundary_config(n: usize, seed: u64) -> SynthConfig {
    SynthConfig::new(
        n,
        vec![12, 8],
        3,
        seed,
        vec![
            vec![
                rule(&[L::pos(0), L::pos(1)], 0),
                rule(&[L::neg(2), L::pos(3)], 1),
                rule(&[L::pos(4), L::neg(5)], 2),
                rule(&[L::pos(6), L::pos(7)], 3),
                rule(&[L::neg(8), L::pos(9)], 4),
                rule(&[L::pos(10), L::neg(11)], 5),
                rule(&[L::pos(0), L::neg(4)], 6),
                rule(&[L::pos(2), L::pos(6)], 7),
            ],
            vec![
                rule(&[L::pos(0), L::neg(1)], 0),
                rule(&[L::pos(2), L::neg(0)], 1),
                rule(&[L::pos(3)], 1),
            ],
        ],
    )
}

/// Plain f64 mean, summed in index order.
pub fn mean_f64(values: &[f32]) -> f64 {
    values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64
}

/// Neumaier-compensated mean, for checks against a higher-precision reference.
pub fn compensated_mean(values: &[f32]) -> f64 {
    let (mut sum, mut c) = (0f64, 0f64);
    for &v in values {
        let v = v as f64;
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    (sum + c) / values.len() as f64
}

/// Exhaustive best split: every kernel's weighted child gini as an exact
/// rational `Σ (n_c / N) · 2 p_c (1 - p_c)`; strict improvement over the
/// parent required, lowest index on ties.
pub fn oracle_best_split(features: &[Vec<bool>], target: &[bool]) -> Option<usize> {
    let n = target.len() as i64;
    if n < 2 {
        return None;
    }
    let gini = |pos: i64, tot: i64| -> Ratio<i64> {
        if tot == 0 {
            return Ratio::from_integer(0);
        }
        let p = Ratio::new(pos, tot);
        Ratio::from_integer(2) * p * (Ratio::from_integer(1) - p)
    };
    let pos = target.iter().filter(|&&t| t).count() as i64;
    let parent = gini(pos, n);
    let mut best: Option<(usize, Ratio<i64>)> = None;
    for k in 0..features[0].len() {
        let (mut nt, mut pt, mut nf, mut pf) = (0i64, 0i64, 0i64, 0i64);
        for (row, &t) in features.iter().zip(target) {
            if row[k] {
                nt += 1;
                pt += t as i64;
            } else {
                nf += 1;
                pf += t as i64;
            }
        }
        let w = Ratio::new(nt, n) * gini(pt, nt) + Ratio::new(nf, n) * gini(pf, nf);
        if w >= parent {
            continue;
        }
        match best {
            Some((_, b)) if w >= b => {}
            _ => best = Some((k, w)),
        }
    }
    best.map(|(k, _)| k)
}

pub fn random_bools(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    (0..n).map(|_| rng.gen()).collect()
}

pub fn bits_of(assignment: u32, k: usize) -> Vec<i8> {
    (0..k).map(|i| if assignment >> i & 1 == 1 { 1 } else { -1 }).collect()
}

use convlogic::program::{Consequent, ExtractionParams, LayerShape, Literal, Program, Rule, RuleSet};
use convlogic::quantise::ThresholdVector;

fn random_stats(rng: &mut ChaCha8Rng, target: usize) -> Consequent {
    let support = rng.gen_range(1..60);
    Consequent::new(target, support, rng.gen_range(1..=support)).unwrap()
}

/// Random rules shaped like extraction output: many siblings that differ in
/// one literal's polarity and shared bodies with different heads.
pub fn random_rules(rng: &mut ChaCha8Rng, n_in: usize, n_out: usize, n_rules: usize, max_body: usize) -> Vec<Rule> {
    let mut rules: Vec<Rule> = Vec::new();
    while rules.len() < n_rules {
        let roll: f64 = rng.gen();
        let rule = if roll < 0.4 && !rules.is_empty() {
            let base = &rules[rng.gen_range(0..rules.len())];
            let mut ants = base.antecedents().to_vec();
            if ants.is_empty() {
                continue;
            }
            let i = rng.gen_range(0..ants.len());
            ants[i] = ants[i].negated();
            let cons = base.consequents().iter().map(|c| random_stats(rng, c.target)).collect();
            Rule::new(ants, cons).unwrap()
        } else if roll < 0.55 && !rules.is_empty() {
            let base = &rules[rng.gen_range(0..rules.len())];
            let t = rng.gen_range(0..n_out);
            Rule::new(base.antecedents().to_vec(), vec![random_stats(rng, t)]).unwrap()
        } else {
            let len = rng.gen_range(0..=max_body.min(n_in));
            let mut kernels: Vec<usize> = (0..n_in).collect();
            for i in 0..len {
                let j = rng.gen_range(i..n_in);
                kernels.swap(i, j);
            }
            let ants = kernels[..len]
                .iter()
                .map(|&k| if rng.gen() { Literal::pos(k) } else { Literal::neg(k) })
                .collect();
            let t = rng.gen_range(0..n_out);
            Rule::new(ants, vec![random_stats(rng, t)]).unwrap()
        };
        rules.push(rule);
    }
    rules
}

/// A random program: one boundary, or two with a hidden layer.
pub fn random_program(rng: &mut ChaCha8Rng, n_in: usize, n_rules: usize, hidden: Option<usize>) -> Program {
    let classes = vec!["a".to_string(), "b".to_string(), "c".to_string()];
    let mut layers = vec![LayerShape { name: "in".into(), n_kernels: n_in }];
    let mut sets = Vec::new();
    match hidden {
        Some(h) => {
            layers.push(LayerShape { name: "hid".into(), n_kernels: h });
            sets.push(RuleSet::new("in", "hid", random_rules(rng, n_in, h, n_rules, 4)));
            sets.push(RuleSet::new("hid", "output", random_rules(rng, h, 3, n_rules / 2 + 1, 3)));
        }
        None => sets.push(RuleSet::new("in", "output", random_rules(rng, n_in, 3, n_rules, 5))),
    }
    layers.push(LayerShape { name: "output".into(), n_kernels: 3 });
    let thresholds = ThresholdVector::new((0..n_in).map(|_| rng.gen_range(0.0f32..10.0)).collect()).unwrap();
    Program::new(
        layers,
        thresholds,
        classes,
        sets,
        ExtractionParams { depth: 5, alpha: 0.01, demand_driven: true },
    )
    .unwrap()
}
