use std::collections::HashMap;

use super::{Consequent, Literal, Program, Rule, RuleSet};
use crate::error::Result;

/// Simplifies every rule set to a fixpoint; see [`simplify_rules`].
pub fn simplify(p: &Program) -> Result<Program> {
    let sets = p
        .rule_sets()
        .iter()
        .map(|rs| RuleSet::new(rs.from.clone(), rs.to.clone(), simplify_rules(&rs.rules)))
        .collect();
    p.with_rule_sets(sets)
}

/// Repeatedly applies two semantics-preserving merges until neither applies:
///
/// * `A ∧ B → C` and `A ∧ ¬B → C` become `A → C`;
/// * `A → B` and `A → C` become `A → B ∧ C`.
///
/// Per-consequent statistics are summed, so each consequent's pooled support
/// and positives over the rule set are unchanged. A merged rule takes the
/// position of the earlier of its sources.
pub fn simplify_rules(rules: &[Rule]) -> Vec<Rule> {
    let mut rules = rules.to_vec();
    loop {
        let mut changed = false;
        while let Some(next) = merge_complementary(&rules) {
            rules = next;
            changed = true;
        }
        if let Some(next) = merge_identical_antecedents(&rules) {
            rules = next;
            changed = true;
        }
        if !changed {
            return rules;
        }
    }
}

fn targets(r: &Rule) -> Vec<usize> {
    r.consequents().iter().map(|c| c.target).collect()
}

fn sum_consequents(a: &[Consequent], b: &[Consequent]) -> Vec<Consequent> {
    let mut out: Vec<Consequent> = a.to_vec();
    for c in b {
        match out.iter_mut().find(|o| o.target == c.target) {
            Some(o) => {
                o.support += c.support;
                o.positives += c.positives;
            }
            None => out.push(*c),
        }
    }
    out.sort();
    out
}

/// One pass of pairwise merges over disjoint complementary pairs.
fn merge_complementary(rules: &[Rule]) -> Option<Vec<Rule>> {
    type Key = (Vec<Literal>, Literal, Vec<usize>);
    let mut index: HashMap<Key, usize> = HashMap::new();
    let mut partner: Vec<Option<(usize, usize)>> = vec![None; rules.len()];
    let mut consumed = vec![false; rules.len()];
    let mut any = false;

    for (r, rule) in rules.iter().enumerate() {
        let ts = targets(rule);
        for (pos, &lit) in rule.antecedents().iter().enumerate() {
            if consumed[r] {
                break;
            }
            let mut rest = rule.antecedents().to_vec();
            rest.remove(pos);
            let flipped = (rest.clone(), lit.negated(), ts.clone());
            if let Some(&j) = index.get(&flipped) {
                if !consumed[j] {
                    consumed[j] = true;
                    consumed[r] = true;
                    partner[j] = Some((r, pos));
                    any = true;
                    break;
                }
            }
            index.entry((rest, lit, ts.clone())).or_insert(r);
        }
    }
    if !any {
        return None;
    }
    let mut out = Vec::with_capacity(rules.len());
    let mut dropped = vec![false; rules.len()];
    for &(r, _) in partner.iter().flatten() {
        dropped[r] = true;
    }
    for (j, rule) in rules.iter().enumerate() {
        if dropped[j] {
            continue;
        }
        match partner[j] {
            Some((r, pos)) => {
                let mut ants = rules[r].antecedents().to_vec();
                ants.remove(pos);
                out.push(Rule::from_parts_unchecked(
                    ants,
                    sum_consequents(rule.consequents(), rules[r].consequents()),
                ));
            }
            None => out.push(rule.clone()),
        }
    }
    Some(out)
}

fn merge_identical_antecedents(rules: &[Rule]) -> Option<Vec<Rule>> {
    let mut first: HashMap<&[Literal], usize> = HashMap::new();
    let mut out: Vec<Rule> = Vec::with_capacity(rules.len());
    let mut any = false;
    for rule in rules {
        match first.get(rule.antecedents()) {
            Some(&at) => {
                let merged = sum_consequents(out[at].consequents(), rule.consequents());
                out[at] = Rule::from_parts_unchecked(rule.antecedents().to_vec(), merged);
                any = true;
            }
            None => {
                first.insert(rule.antecedents(), out.len());
                out.push(rule.clone());
            }
        }
    }
    any.then_some(out)
}
