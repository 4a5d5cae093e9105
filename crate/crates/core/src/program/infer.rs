use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Program, RuleSet};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::quantise::quantise_row;

/// Predicted class, or `None` when no output rule fired (abstention).
pub type Prediction = Option<usize>;

/// A rule that fired: index of its rule set and of the rule within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiredRule {
    pub set: usize,
    pub rule: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDecision {
    pub prediction: Prediction,
    /// Every class whose output literal was derived true, ascending.
    pub candidates: Vec<usize>,
    /// Fired rules across all layers, in rule-set then rule order.
    pub fired: Vec<FiredRule>,
}

impl ClassDecision {
    pub fn is_abstain(&self) -> bool {
        self.prediction.is_none()
    }

    pub fn is_conflict(&self) -> bool {
        self.candidates.len() > 1
    }
}

/// Derives the next layer's bits: a kernel is `1` iff some rule concluding it fires.
pub fn infer_layer(bits: &[i8], rs: &RuleSet, n_out: usize) -> Result<Vec<i8>> {
    let mut out = vec![-1i8; n_out];
    for rule in &rs.rules {
        check_rule(rule, bits.len(), n_out)?;
        if rule.fires(bits) {
            for c in rule.consequents() {
                out[c.target] = 1;
            }
        }
    }
    Ok(out)
}

fn check_rule(rule: &super::Rule, n_in: usize, n_out: usize) -> Result<()> {
    if let Some(l) = rule.antecedents().iter().find(|l| l.kernel >= n_in) {
        return Err(Error::OutOfRange {
            index: l.kernel,
            limit: n_in,
        });
    }
    if let Some(c) = rule.consequents().iter().find(|c| c.target >= n_out) {
        return Err(Error::OutOfRange {
            index: c.target,
            limit: n_out,
        });
    }
    Ok(())
}

/// Runs the program on the entry layer's bits.
///
/// When several classes are derived, the class with the highest pooled rule
/// precision wins, then the higher pooled support, then the lower index.
pub fn infer(p: &Program, entry_bits: &[i8]) -> Result<ClassDecision> {
    infer_with(p, &p.class_confidence(), entry_bits)
}

fn infer_with(p: &Program, confidence: &[(usize, usize)], entry_bits: &[i8]) -> Result<ClassDecision> {
    let entry = p.entry_layer();
    if entry_bits.len() != entry.n_kernels {
        return Err(Error::ShapeMismatch(format!(
            "{} bits for entry layer {:?} of {} kernels",
            entry_bits.len(),
            entry.name,
            entry.n_kernels
        )));
    }
    let mut fired = Vec::new();
    let mut bits = entry_bits.to_vec();
    for (s, rs) in p.rule_sets().iter().enumerate() {
        let n_out = p.layers()[s + 1].n_kernels;
        let mut next = vec![-1i8; n_out];
        for (r, rule) in rs.rules.iter().enumerate() {
            check_rule(rule, bits.len(), n_out)?;
            if rule.fires(&bits) {
                fired.push(FiredRule { set: s, rule: r });
                for c in rule.consequents() {
                    next[c.target] = 1;
                }
            }
        }
        bits = next;
    }
    let candidates: Vec<usize> = (0..bits.len()).filter(|&c| bits[c] == 1).collect();
    let prediction = candidates
        .iter()
        .copied()
        .min_by(|&a, &b| compare_classes(confidence[a], confidence[b]).then(a.cmp(&b)));
    Ok(ClassDecision {
        prediction,
        candidates,
        fired,
    })
}

/// `Less` means `a` is preferred.
fn compare_classes(a: (usize, usize), b: (usize, usize)) -> Ordering {
    let (pa, sa) = (a.0 as u128, a.1 as u128);
    let (pb, sb) = (b.0 as u128, b.1 as u128);
    // precision pa/sa vs pb/sb, descending
    (pb * sa).cmp(&(pa * sb)).then(sb.cmp(&sa))
}

/// Quantises each sample of `split` at the entry layer with the program's
/// stored thresholds and runs inference.
pub fn predict_dataset(p: &Program, d: &Dataset, split: &str) -> Result<Vec<Prediction>> {
    predict_rows(p, d, d.split(split)?)
}

pub fn predict_rows(p: &Program, d: &Dataset, rows: &[usize]) -> Result<Vec<Prediction>> {
    Ok(decide_rows(p, d, rows)?
        .into_iter()
        .map(|c| c.prediction)
        .collect())
}

pub fn decide_rows(p: &Program, d: &Dataset, rows: &[usize]) -> Result<Vec<ClassDecision>> {
    let entry = p.entry_layer();
    let norms = d.norms(&entry.name)?;
    if norms.n_kernels() != p.thresholds().len() {
        return Err(Error::ShapeMismatch(format!(
            "dataset layer {:?} has {} kernels, program expects {}",
            entry.name,
            norms.n_kernels(),
            p.thresholds().len()
        )));
    }
    if let Some(&bad) = rows.iter().find(|&&i| i >= d.n_samples()) {
        return Err(Error::OutOfRange {
            index: bad,
            limit: d.n_samples(),
        });
    }
    let confidence = p.class_confidence();
    rows.par_iter()
        .map(|&i| {
            let bits = quantise_row(norms.row(i), p.thresholds())?;
            infer_with(p, &confidence, &bits)
        })
        .collect()
}

/// Entry-layer bits of one sample under the program's thresholds.
pub(crate) fn entry_bits(p: &Program, d: &Dataset, sample: usize) -> Result<Vec<i8>> {
    if sample >= d.n_samples() {
        return Err(Error::OutOfRange {
            index: sample,
            limit: d.n_samples(),
        });
    }
    quantise_row(d.norms(&p.entry_layer().name)?.row(sample), p.thresholds())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{ExtractionParams, LayerShape, Literal, Rule};
    use crate::quantise::ThresholdVector;

    fn single_layer(rules: Vec<Rule>, n_in: usize, classes: &[&str]) -> Program {
        Program::new(
            vec![
                LayerShape {
                    name: "conv13".into(),
                    n_kernels: n_in,
                },
                LayerShape {
                    name: "output".into(),
                    n_kernels: classes.len(),
                },
            ],
            ThresholdVector::new(vec![1.0; n_in]).unwrap(),
            classes.iter().map(|s| s.to_string()).collect(),
            vec![RuleSet::new("conv13", "output", rules)],
            ExtractionParams {
                depth: 5,
                alpha: 0.01,
                demand_driven: true,
            },
        )
        .unwrap()
    }

    // kernels: LW = 0, SG = 1
    #[test]
    fn street_rule_fires() {
        let rs = RuleSet::new(
            "conv13",
            "output",
            vec![Rule::implies(vec![Literal::pos(0), Literal::neg(1)], 2, 41, 39).unwrap()],
        );
        assert_eq!(infer_layer(&[1, -1], &rs, 3).unwrap(), vec![-1, -1, 1]);
        assert_eq!(infer_layer(&[1, 1], &rs, 3).unwrap(), vec![-1, -1, -1]);
    }

    #[test]
    fn repeated_conclusion_is_idempotent() {
        let rs = RuleSet::new(
            "a",
            "b",
            vec![
                Rule::implies(vec![Literal::pos(0)], 1, 2, 2).unwrap(),
                Rule::implies(vec![], 1, 2, 2).unwrap(),
            ],
        );
        assert_eq!(infer_layer(&[1], &rs, 2).unwrap(), vec![-1, 1]);
    }

    #[test]
    fn literal_out_of_range() {
        let rs = RuleSet::new(
            "a",
            "b",
            vec![Rule::implies(vec![Literal::pos(4)], 0, 1, 1).unwrap()],
        );
        assert!(matches!(infer_layer(&[1], &rs, 1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn abstains_when_nothing_fires() {
        let p = single_layer(
            vec![Rule::implies(vec![Literal::pos(0)], 0, 5, 5).unwrap()],
            2,
            &["desert", "street"],
        );
        let d = infer(&p, &[-1, -1]).unwrap();
        assert!(d.is_abstain());
        assert!(d.fired.is_empty());
        assert!(infer(&p, &[1]).is_err());
    }

    #[test]
    fn conflict_prefers_higher_precision() {
        // class 0 at 6/10, class 1 at 9/10; both fire on bit 0
        let p = single_layer(
            vec![
                Rule::implies(vec![Literal::pos(0)], 0, 10, 6).unwrap(),
                Rule::implies(vec![Literal::pos(0)], 1, 10, 9).unwrap(),
            ],
            1,
            &["a", "b"],
        );
        let d = infer(&p, &[1]).unwrap();
        assert_eq!(d.candidates, vec![0, 1]);
        assert_eq!(d.prediction, Some(1));
        assert_eq!(d.fired.len(), 2);
    }

    #[test]
    fn conflict_ties_break_on_support_then_index() {
        let p = single_layer(
            vec![
                Rule::implies(vec![], 0, 10, 5).unwrap(),
                Rule::implies(vec![], 1, 20, 10).unwrap(),
                Rule::implies(vec![], 2, 20, 10).unwrap(),
            ],
            1,
            &["a", "b", "c"],
        );
        assert_eq!(infer(&p, &[1]).unwrap().prediction, Some(1));
    }
}
