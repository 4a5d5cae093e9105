//! Layered propositional logic programs over binarised kernels.
//!
//! A [`Program`] chains one [`RuleSet`] per layer boundary, starting at the
//! logical entry point (the only layer whose norms are quantised) and ending at
//! the `output` layer, whose kernels are the classes. Every kernel is false
//! unless some rule for it fires.

pub(crate) mod infer;
mod simplify;
pub(crate) mod text;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use infer::{decide_rows, infer, infer_layer, predict_dataset, predict_rows, ClassDecision, FiredRule, Prediction};
pub use simplify::{simplify, simplify_rules};
pub use text::{parse, serialise};

use crate::dataset::OUTPUT_LAYER;
use crate::error::{Error, Result};
use crate::quantise::ThresholdVector;

/// A kernel or its negation. The layer is implied by the enclosing [`RuleSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub kernel: usize,
    pub positive: bool,
}

impl Literal {
    pub fn pos(kernel: usize) -> Self {
        Self {
            kernel,
            positive: true,
        }
    }

    pub fn neg(kernel: usize) -> Self {
        Self {
            kernel,
            positive: false,
        }
    }

    pub fn negated(self) -> Self {
        Self {
            positive: !self.positive,
            ..self
        }
    }

    /// Positive literals need bit `1`, negative ones bit `-1`.
    #[inline]
    pub fn holds(self, bits: &[i8]) -> bool {
        (bits[self.kernel] == 1) == self.positive
    }
}

/// A positive consequent literal with the training statistics of the leaf (or
/// merged leaves) it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Consequent {
    pub target: usize,
    /// Training samples reaching the leaf.
    pub support: usize,
    /// Of those, samples where the target was true.
    pub positives: usize,
}

impl Consequent {
    pub fn new(target: usize, support: usize, positives: usize) -> Result<Self> {
        if positives == 0 || positives > support {
            return Err(Error::InvalidProgram(format!(
                "consequent {target}: need 1 <= positives ({positives}) <= support ({support})"
            )));
        }
        Ok(Self {
            target,
            support,
            positives,
        })
    }

    pub fn precision(&self) -> f64 {
        self.positives as f64 / self.support as f64
    }
}

/// A conjunction of antecedent literals implying one or more positive consequents.
///
/// Antecedents are kept sorted by kernel and consequents by target, so
/// structurally equal rules compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rule {
    antecedents: Vec<Literal>,
    consequents: Vec<Consequent>,
}

impl Rule {
    pub fn new(mut antecedents: Vec<Literal>, mut consequents: Vec<Consequent>) -> Result<Self> {
        antecedents.sort();
        if antecedents.windows(2).any(|w| w[0].kernel == w[1].kernel) {
            return Err(Error::InvalidProgram(
                "a kernel appears twice among the antecedents".into(),
            ));
        }
        if consequents.is_empty() {
            return Err(Error::InvalidProgram("rule without consequent".into()));
        }
        consequents.sort();
        if consequents.windows(2).any(|w| w[0].target == w[1].target) {
            return Err(Error::InvalidProgram("duplicate consequent".into()));
        }
        for c in &consequents {
            Consequent::new(c.target, c.support, c.positives)?;
        }
        Ok(Self {
            antecedents,
            consequents,
        })
    }

    /// Single-consequent rule.
    pub fn implies(antecedents: Vec<Literal>, target: usize, support: usize, positives: usize) -> Result<Self> {
        Self::new(antecedents, vec![Consequent::new(target, support, positives)?])
    }

    pub fn antecedents(&self) -> &[Literal] {
        &self.antecedents
    }

    pub fn consequents(&self) -> &[Consequent] {
        &self.consequents
    }

    pub fn concludes(&self, target: usize) -> bool {
        self.consequents.iter().any(|c| c.target == target)
    }

    #[inline]
    pub fn fires(&self, bits: &[i8]) -> bool {
        self.antecedents.iter().all(|l| l.holds(bits))
    }

    pub(crate) fn from_parts_unchecked(antecedents: Vec<Literal>, consequents: Vec<Consequent>) -> Self {
        Self {
            antecedents,
            consequents,
        }
    }
}

/// Rules relating the kernels of `from` to the kernels of `to`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub from: String,
    pub to: String,
    pub rules: Vec<Rule>,
}

impl RuleSet {
    pub fn new(from: impl Into<String>, to: impl Into<String>, rules: Vec<Rule>) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            rules,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub n_kernels: usize,
}

/// Extraction parameters recorded with a program.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionParams {
    pub depth: usize,
    pub alpha: f64,
    pub demand_driven: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Program {
    layers: Vec<LayerShape>,
    thresholds: ThresholdVector<f32>,
    class_names: Vec<String>,
    rule_sets: Vec<RuleSet>,
    params: ExtractionParams,
}

impl Program {
    /// `layers` runs from the entry point to `output`; `rule_sets[i]` maps
    /// `layers[i]` to `layers[i + 1]`.
    pub fn new(
        layers: Vec<LayerShape>,
        thresholds: ThresholdVector<f32>,
        class_names: Vec<String>,
        rule_sets: Vec<RuleSet>,
        params: ExtractionParams,
    ) -> Result<Self> {
        let p = Self {
            layers,
            thresholds,
            class_names,
            rule_sets,
            params,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProgram(m));
        if self.layers.len() < 2 {
            return bad("a program spans at least two layers".into());
        }
        let mut seen = BTreeSet::new();
        for l in &self.layers {
            if !is_identifier(&l.name) {
                return bad(format!("layer name {:?} is not a plain identifier", l.name));
            }
            if !seen.insert(&l.name) {
                return bad(format!("layer {:?} listed twice", l.name));
            }
            if l.n_kernels == 0 {
                return bad(format!("layer {:?} has no kernels", l.name));
            }
        }
        let out = self.layers.last().unwrap();
        if out.name != OUTPUT_LAYER {
            return bad(format!("last layer must be {OUTPUT_LAYER:?}"));
        }
        if out.n_kernels != self.class_names.len() || self.class_names.len() < 2 {
            return bad(format!(
                "{} classes for an output layer of {} kernels",
                self.class_names.len(),
                out.n_kernels
            ));
        }
        let mut names = BTreeSet::new();
        for c in &self.class_names {
            if !is_identifier(c) || c == "true" {
                return bad(format!("class name {c:?} is not a plain identifier"));
            }
            if !names.insert(c) {
                return bad(format!("duplicate class name {c:?}"));
            }
        }
        if self.thresholds.len() != self.layers[0].n_kernels {
            return bad(format!(
                "{} thresholds for entry layer {:?} of {} kernels",
                self.thresholds.len(),
                self.layers[0].name,
                self.layers[0].n_kernels
            ));
        }
        if self.rule_sets.len() != self.layers.len() - 1 {
            return bad(format!(
                "{} rule sets for {} layers",
                self.rule_sets.len(),
                self.layers.len()
            ));
        }
        for (i, rs) in self.rule_sets.iter().enumerate() {
            let (from, to) = (&self.layers[i], &self.layers[i + 1]);
            if rs.from != from.name || rs.to != to.name {
                return bad(format!(
                    "rule set {} -> {} does not chain between {} and {}",
                    rs.from, rs.to, from.name, to.name
                ));
            }
            for r in &rs.rules {
                if let Some(l) = r.antecedents.iter().find(|l| l.kernel >= from.n_kernels) {
                    return bad(format!("literal {}.{} out of range", from.name, l.kernel));
                }
                if let Some(c) = r.consequents.iter().find(|c| c.target >= to.n_kernels) {
                    return bad(format!("consequent {}.{} out of range", to.name, c.target));
                }
            }
        }
        if !(0.0..1.0).contains(&self.params.alpha) || self.params.depth == 0 {
            return bad("recorded extraction parameters out of range".into());
        }
        Ok(())
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    /// The logical entry point: the layer whose norms are quantised.
    pub fn entry_layer(&self) -> &LayerShape {
        &self.layers[0]
    }

    pub fn thresholds(&self) -> &ThresholdVector<f32> {
        &self.thresholds
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn rule_sets(&self) -> &[RuleSet] {
        &self.rule_sets
    }

    pub fn params(&self) -> ExtractionParams {
        self.params
    }

    pub fn n_rules(&self) -> usize {
        self.rule_sets.iter().map(|rs| rs.rules.len()).sum()
    }

    /// Total number of antecedent occurrences.
    pub fn size(&self) -> usize {
        self.rule_sets
            .iter()
            .flat_map(|rs| &rs.rules)
            .map(|r| r.antecedents.len())
            .sum()
    }

    /// Same program with different rule sets (layers and thresholds unchanged).
    pub fn with_rule_sets(&self, rule_sets: Vec<RuleSet>) -> Result<Self> {
        Self::new(
            self.layers.clone(),
            self.thresholds.clone(),
            self.class_names.clone(),
            rule_sets,
            self.params,
        )
    }

    /// Name used for a kernel of the given layer in rule text.
    pub fn kernel_name(&self, layer: usize, kernel: usize) -> String {
        if layer + 1 == self.layers.len() {
            self.class_names[kernel].clone()
        } else {
            format!("{}.{kernel}", self.layers[layer].name)
        }
    }

    /// Pooled training statistics `(positives, support)` of every class over
    /// all output rules concluding it. Simplification leaves these unchanged.
    pub fn class_confidence(&self) -> Vec<(usize, usize)> {
        let mut acc = vec![(0usize, 0usize); self.class_names.len()];
        if let Some(rs) = self.rule_sets.last() {
            for c in rs.rules.iter().flat_map(|r| &r.consequents) {
                acc[c.target].0 += c.positives;
                acc[c.target].1 += c.support;
            }
        }
        acc
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}
