//! Depth-bounded binary decision trees over the previous layer's kernel bits,
//! and their conversion into rules.
//!
//! A split on kernel `k` sends samples with bit `1` to the true branch (the
//! positive literal) and the rest to the false branch (the negative literal).
//! Sample sets are packed bitsets, so every candidate split costs one pass of
//! popcounts over the node's words.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::dataset::{Dataset, OUTPUT_LAYER};
use crate::error::{Error, Result};
use crate::matrix::BitMatrix;
use crate::program::{ExtractionParams, LayerShape, Literal, Program, Rule, RuleSet};
use crate::quantise::binarise_dataset;
use crate::scalar::Scalar;

/// Largest training table accepted; keeps exact impurity comparisons in `u128`.
pub const MAX_ROWS: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    words: Vec<u64>,
}

impl SampleSet {
    fn full(n: usize) -> Self {
        let mut words = vec![u64::MAX; n.div_ceil(64)];
        if !n.is_multiple_of(64) {
            *words.last_mut().unwrap() = (1u64 << (n % 64)) - 1;
        }
        Self { words }
    }

    fn from_fn(n: usize, f: impl Fn(usize) -> bool) -> Self {
        let mut words = vec![0u64; n.div_ceil(64)];
        for i in (0..n).filter(|&i| f(i)) {
            words[i / 64] |= 1 << (i % 64);
        }
        Self { words }
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    fn and(&self, other: &SampleSet) -> SampleSet {
        Self {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
        }
    }

    fn and_not(&self, other: &SampleSet) -> SampleSet {
        Self {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & !b).collect(),
        }
    }

    fn count_and(&self, other: &SampleSet) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }
}

/// Feature bits (one packed column per kernel) and the target column.
#[derive(Debug, Clone)]
pub struct TrainingTable {
    n_rows: usize,
    features: Vec<SampleSet>,
    target: SampleSet,
}

impl TrainingTable {
    /// `features` rows are samples; `target[i]` is the truth of the target on row `i`.
    pub fn new(features: &BitMatrix, target: &[bool]) -> Result<Self> {
        let rows: Vec<usize> = (0..features.n_samples()).collect();
        if target.len() != rows.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows but {} targets",
                rows.len(),
                target.len()
            )));
        }
        Self::build(features, &rows, |i| target[i])
    }

    /// Table over a subset of rows, targeting one kernel of `target_bits`.
    pub fn from_rows(
        features: &BitMatrix,
        target_bits: &BitMatrix,
        target_kernel: usize,
        rows: &[usize],
    ) -> Result<Self> {
        if features.n_samples() != target_bits.n_samples() {
            return Err(Error::ShapeMismatch("feature and target rows differ".into()));
        }
        if target_kernel >= target_bits.n_kernels() {
            return Err(Error::OutOfRange {
                index: target_kernel,
                limit: target_bits.n_kernels(),
            });
        }
        Self::build(features, rows, |i| target_bits.is_true(rows[i], target_kernel))
    }

    fn build(features: &BitMatrix, rows: &[usize], target: impl Fn(usize) -> bool) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidParam("empty training table".into()));
        }
        if n > MAX_ROWS {
            return Err(Error::InvalidParam(format!("more than {MAX_ROWS} training rows")));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= features.n_samples()) {
            return Err(Error::OutOfRange {
                index: bad,
                limit: features.n_samples(),
            });
        }
        let features = (0..features.n_kernels())
            .map(|k| SampleSet::from_fn(n, |i| features.is_true(rows[i], k)))
            .collect();
        Ok(Self {
            n_rows: n,
            features,
            target: SampleSet::from_fn(n, target),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_kernels(&self) -> usize {
        self.features.len()
    }

    pub fn all_rows(&self) -> SampleSet {
        SampleSet::full(self.n_rows)
    }

    /// Row set where `kernel` is true.
    pub fn feature(&self, kernel: usize) -> &SampleSet {
        &self.features[kernel]
    }

    pub fn target(&self) -> &SampleSet {
        &self.target
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InductionParams<T> {
    /// Tree depth `d`; root-to-leaf paths carry at most `d + 1` splits.
    pub depth: usize,
    /// A child holding less than this fraction of its parent's samples becomes a leaf.
    pub alpha: T,
}

impl<T: Scalar> InductionParams<T> {
    pub fn new(depth: usize, alpha: T) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidParam("depth must be at least 1".into()));
        }
        if !(alpha >= T::zero() && alpha < T::one()) {
            return Err(Error::InvalidParam(format!("alpha {alpha} not in [0, 1)")));
        }
        Ok(Self { depth, alpha })
    }

    pub fn max_antecedents(&self) -> usize {
        self.depth + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeNode {
    Split {
        kernel: usize,
        on_true: Box<TreeNode>,
        on_false: Box<TreeNode>,
    },
    Leaf {
        prediction: bool,
        support: usize,
        positives: usize,
    },
}

impl TreeNode {
    fn leaf(support: usize, positives: usize) -> Self {
        TreeNode::Leaf {
            // modal value; ties go to false
            prediction: 2 * positives > support,
            support,
            positives,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split {
                on_true, on_false, ..
            } => 1 + on_true.depth().max(on_false.depth()),
        }
    }

    /// Prediction for one row of feature bits.
    pub fn predict(&self, bits: &[i8]) -> bool {
        match self {
            TreeNode::Leaf { prediction, .. } => *prediction,
            TreeNode::Split {
                kernel,
                on_true,
                on_false,
            } => {
                if bits[*kernel] == 1 {
                    on_true.predict(bits)
                } else {
                    on_false.predict(bits)
                }
            }
        }
    }
}

/// Binary gini impurity `2p(1 - p)` with `p = positives / total`.
pub fn gini<T: Scalar>(positives: usize, total: usize) -> Result<T> {
    if total == 0 {
        return Err(Error::InvalidParam("gini of an empty node".into()));
    }
    if positives > total {
        return Err(Error::InvalidParam("more positives than samples".into()));
    }
    let p = T::from_usize(positives).unwrap() / T::from_usize(total).unwrap();
    let two = T::one() + T::one();
    Ok(two * p * (T::one() - p))
}

/// Support-weighted child impurity, scaled by `N / 2`: `Σ pos·neg / n` over
/// the children, held as an exact fraction.
#[derive(Debug, Clone, Copy)]
struct Impurity {
    num: u128,
    den: u128,
}

impl Impurity {
    fn node(pos: usize, n: usize) -> Self {
        if n == 0 {
            return Self { num: 0, den: 1 };
        }
        Self {
            num: (pos as u128) * ((n - pos) as u128),
            den: n as u128,
        }
    }

    fn add(self, o: Self) -> Self {
        Self {
            num: self.num * o.den + o.num * self.den,
            den: self.den * o.den,
        }
    }

    fn cmp(&self, o: &Self) -> Ordering {
        (self.num * o.den).cmp(&(o.num * self.den))
    }
}

/// Kernel whose split minimises the weighted child gini of `node`, lowest
/// index on ties; `None` unless some split strictly reduces impurity.
pub fn best_split(table: &TrainingTable, node: &SampleSet) -> Option<usize> {
    let n = node.len();
    if n < 2 {
        return None;
    }
    let pos = node.count_and(&table.target);
    let parent = Impurity::node(pos, n);
    let node_pos = node.and(&table.target);
    let mut best: Option<(usize, Impurity)> = None;
    for (k, feat) in table.features.iter().enumerate() {
        let n_true = node.count_and(feat);
        let p_true = node_pos.count_and(feat);
        let score = Impurity::node(p_true, n_true).add(Impurity::node(pos - p_true, n - n_true));
        if score.cmp(&parent) != Ordering::Less {
            continue;
        }
        if best.is_none_or(|(_, b)| score.cmp(&b) == Ordering::Less) {
            best = Some((k, score));
        }
    }
    best.map(|(k, _)| k)
}

pub fn grow_tree<T: Scalar>(table: &TrainingTable, params: &InductionParams<T>) -> Result<TreeNode> {
    if table.n_rows == 0 {
        return Err(Error::InvalidParam("empty training table".into()));
    }
    Ok(grow(table, params, table.all_rows(), 0))
}

fn grow<T: Scalar>(table: &TrainingTable, params: &InductionParams<T>, node: SampleSet, splits: usize) -> TreeNode {
    let n = node.len();
    let pos = node.count_and(&table.target);
    if pos == 0 || pos == n || splits >= params.max_antecedents() {
        return TreeNode::leaf(n, pos);
    }
    let Some(kernel) = best_split(table, &node) else {
        return TreeNode::leaf(n, pos);
    };
    let feat = &table.features[kernel];
    let children = [node.and(feat), node.and_not(feat)];
    let parent = T::from_usize(n).unwrap();
    let [on_true, on_false] = children.map(|child| {
        let q = child.len();
        if T::from_usize(q).unwrap() / parent < params.alpha {
            let p = child.count_and(&table.target);
            TreeNode::leaf(q, p)
        } else {
            grow(table, params, child, splits + 1)
        }
    });
    TreeNode::Split {
        kernel,
        on_true: Box::new(on_true),
        on_false: Box::new(on_false),
    }
}

/// One rule per true leaf, in depth-first order (true branch first).
pub fn tree_to_rules(tree: &TreeNode, target: usize) -> Vec<Rule> {
    let mut out = Vec::new();
    let mut path = Vec::new();
    collect(tree, target, &mut path, &mut out);
    out
}

fn collect(node: &TreeNode, target: usize, path: &mut Vec<Literal>, out: &mut Vec<Rule>) {
    match node {
        TreeNode::Leaf {
            prediction: true,
            support,
            positives,
        } => out.push(
            Rule::implies(path.clone(), target, *support, *positives)
                .expect("tree paths never repeat a kernel and true leaves have positives"),
        ),
        TreeNode::Leaf { .. } => {}
        TreeNode::Split {
            kernel,
            on_true,
            on_false,
        } => {
            path.push(Literal::pos(*kernel));
            collect(on_true, target, path, out);
            path.pop();
            path.push(Literal::neg(*kernel));
            collect(on_false, target, path, out);
            path.pop();
        }
    }
}

/// Induces rules for each target kernel from the previous layer's bits over
/// `rows`. Output is ordered by target (in the given order), then leaf order,
/// regardless of how many threads run.
pub fn extract_layer<T: Scalar>(
    prev: &BitMatrix,
    target_bits: &BitMatrix,
    targets: &[usize],
    rows: &[usize],
    params: &InductionParams<T>,
) -> Result<Vec<Rule>> {
    let per_target: Vec<Vec<Rule>> = targets
        .par_iter()
        .map(|&t| {
            let table = TrainingTable::from_rows(prev, target_bits, t, rows)?;
            Ok(tree_to_rules(&grow_tree(&table, params)?, t))
        })
        .collect::<Result<_>>()?;
    Ok(per_target.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionConfig {
    /// Entry layer first, `output` last. Listed convolutional layers must be
    /// consecutive in network order; `output` may follow any of them.
    pub layers: Vec<String>,
    pub depth: usize,
    pub alpha: f64,
    /// Only induce intermediate kernels referenced by deeper rules.
    pub demand_driven: bool,
}

impl ExtractionConfig {
    pub fn single_layer(lep: &str, depth: usize, alpha: f64) -> Self {
        Self {
            layers: vec![lep.to_string(), OUTPUT_LAYER.to_string()],
            depth,
            alpha,
            demand_driven: true,
        }
    }

    /// Every layer from `lep` through the last convolutional layer, then `output`.
    pub fn chain(d: &Dataset, lep: &str, depth: usize, alpha: f64) -> Result<Self> {
        let m = d.manifest();
        let start = m.layer_index(lep)?;
        let layers = m.layers[start..].iter().map(|l| l.name.clone()).collect();
        Ok(Self {
            layers,
            depth,
            alpha,
            demand_driven: true,
        })
    }

    pub fn lep(&self) -> &str {
        &self.layers[0]
    }
}

fn check_layers(d: &Dataset, layers: &[String]) -> Result<()> {
    if layers.len() < 2 {
        return Err(Error::LayerList("need an entry layer and `output`".into()));
    }
    if layers.last().map(String::as_str) != Some(OUTPUT_LAYER) {
        return Err(Error::LayerList("the last layer must be `output`".into()));
    }
    let m = d.manifest();
    let mut prev: Option<usize> = None;
    for name in &layers[..layers.len() - 1] {
        if name == OUTPUT_LAYER {
            return Err(Error::LayerList("`output` must come last".into()));
        }
        let i = m.layer_index(name)?;
        if let Some(p) = prev {
            if i != p + 1 {
                return Err(Error::LayerList(format!(
                    "{name:?} does not directly follow {:?}",
                    m.layers[p].name
                )));
            }
        }
        prev = Some(i);
    }
    Ok(())
}

/// Extracts a program from the deepest boundary (into `output`) down to the
/// entry layer, inducing on the training split only.
pub fn extract_program(d: &Dataset, cfg: &ExtractionConfig) -> Result<Program> {
    check_layers(d, &cfg.layers)?;
    let params = InductionParams::new(cfg.depth, cfg.alpha)?;
    let names: Vec<&str> = cfg.layers.iter().map(String::as_str).collect();
    let bin = binarise_dataset(d, &names)?;
    let rows = d.train()?;

    let n = names.len();
    let mut sets: Vec<Option<RuleSet>> = vec![None; n - 1];
    for b in (0..n - 1).rev() {
        let prev = &bin.bits[names[b]];
        let target = &bin.bits[names[b + 1]];
        let targets: Vec<usize> = if b + 2 == n || !cfg.demand_driven {
            (0..target.n_kernels()).collect()
        } else {
            let deeper = sets[b + 1].as_ref().expect("deeper boundary extracted first");
            let used: BTreeSet<usize> = deeper
                .rules
                .iter()
                .flat_map(|r| r.antecedents().iter().map(|l| l.kernel))
                .collect();
            used.into_iter().collect()
        };
        let rules = extract_layer(prev, target, &targets, rows, &params)?;
        sets[b] = Some(RuleSet::new(names[b], names[b + 1], rules));
    }

    let layers = names
        .iter()
        .map(|&name| {
            Ok(LayerShape {
                name: name.to_string(),
                n_kernels: bin.bits[name].n_kernels(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let thresholds = bin.thresholds[names[0]].clone();
    Program::new(
        layers,
        thresholds,
        d.class_names().to_vec(),
        sets.into_iter().map(Option::unwrap).collect(),
        ExtractionParams {
            depth: cfg.depth,
            alpha: cfg.alpha,
            demand_driven: cfg.demand_driven,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(&[i8], bool)]) -> TrainingTable {
        let k = rows[0].0.len();
        let data: Vec<i8> = rows.iter().flat_map(|(b, _)| b.iter().copied()).collect();
        let bits = BitMatrix::new(rows.len(), k, data).unwrap();
        let target: Vec<bool> = rows.iter().map(|r| r.1).collect();
        TrainingTable::new(&bits, &target).unwrap()
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini::<f64>(2, 4).unwrap(), 0.5);
        assert_eq!(gini::<f64>(4, 4).unwrap(), 0.0);
        assert!((gini::<f64>(1, 3).unwrap() - 4.0 / 9.0).abs() < 1e-12);
        assert!((gini::<f32>(1, 3).unwrap() - 4.0 / 9.0).abs() < 1e-6);
        assert!(gini::<f64>(0, 0).is_err());
    }

    #[test]
    fn perfect_predictor_is_chosen() {
        let t = table(&[
            (&[1, -1, 1, 1], true),
            (&[1, -1, 1, -1], false),
            (&[-1, 1, -1, 1], true),
            (&[-1, 1, -1, -1], false),
        ]);
        assert_eq!(best_split(&t, &t.all_rows()), Some(3));
    }

    #[test]
    fn ties_break_to_lowest_index() {
        // kernels 1 and 2 are identical perfect predictors
        let t = table(&[
            (&[1, 1, 1], true),
            (&[1, -1, -1], false),
            (&[-1, 1, 1], true),
            (&[-1, -1, -1], false),
        ]);
        assert_eq!(best_split(&t, &t.all_rows()), Some(1));
    }

    #[test]
    fn no_split_without_strict_gain() {
        // xor: no single split reduces gini
        let t = table(&[
            (&[1, 1], false),
            (&[1, -1], true),
            (&[-1, 1], true),
            (&[-1, -1], false),
        ]);
        assert_eq!(best_split(&t, &t.all_rows()), None);
    }

    #[test]
    fn pure_table_is_a_single_leaf() {
        let t = table(&[(&[1], true), (&[-1], true)]);
        let tree = grow_tree(&t, &InductionParams::new(3, 0.0).unwrap()).unwrap();
        assert_eq!(
            tree,
            TreeNode::Leaf {
                prediction: true,
                support: 2,
                positives: 2
            }
        );
        let rules = tree_to_rules(&tree, 0);
        assert_eq!(rules.len(), 1);
        assert!(rules[0].antecedents().is_empty());
    }

    #[test]
    fn all_false_tree_has_no_rules() {
        let t = table(&[(&[1], false), (&[-1], false)]);
        let tree = grow_tree(&t, &InductionParams::new(3, 0.0).unwrap()).unwrap();
        assert!(tree_to_rules(&tree, 0).is_empty());
    }

    #[test]
    fn modal_tie_predicts_false() {
        // identical features, split target: no split possible
        let t = table(&[(&[1], true), (&[1], false)]);
        let tree = grow_tree(&t, &InductionParams::new(3, 0.0).unwrap()).unwrap();
        assert!(matches!(tree, TreeNode::Leaf { prediction: false, support: 2, positives: 1 }));
    }

    #[test]
    fn params_are_validated() {
        assert!(InductionParams::new(0, 0.1).is_err());
        assert!(InductionParams::new(1, 1.0).is_err());
        assert!(InductionParams::new(1, -0.1).is_err());
        assert!(InductionParams::new(1, f64::NAN).is_err());
        assert_eq!(InductionParams::new(5, 0.01).unwrap().max_antecedents(), 6);
    }

    #[test]
    fn sample_set_tail_masking() {
        let s = SampleSet::full(70);
        assert_eq!(s.len(), 70);
        assert!(s.contains(69));
        assert_eq!(SampleSet::from_fn(130, |i| i % 2 == 0).len(), 65);
    }
}
