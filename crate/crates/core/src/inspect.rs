//! Kernel profiles for manual labelling, and label-substituted rule rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::program::infer::entry_bits;
use crate::program::text::write_program;
use crate::program::{infer, Program};

/// The `m` training samples that activate a kernel most strongly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelProfile {
    pub layer: String,
    pub kernel: usize,
    /// `(sample index, norm)`, norms descending, ties by lower index.
    pub top: Vec<(usize, f32)>,
    pub image_refs: Option<Vec<String>>,
}

pub fn top_m(d: &Dataset, layer: &str, kernel: usize, m: usize) -> Result<KernelProfile> {
    if m == 0 {
        return Err(Error::InvalidParam("m must be at least 1".into()));
    }
    let norms = d.norms(layer)?;
    if kernel >= norms.n_kernels() {
        return Err(Error::OutOfRange {
            index: kernel,
            limit: norms.n_kernels(),
        });
    }
    let train = d.train()?;
    if m > train.len() {
        return Err(Error::InvalidParam(format!(
            "m = {m} exceeds the {} training samples",
            train.len()
        )));
    }
    let mut ranked: Vec<(usize, f32)> = train.iter().map(|&i| (i, norms.get(i, kernel))).collect();
    let order = |a: &(usize, f32), b: &(usize, f32)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if m < ranked.len() {
        ranked.select_nth_unstable_by(m - 1, order);
        ranked.truncate(m);
    }
    ranked.sort_by(order);
    let image_refs = d
        .manifest()
        .image_refs
        .as_ref()
        .map(|refs| ranked.iter().map(|&(i, _)| refs[i].clone()).collect());
    Ok(KernelProfile {
        layer: layer.to_string(),
        kernel,
        top: ranked,
        image_refs,
    })
}

pub fn render_profile(p: &KernelProfile) -> String {
    let mut s = format!("{}.{}\n", p.layer, p.kernel);
    for (rank, &(i, norm)) in p.top.iter().enumerate() {
        write!(s, "{:>3}  sample {i:>6}  norm {norm:.6}", rank + 1).unwrap();
        if let Some(refs) = &p.image_refs {
            write!(s, "  {}", refs[rank]).unwrap();
        }
        s.push('\n');
    }
    s
}

/// Manual kernel labels, keyed by `(layer, kernel)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMap {
    labels: BTreeMap<(String, usize), String>,
}

impl LabelMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, layer: &str, kernel: usize, label: &str) -> Result<()> {
        let label = label.trim();
        if label.is_empty() {
            return Err(Error::InvalidParam("empty label".into()));
        }
        self.labels.insert((layer.to_string(), kernel), label.to_string());
        Ok(())
    }

    pub fn get(&self, layer: &str, kernel: usize) -> Option<&str> {
        self.labels.get(&(layer.to_string(), kernel)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// One `layer.kernel = label` per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = Self::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: &str| Error::Syntax {
                line: n + 1,
                column: 1,
                message: message.to_string(),
            };
            let (key, label) = line.split_once('=').ok_or_else(|| syntax("expected `layer.kernel = label`"))?;
            let (layer, kernel) = key
                .trim()
                .rsplit_once('.')
                .ok_or_else(|| syntax("expected `layer.kernel`"))?;
            let kernel = kernel.parse().map_err(|_| syntax("invalid kernel index"))?;
            map.insert(layer, kernel, label).map_err(|_| syntax("empty label"))?;
        }
        Ok(map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Program text with labelled kernels renamed; unlabelled kernels keep their
/// `layer.index` names.
pub fn render_rules(p: &Program, labels: &LabelMap) -> String {
    write_program(p, &|layer, kernel| labels.get(layer, kernel).map(str::to_string))
}

/// The fired-rule trace behind one sample's decision.
pub fn explain_sample(p: &Program, d: &Dataset, sample: usize, labels: &LabelMap) -> Result<String> {
    let bits = entry_bits(p, d, sample)?;
    let decision = infer(p, &bits)?;
    let class = |c: Option<usize>| c.map_or("(abstain)", |c| p.class_names()[c].as_str());
    let name = |layer: usize, kernel: usize| {
        labels
            .get(&p.layers()[layer].name, kernel)
            .map(str::to_string)
            .unwrap_or_else(|| p.kernel_name(layer, kernel))
    };
    let mut s = String::new();
    writeln!(s, "sample {sample}").unwrap();
    writeln!(s, "predicted: {}", class(decision.prediction)).unwrap();
    writeln!(s, "teacher: {}", class(Some(d.teacher()[sample]))).unwrap();
    writeln!(s, "ground truth: {}", class(Some(d.labels()[sample]))).unwrap();
    if decision.is_conflict() {
        let c: Vec<&str> = decision.candidates.iter().map(|&c| class(Some(c))).collect();
        writeln!(s, "conflict between: {}", c.join(", ")).unwrap();
    }
    let out_set = p.rule_sets().len() - 1;
    if !decision.fired.iter().any(|f| f.set == out_set) {
        writeln!(s, "no output rule fired").unwrap();
    }
    for f in &decision.fired {
        let rule = &p.rule_sets()[f.set].rules[f.rule];
        let heads: Vec<String> = rule.consequents().iter().map(|c| name(f.set + 1, c.target)).collect();
        let body: Vec<String> = rule
            .antecedents()
            .iter()
            .map(|l| {
                let n = name(f.set, l.kernel);
                if l.positive {
                    n
                } else {
                    format!("!{n}")
                }
            })
            .collect();
        let body = if body.is_empty() { "true".to_string() } else { body.join(" & ") };
        writeln!(s, "  [{} #{}] {} <- {body}.", p.rule_sets()[f.set].to, f.rule, heads.join(", ")).unwrap();
    }
    Ok(s)
}
