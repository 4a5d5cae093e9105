//! Synthetic datasets with a planted rule-based teacher.
//!
//! Layer-0 bits are uniform coin flips. Deeper kernels are true iff one of
//! their planted rules fires on the previous layer's bits (kernels without
//! rules stay random). The teacher predicts the lowest-index class with a
//! firing rule, or the default class when none fires. Norms are then laid out
//! around each kernel's mean training norm so that mean-thresholding recovers
//! the planted bits exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LayerMeta, Manifest, FORMAT_VERSION, OUTPUT_LAYER, TEACHER_FILE};
use crate::error::{Error, Result};
use crate::matrix::{BitMatrix, NormMatrix};
use crate::quantise::{compute_thresholds, quantise};

/// `k3` or `!k3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PlantedLiteral {
    pub kernel: usize,
    pub positive: bool,
}

impl PlantedLiteral {
    pub fn pos(kernel: usize) -> Self {
        Self { kernel, positive: true }
    }

    pub fn neg(kernel: usize) -> Self {
        Self { kernel, positive: false }
    }

    fn holds(&self, bits: &[bool]) -> bool {
        bits[self.kernel] == self.positive
    }
}

impl fmt::Display for PlantedLiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bang = if self.positive { "" } else { "!" };
        write!(f, "{bang}k{}", self.kernel)
    }
}

impl FromStr for PlantedLiteral {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (positive, rest) = match s.trim().strip_prefix('!') {
            Some(r) => (false, r),
            None => (true, s.trim()),
        };
        let kernel = rest
            .strip_prefix('k')
            .and_then(|k| k.parse().ok())
            .ok_or_else(|| format!("bad literal {s:?}, expected k<index> or !k<index>"))?;
        Ok(Self { kernel, positive })
    }
}

impl TryFrom<String> for PlantedLiteral {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<PlantedLiteral> for String {
    fn from(l: PlantedLiteral) -> String {
        l.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedRule {
    pub when: Vec<PlantedLiteral>,
    pub then: usize,
}

impl PlantedRule {
    pub fn new(when: Vec<PlantedLiteral>, then: usize) -> Self {
        Self { when, then }
    }

    fn fires(&self, bits: &[bool]) -> bool {
        self.when.iter().all(|l| l.holds(bits))
    }
}

fn default_fractions() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

fn default_noise() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    /// Kernel count of each convolutional layer, shallow to deep.
    pub layer_sizes: Vec<usize>,
    pub n_classes: usize,
    pub seed: u64,
    /// `rules[b]` maps layer `b` to layer `b + 1`; the last entry targets classes.
    pub rules: Vec<Vec<PlantedRule>>,
    /// Teacher class when no class rule fires; defaults to the last class.
    #[serde(default)]
    pub default_class: Option<usize>,
    /// Train / val / test fractions, assigned as contiguous blocks.
    #[serde(default = "default_fractions")]
    pub split_fractions: [f64; 3],
    /// Fraction of ground-truth labels that disagree with the teacher.
    #[serde(default = "default_noise")]
    pub label_noise: f64,
    #[serde(default)]
    pub class_names: Option<Vec<String>>,
}

impl SynthConfig {
    pub fn new(n_samples: usize, layer_sizes: Vec<usize>, n_classes: usize, seed: u64, rules: Vec<Vec<PlantedRule>>) -> Self {
        Self {
            n_samples,
            layer_sizes,
            n_classes,
            seed,
            rules,
            default_class: None,
            split_fractions: default_fractions(),
            label_noise: default_noise(),
            class_names: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Synth(m));
        if self.n_samples == 0 || self.layer_sizes.is_empty() || self.layer_sizes.contains(&0) {
            return bad("need samples and at least one non-empty layer".into());
        }
        if self.n_classes < 2 {
            return bad("need at least two classes".into());
        }
        if self.rules.len() != self.layer_sizes.len() {
            return bad(format!(
                "{} rule lists for {} layer boundaries",
                self.rules.len(),
                self.layer_sizes.len()
            ));
        }
        for (b, rules) in self.rules.iter().enumerate() {
            let n_in = self.layer_sizes[b];
            let n_out = self.layer_sizes.get(b + 1).copied().unwrap_or(self.n_classes);
            for r in rules {
                if r.then >= n_out {
                    return bad(format!("boundary {b}: rule concludes undeclared kernel {}", r.then));
                }
                if let Some(l) = r.when.iter().find(|l| l.kernel >= n_in) {
                    return bad(format!("boundary {b}: rule references undeclared kernel {}", l.kernel));
                }
            }
        }
        if self.default_class.is_some_and(|c| c >= self.n_classes) {
            return bad("default class out of range".into());
        }
        let f = self.split_fractions;
        if f.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("split fractions must be in [0, 1] and sum to 1".into());
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return bad("label noise must be in [0, 1]".into());
        }
        if let Some(names) = &self.class_names {
            if names.len() != self.n_classes {
                return bad("class_names length differs from n_classes".into());
            }
        }
        Ok(())
    }
}

/// Bits planted by the generator, kept for tests and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Planted {
    pub bits: Vec<BitMatrix>,
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    generate_with_truth(cfg).map(|(d, _)| d)
}

pub fn generate_with_truth(cfg: &SynthConfig) -> Result<(Dataset, Planted)> {
    cfg.validate()?;
    let n = cfg.n_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // planted truth values, layer by layer
    let mut layers: Vec<Vec<Vec<bool>>> = Vec::with_capacity(cfg.layer_sizes.len());
    layers.push((0..n).map(|_| (0..cfg.layer_sizes[0]).map(|_| rng.gen()).collect()).collect());
    for b in 1..cfg.layer_sizes.len() {
        let k_out = cfg.layer_sizes[b];
        let ruled: Vec<bool> = (0..k_out)
            .map(|k| cfg.rules[b - 1].iter().any(|r| r.then == k))
            .collect();
        let prev = &layers[b - 1];
        let next = prev
            .iter()
            .map(|row| {
                (0..k_out)
                    .map(|k| {
                        if ruled[k] {
                            cfg.rules[b - 1].iter().any(|r| r.then == k && r.fires(row))
                        } else {
                            rng.gen()
                        }
                    })
                    .collect()
            })
            .collect();
        layers.push(next);
    }
    let default_class = cfg.default_class.unwrap_or(cfg.n_classes - 1);
    let class_rules = cfg.rules.last().unwrap();
    let teacher: Vec<usize> = layers
        .last()
        .unwrap()
        .iter()
        .map(|row| {
            (0..cfg.n_classes)
                .find(|&c| class_rules.iter().any(|r| r.then == c && r.fires(row)))
                .unwrap_or(default_class)
        })
        .collect();
    let labels: Vec<usize> = teacher
        .iter()
        .map(|&t| {
            if rng.gen::<f64>() < cfg.label_noise {
                (t + rng.gen_range(1..cfg.n_classes)) % cfg.n_classes
            } else {
                t
            }
        })
        .collect();

    let n_train = (cfg.split_fractions[0] * n as f64).round() as usize;
    let n_val = ((cfg.split_fractions[1] * n as f64).round() as usize).min(n - n_train);
    let mut splits = BTreeMap::new();
    splits.insert("train".to_string(), (0..n_train).collect::<Vec<_>>());
    splits.insert("val".to_string(), (n_train..n_train + n_val).collect());
    splits.insert("test".to_string(), (n_train + n_val..n).collect());
    let train = &splits["train"];
    if train.is_empty() {
        return Err(Error::Synth("training split is empty".into()));
    }

    let mut norms = Vec::new();
    let mut planted = Vec::new();
    for (l, rows) in layers.iter().enumerate() {
        let k = cfg.layer_sizes[l];
        let flat: Vec<bool> = rows.iter().flatten().copied().collect();
        let bits = BitMatrix::from_bools(n, k, &flat)?;
        let m = plant_norms(&bits, train, &mut rng)
            .map_err(|kernel| Error::Synth(format!(
                "kernel {kernel} of layer {l} is true on every training sample, so no mean threshold separates it"
            )))?;
        let th = compute_thresholds(&m, train)?;
        if quantise(&m, &th)? != bits {
            return Err(Error::Synth(format!("layer {l}: planted bits not recoverable")));
        }
        norms.push(m);
        planted.push(bits);
    }

    let mut metas: Vec<LayerMeta> = (0..cfg.layer_sizes.len())
        .map(|l| LayerMeta {
            name: format!("conv{}", l + 1),
            n_kernels: cfg.layer_sizes[l],
            pooled: false,
            file: format!("conv{}.norms", l + 1),
        })
        .collect();
    metas.push(LayerMeta {
        name: OUTPUT_LAYER.to_string(),
        n_kernels: cfg.n_classes,
        pooled: false,
        file: TEACHER_FILE.to_string(),
    });
    let mut metadata = BTreeMap::new();
    metadata.insert("generator".to_string(), serde_json::json!("synthetic planted teacher"));
    metadata.insert("seed".to_string(), serde_json::json!(cfg.seed));
    let manifest = Manifest {
        version: FORMAT_VERSION,
        n_samples: n,
        class_names: cfg
            .class_names
            .clone()
            .unwrap_or_else(|| (0..cfg.n_classes).map(|c| format!("class{c}")).collect()),
        splits,
        layers: metas,
        image_refs: None,
        metadata,
    };
    let d = Dataset::new(manifest, norms, labels, teacher)?;
    Ok((d, Planted { bits: planted }))
}

/// Places true entries above and false entries at or below the column's
/// training mean.
///
/// With `p` the training fraction of true entries, true norms are
/// `c + (1 - p)(g + u w)` and false norms `c - p(g + v w)`, `u, v ∈ [0, 1)`,
/// `w < g`. The training mean then lies within `p(1 - p) w` of `c`, strictly
/// inside the gap. A column that is false on all training rows is held at `c`.
fn plant_norms(bits: &BitMatrix, train: &[usize], rng: &mut ChaCha8Rng) -> Result<NormMatrix<f32>, usize> {
    const GAP: f64 = 1.0;
    const WIDTH: f64 = 0.5;
    let (n, k) = (bits.n_samples(), bits.n_kernels());
    let mut data = vec![0f32; n * k];
    for kernel in 0..k {
        // dyadic centre: sums of many copies stay exact in f64
        let centre = 2.0 + f64::from(rng.gen_range(0u32..16)) / 8.0;
        let n_true = train.iter().filter(|&&i| bits.is_true(i, kernel)).count();
        if n_true == train.len() {
            return Err(kernel);
        }
        let p = n_true as f64 / train.len() as f64;
        for i in 0..n {
            let v = if n_true == 0 {
                if bits.is_true(i, kernel) {
                    centre + GAP
                } else {
                    centre
                }
            } else if bits.is_true(i, kernel) {
                centre + (1.0 - p) * (GAP + rng.gen::<f64>() * WIDTH)
            } else {
                centre - p * (GAP + rng.gen::<f64>() * WIDTH)
            };
            data[i * k + kernel] = v as f32;
        }
    }
    Ok(NormMatrix::new(n, k, data).expect("planted norms are finite and positive"))
}
