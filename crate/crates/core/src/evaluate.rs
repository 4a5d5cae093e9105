//! Accuracy, fidelity and size metrics, and layer × depth sweeps.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::induction::{extract_program, ExtractionConfig};
use crate::program::{predict_rows, simplify, Prediction, Program};
use crate::scalar::Scalar;

/// An exact `hits / total` ratio; undefined when `total` is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub hits: usize,
    pub total: usize,
}

impl Fraction {
    pub fn value<T: Scalar>(&self) -> Option<T> {
        (self.total > 0)
            .then(|| T::from_usize(self.hits).unwrap() / T::from_usize(self.total).unwrap())
    }

    pub fn as_f64(&self) -> Option<f64> {
        self.value()
    }
}

fn matches(preds: &[Prediction], reference: &[usize]) -> Result<Fraction> {
    if preds.len() != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} references",
            preds.len(),
            reference.len()
        )));
    }
    let hits = preds
        .iter()
        .zip(reference)
        .filter(|(p, r)| **p == Some(**r))
        .count();
    Ok(Fraction {
        hits,
        total: preds.len(),
    })
}

/// Agreement with ground truth; abstentions count as errors.
pub fn accuracy(preds: &[Prediction], labels: &[usize]) -> Result<Fraction> {
    matches(preds, labels)
}

/// Agreement with the teacher's predictions; abstentions count as errors.
pub fn fidelity(preds: &[Prediction], teacher: &[usize]) -> Result<Fraction> {
    matches(preds, teacher)
}

pub fn abstain_rate(preds: &[Prediction]) -> Fraction {
    Fraction {
        hits: preds.iter().filter(|p| p.is_none()).count(),
        total: preds.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramStats {
    pub n_rules: usize,
    /// Distinct kernels (per layer) in any antecedent or consequent.
    pub n_vars: usize,
    /// Distinct literals, counting a kernel's two polarities separately.
    pub vars_polarity: usize,
    /// Total antecedent occurrences.
    pub size: usize,
}

pub fn program_stats(p: &Program) -> ProgramStats {
    let mut vars = BTreeSet::new();
    let mut lits = BTreeSet::new();
    for (i, rs) in p.rule_sets().iter().enumerate() {
        for r in &rs.rules {
            for l in r.antecedents() {
                vars.insert((i, l.kernel));
                lits.insert((i, l.kernel, l.positive));
            }
            for c in r.consequents() {
                vars.insert((i + 1, c.target));
                lits.insert((i + 1, c.target, true));
            }
        }
    }
    ProgramStats {
        n_rules: p.n_rules(),
        n_vars: vars.len(),
        vars_polarity: lits.len(),
        size: p.size(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub split: String,
    pub accuracy: Fraction,
    pub fidelity: Fraction,
    pub abstain: Fraction,
    /// Accuracy of the teacher itself on this split.
    pub teacher_accuracy: Fraction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub splits: Vec<SplitMetrics>,
    pub stats: ProgramStats,
}

impl Metrics {
    pub fn split(&self, name: &str) -> Option<&SplitMetrics> {
        self.splits.iter().find(|s| s.split == name)
    }
}

pub fn evaluate_split(p: &Program, d: &Dataset, split: &str) -> Result<SplitMetrics> {
    let rows = d.split(split)?;
    let preds = predict_rows(p, d, rows)?;
    let labels: Vec<usize> = rows.iter().map(|&i| d.labels()[i]).collect();
    let teacher: Vec<usize> = rows.iter().map(|&i| d.teacher()[i]).collect();
    let teacher_preds: Vec<Prediction> = teacher.iter().map(|&t| Some(t)).collect();
    Ok(SplitMetrics {
        split: split.to_string(),
        accuracy: accuracy(&preds, &labels)?,
        fidelity: fidelity(&preds, &teacher)?,
        abstain: abstain_rate(&preds),
        teacher_accuracy: accuracy(&teacher_preds, &labels)?,
    })
}

pub fn evaluate(p: &Program, d: &Dataset, splits: &[String]) -> Result<Metrics> {
    Ok(Metrics {
        splits: splits
            .iter()
            .map(|s| evaluate_split(p, d, s))
            .collect::<Result<_>>()?,
        stats: program_stats(p),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepMode {
    /// Rules straight from the entry layer to the output.
    SingleLayer,
    /// Rules for every boundary from the entry layer to the output.
    Chain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub leps: Vec<String>,
    pub depths: Vec<usize>,
    pub alpha: f64,
    pub splits: Vec<String>,
    pub mode: SweepMode,
    pub demand_driven: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub lep: String,
    pub depth: usize,
    /// Metrics of the simplified program, or the failure message.
    pub outcome: std::result::Result<Metrics, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: SweepGrid,
    pub cells: Vec<SweepCell>,
}

/// Extracts, simplifies and evaluates one program per `(lep, depth)` cell.
pub fn run_cell(d: &Dataset, grid: &SweepGrid, lep: &str, depth: usize) -> Result<(Program, Metrics)> {
    let mut cfg = match grid.mode {
        SweepMode::SingleLayer => ExtractionConfig::single_layer(lep, depth, grid.alpha),
        SweepMode::Chain => ExtractionConfig::chain(d, lep, depth, grid.alpha)?,
    };
    cfg.demand_driven = grid.demand_driven;
    let program = simplify(&extract_program(d, &cfg)?)?;
    let metrics = evaluate(&program, d, &grid.splits)?;
    Ok((program, metrics))
}

/// Cells run in parallel; failures are recorded per cell. Output is in grid
/// order (lep-major) whatever the worker count.
pub fn run_sweep(d: &Dataset, grid: &SweepGrid) -> Result<SweepResult> {
    if grid.leps.is_empty() || grid.depths.is_empty() {
        return Err(Error::InvalidParam("empty sweep grid".into()));
    }
    for lep in &grid.leps {
        d.manifest().layer_index(lep)?;
    }
    for s in &grid.splits {
        d.split(s)?;
    }
    let jobs: Vec<(&str, usize)> = grid
        .leps
        .iter()
        .flat_map(|l| grid.depths.iter().map(move |&dep| (l.as_str(), dep)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(lep, depth)| SweepCell {
            lep: lep.to_string(),
            depth,
            outcome: run_cell(d, grid, lep, depth)
                .map(|(_, m)| m)
                .map_err(|e| e.to_string()),
        })
        .collect();
    Ok(SweepResult {
        grid: grid.clone(),
        cells,
    })
}

pub const CSV_HEADER: &str = "lep,depth,alpha,split,accuracy,fidelity,abstain,rules,vars,vars_polarity,size";

fn fmt_fraction(f: Option<Fraction>) -> String {
    match f.and_then(|f| f.as_f64()) {
        Some(v) => format!("{v:.6}"),
        None => "NA".to_string(),
    }
}

/// One row per cell and split. Failed cells and empty splits report `NA`.
pub fn write_csv(result: &SweepResult, mut w: impl io::Write) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for cell in &result.cells {
        for split in &result.grid.splits {
            let (sm, stats) = match &cell.outcome {
                Ok(m) => (m.split(split), Some(m.stats)),
                Err(_) => (None, None),
            };
            let stat = |f: fn(&ProgramStats) -> usize| {
                stats.map_or_else(|| "NA".to_string(), |s| f(&s).to_string())
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                cell.lep,
                cell.depth,
                result.grid.alpha,
                split,
                fmt_fraction(sm.map(|s| s.accuracy)),
                fmt_fraction(sm.map(|s| s.fidelity)),
                fmt_fraction(sm.map(|s| s.abstain)),
                stat(|s| s.n_rules),
                stat(|s| s.n_vars),
                stat(|s| s.vars_polarity),
                stat(|s| s.size),
            )?;
        }
    }
    Ok(())
}

pub fn csv_string(result: &SweepResult) -> String {
    let mut buf = Vec::new();
    write_csv(result, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// Accuracies of the teacher and the program per split, their gap, and
/// program statistics, as percentages.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub teacher: Vec<Option<f64>>,
    pub program: Vec<Option<f64>>,
    pub fidelity: Vec<Option<f64>>,
    pub stats: ProgramStats,
}

impl TableRow {
    pub fn from_metrics(label: impl Into<String>, m: &Metrics) -> Self {
        let pct = |f: Fraction| f.as_f64().map(|v| 100.0 * v);
        Self {
            label: label.into(),
            teacher: m.splits.iter().map(|s| pct(s.teacher_accuracy)).collect(),
            program: m.splits.iter().map(|s| pct(s.accuracy)).collect(),
            fidelity: m.splits.iter().map(|s| pct(s.fidelity)).collect(),
            stats: m.stats,
        }
    }
}

/// Markdown table with the columns `M`, `M*`, `M-M*`, fidelity and stats.
pub fn render_table(splits: &[String], rows: &[TableRow]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.1}"));
    let mut s = String::new();
    let group = |name: &str| {
        splits
            .iter()
            .map(|sp| format!("{name}:{sp}"))
            .collect::<Vec<_>>()
            .join(" | ")
    };
    writeln!(
        s,
        "| cell | {} | {} | {} | {} | vars | rules | size |",
        group("M"),
        group("M*"),
        group("M-M*"),
        group("fid")
    )
    .unwrap();
    writeln!(s, "|{}", "---|".repeat(4 + 4 * splits.len())).unwrap();
    for r in rows {
        let gap: Vec<Option<f64>> = r
            .teacher
            .iter()
            .zip(&r.program)
            .map(|(t, p)| Some(t.as_ref()? - p.as_ref()?))
            .collect();
        let join = |v: &[Option<f64>]| v.iter().map(|&x| cell(x)).collect::<Vec<_>>().join(" | ");
        writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            r.label,
            join(&r.teacher),
            join(&r.program),
            join(&gap),
            join(&r.fidelity),
            r.stats.n_vars,
            r.stats.n_rules,
            r.stats.size
        )
        .unwrap();
    }
    s
}

pub fn sweep_table(result: &SweepResult) -> String {
    let rows: Vec<TableRow> = result
        .cells
        .iter()
        .filter_map(|c| {
            c.outcome
                .as_ref()
                .ok()
                .map(|m| TableRow::from_metrics(format!("{} d={}", c.lep, c.depth), m))
        })
        .collect();
    render_table(&result.grid.splits, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{ExtractionParams, LayerShape, Literal, Rule, RuleSet};
    use crate::quantise::ThresholdVector;

    #[test]
    fn accuracy_examples() {
        let labels: Vec<usize> = (0..50).map(|i| i % 3).collect();
        let preds: Vec<Prediction> = labels.iter().map(|&l| Some(l)).collect();
        assert_eq!(accuracy(&preds, &labels).unwrap().as_f64(), Some(1.0));
        assert_eq!(accuracy(&[None, None], &[0, 1]).unwrap().as_f64(), Some(0.0));
        let f = accuracy(&[Some(0), Some(1), Some(2), Some(0)], &[0, 1, 2, 1]).unwrap();
        assert_eq!((f.hits, f.total), (3, 4));
        assert_eq!(f.value::<f32>(), Some(0.75));
        assert_eq!(accuracy(&[], &[]).unwrap().as_f64(), None);
        assert!(accuracy(&[None], &[]).is_err());
    }

    #[test]
    fn fidelity_is_independent_of_accuracy() {
        let teacher = [1, 1, 0, 2];
        let labels = [0, 1, 0, 2];
        let preds: Vec<Prediction> = teacher.iter().map(|&t| Some(t)).collect();
        assert_eq!(fidelity(&preds, &teacher).unwrap().as_f64(), Some(1.0));
        assert!(accuracy(&preds, &labels).unwrap().as_f64().unwrap() < 1.0);
    }

    fn two_rule_program() -> Program {
        // A = 0, B = 1, C = 2
        Program::new(
            vec![
                LayerShape { name: "c".into(), n_kernels: 3 },
                LayerShape { name: "output".into(), n_kernels: 2 },
            ],
            ThresholdVector::new(vec![0.0; 3]).unwrap(),
            vec!["c1".into(), "c2".into()],
            vec![RuleSet::new(
                "c",
                "output",
                vec![
                    Rule::implies(vec![Literal::pos(0), Literal::neg(1)], 0, 1, 1).unwrap(),
                    Rule::implies(vec![Literal::pos(0), Literal::pos(2)], 1, 1, 1).unwrap(),
                ],
            )],
            ExtractionParams { depth: 1, alpha: 0.0, demand_driven: true },
        )
        .unwrap()
    }

    #[test]
    fn stats_hand_count() {
        let s = program_stats(&two_rule_program());
        assert_eq!((s.n_rules, s.size, s.n_vars, s.vars_polarity), (2, 4, 5, 5));
        let empty = two_rule_program()
            .with_rule_sets(vec![RuleSet::new("c", "output", vec![])])
            .unwrap();
        let s = program_stats(&empty);
        assert_eq!((s.n_rules, s.size, s.n_vars), (0, 0, 0));
    }

    #[test]
    fn table_row_fixture() {
        let row = TableRow {
            label: "De,F,S".into(),
            teacher: vec![Some(99.0), Some(94.8), Some(94.7)],
            program: vec![Some(91.0), Some(89.4), Some(90.3)],
            fidelity: vec![None, None, None],
            stats: ProgramStats { n_rules: 25, n_vars: 33, vars_polarity: 33, size: 127 },
        };
        let splits = ["train".to_string(), "val".to_string(), "test".to_string()];
        let t = render_table(&splits, &[row]);
        let line = t.lines().nth(2).unwrap();
        assert_eq!(
            line,
            "| De,F,S | 99.0 | 94.8 | 94.7 | 91.0 | 89.4 | 90.3 | 8.0 | 5.4 | 4.4 | NA | NA | NA | 33 | 25 | 127 |"
        );
    }
}
