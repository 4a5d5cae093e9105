//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use convlogic::dataset::{load_dataset, save_dataset, Dataset, LayerMeta, Manifest, FORMAT_VERSION, OUTPUT_LAYER};
use convlogic::evaluate::{csv_string, evaluate, run_sweep, SweepGrid, SweepMode};
use convlogic::induction::{best_split, extract_program, ExtractionConfig, TrainingTable};
use convlogic::matrix::{BitMatrix, NormMatrix};
use convlogic::program::{infer, parse, serialise, simplify, Program};
use convlogic::quantise::{compute_thresholds, quantise};
use convlogic::synth::generate_synthetic;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Option<u64>);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn splits() -> Vec<String> {
    vec!["train".into(), "val".into(), "test".into()]
}

fn train_fidelity(p: &Program, d: &Dataset) -> f64 {
    evaluate(p, d, &["train".to_string()]).unwrap().splits[0].fidelity.as_f64().unwrap()
}

fn quantisation_oracle() -> Outcome {
    let mut rng = common::rng(1);
    let mut bits_checked = 0usize;
    for col in 0..1000 {
        let n = rng.gen_range(1..200);
        let values: Vec<f32> = match col % 4 {
            // constant columns put every entry exactly on the threshold
            0 => vec![rng.gen_range(0.0f32..5.0); n],
            1 => (0..n).map(|_| rng.gen_range(0u8..4) as f32 * 0.25).collect(),
            2 => (0..n).map(|_| rng.gen::<f32>() * 10f32.powi(rng.gen_range(-6..6))).collect(),
            _ => (0..n).map(|_| rng.gen_range(0.0f32..100.0)).collect(),
        };
        let train: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.7)).collect();
        let train = if train.is_empty() { vec![0] } else { train };
        let norms = NormMatrix::new(n, 1, values.clone()).unwrap();
        let th = compute_thresholds(&norms, &train).unwrap();
        let bits = quantise(&norms, &th).unwrap();
        let picked: Vec<f32> = train.iter().map(|&i| values[i]).collect();
        let mean = common::mean_f64(&picked) as f32;
        if th.get(0).to_bits() != mean.to_bits() {
            return Err(format!("column {col}: threshold {} vs {mean}", th.get(0)));
        }
        for (i, &v) in values.iter().enumerate() {
            let want = if v > mean { 1 } else { -1 };
            if bits.get(i, 0) != want {
                return Err(format!("column {col}, row {i}"));
            }
            bits_checked += 1;
        }
    }
    Ok(format!("1000 columns, {bits_checked} bits"))
}

fn induction_oracle() -> Outcome {
    let mut rng = common::rng(2);
    let mut ties = 0;
    for t in 0..2000 {
        let k = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=16);
        let rows: Vec<Vec<bool>> = (0..n).map(|_| common::random_bools(&mut rng, k)).collect();
        let target = common::random_bools(&mut rng, n);
        let flat: Vec<bool> = rows.concat();
        let table = TrainingTable::new(&BitMatrix::from_bools(n, k, &flat).unwrap(), &target).unwrap();
        let got = best_split(&table, &table.all_rows());
        let want = common::oracle_best_split(&rows, &target);
        if got != want {
            return Err(format!("table {t}: {got:?} vs {want:?}"));
        }
        // an inner node: the same table restricted to a subset of rows
        let keep: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.6)).collect();
        if !keep.is_empty() {
            let sub = TrainingTable::from_rows(
                &BitMatrix::from_bools(n, k, &flat).unwrap(),
                &BitMatrix::from_bools(n, 1, &target).unwrap(),
                0,
                &keep,
            )
            .unwrap();
            let sub_rows: Vec<Vec<bool>> = keep.iter().map(|&i| rows[i].clone()).collect();
            let sub_target: Vec<bool> = keep.iter().map(|&i| target[i]).collect();
            let got = best_split(&sub, &sub.all_rows());
            if got != common::oracle_best_split(&sub_rows, &sub_target) {
                return Err(format!("table {t}, row subset: {got:?}"));
            }
        }
        if (0..k).any(|a| (a + 1..k).any(|b| rows.iter().all(|r| r[a] == r[b]))) {
            ties += 1;
        }
    }
    Ok(format!("2000 tables and row subsets, {ties} with duplicate columns"))
}

fn planted_recovery() -> Outcome {
    let d = common::planted(4096, 2024);
    let cfg = ExtractionConfig::single_layer("conv1", 5, 0.0);
    let p = simplify(&extract_program(&d, &cfg).unwrap()).unwrap();
    let m = evaluate(&p, &d, &splits()).unwrap();
    let train = m.split("train").unwrap().fidelity.as_f64().unwrap();
    let val = m.split("val").unwrap().fidelity.as_f64().unwrap();
    check(train == 1.0 && val >= 0.99, format!("train {train:.4}, val {val:.4}"))
}

fn depth_monotonicity() -> Outcome {
    let d = common::planted(4096, 2024);
    let fids: Vec<f64> = (1..=5)
        .map(|depth| {
            let cfg = ExtractionConfig::single_layer("conv1", depth, 0.0);
            train_fidelity(&simplify(&extract_program(&d, &cfg).unwrap()).unwrap(), &d)
        })
        .collect();
    let text: Vec<String> = fids.iter().map(|f| format!("{f:.4}")).collect();
    check(fids.windows(2).all(|w| w[1] >= w[0]), text.join(" "))
}

fn rule_length_bound() -> Outcome {
    let datasets = [
        (common::planted(2048, 3), vec!["conv1"]),
        (generate_synthetic(&common::two_boundary_config(2048, 4)).unwrap(), vec!["conv1", "conv2"]),
    ];
    let mut checked = 0;
    for (d, leps) in &datasets {
        for mode in [SweepMode::SingleLayer, SweepMode::Chain] {
            for alpha in [0.0, 0.01, 0.1] {
                for lep in leps {
                    for depth in 1..=5 {
                        let mut cfg = match mode {
                            SweepMode::SingleLayer => ExtractionConfig::single_layer(lep, depth, alpha),
                            SweepMode::Chain => ExtractionConfig::chain(d, lep, depth, alpha).unwrap(),
                        };
                        for demand in [true, false] {
                            cfg.demand_driven = demand;
                            let p = extract_program(d, &cfg).unwrap();
                            for s in [p.clone(), simplify(&p).unwrap()] {
                                for set in s.rule_sets() {
                                    for r in &set.rules {
                                        if r.antecedents().len() > depth + 1 {
                                            return Err(format!("{lep} d={depth}: {} literals", r.antecedents().len()));
                                        }
                                        checked += 1;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(format!("{checked} rules"))
}

fn same_decisions(a: &Program, b: &Program) -> bool {
    let k = a.entry_layer().n_kernels;
    (0..(1u32 << k)).all(|x| {
        let bits = common::bits_of(x, k);
        let (da, db) = (infer(a, &bits).unwrap(), infer(b, &bits).unwrap());
        da.prediction == db.prediction && da.candidates == db.candidates
    })
}

fn simplification_semantics() -> Outcome {
    let mut rng = common::rng(6);
    let mut shrunk = 0;
    for case in 0..120 {
        let k = rng.gen_range(4..=16);
        let hidden = (case % 4 == 0).then(|| rng.gen_range(2..6));
        let n_rules = rng.gen_range(4..40);
        let p = common::random_program(&mut rng, k, n_rules, hidden);
        let s = simplify(&p).unwrap();
        if !same_decisions(&p, &s) {
            return Err(format!("case {case}: decisions differ"));
        }
        if s.size() > p.size() || simplify(&s).unwrap() != s {
            return Err(format!("case {case}: size grew or not idempotent"));
        }
        if s.size() < p.size() {
            shrunk += 1;
        }
    }
    Ok(format!("120 programs, {shrunk} shrunk"))
}

fn multi_layer_chaining() -> Outcome {
    let d = generate_synthetic(&common::two_boundary_config(4096, 77)).unwrap();
    let chain = simplify(&extract_program(&d, &ExtractionConfig::chain(&d, "conv1", 5, 0.1).unwrap()).unwrap()).unwrap();
    let single = simplify(&extract_program(&d, &ExtractionConfig::single_layer("conv2", 5, 0.1)).unwrap()).unwrap();
    let m = evaluate(&chain, &d, &splits()).unwrap();
    let fid: Vec<f64> = m.splits.iter().map(|s| s.fidelity.as_f64().unwrap()).collect();
    check(
        fid.iter().all(|&f| f >= 0.95) && chain.size() > single.size(),
        format!(
            "fidelity train/val/test {:.4}/{:.4}/{:.4}, size {} vs {}",
            fid[0],
            fid[1],
            fid[2],
            chain.size(),
            single.size()
        ),
    )
}

fn run_pipeline(d: &Dataset) -> (String, String) {
    let cfg = ExtractionConfig::chain(d, "conv1", 4, 0.1).unwrap();
    let program = serialise(&simplify(&extract_program(d, &cfg).unwrap()).unwrap());
    let grid = SweepGrid {
        leps: vec!["conv1".into(), "conv2".into()],
        depths: (1..=5).collect(),
        alpha: 0.01,
        splits: splits(),
        mode: SweepMode::SingleLayer,
        demand_driven: true,
    };
    (program, csv_string(&run_sweep(d, &grid).unwrap()))
}

fn determinism() -> Outcome {
    let d = generate_synthetic(&common::two_boundary_config(3000, 5)).unwrap();
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let a = pool(1).install(|| run_pipeline(&d));
    let b = pool(1).install(|| run_pipeline(&d));
    let c = pool(8).install(|| run_pipeline(&d));
    let again = generate_synthetic(&common::two_boundary_config(3000, 5)).unwrap();
    let e = pool(8).install(|| run_pipeline(&again));
    check(a == b && a == c && a == e, format!("{} program bytes, {} csv bytes", a.0.len(), a.1.len()))
}

fn random_dataset(rng: &mut rand_chacha::ChaCha8Rng, case: usize) -> Dataset {
    let n = rng.gen_range(1..60);
    let n_layers = rng.gen_range(1..4);
    let n_classes = rng.gen_range(2..6);
    let mut layers: Vec<LayerMeta> = (0..n_layers)
        .map(|l| LayerMeta {
            name: format!("conv{}", l + 1),
            n_kernels: rng.gen_range(1..20),
            pooled: rng.gen(),
            file: format!("conv{}.norms", l + 1),
        })
        .collect();
    let norms = layers
        .iter()
        .map(|l| {
            let data = (0..n * l.n_kernels)
                .map(|_| match rng.gen_range(0..5) {
                    0 => 0.0,
                    1 => f32::from_bits(rng.gen_range(1..0x0080_0000)), // subnormal
                    2 => f32::MAX / rng.gen_range(1.0..4.0),
                    _ => rng.gen::<f32>() * 1e3,
                })
                .collect();
            NormMatrix::new(n, l.n_kernels, data).unwrap()
        })
        .collect();
    layers.push(LayerMeta {
        name: OUTPUT_LAYER.into(),
        n_kernels: n_classes,
        pooled: false,
        file: "teacher.bin".into(),
    });
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..n {
        let j = rng.gen_range(i..n);
        order.swap(i, j);
    }
    let cut = rng.gen_range(1..=n);
    let mut splits = std::collections::BTreeMap::new();
    splits.insert("train".to_string(), order[..cut].to_vec());
    splits.insert("val".to_string(), order[cut..].to_vec());
    let manifest = Manifest {
        version: FORMAT_VERSION,
        n_samples: n,
        class_names: (0..n_classes).map(|c| format!("class_{c}")).collect(),
        splits,
        layers,
        image_refs: case.is_multiple_of(2).then(|| (0..n).map(|i| format!("images/{i}.png")).collect()),
        metadata: Default::default(),
    };
    let labels = (0..n).map(|_| rng.gen_range(0..n_classes)).collect();
    let teacher = (0..n).map(|_| rng.gen_range(0..n_classes)).collect();
    Dataset::new(manifest, norms, labels, teacher).unwrap()
}

fn norm_bits(d: &Dataset) -> Vec<Vec<u32>> {
    d.manifest()
        .conv_layers()
        .iter()
        .map(|l| d.norms(&l.name).unwrap().as_slice().iter().map(|v| v.to_bits()).collect())
        .collect()
}

fn format_round_trips() -> Outcome {
    let mut rng = common::rng(9);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for case in 0..50 {
        let d = random_dataset(&mut rng, case);
        let path = dir.path().join(format!("d{case}"));
        save_dataset(&d, &path).map_err(|e| e.to_string())?;
        let back = load_dataset(&path).map_err(|e| e.to_string())?;
        if back.manifest() != d.manifest()
            || back.labels() != d.labels()
            || back.teacher() != d.teacher()
            || norm_bits(&back) != norm_bits(&d)
        {
            return Err(format!("dataset {case} changed"));
        }
        let k = rng.gen_range(1..16);
        let hidden = (case % 3 == 0).then(|| rng.gen_range(1..6));
        let n_rules = rng.gen_range(0..60);
        let p = common::random_program(&mut rng, k, n_rules, hidden);
        let text = serialise(&p);
        let parsed = parse(&text).map_err(|e| format!("program {case}: {e}"))?;
        if parsed != p || serialise(&parsed) != text {
            return Err(format!("program {case} changed"));
        }
    }
    Ok("50 datasets, 50 programs".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("quantisation oracle", quantisation_oracle, Some(5)),
        ("induction oracle", induction_oracle, Some(10)),
        ("planted-rule recovery", planted_recovery, Some(30)),
        ("depth monotonicity", depth_monotonicity, None),
        ("rule-length bound", rule_length_bound, None),
        ("simplification semantics", simplification_semantics, Some(60)),
        ("multi-layer chaining", multi_layer_chaining, Some(60)),
        ("determinism", determinism, None),
        ("format round-trips", format_round_trips, None),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let over = limit.is_some_and(|s| took > Duration::from_secs(s));
        let (ok, detail) = match outcome {
            Ok(d) if !over => (true, d),
            Ok(d) => (false, format!("{d}; over the {}s limit", limit.unwrap())),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {name:<26} {:>8.2}s  {detail}",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", 9 - failed, 9);
    if failed > 0 {
        std::process::exit(1);
    }
}
