use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use convlogic::dataset::{load_dataset, save_dataset, Dataset, OUTPUT_LAYER};
use convlogic::evaluate::{self, write_csv, Metrics, SweepGrid, SweepMode};
use convlogic::induction::{extract_program, ExtractionConfig};
use convlogic::inspect::{explain_sample, render_profile, render_rules, top_m, LabelMap};
use convlogic::program::{self, parse, predict_dataset, serialise, Program};
use convlogic::synth::{generate_synthetic, SynthConfig};
use convlogic::Error;

use crate::{
    presets, CmdResult, EvaluateArgs, ExtractArgs, Failure, Format, InferArgs, InspectArgs, RenderArgs, SimplifyArgs,
    SweepArgs, SynthArgs,
};

const SINGLE_ALPHA: f64 = 0.01;
const CHAIN_ALPHA: f64 = 0.1;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn echo(cmd: &str, pairs: &[(&str, String)]) {
    let body: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    eprintln!("# convlogic {} {cmd} {}", env!("CARGO_PKG_VERSION"), body.join(" "));
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn jobs() -> String {
    rayon::current_num_threads().to_string()
}

fn emit(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e).into()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("<stdout>", e).into())
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e).into())
}

/// Either format, decided by content.
fn load_program(path: &Path) -> Result<Program, Failure> {
    let text = read_text(path)?;
    let p = if text.trim_start().starts_with('{') {
        Program::from_json(&text)?
    } else {
        parse(&text)?
    };
    Ok(p)
}

fn program_text(p: &Program, format: Option<Format>, out: Option<&PathBuf>) -> Result<String, Failure> {
    let json = match format {
        Some(f) => f == Format::Json,
        None => out.is_some_and(|o| o.extension().is_some_and(|e| e == "json")),
    };
    if json {
        Ok(p.to_json()? + "\n")
    } else {
        Ok(serialise(p))
    }
}

fn load_labels(path: Option<&PathBuf>) -> Result<LabelMap, Failure> {
    Ok(match path {
        Some(p) => LabelMap::load(p)?,
        None => LabelMap::new(),
    })
}

/// Train, val and test first, then any other split by name.
fn default_splits(d: &Dataset) -> Vec<String> {
    let names: Vec<&String> = d.manifest().splits.keys().collect();
    let mut out: Vec<String> = ["train", "val", "test"]
        .iter()
        .filter(|s| names.iter().any(|n| n == *s))
        .map(|s| s.to_string())
        .collect();
    for n in names {
        if !out.contains(n) {
            out.push(n.clone());
        }
    }
    out
}

fn resolve_layers(d: &Dataset, a: &ExtractArgs) -> Result<Vec<String>, Failure> {
    let m = d.manifest();
    let names: Vec<&str> = m.layers.iter().map(|l| l.name.as_str()).collect();
    if let Some(spec) = &a.layers {
        let layers: Vec<String> = if let Some((from, to)) = spec.split_once("..") {
            let i = m.layer_index(from.trim())?;
            let j = m.layer_index(to.trim())?;
            if j <= i {
                return Err(usage(format!("empty layer range {spec:?}")));
            }
            names[i..=j].iter().map(|s| s.to_string()).collect()
        } else {
            spec.split(',').map(|s| s.trim().to_string()).collect()
        };
        if let Some(lep) = &a.lep {
            if layers.first() != Some(lep) {
                return Err(usage(format!("--lep {lep} is not the first of --layers {spec}")));
            }
        }
        return Ok(layers);
    }
    let lep = a.lep.as_deref().expect("clap requires --lep without --layers");
    if a.chain {
        let i = m.layer_index(lep)?;
        Ok(names[i..].iter().map(|s| s.to_string()).collect())
    } else {
        Ok(vec![lep.to_string(), OUTPUT_LAYER.to_string()])
    }
}

pub fn extract(a: ExtractArgs) -> CmdResult {
    let d = load_dataset(&a.dataset)?;
    let layers = resolve_layers(&d, &a)?;
    let alpha = a
        .alpha
        .unwrap_or(if layers.len() > 2 { CHAIN_ALPHA } else { SINGLE_ALPHA });
    echo(
        "extract",
        &[
            ("dataset", show(&a.dataset)),
            ("layers", layers.join(",")),
            ("depth", a.depth.to_string()),
            ("alpha", alpha.to_string()),
            ("demand_driven", (!a.all_kernels).to_string()),
            ("simplify", (!a.no_simplify).to_string()),
            ("jobs", jobs()),
        ],
    );
    let cfg = ExtractionConfig {
        layers,
        depth: a.depth,
        alpha,
        demand_driven: !a.all_kernels,
    };
    let mut p = extract_program(&d, &cfg)?;
    if !a.no_simplify {
        p = program::simplify(&p)?;
    }
    eprintln!("# {} rules, size {}", p.n_rules(), p.size());
    emit(a.out.as_deref(), &program_text(&p, a.format, a.out.as_ref())?)
}

pub fn simplify(a: SimplifyArgs) -> CmdResult {
    echo("simplify", &[("program", show(&a.program))]);
    let p = load_program(&a.program)?;
    let s = program::simplify(&p)?;
    eprintln!("# {} -> {} rules, size {} -> {}", p.n_rules(), s.n_rules(), p.size(), s.size());
    emit(a.out.as_deref(), &program_text(&s, a.format, a.out.as_ref())?)
}

fn metric(f: evaluate::Fraction) -> String {
    f.as_f64().map_or_else(|| "NA".to_string(), |v| format!("{v:.3}"))
}

fn metrics_text(m: &Metrics) -> String {
    let mut s = format!(
        "{:<8} {:>7} {:>9} {:>9} {:>8} {:>8}\n",
        "split", "n", "accuracy", "fidelity", "abstain", "teacher"
    );
    for sm in &m.splits {
        s += &format!(
            "{:<8} {:>7} {:>9} {:>9} {:>8} {:>8}\n",
            sm.split,
            sm.fidelity.total,
            metric(sm.accuracy),
            metric(sm.fidelity),
            metric(sm.abstain),
            metric(sm.teacher_accuracy)
        );
    }
    let st = m.stats;
    s += &format!(
        "rules {}  vars {}  vars_polarity {}  size {}\n",
        st.n_rules, st.n_vars, st.vars_polarity, st.size
    );
    s
}

pub fn evaluate(a: EvaluateArgs) -> CmdResult {
    let d = load_dataset(&a.dataset)?;
    let p = load_program(&a.program)?;
    let splits = if a.splits.is_empty() { default_splits(&d) } else { a.splits };
    echo(
        "evaluate",
        &[
            ("dataset", show(&a.dataset)),
            ("program", show(&a.program)),
            ("splits", splits.join(",")),
            ("jobs", jobs()),
        ],
    );
    let m = evaluate::evaluate(&p, &d, &splits)?;
    let text = match a.format {
        Format::Text => metrics_text(&m),
        Format::Json => serde_json::to_string_pretty(&m).map_err(Error::from)? + "\n",
    };
    emit(None, &text)
}

pub fn infer(a: InferArgs) -> CmdResult {
    let d = load_dataset(&a.dataset)?;
    let p = load_program(&a.program)?;
    let labels = load_labels(a.labels.as_ref())?;
    echo(
        "infer",
        &[
            ("dataset", show(&a.dataset)),
            ("program", show(&a.program)),
            ("sample", a.sample.map_or("-".into(), |s| s.to_string())),
            ("split", a.split.clone().unwrap_or_else(|| "-".into())),
        ],
    );
    if let Some(sample) = a.sample {
        let text = match a.format {
            Format::Text => explain_sample(&p, &d, sample, &labels)?,
            Format::Json => {
                let rows = [sample];
                let decision = &program::decide_rows(&p, &d, &rows)?[0];
                serde_json::to_string_pretty(decision).map_err(Error::from)? + "\n"
            }
        };
        return emit(None, &text);
    }
    let split = a.split.expect("clap requires --sample or --split");
    let rows = d.split(&split)?;
    let preds = predict_dataset(&p, &d, &split)?;
    let class = |c: Option<usize>| c.map_or("NA", |c| d.class_names()[c].as_str());
    let text = match a.format {
        Format::Text => {
            let mut s = String::from("sample,prediction,teacher,label\n");
            for (&i, pr) in rows.iter().zip(&preds) {
                s += &format!(
                    "{i},{},{},{}\n",
                    class(*pr),
                    class(Some(d.teacher()[i])),
                    class(Some(d.labels()[i]))
                );
            }
            s
        }
        Format::Json => {
            let v: Vec<serde_json::Value> = rows
                .iter()
                .zip(&preds)
                .map(|(&i, pr)| serde_json::json!({ "sample": i, "prediction": pr }))
                .collect();
            serde_json::to_string_pretty(&v).map_err(Error::from)? + "\n"
        }
    };
    emit(None, &text)
}

/// `a..b` (inclusive) or a comma separated list.
fn parse_depths(s: &str) -> Result<Vec<usize>, Failure> {
    let bad = || usage(format!("bad depth list {s:?}"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let depths: Vec<usize> = if let Some((lo, hi)) = s.split_once("..") {
        let (lo, hi) = (num(lo)?, num(hi.trim_start_matches('='))?);
        if lo > hi {
            return Err(bad());
        }
        (lo..=hi).collect()
    } else {
        s.split(',').map(num).collect::<Result<_, _>>()?
    };
    if depths.is_empty() {
        return Err(bad());
    }
    Ok(depths)
}

pub fn sweep(a: SweepArgs) -> CmdResult {
    let d = load_dataset(&a.dataset)?;
    let depths = parse_depths(&a.depths)?;
    let splits = if a.splits.is_empty() { default_splits(&d) } else { a.splits };
    let alpha = a.alpha.unwrap_or(if a.chain { CHAIN_ALPHA } else { SINGLE_ALPHA });
    let grid = SweepGrid {
        leps: a.leps,
        depths,
        alpha,
        splits,
        mode: if a.chain { SweepMode::Chain } else { SweepMode::SingleLayer },
        demand_driven: !a.all_kernels,
    };
    let depths: Vec<String> = grid.depths.iter().map(|d| d.to_string()).collect();
    echo(
        "sweep",
        &[
            ("dataset", show(&a.dataset)),
            ("leps", grid.leps.join(",")),
            ("depths", depths.join(",")),
            ("alpha", alpha.to_string()),
            ("splits", grid.splits.join(",")),
            ("chain", a.chain.to_string()),
            ("demand_driven", grid.demand_driven.to_string()),
            ("jobs", jobs()),
        ],
    );
    let result = evaluate::run_sweep(&d, &grid)?;
    for cell in &result.cells {
        if let Err(e) = &cell.outcome {
            eprintln!("# {} depth {}: {e}", cell.lep, cell.depth);
        }
    }
    match &a.out {
        Some(path) => {
            let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
            write_csv(&result, std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))?;
        }
        None if !a.table => emit(None, &evaluate::csv_string(&result))?,
        None => {}
    }
    if a.table {
        emit(None, &evaluate::sweep_table(&result))?;
    }
    Ok(())
}

pub fn inspect(a: InspectArgs) -> CmdResult {
    let d = load_dataset(&a.dataset)?;
    echo(
        "inspect",
        &[
            ("dataset", show(&a.dataset)),
            ("layer", a.layer.clone()),
            ("kernel", a.kernel.to_string()),
            ("m", a.m.to_string()),
        ],
    );
    let prof = top_m(&d, &a.layer, a.kernel, a.m)?;
    let text = match a.format {
        Format::Text => render_profile(&prof),
        Format::Json => serde_json::to_string_pretty(&prof).map_err(Error::from)? + "\n",
    };
    emit(None, &text)
}

pub fn render(a: RenderArgs) -> CmdResult {
    let p = load_program(&a.program)?;
    let labels = load_labels(a.labels.as_ref())?;
    emit(a.out.as_deref(), &render_rules(&p, &labels))
}

pub fn synth(a: SynthArgs) -> CmdResult {
    let mut cfg: SynthConfig = match (&a.config, a.preset) {
        (Some(path), _) => serde_json::from_str(&read_text(path)?).map_err(Error::from)?,
        (None, Some(p)) => presets::config(p, 4096, 0),
        (None, None) => unreachable!("clap requires --config or --preset"),
    };
    if let Some(n) = a.samples {
        cfg.n_samples = n;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    echo(
        "synth",
        &[
            ("out", show(&a.out)),
            ("samples", cfg.n_samples.to_string()),
            ("layers", format!("{:?}", cfg.layer_sizes)),
            ("classes", cfg.n_classes.to_string()),
            ("seed", cfg.seed.to_string()),
            ("label_noise", cfg.label_noise.to_string()),
        ],
    );
    let d = generate_synthetic(&cfg)?;
    save_dataset(&d, &a.out)?;
    Ok(())
}
