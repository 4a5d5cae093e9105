//! The line-oriented `.lp` program format.
//!
//! ```text
//! [program]
//! version = 1
//! layers = conv13:512, output:3
//! classes = desert, forest, street
//! depth = 5
//! alpha = 0.01
//! demand_driven = true
//!
//! [thresholds conv13]
//! k0 = 1.25000000e0
//!
//! [rules conv13 -> output]
//! street <- conv13.334 & !conv13.500. {support=41, pos=39}
//! ```
//!
//! Rules with several consequents list one statistic per consequent, separated
//! by `/`. A rule with no antecedents is written `c <- true.`

use std::fmt::Write;

use super::{Consequent, ExtractionParams, LayerShape, Literal, Program, Rule, RuleSet};
use crate::error::{Error, Result};
use crate::quantise::ThresholdVector;

pub const TEXT_VERSION: u32 = 1;

pub fn serialise(p: &Program) -> String {
    write_program(p, &|_, _| None)
}

/// Writes a program; `label` may rename any `(layer, kernel)` literal.
pub(crate) fn write_program(p: &Program, label: &dyn Fn(&str, usize) -> Option<String>) -> String {
    let mut s = String::new();
    let params = p.params();
    s.push_str("[program]\n");
    writeln!(s, "version = {TEXT_VERSION}").unwrap();
    let layers: Vec<String> = p
        .layers()
        .iter()
        .map(|l| format!("{}:{}", l.name, l.n_kernels))
        .collect();
    writeln!(s, "layers = {}", layers.join(", ")).unwrap();
    writeln!(s, "classes = {}", p.class_names().join(", ")).unwrap();
    writeln!(s, "depth = {}", params.depth).unwrap();
    writeln!(s, "alpha = {}", params.alpha).unwrap();
    writeln!(s, "demand_driven = {}", params.demand_driven).unwrap();

    writeln!(s, "\n[thresholds {}]", p.entry_layer().name).unwrap();
    for (k, t) in p.thresholds().as_slice().iter().enumerate() {
        writeln!(s, "k{k} = {}", format_threshold(*t)).unwrap();
    }

    for (i, rs) in p.rule_sets().iter().enumerate() {
        writeln!(s, "\n[rules {} -> {}]", rs.from, rs.to).unwrap();
        let name = |layer: usize, kernel: usize| {
            label(&p.layers()[layer].name, kernel).unwrap_or_else(|| p.kernel_name(layer, kernel))
        };
        for rule in &rs.rules {
            s.push_str(&rule_line(rule, |k| name(i, k), |k| name(i + 1, k)));
            s.push('\n');
        }
    }
    s
}

/// 9 significant digits, enough to round-trip any `f32`.
pub(crate) fn format_threshold(t: f32) -> String {
    format!("{t:.8e}")
}

fn rule_line(
    rule: &Rule,
    antecedent: impl Fn(usize) -> String,
    consequent: impl Fn(usize) -> String,
) -> String {
    let heads: Vec<String> = rule.consequents().iter().map(|c| consequent(c.target)).collect();
    let body = if rule.antecedents().is_empty() {
        "true".to_string()
    } else {
        rule.antecedents()
            .iter()
            .map(|l| {
                let n = antecedent(l.kernel);
                if l.positive {
                    n
                } else {
                    format!("!{n}")
                }
            })
            .collect::<Vec<_>>()
            .join(" & ")
    };
    let join = |f: fn(&Consequent) -> usize| {
        rule.consequents()
            .iter()
            .map(|c| f(c).to_string())
            .collect::<Vec<_>>()
            .join("/")
    };
    format!(
        "{} <- {body}. {{support={}, pos={}}}",
        heads.join(", "),
        join(|c| c.support),
        join(|c| c.positives)
    )
}

enum Section {
    None,
    Program,
    Thresholds,
    Rules(usize),
}

#[derive(Default)]
struct Header {
    version: Option<u32>,
    layers: Option<Vec<LayerShape>>,
    classes: Option<Vec<String>>,
    depth: Option<usize>,
    alpha: Option<f64>,
    demand_driven: Option<bool>,
}

struct Parser<'a> {
    line_no: usize,
    line: &'a str,
}

impl<'a> Parser<'a> {
    fn err(&self, at: &str, message: impl Into<String>) -> Error {
        let base = self.line.as_ptr() as usize;
        let ptr = at.as_ptr() as usize;
        let offset = if ptr >= base && ptr <= base + self.line.len() {
            self.line[..ptr - base].chars().count()
        } else {
            0
        };
        Error::Syntax {
            line: self.line_no,
            column: offset + 1,
            message: message.into(),
        }
    }
}

pub fn parse(text: &str) -> Result<Program> {
    let mut header = Header::default();
    let mut section = Section::None;
    let mut thresholds: Vec<Option<f32>> = Vec::new();
    let mut threshold_layer_seen = false;
    let mut sets: Vec<RuleSet> = Vec::new();

    for (n, raw) in text.lines().enumerate() {
        let content = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let t = content.trim();
        if t.is_empty() {
            continue;
        }
        let ps = Parser {
            line_no: n + 1,
            line: raw,
        };

        if let Some(inner) = t.strip_prefix('[') {
            let Some(inner) = inner.strip_suffix(']') else {
                return Err(ps.err(t, "section header missing ']'"));
            };
            let inner = inner.trim();
            let mut words = inner.split_whitespace();
            match words.next() {
                Some("program") => section = Section::Program,
                Some("thresholds") => {
                    let layers = header_layers(&header, &ps, inner)?;
                    let name = words.next().ok_or_else(|| ps.err(inner, "missing layer"))?;
                    if name != layers[0].name {
                        return Err(ps.err(name, format!(
                            "thresholds must be for entry layer {:?}",
                            layers[0].name
                        )));
                    }
                    if threshold_layer_seen {
                        return Err(ps.err(inner, "duplicate thresholds section"));
                    }
                    threshold_layer_seen = true;
                    thresholds = vec![None; layers[0].n_kernels];
                    section = Section::Thresholds;
                }
                Some("rules") => {
                    let layers = header_layers(&header, &ps, inner)?;
                    let from = words.next().ok_or_else(|| ps.err(inner, "missing layer"))?;
                    let arrow = words.next();
                    let to = words.next();
                    let (Some("->"), Some(to)) = (arrow, to) else {
                        return Err(ps.err(inner, "expected `rules <from> -> <to>`"));
                    };
                    let i = sets.len();
                    if i + 1 >= layers.len()
                        || layers[i].name != from
                        || layers[i + 1].name != to
                    {
                        return Err(ps.err(from, format!(
                            "rule set {from} -> {to} does not chain with the declared layers"
                        )));
                    }
                    sets.push(RuleSet::new(from, to, Vec::new()));
                    section = Section::Rules(i);
                }
                _ => return Err(ps.err(inner, format!("unknown section [{inner}]"))),
            }
            continue;
        }

        match section {
            Section::None => return Err(ps.err(t, "content outside any section")),
            Section::Program => parse_header_line(&mut header, &ps, t)?,
            Section::Thresholds => {
                let (key, value) = split_kv(&ps, t)?;
                let k = key
                    .strip_prefix('k')
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| ps.err(key, "expected k<index>"))?;
                if k >= thresholds.len() {
                    return Err(ps.err(key, "threshold index out of range"));
                }
                if thresholds[k].is_some() {
                    return Err(ps.err(key, "duplicate threshold"));
                }
                let v: f32 = value
                    .parse()
                    .map_err(|_| ps.err(value, "invalid threshold value"))?;
                if !v.is_finite() || v < 0.0 {
                    return Err(ps.err(value, "thresholds must be finite and non-negative"));
                }
                thresholds[k] = Some(v);
            }
            Section::Rules(i) => {
                let layers = header.layers.as_ref().expect("checked at section header");
                let classes = header.classes.as_deref().unwrap_or(&[]);
                let rule = parse_rule(&ps, t, &layers[i], &layers[i + 1], i + 2 == layers.len(), classes)?;
                sets[i].rules.push(rule);
            }
        }
    }

    let missing = |what: &str| Error::Syntax {
        line: text.lines().count().max(1),
        column: 1,
        message: format!("missing {what}"),
    };
    if header.version.ok_or_else(|| missing("version"))? != TEXT_VERSION {
        return Err(Error::InvalidProgram("unsupported program version".into()));
    }
    let layers = header.layers.ok_or_else(|| missing("layers"))?;
    let classes = header.classes.ok_or_else(|| missing("classes"))?;
    let params = ExtractionParams {
        depth: header.depth.ok_or_else(|| missing("depth"))?,
        alpha: header.alpha.ok_or_else(|| missing("alpha"))?,
        demand_driven: header.demand_driven.ok_or_else(|| missing("demand_driven"))?,
    };
    if !threshold_layer_seen {
        return Err(missing("thresholds section"));
    }
    let thresholds: Vec<f32> = thresholds
        .into_iter()
        .enumerate()
        .map(|(k, t)| t.ok_or_else(|| missing(&format!("threshold k{k}"))))
        .collect::<Result<_>>()?;
    if sets.len() + 1 != layers.len() {
        return Err(missing(&format!(
            "rule sets: found {}, layers need {}",
            sets.len(),
            layers.len() - 1
        )));
    }
    Program::new(layers, ThresholdVector::new(thresholds)?, classes, sets, params)
}

fn header_layers<'h>(header: &'h Header, ps: &Parser, at: &str) -> Result<&'h [LayerShape]> {
    header
        .layers
        .as_deref()
        .ok_or_else(|| ps.err(at, "`layers` must be declared in [program] first"))
}

fn split_kv<'a>(ps: &Parser, t: &'a str) -> Result<(&'a str, &'a str)> {
    let (k, v) = t
        .split_once('=')
        .ok_or_else(|| ps.err(t, "expected `key = value`"))?;
    Ok((k.trim(), v.trim()))
}

fn parse_header_line(h: &mut Header, ps: &Parser, t: &str) -> Result<()> {
    let (key, value) = split_kv(ps, t)?;
    let bad = |what: &str| ps.err(value, format!("invalid {what}"));
    match key {
        "version" => h.version = Some(value.parse().map_err(|_| bad("version"))?),
        "depth" => h.depth = Some(value.parse().map_err(|_| bad("depth"))?),
        "alpha" => h.alpha = Some(value.parse().map_err(|_| bad("alpha"))?),
        "demand_driven" => h.demand_driven = Some(value.parse().map_err(|_| bad("flag"))?),
        "classes" => {
            h.classes = Some(value.split(',').map(|c| c.trim().to_string()).collect());
        }
        "layers" => {
            let mut layers = Vec::new();
            for item in value.split(',') {
                let item = item.trim();
                let (name, k) = item
                    .split_once(':')
                    .ok_or_else(|| ps.err(item, "expected <layer>:<kernels>"))?;
                let n_kernels = k.trim().parse().map_err(|_| ps.err(k, "invalid kernel count"))?;
                layers.push(LayerShape {
                    name: name.trim().to_string(),
                    n_kernels,
                });
            }
            h.layers = Some(layers);
        }
        _ => return Err(ps.err(key, format!("unknown key {key:?}"))),
    }
    Ok(())
}

fn parse_kernel_ref(ps: &Parser, tok: &str, layer: &LayerShape) -> Result<usize> {
    let idx = tok
        .strip_prefix(layer.name.as_str())
        .and_then(|r| r.strip_prefix('.'))
        .ok_or_else(|| ps.err(tok, format!("expected a literal of layer {:?}", layer.name)))?;
    let k: usize = idx
        .parse()
        .map_err(|_| ps.err(idx, "invalid kernel index"))?;
    if k >= layer.n_kernels {
        return Err(ps.err(idx, format!("kernel {k} out of range for {}", layer.name)));
    }
    Ok(k)
}

fn parse_rule(
    ps: &Parser,
    t: &str,
    from: &LayerShape,
    to: &LayerShape,
    to_output: bool,
    classes: &[String],
) -> Result<Rule> {
    let (body, trailer) = match t.find('{') {
        Some(i) => (t[..i].trim_end(), Some(&t[i..])),
        None => (t, None),
    };
    let Some(body) = body.strip_suffix('.') else {
        return Err(ps.err(&t[t.len()..], "rule must end with '.'"));
    };
    let (heads, tail) = body
        .split_once("<-")
        .ok_or_else(|| ps.err(body, "expected `<-`"))?;

    let mut targets = Vec::new();
    for h in heads.split(',') {
        let h = h.trim();
        let k = if to_output {
            classes
                .iter()
                .position(|c| c == h)
                .ok_or_else(|| ps.err(h, format!("unknown class {h:?}")))?
        } else {
            parse_kernel_ref(ps, h, to)?
        };
        targets.push(k);
    }

    let tail = tail.trim();
    let mut antecedents = Vec::new();
    if tail != "true" {
        for lit in tail.split('&') {
            let lit = lit.trim();
            if lit.is_empty() {
                return Err(ps.err(tail, "empty literal"));
            }
            let (positive, name) = match lit.strip_prefix('!') {
                Some(rest) => (false, rest.trim_start()),
                None => (true, lit),
            };
            antecedents.push(Literal {
                kernel: parse_kernel_ref(ps, name, from)?,
                positive,
            });
        }
    }

    let (support, positives) = match trailer {
        Some(tr) => parse_trailer(ps, tr, targets.len())?,
        None => (vec![1; targets.len()], vec![1; targets.len()]),
    };
    let consequents = targets
        .iter()
        .zip(support.iter().zip(&positives))
        .map(|(&t, (&s, &p))| Consequent::new(t, s, p))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| ps.err(trailer.unwrap_or(t), e.to_string()))?;
    Rule::new(antecedents, consequents).map_err(|e| ps.err(t, e.to_string()))
}

fn parse_trailer(ps: &Parser, tr: &str, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let inner = tr
        .strip_prefix('{')
        .and_then(|s| s.trim_end().strip_suffix('}'))
        .ok_or_else(|| ps.err(tr, "malformed statistics trailer"))?;
    let mut support = None;
    let mut pos = None;
    for field in inner.split(',') {
        let (k, v) = split_kv(ps, field)?;
        let values: Vec<usize> = v
            .split('/')
            .map(|x| x.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| ps.err(v, "invalid count"))?;
        if values.len() != n {
            return Err(ps.err(v, format!("expected {n} value(s), one per consequent")));
        }
        match k {
            "support" => support = Some(values),
            "pos" => pos = Some(values),
            _ => return Err(ps.err(k, format!("unknown statistic {k:?}"))),
        }
    }
    match (support, pos) {
        (Some(s), Some(p)) => Ok((s, p)),
        _ => Err(ps.err(tr, "trailer needs both support and pos")),
    }
}
