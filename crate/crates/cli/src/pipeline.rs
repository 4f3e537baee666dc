//! Fixture construction and the end-to-end pipeline behind every
//! subcommand: build the graph, run the requested checks, compute the
//! requested embedding, measure distortion, and write the artifacts.

use crate::config::Settings;
use crate::jsonout::{self, num, obj};
use anyhow::{anyhow, bail, Context, Result};
use lpembed_core::distortion::{estimate_compression, fit_lower_bound, measure_distortion, DistortionCurve};
use lpembed_core::func::{
    check_function_class, random_doubling_instances, random_instances, verify_sum_lemmas,
    CompressionFunction,
};
use lpembed_core::graph::MetricGraph;
use lpembed_core::halfint::HalfInt;
use lpembed_core::hyp_embed::{check_trumpet_lemmas, embed_hyperbolic, TrumpetParams};
use lpembed_core::hyperbolicity::{check_geodesic_stability, default_delta, hyperbolicity_report};
use lpembed_core::lp::LpVector;
use lpembed_core::pieces::{coset_line_pieces, pieces_from_cosets, PieceSystem};
use lpembed_core::psi::PsiAssignment;
use lpembed_core::relhyp::{check_nxi_stability, check_spqr, RelHyp};
use lpembed_core::tree_graded::{check_bilipschitz, validate_tree_graded, TgAnalysis};
use lpembed_core::word::GroupSpec;
use serde_json::Value;
use std::path::Path;
use std::time::Instant;

pub struct Fixture {
    pub name: String,
    pub graph: MetricGraph,
}

/// Parse fixture descriptors: `free(2,8)`, `abelian(2,6)`, `cyclic(8,4)`,
/// `zxz(10)`, `z2xz(8)`, `product(abelian(2),abelian(1),10)`, `path(9)`,
/// `cycle(8)`, `file:PATH`.
pub fn build_fixture(desc: &str) -> Result<Fixture> {
    let desc = desc.trim();
    if let Some(path) = desc.strip_prefix("file:") {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        let graph = MetricGraph::from_graph_file(&text)?;
        return Ok(Fixture { name: desc.to_string(), graph });
    }
    let (head, args) = split_call(desc)?;
    let graph = match head {
        "path" => MetricGraph::path(single_int(&args, desc)?),
        "cycle" => MetricGraph::cycle(single_int(&args, desc)?),
        _ => {
            if args.is_empty() {
                bail!("fixture `{desc}` is missing a radius");
            }
            let radius: u32 = args
                .last()
                .unwrap()
                .parse()
                .map_err(|_| anyhow!("fixture `{desc}`: bad radius `{}`", args.last().unwrap()))?;
            let family = if args.len() == 1 {
                head.to_string()
            } else {
                format!("{head}({})", args[..args.len() - 1].join(","))
            };
            let spec = GroupSpec::parse(&family, radius)?;
            MetricGraph::group_ball(&spec)?
        }
    };
    Ok(Fixture { name: desc.to_string(), graph })
}

fn split_call(desc: &str) -> Result<(&str, Vec<String>)> {
    let Some(open) = desc.find('(') else {
        return Ok((desc, Vec::new()));
    };
    if !desc.ends_with(')') {
        bail!("fixture `{desc}`: unbalanced parentheses");
    }
    let head = &desc[..open];
    let inner = &desc[open + 1..desc.len() - 1];
    let mut args = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in inner.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                args.push(inner[start..i].trim().to_string());
                start = i + 1;
            }
            _ => {}
        }
    }
    if !inner.trim().is_empty() {
        args.push(inner[start..].trim().to_string());
    }
    Ok((head, args))
}

fn single_int(args: &[String], desc: &str) -> Result<u32> {
    if args.len() != 1 {
        bail!("fixture `{desc}` takes exactly one argument");
    }
    args[0].parse().map_err(|_| anyhow!("fixture `{desc}`: bad size"))
}

/// Build the configured piece system: `lines`, `cosets` (default for group
/// fixtures), `file:PATH`, with peripheral factor selectors and the
/// neighborhood constant.
pub fn build_pieces(g: &MetricGraph, s: &Settings) -> Result<PieceSystem> {
    let mode = s.pieces.as_deref().unwrap_or("cosets");
    if let Some(path) = mode.strip_prefix("file:") {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        return Ok(PieceSystem::from_pieces_file(g, &text, s.piece_k.unwrap_or(0))?);
    }
    let all_factors: Vec<usize> = g
        .words()
        .map(|w| (0..w.spec().factors.len()).collect())
        .ok_or_else(|| anyhow!("piece mode `{mode}` needs a group fixture (or use pieces=file:...)"))?;
    let factors = s.peripherals.clone().unwrap_or(all_factors);
    let k = s.piece_k.unwrap_or(0);
    match mode {
        "lines" => Ok(coset_line_pieces(g, &factors)?),
        "cosets" => Ok(pieces_from_cosets(g, &factors, k)?),
        _ => bail!("unknown pieces mode `{mode}`"),
    }
}

fn compression_function(s: &Settings, p: f64) -> Result<CompressionFunction> {
    let spec = s.f.as_deref().unwrap_or("sqrt");
    if let Some(path) = spec.strip_prefix("table:") {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            values.push(
                line.parse::<f64>()
                    .map_err(|_| anyhow!("table {path} line {}: bad value `{line}`", i + 1))?,
            );
        }
        return Ok(CompressionFunction::Table { values });
    }
    Ok(CompressionFunction::parse(spec, p)?)
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub report: Value,
    pub checks_passed: bool,
}

struct CheckAcc {
    entries: Vec<(String, Value)>,
    all_pass: bool,
}

impl CheckAcc {
    fn push(&mut self, name: &str, pass: bool, detail: Value) {
        let mut full = serde_json::Map::new();
        full.insert("pass".into(), Value::Bool(pass));
        match detail {
            Value::Object(m) => full.extend(m),
            Value::Null => {}
            other => {
                full.insert("detail".into(), other);
            }
        }
        self.entries.push((name.to_string(), Value::Object(full)));
        self.all_pass &= pass;
    }
}

/// Run the configured stages and write `report.json`, `embedding.csv`, and
/// `curve.csv` under `out_dir` when given.
pub fn run_pipeline(s: &Settings, out_dir: Option<&Path>) -> Result<PipelineOutcome> {
    let started = Instant::now();
    let seed = s.seed.unwrap_or(0);
    let p = s.p.unwrap_or(2.0);
    if !(p > 1.0) {
        bail!("p > 1 required, got {p}");
    }

    let fixture_desc = s.fixture.as_deref().unwrap_or("free(2,6)");
    let fixture = build_fixture(fixture_desc)?;
    let g = &fixture.graph;
    let f = compression_function(s, p)?;

    let mut acc = CheckAcc { entries: Vec::new(), all_pass: true };
    let mut report_fields: Vec<(&str, Value)> = vec![
        ("schema", Value::from(jsonout::SCHEMA_VERSION)),
        (
            "fixture",
            obj(vec![
                ("name", Value::String(fixture.name.clone())),
                ("vertices", Value::from(g.vertex_count())),
                ("basepoint", Value::from(g.basepoint())),
                ("max_degree", Value::from(g.max_degree())),
                ("ball_radius", g.ball_radius().map(Value::from).unwrap_or(Value::Null)),
                ("safe_radius", g.safe_radius().map(Value::from).unwrap_or(Value::Null)),
                ("safe_vertices", Value::from(g.safe_vertices().len())),
            ]),
        ),
        ("seed", Value::from(seed)),
    ];

    let delta = match s.delta.as_deref() {
        None | Some("auto") => default_delta(g, seed)?,
        Some(d) => HalfInt::from_doubled(
            (d.parse::<f64>().map_err(|_| anyhow!("bad delta `{d}`"))? * 2.0).round() as i64,
        ),
    };
    report_fields.push(("delta", num(delta.as_f64())));

    let embed_kind = s.embed.as_deref();
    let mut checks = s.checks.clone();
    if checks.is_empty() {
        match embed_kind {
            Some("hyp") => checks = vec!["function".into(), "trumpets".into(), "stability".into()],
            Some("tg") => checks = vec!["tg".into()],
            Some("relhyp") => checks = vec!["function".into(), "nxi".into()],
            _ => {}
        }
    }

    for check in &checks {
        match check.as_str() {
            "delta" => {
                let rep = hyperbolicity_report(g, seed)?;
                acc.push(
                    "delta",
                    true,
                    obj(vec![
                        ("four_point", num(rep.delta_four_point.as_f64())),
                        ("rips_estimate", num(rep.delta_rips_estimate.as_f64())),
                        (
                            "witness",
                            Value::String(format!("{:?}", rep.four_point_witness)),
                        ),
                        ("method", Value::String(rep.method_params)),
                    ]),
                );
            }
            "function" => {
                let rep = check_function_class(&f, p, 100_000)?;
                acc.push(
                    "function_class",
                    rep.ccp,
                    obj(vec![
                        ("concave", Value::Bool(rep.concave)),
                        ("cp", Value::Bool(rep.cp)),
                        ("ccp", Value::Bool(rep.ccp)),
                        ("n0", rep.n0.map(Value::from).unwrap_or(Value::Null)),
                        ("certificate", Value::String(format!("{:?}", rep.certificate))),
                        ("partial_sum", num(rep.partial_sum)),
                    ]),
                );
            }
            "lemmas" => {
                let count = s.instances.unwrap_or(1000);
                let max_m = s.max_m.unwrap_or(10_000);
                let size = s.set_size.unwrap_or(40);
                let mut failures = 0u64;
                for m in random_instances(count, max_m, size, seed) {
                    if !verify_sum_lemmas(&m, &f, p)?.all_pass() {
                        failures += 1;
                    }
                }
                for m in random_doubling_instances(count / 5, max_m, size, seed + 1) {
                    if !verify_sum_lemmas(&m, &f, p)?.all_pass() {
                        failures += 1;
                    }
                }
                acc.push(
                    "sum_lemmas",
                    failures == 0,
                    obj(vec![
                        ("instances", Value::from(count + count / 5)),
                        ("failures", Value::from(failures)),
                    ]),
                );
            }
            "tg" => {
                let ps = build_pieces_for_tg(g, s)?;
                let v = validate_tree_graded(g, &ps);
                acc.push(
                    "tree_graded_axioms",
                    v.passed(),
                    obj(vec![
                        ("uncovered", Value::from(v.uncovered.len())),
                        ("loop_violations", Value::from(v.loop_violations.len())),
                        ("intersection_violations", Value::from(v.intersection_violations.len())),
                        ("containment_violations", Value::from(v.containment_violations.len())),
                    ]),
                );
                if v.passed() {
                    let tg = TgAnalysis::new(g, &ps)?;
                    let bil = check_bilipschitz(&tg)?;
                    acc.push(
                        "bilipschitz",
                        bil.violations.is_empty(),
                        obj(vec![
                            ("pairs", Value::from(bil.pairs)),
                            ("violations", Value::from(bil.violations.len())),
                        ]),
                    );
                    let mut unique = true;
                    for x in g.safe_vertices() {
                        unique &= tg.decomposition_is_unique(x)?;
                    }
                    acc.push("decomposition_unique", unique, obj(vec![]));
                }
            }
            "spqr" => {
                let ps = build_pieces(g, s)?;
                let k = s.k.unwrap_or(1);
                let rep = check_spqr(g, &ps, k)?;
                let cond = |c: &lpembed_core::relhyp::ConditionResult| {
                    obj(vec![
                        ("pass", Value::Bool(c.passed)),
                        ("minimal", Value::from(c.minimal)),
                        ("witness", Value::String(c.witness.clone())),
                    ])
                };
                acc.push(
                    "spqr",
                    rep.passed(),
                    obj(vec![
                        ("k", Value::from(k)),
                        ("c1", cond(&rep.c1)),
                        ("c2", cond(&rep.c2)),
                        ("c3", cond(&rep.c3)),
                        ("c4", cond(&rep.c4)),
                    ]),
                );
            }
            "stability" => {
                let three_delta = (delta * 3).floor().max(1) as u32;
                let n = s.stability_n.unwrap_or(three_delta.max(2));
                let rep = check_geodesic_stability(g, delta, n, s.trials, seed)?;
                acc.push(
                    "geodesic_stability",
                    rep.violations.is_empty(),
                    obj(vec![
                        ("n", Value::from(n)),
                        ("pairs", Value::from(rep.pairs_checked)),
                        ("points", Value::from(rep.points_checked)),
                        ("violations", Value::from(rep.violations.len())),
                    ]),
                );
            }
            "trumpets" => {
                let rep = check_trumpet_lemmas(g, delta, None, &[p])?;
                acc.push(
                    "trumpet_lemmas",
                    rep.violations.is_empty(),
                    obj(vec![
                        ("checks", Value::from(rep.checks)),
                        ("violations", Value::from(rep.violations.len())),
                    ]),
                );
            }
            "nxi" => {
                let ps = build_pieces(g, s)?;
                let rh = RelHyp::new(g, &ps, s.k.unwrap_or(1))?;
                let violations = check_nxi_stability(&rh, 2)?;
                acc.push(
                    "boundary_count_stability",
                    violations.is_empty(),
                    obj(vec![("violations", Value::from(violations.len()))]),
                );
            }
            other => bail!("unknown check `{other}`"),
        }
    }

    // embedding + distortion
    if let Some(kind) = embed_kind {
        let safe = g.safe_vertices();
        let vecs: Vec<(u32, LpVector)> = match kind {
            "hyp" => {
                let params = TrumpetParams::for_graph(g, delta, f.clone(), p)?;
                safe.iter().map(|&x| Ok((x, embed_hyperbolic(g, x, &params)?))).collect::<Result<_>>()?
            }
            "tg" => {
                let ps = build_pieces_for_tg(g, s)?;
                let v = validate_tree_graded(g, &ps);
                if !v.passed() {
                    bail!("tree-graded validation failed; the tg embedding requires a valid piece system");
                }
                let tg = TgAnalysis::new(g, &ps)?;
                let psi = PsiAssignment::auto(g, &ps);
                safe.iter().map(|&x| Ok((x, tg.embed(x, &psi, &f, p)?))).collect::<Result<_>>()?
            }
            "relhyp" => {
                let ps = build_pieces(g, s)?;
                let rh = RelHyp::new(g, &ps, s.k.unwrap_or(1))?;
                let psi = PsiAssignment::auto(g, &ps);
                safe.iter()
                    .map(|&x| Ok((x, rh.embed(x, &psi, &f, p, s.shared_small)?)))
                    .collect::<Result<_>>()?
            }
            other => bail!("unknown embedding `{other}`"),
        };
        let coords: usize = vecs.iter().map(|(_, v)| v.support_len()).sum();
        report_fields.push((
            "embedding",
            obj(vec![
                ("kind", Value::String(kind.to_string())),
                ("f", Value::String(f.describe())),
                ("p", num(p)),
                ("vertices", Value::from(vecs.len())),
                ("coordinates", Value::from(coords)),
            ]),
        ));
        let curve = measure_distortion(g, &vecs)?;
        report_fields.push(("distortion", distortion_json(&curve, &f, s.k.unwrap_or(1))));
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("embedding.csv"), embedding_csv(&vecs))?;
            std::fs::write(dir.join("curve.csv"), curve_csv(&curve))?;
        }
    }

    report_fields.push((
        "checks",
        Value::Object(acc.entries.into_iter().collect()),
    ));
    if s.timings {
        report_fields.push((
            "runtime",
            obj(vec![("total_seconds", num(started.elapsed().as_secs_f64()))]),
        ));
    }

    let report = obj(report_fields);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), jsonout::render(&report))?;
    }
    Ok(PipelineOutcome { report, checks_passed: acc.all_pass })
}

fn build_pieces_for_tg(g: &MetricGraph, s: &Settings) -> Result<PieceSystem> {
    if s.pieces.is_none() && g.words().is_some() {
        let all: Vec<usize> = (0..g.words().unwrap().spec().factors.len()).collect();
        let factors = s.peripherals.clone().unwrap_or(all);
        return Ok(coset_line_pieces(g, &factors)?);
    }
    build_pieces(g, s)
}

fn distortion_json(curve: &DistortionCurve, f: &CompressionFunction, k: u32) -> Value {
    let mut rows = Vec::new();
    let mut min_ratio_all = f64::INFINITY;
    let mut min_ratio_far = f64::INFINITY;
    for (&r, c) in &curve.per_r {
        rows.push(obj(vec![
            ("r", Value::from(r)),
            ("rho_minus", num(c.rho_minus)),
            ("rho_plus", num(c.rho_plus)),
            ("pairs", Value::from(c.pairs)),
        ]));
        let rho = (r as f64 / 2.0).min(f.eval(r as u64));
        if rho > 0.0 {
            let ratio = c.rho_minus / rho;
            min_ratio_all = min_ratio_all.min(ratio);
            if r > 6 * k {
                min_ratio_far = min_ratio_far.min(ratio);
            }
        }
    }
    let alpha = estimate_compression(curve).ok();
    let fit = fit_lower_bound(curve).ok();
    obj(vec![
        ("curve", Value::Array(rows)),
        ("lipschitz", num(curve.lipschitz())),
        ("compression_alpha", alpha.map(num).unwrap_or(Value::Null)),
        (
            "lower_fit",
            fit.map(|ft| {
                obj(vec![("c", num(ft.c)), ("c_offset", num(ft.c_offset)), ("alpha", num(ft.alpha))])
            })
            .unwrap_or(Value::Null),
        ),
        (
            "min_ratio_all_pairs",
            if min_ratio_all.is_finite() { num(min_ratio_all) } else { Value::Null },
        ),
        (
            "min_ratio_beyond_dead_zone",
            if min_ratio_far.is_finite() { num(min_ratio_far) } else { Value::Null },
        ),
    ])
}

fn fmt_float(x: f64) -> String {
    match num(x) {
        Value::Number(n) => n.to_string(),
        other => other.to_string(),
    }
}

fn embedding_csv(vecs: &[(u32, LpVector)]) -> String {
    let mut out = String::from("vertex,namespace,key,value\n");
    for (v, vec) in vecs {
        for (label, value) in vec.iter() {
            out.push_str(&format!("{v},{},{},{}\n", label.namespace, label.key, fmt_float(value)));
        }
    }
    out
}

fn curve_csv(curve: &DistortionCurve) -> String {
    let mut out = String::from("r,rho_minus,rho_plus,pairs\n");
    for (&r, c) in &curve.per_r {
        out.push_str(&format!("{r},{},{},{}\n", fmt_float(c.rho_minus), fmt_float(c.rho_plus), c.pairs));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_parsing() {
        assert_eq!(build_fixture("free(2,3)").unwrap().graph.vertex_count(), 53);
        assert_eq!(build_fixture("zxz(2)").unwrap().graph.vertex_count(), 17);
        assert_eq!(build_fixture("path(9)").unwrap().graph.vertex_count(), 9);
        assert_eq!(build_fixture("cycle(8)").unwrap().graph.vertex_count(), 8);
        assert_eq!(
            build_fixture("product(abelian(1),abelian(1),2)").unwrap().graph.vertex_count(),
            17
        );
        assert!(build_fixture("free(2)").is_err());
        assert!(build_fixture("nonsense(3,3)").is_err());
    }

    #[test]
    fn rejects_p_of_one() {
        let s = Settings {
            fixture: Some("free(2,4)".into()),
            embed: Some("hyp".into()),
            p: Some(1.0),
            ..Default::default()
        };
        let err = run_pipeline(&s, None).unwrap_err().to_string();
        assert!(err.contains("p > 1"), "{err}");
    }
}
