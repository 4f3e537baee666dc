//! Scale-averaged embedding of a hyperbolic graph.
//!
//! For a source `y` near `x`, the trumpet at scale `n` collects the vertices
//! sitting at parameter `[n, 2n]` along some geodesic from `y` to the
//! basepoint (measured from `y`), outside the closed `3δ`-ball around the
//! basepoint. Averaging the trumpets over `k ≤ n/4` and summing the scales
//! with weights `f(n)/n^{1/p}` gives the embedding.

use crate::error::{CoreError, Result};
use crate::func::CompressionFunction;
use crate::graph::MetricGraph;
use crate::halfint::HalfInt;
use crate::hyperbolicity::divergence_from;
use crate::lp::{CoordLabel, LpVector};
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct TrumpetParams {
    pub delta: HalfInt,
    /// Scale values `n` (powers of two), each `≥ max(1, 3δ)`.
    pub scales: Vec<u32>,
    pub f: CompressionFunction,
    pub p: f64,
}

impl TrumpetParams {
    /// Powers of two up to `2^⌈log2 diam(safe ball)⌉`, dropping scales
    /// below `3δ`.
    pub fn for_graph(g: &MetricGraph, delta: HalfInt, f: CompressionFunction, p: f64) -> Result<Self> {
        if !(p > 1.0) {
            return Err(CoreError::BadExponent(p));
        }
        let diam = g.safe_diameter().max(2);
        let top = diam.next_power_of_two();
        let mut scales = Vec::new();
        let mut n = 2u32;
        while n <= top {
            if HalfInt::from_int(n as i64) >= delta * 3 {
                scales.push(n);
            }
            n *= 2;
        }
        Ok(TrumpetParams { delta, scales, f, p })
    }

    fn scale_weight(&self, n: u32) -> f64 {
        self.f.eval(n as u64) / (n as f64).powf(1.0 / self.p)
    }
}

/// Vertices at parameter `[n, 2n]` from `y` along geodesics toward the
/// basepoint, over sources `y` with `d(x,y) ≤ kmax`, with the minimal source
/// distance that reaches each vertex. The closed `3δ`-ball around the
/// basepoint is excluded.
fn trumpet_kmin(g: &MetricGraph, x: u32, kmax: u32, n: u32, delta: HalfInt) -> HashMap<u32, u32> {
    let mut kmin: HashMap<u32, u32> = HashMap::new();
    let three_delta = delta * 3;
    for (y, ky) in g.ball_around(x, kmax) {
        // descend the geodesic cone of y toward the basepoint
        let mut depth_map: HashMap<u32, u32> = HashMap::new();
        depth_map.insert(y, 0);
        let mut frontier = vec![y];
        let mut depth = 0u32;
        while !frontier.is_empty() && depth < 2 * n {
            depth += 1;
            let mut next = Vec::new();
            for &u in &frontier {
                let lu = g.level(u);
                if lu == 0 {
                    continue;
                }
                for &v in g.neighbors(u) {
                    if g.level(v) + 1 == lu && !depth_map.contains_key(&v) {
                        depth_map.insert(v, depth);
                        next.push(v);
                    }
                }
            }
            frontier = next;
        }
        for (&v, &t) in &depth_map {
            if t >= n && t <= 2 * n && HalfInt::from_int(g.level(v) as i64) > three_delta {
                kmin.entry(v).and_modify(|m| *m = (*m).min(ky)).or_insert(ky);
            }
        }
    }
    kmin
}

/// The trumpet set `F_{x,k,n}`, sorted by vertex id.
pub fn trumpet_set(g: &MetricGraph, x: u32, k: u32, n: u32, delta: HalfInt) -> Result<Vec<u32>> {
    if k > n / 4 {
        return Err(CoreError::Precondition(format!("k must satisfy k <= n/4, got k={k}, n={n}")));
    }
    let mut vs: Vec<u32> = trumpet_kmin(g, x, k, n, delta).into_keys().collect();
    vs.sort_unstable();
    Ok(vs)
}

/// Trumpet sizes `|F_{x,k,n}|` for every `k = 0..⌊n/4⌋` at once.
pub fn trumpet_sizes(g: &MetricGraph, x: u32, n: u32, delta: HalfInt) -> Vec<u64> {
    let kmax = n / 4;
    let kmin = trumpet_kmin(g, x, kmax, n, delta);
    let mut sizes = vec![0u64; kmax as usize + 1];
    for &k0 in kmin.values() {
        for k in k0..=kmax {
            sizes[k as usize] += 1;
        }
    }
    sizes
}

/// Averaged level function `H(x,n) = (1/n) Σ_{k ≤ n/4} F(x,k,n)`, with
/// coordinates in namespace `h{n}` keyed by vertex id.
pub fn level_function(g: &MetricGraph, x: u32, n: u32, delta: HalfInt, p: f64) -> Result<LpVector> {
    let mut v = LpVector::zero(p)?;
    let kmax = n / 4;
    let ns = format!("h{n}");
    for (vert, k0) in trumpet_kmin(g, x, kmax, n, delta) {
        let count = (kmax + 1 - k0) as f64;
        v.set(CoordLabel::new(ns.clone(), vert.to_string()), count / n as f64);
    }
    Ok(v)
}

/// `φ(x) = Σ_n f(n)/n^{1/p} · H(x,n)` over the configured scales.
pub fn embed_hyperbolic(g: &MetricGraph, x: u32, params: &TrumpetParams) -> Result<LpVector> {
    let mut out = LpVector::zero(params.p)?;
    for &n in &params.scales {
        let h = level_function(g, x, n, params.delta, params.p)?;
        let w = params.scale_weight(n);
        out = out.add(&h.scale(w))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct TrumpetLemmaReport {
    pub checks: u64,
    pub violations: Vec<String>,
}

/// Quantitative trumpet bounds over the safe ball, at the supplied
/// exponents: trumpet sizes between `n − 3δ` and `C·n` with `C = 3·N(3δ)`,
/// level-function norms between `(n−3δ)/4^p` and `(n/4+1)(Cn)^{1/p}/n`, and
/// the adjacent-pair difference bound `(4C)^{1/p} n^{-(p-1)/p}`. The scale
/// set defaults to the fixture's dyadic scales without the 3δ filter (the
/// inequalities are meaningful at every scale; the filter is an embedding
/// concern).
pub fn check_trumpet_lemmas(
    g: &MetricGraph,
    delta: HalfInt,
    scales: Option<&[u32]>,
    exponents: &[f64],
) -> Result<TrumpetLemmaReport> {
    let mut rep = TrumpetLemmaReport::default();
    let ball_radius = (delta * 3).floor().max(0) as u32;
    let big_n = (0..g.vertex_count())
        .map(|v| g.ball_around(v, ball_radius).len() as u64)
        .max()
        .unwrap_or(1);
    let c = 3.0 * big_n as f64;
    let scales: Vec<u32> = match scales {
        Some(s) => s.to_vec(),
        None => {
            let mut out = Vec::new();
            let mut n = 2u32;
            let top = g.safe_diameter().max(2).next_power_of_two();
            while n <= top {
                out.push(n);
                n *= 2;
            }
            out
        }
    };
    let three_delta = (delta * 3).as_f64();
    let safe = g.safe_vertices();
    let safe_set: std::collections::HashSet<u32> = safe.iter().copied().collect();
    for &p in exponents {
        let mut cache: HashMap<(u32, u32), LpVector> = HashMap::new();
        let level_fn = |x: u32, n: u32, cache: &mut HashMap<(u32, u32), LpVector>| {
            cache
                .entry((x, n))
                .or_insert_with(|| level_function(g, x, n, delta, p).unwrap())
                .clone()
        };
        for &n in &scales {
            let nf = n as f64;
            for &x in &safe {
                let sizes = trumpet_sizes(g, x, n, delta);
                for (k, &s) in sizes.iter().enumerate() {
                    rep.checks += 1;
                    if (s as f64) > c * nf {
                        rep.violations.push(format!("|F({x},{k},{n})| = {s} > Cn"));
                    }
                    if g.level(x) >= 2 * n {
                        rep.checks += 1;
                        if (s as f64) < nf - three_delta {
                            rep.violations.push(format!("|F({x},{k},{n})| = {s} < n - 3δ"));
                        }
                    }
                }
                let hx = level_fn(x, n, &mut cache);
                let norm_pow = hx.norm_pow();
                rep.checks += 1;
                let upper = (nf / 4.0 + 1.0) * (c * nf).powf(1.0 / p) / nf;
                if norm_pow.powf(1.0 / p) > upper * (1.0 + 1e-9) {
                    rep.violations.push(format!("||H({x},{n})|| above bound at p={p}"));
                }
                if g.level(x) >= 2 * n {
                    rep.checks += 1;
                    let lower = (nf - three_delta) / 4f64.powf(p);
                    if norm_pow < lower * (1.0 - 1e-9) {
                        rep.violations.push(format!("||H({x},{n})||^p = {norm_pow} < (n-3δ)/4^p at p={p}"));
                    }
                }
                for &y in g.neighbors(x) {
                    if y < x || !safe_set.contains(&y) {
                        continue;
                    }
                    let hy = level_fn(y, n, &mut cache);
                    rep.checks += 1;
                    let diff = hx.dist(&hy)?;
                    let bound = (4.0 * c).powf(1.0 / p) * nf.powf(-(p - 1.0) / p);
                    if diff > bound * (1.0 + 1e-9) {
                        rep.violations
                            .push(format!("||H({x},{n})-H({y},{n})|| = {diff} > {bound} at p={p}"));
                    }
                }
            }
        }
    }
    Ok(rep)
}

/// Scale cutoff for the separation argument: with the deeper point first,
/// `⌊log2((y.e)_x − 5δ)⌋`, where `(y.e)_x` is the Gromov product of the
/// shallower point and the basepoint viewed from the deeper one. `None`
/// when the product does not exceed `5δ`.
pub fn scale_cutoff(g: &MetricGraph, x: u32, y: u32, delta: HalfInt) -> Result<Option<u32>> {
    let e = g.basepoint();
    let (deep, shallow) = if g.level(x) >= g.level(y) { (x, y) } else { (y, x) };
    let margin = divergence_from(g, deep, shallow, e) - delta * 5;
    if margin <= HalfInt::ZERO {
        return Ok(None);
    }
    if HalfInt::from_int(g.dist(x, y) as i64) <= delta * 12 {
        return Err(CoreError::Precondition("need d(x,y) > 12*delta".into()));
    }
    Ok(Some(margin.as_f64().log2().floor().max(0.0) as u32))
}
