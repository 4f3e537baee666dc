//! Built-in piece embeddings `ψ_i`: 1-Lipschitz maps of a piece into `ℓ^p`
//! vanishing at the piece anchor.
//!
//! Catalog: signed coordinate along line cosets (isometric), scaled
//! coordinate tuples for higher-rank abelian cosets, scaled characteristic
//! differences for bounded pieces, and recursive trumpet embeddings for
//! tree-like pieces. For `K`-neighborhood pieces the map is composed with
//! closest-point projection onto the underlying coset (smallest id breaks
//! ties).

use crate::error::{CoreError, Result};
use crate::func::CompressionFunction;
use crate::graph::MetricGraph;
use crate::hyp_embed::{embed_hyperbolic, TrumpetParams};
use crate::hyperbolicity::default_delta;
use crate::lp::{CoordLabel, LpVector};
use crate::pieces::{PieceKind, PieceSystem};
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

#[derive(Debug, Clone)]
pub enum PieceMap {
    /// Constant zero (sufficient for singleton pieces).
    Zero,
    /// Signed offset along a path-shaped piece, measured from the anchor.
    LineCoord,
    /// Scaled exponent coordinates of an abelian coset relative to the
    /// anchor; one `ℓ^p` axis per generator of the factor.
    CosetCoords { scale: f64 },
    /// `2^{-1/p} (χ_v − χ_anchor)`; bounded pieces only.
    BallChar,
    /// Recursive trumpet embedding of the induced piece graph, rescaled to
    /// be 1-Lipschitz.
    Hyperbolic { f: CompressionFunction },
}

/// Per-piece assignment of maps with shared lazy state.
pub struct PsiAssignment {
    maps: Vec<PieceMap>,
    line_cache: RwLock<HashMap<usize, Arc<HashMap<u32, f64>>>>,
    coset_cache: RwLock<HashMap<usize, Arc<HashMap<u32, Vec<f64>>>>>,
    hyp_cache: RwLock<HashMap<usize, Arc<HypPiece>>>,
}

struct HypPiece {
    sub: MetricGraph,
    index_of: HashMap<u32, u32>,
    params: TrumpetParams,
    inv_lipschitz: f64,
}

/// Default catalog: line cosets get the signed coordinate, rank-2 abelian
/// cosets the half-scaled coordinate pair, free-factor cosets the recursive
/// trumpets, bounded pieces the characteristic difference.
pub fn auto_psi(g: &MetricGraph, ps: &PieceSystem) -> Vec<PieceMap> {
    use crate::word::Atomic;
    (0..ps.piece_count())
        .map(|i| match ps.kind(i) {
            PieceKind::Ball { .. } => {
                if ps.members(i).len() == 1 {
                    PieceMap::Zero
                } else {
                    PieceMap::BallChar
                }
            }
            PieceKind::Coset { factor, .. } => {
                let spec = g.words().expect("coset pieces need words").spec();
                match &spec.factors[*factor as usize] {
                    // line pieces get the signed coordinate; grown
                    // neighborhoods are not paths, so they take the coset
                    // coordinates composed with projection instead
                    Atomic::Abelian { rank: 1 } if ps.k_neighborhood() == 0 => PieceMap::LineCoord,
                    Atomic::Abelian { rank: 1 } => PieceMap::CosetCoords { scale: 1.0 },
                    Atomic::Abelian { .. } => PieceMap::CosetCoords { scale: 0.5 },
                    Atomic::Cyclic { .. } => PieceMap::BallChar,
                    Atomic::Free { .. } => PieceMap::Hyperbolic { f: CompressionFunction::sqrt() },
                }
            }
            PieceKind::Custom { .. } => PieceMap::LineCoord,
        })
        .collect()
}

impl PsiAssignment {
    pub fn new(maps: Vec<PieceMap>) -> Self {
        PsiAssignment {
            maps,
            line_cache: RwLock::new(HashMap::new()),
            coset_cache: RwLock::new(HashMap::new()),
            hyp_cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn auto(g: &MetricGraph, ps: &PieceSystem) -> Self {
        Self::new(auto_psi(g, ps))
    }

    pub fn map_for(&self, i: usize) -> &PieceMap {
        &self.maps[i]
    }

    /// `ψ_i(v)` with piece-local coordinate keys; vanishes at the anchor.
    /// Vertices outside the underlying coset project to the closest member.
    pub fn eval(&self, g: &MetricGraph, ps: &PieceSystem, i: usize, v: u32, p: f64) -> Result<LpVector> {
        match &self.maps[i] {
            PieceMap::Zero => LpVector::zero(p),
            PieceMap::LineCoord => {
                let offsets = self.line_offsets(g, ps, i)?;
                let w = self.project_eval_scalar(g, ps, i, v, &offsets);
                let mut out = LpVector::zero(p)?;
                out.set(CoordLabel::new("c", "0"), w);
                Ok(out)
            }
            PieceMap::CosetCoords { scale } => {
                let coords = self.coset_coords(g, ps, i)?;
                let member = self.project_member(g, ps, i, v, |m| coords.contains_key(&m));
                let mut out = LpVector::zero(p)?;
                if let Some(cs) = coords.get(&member) {
                    for (axis, &c) in cs.iter().enumerate() {
                        out.set(CoordLabel::new("c", axis.to_string()), c * scale);
                    }
                }
                Ok(out)
            }
            PieceMap::BallChar => {
                let anchor = ps.anchor(i);
                let member = self.project_member(g, ps, i, v, |_| true);
                let mut out = LpVector::zero(p)?;
                if member != anchor {
                    let c = 2f64.powf(-1.0 / p);
                    out.set(CoordLabel::new("x", member.to_string()), c);
                    out.set(CoordLabel::new("x", anchor.to_string()), -c);
                }
                Ok(out)
            }
            PieceMap::Hyperbolic { .. } => {
                let hp = self.hyp_piece(g, ps, i, p)?;
                let member = self.project_member(g, ps, i, v, |m| hp.index_of.contains_key(&m));
                let local = hp.index_of[&member];
                let phi = embed_hyperbolic(&hp.sub, local, &hp.params)?;
                Ok(phi.scale(hp.inv_lipschitz))
            }
        }
    }

    fn project_member(
        &self,
        g: &MetricGraph,
        ps: &PieceSystem,
        i: usize,
        v: u32,
        keep: impl Fn(u32) -> bool,
    ) -> u32 {
        if ps.contains(i, v) && keep(v) {
            return v;
        }
        let mut best = (u32::MAX, u32::MAX);
        for &m in ps.members(i) {
            if keep(m) {
                let d = g.dist(v, m);
                if (d, m) < best {
                    best = (d, m);
                }
            }
        }
        best.1
    }

    fn project_eval_scalar(
        &self,
        g: &MetricGraph,
        ps: &PieceSystem,
        i: usize,
        v: u32,
        offsets: &HashMap<u32, f64>,
    ) -> f64 {
        let m = self.project_member(g, ps, i, v, |m| offsets.contains_key(&m));
        offsets.get(&m).copied().unwrap_or(0.0)
    }

    /// Signed positions along a path-shaped piece: anchor at 0, the ray
    /// through the anchor's smaller-id neighbor negative.
    fn line_offsets(&self, g: &MetricGraph, ps: &PieceSystem, i: usize) -> Result<Arc<HashMap<u32, f64>>> {
        if let Some(m) = self.line_cache.read().unwrap().get(&i) {
            return Ok(Arc::clone(m));
        }
        let members: std::collections::HashSet<u32> = ps.members(i).iter().copied().collect();
        let anchor = ps.anchor(i);
        for &m in ps.members(i) {
            let deg = g.neighbors(m).iter().filter(|&&u| members.contains(&u)).count();
            if deg > 2 {
                return Err(CoreError::BadPieces(format!(
                    "piece {i} is not a line (vertex {m} has {deg} piece-neighbors)"
                )));
            }
        }
        let mut offsets = HashMap::new();
        offsets.insert(anchor, 0.0);
        let mut dirs: Vec<u32> = g
            .neighbors(anchor)
            .iter()
            .copied()
            .filter(|u| members.contains(u))
            .collect();
        dirs.sort_unstable();
        for (di, start) in dirs.into_iter().enumerate() {
            let sign = if di == 0 { -1.0 } else { 1.0 };
            let mut prev = anchor;
            let mut cur = start;
            let mut t = 1.0;
            loop {
                offsets.insert(cur, sign * t);
                let next = g
                    .neighbors(cur)
                    .iter()
                    .copied()
                    .find(|&u| u != prev && members.contains(&u));
                match next {
                    Some(u) => {
                        prev = cur;
                        cur = u;
                        t += 1.0;
                    }
                    None => break,
                }
            }
        }
        let arc = Arc::new(offsets);
        self.line_cache.write().unwrap().insert(i, Arc::clone(&arc));
        Ok(arc)
    }

    /// Exponent coordinates of an abelian coset relative to its anchor.
    fn coset_coords(&self, g: &MetricGraph, ps: &PieceSystem, i: usize) -> Result<Arc<HashMap<u32, Vec<f64>>>> {
        if let Some(m) = self.coset_cache.read().unwrap().get(&i) {
            return Ok(Arc::clone(m));
        }
        let PieceKind::Coset { factor, .. } = *ps.kind(i) else {
            return Err(CoreError::BadPieces(format!("piece {i} is not a coset piece")));
        };
        let words = g
            .words()
            .ok_or_else(|| CoreError::BadSpec("coset coordinates need a group-generated graph".into()))?;
        let PieceKind::Coset { rep, .. } = *ps.kind(i) else { unreachable!() };
        let rep_key = crate::word::strip_trailing_factor(words.spec(), words.get(rep), factor as u8);
        let mut raw: HashMap<u32, Vec<f64>> = HashMap::new();
        for &m in ps.members(i) {
            // keep only the underlying coset; neighborhood vertices project
            if crate::word::strip_trailing_factor(words.spec(), words.get(m), factor as u8) != rep_key {
                continue;
            }
            if let Some(exps) = crate::word::trailing_abelian_exps(words.spec(), words.get(m), factor as u8) {
                raw.insert(m, exps.into_iter().map(|e| e as f64).collect());
            }
        }
        // vanish at the anchor (or at its projection when the anchor sits in
        // the grown neighborhood)
        let anchor = ps.anchor(i);
        let base_member = if raw.contains_key(&anchor) {
            anchor
        } else {
            let mut best = (u32::MAX, u32::MAX);
            for &m in raw.keys() {
                let d = g.dist(anchor, m);
                if (d, m) < best {
                    best = (d, m);
                }
            }
            best.1
        };
        let base = raw
            .get(&base_member)
            .cloned()
            .ok_or_else(|| CoreError::BadPieces(format!("piece {i} has no coset members")))?;
        for cs in raw.values_mut() {
            for (c, a) in cs.iter_mut().zip(&base) {
                *c -= a;
            }
        }
        let arc = Arc::new(raw);
        self.coset_cache.write().unwrap().insert(i, Arc::clone(&arc));
        Ok(arc)
    }

    fn hyp_piece(&self, g: &MetricGraph, ps: &PieceSystem, i: usize, p: f64) -> Result<Arc<HypPiece>> {
        if let Some(h) = self.hyp_cache.read().unwrap().get(&i) {
            return Ok(Arc::clone(h));
        }
        let PieceMap::Hyperbolic { f } = &self.maps[i] else { unreachable!() };
        let members = ps.members(i);
        let index_of: HashMap<u32, u32> = members.iter().enumerate().map(|(j, &m)| (m, j as u32)).collect();
        let mut edges = Vec::new();
        for (j, &m) in members.iter().enumerate() {
            for &u in g.neighbors(m) {
                if let Some(&uj) = index_of.get(&u) {
                    if (j as u32) < uj {
                        edges.push((j as u32, uj));
                    }
                }
            }
        }
        let mut text = format!("{} {} {}\n", members.len(), edges.len(), index_of[&ps.anchor(i)]);
        for (a, b) in edges {
            text.push_str(&format!("{a} {b}\n"));
        }
        let sub = MetricGraph::from_graph_file(&text)
            .map_err(|e| CoreError::BadPieces(format!("piece {i} is not connected: {e}")))?;
        let delta = default_delta(&sub, 0)?;
        let params = TrumpetParams::for_graph(&sub, delta, f.clone(), p)?;
        // rescale to a 1-Lipschitz map using the measured adjacent-pair bound
        let mut lip: f64 = 0.0;
        for v in 0..sub.vertex_count() {
            let phi_v = embed_hyperbolic(&sub, v, &params)?;
            for &u in sub.neighbors(v) {
                if u > v {
                    let phi_u = embed_hyperbolic(&sub, u, &params)?;
                    lip = lip.max(phi_v.dist(&phi_u)?);
                }
            }
        }
        let inv = if lip > 0.0 { 1.0 / lip } else { 1.0 };
        let arc = Arc::new(HypPiece { sub, index_of, params, inv_lipschitz: inv });
        self.hyp_cache.write().unwrap().insert(i, Arc::clone(&arc));
        Ok(arc)
    }
}

/// Largest ratio `‖ψ(u)−ψ(v)‖ / d(u,v)` over member pairs of each piece.
pub fn measure_psi_lipschitz(
    g: &MetricGraph,
    ps: &PieceSystem,
    psi: &PsiAssignment,
    p: f64,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..ps.piece_count() {
        let ms = ps.members(i);
        for (a_idx, &a) in ms.iter().enumerate() {
            let va = psi.eval(g, ps, i, a, p)?;
            for &b in &ms[a_idx + 1..] {
                let vb = psi.eval(g, ps, i, b, p)?;
                let d = g.dist(a, b) as f64;
                if d > 0.0 {
                    worst = worst.max(va.dist(&vb)? / d);
                }
            }
        }
    }
    Ok(worst)
}
