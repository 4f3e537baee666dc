//! Indexed covers of the vertex set by pieces: coset neighborhoods of
//! peripheral factors, balls around vertices (trivial-subgroup cosets), and
//! custom piece lists from files.

use crate::error::{CoreError, Result};
use crate::graph::MetricGraph;
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PieceKind {
    /// Coset of a free factor, identified by its smallest member.
    Coset { factor: u16, rep: u32 },
    /// `K`-ball around a vertex (a trivial-subgroup coset neighborhood).
    Ball { center: u32 },
    Custom { label: String },
}

/// Cover `{A_i}` of the vertex set with per-piece anchors and a membership
/// index. Anchors minimize the distance to the basepoint, smallest id first.
#[derive(Debug)]
pub struct PieceSystem {
    piece_off: Vec<u32>,
    members: Vec<u32>,
    anchors: Vec<u32>,
    kinds: Vec<PieceKind>,
    vert_off: Vec<u32>,
    vert_pieces: Vec<u32>,
    k_neighborhood: u32,
}

impl PieceSystem {
    pub fn new(g: &MetricGraph, pieces: Vec<(PieceKind, Vec<u32>)>, k_neighborhood: u32) -> Result<Self> {
        let n = g.vertex_count();
        let mut piece_off = Vec::with_capacity(pieces.len() + 1);
        let mut members = Vec::new();
        let mut anchors = Vec::with_capacity(pieces.len());
        let mut kinds = Vec::with_capacity(pieces.len());
        piece_off.push(0u32);
        for (kind, mut ms) in pieces {
            ms.sort_unstable();
            ms.dedup();
            if ms.is_empty() {
                return Err(CoreError::BadPieces("empty piece".into()));
            }
            if *ms.last().unwrap() >= n {
                return Err(CoreError::BadVertex(*ms.last().unwrap(), n));
            }
            let anchor = ms
                .iter()
                .copied()
                .min_by_key(|&v| (g.level(v), v))
                .unwrap();
            members.extend_from_slice(&ms);
            piece_off.push(members.len() as u32);
            anchors.push(anchor);
            kinds.push(kind);
        }

        let mut counts = vec![0u32; n as usize];
        for &m in &members {
            counts[m as usize] += 1;
        }
        let mut vert_off = vec![0u32; n as usize + 1];
        for i in 0..n as usize {
            vert_off[i + 1] = vert_off[i] + counts[i];
        }
        let mut vert_pieces = vec![0u32; members.len()];
        let mut cursor = vert_off.clone();
        for pi in 0..anchors.len() {
            for idx in piece_off[pi] as usize..piece_off[pi + 1] as usize {
                let v = members[idx] as usize;
                vert_pieces[cursor[v] as usize] = pi as u32;
                cursor[v] += 1;
            }
        }

        Ok(PieceSystem { piece_off, members, anchors, kinds, vert_off, vert_pieces, k_neighborhood })
    }

    pub fn piece_count(&self) -> usize {
        self.anchors.len()
    }

    pub fn members(&self, i: usize) -> &[u32] {
        &self.members[self.piece_off[i] as usize..self.piece_off[i + 1] as usize]
    }

    pub fn anchor(&self, i: usize) -> u32 {
        self.anchors[i]
    }

    pub fn kind(&self, i: usize) -> &PieceKind {
        &self.kinds[i]
    }

    pub fn k_neighborhood(&self) -> u32 {
        self.k_neighborhood
    }

    pub fn contains(&self, i: usize, v: u32) -> bool {
        self.members(i).binary_search(&v).is_ok()
    }

    pub fn pieces_of(&self, v: u32) -> &[u32] {
        &self.vert_pieces[self.vert_off[v as usize] as usize..self.vert_off[v as usize + 1] as usize]
    }

    /// Every vertex lies in at least one piece.
    pub fn covers(&self, g: &MetricGraph) -> bool {
        (0..g.vertex_count()).all(|v| !self.pieces_of(v).is_empty())
    }

    pub fn label(&self, g: &MetricGraph, i: usize) -> String {
        match &self.kinds[i] {
            PieceKind::Coset { factor, rep } => {
                let r = g.label(*rep).unwrap_or_else(|| rep.to_string());
                format!("coset{factor}:{r}")
            }
            PieceKind::Ball { center } => {
                let c = g.label(*center).unwrap_or_else(|| center.to_string());
                format!("ball:{c}")
            }
            PieceKind::Custom { label } => label.clone(),
        }
    }

    /// Distance from a vertex to a piece. Ball pieces use the center fast
    /// path; the rest scan members through the graph's distance oracle.
    pub fn dist_to_piece(&self, g: &MetricGraph, x: u32, i: usize) -> u32 {
        if let PieceKind::Ball { center } = self.kinds[i] {
            if self.k_neighborhood > 0 {
                let d = g.dist(x, center);
                // the clipped ball can be smaller than the metric ball only
                // outside generated graphs; members() stays exact there
                if g.ball_radius().is_some() {
                    return d.saturating_sub(self.k_neighborhood);
                }
                let _ = d;
            } else {
                return g.dist(x, center);
            }
        }
        self.members(i).iter().map(|&m| g.dist(x, m)).min().unwrap()
    }

    /// Parse the pieces file: one `label: v1 v2 v3 ...` line per piece.
    pub fn from_pieces_file(g: &MetricGraph, text: &str, k_neighborhood: u32) -> Result<Self> {
        let mut pieces = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (label, rest) = line
                .split_once(':')
                .ok_or(CoreError::BadPiecesFile { line: line_no, msg: "expected `label: v1 v2 ...`".into() })?;
            let mut ms = Vec::new();
            for tok in rest.split_whitespace() {
                let v: u32 = tok
                    .parse()
                    .map_err(|_| CoreError::BadPiecesFile { line: line_no, msg: format!("bad vertex `{tok}`") })?;
                ms.push(v);
            }
            if ms.is_empty() {
                return Err(CoreError::BadPiecesFile { line: line_no, msg: "piece has no vertices".into() });
            }
            pieces.push((PieceKind::Custom { label: label.trim().to_string() }, ms));
        }
        if pieces.is_empty() {
            return Err(CoreError::BadPiecesFile { line: 1, msg: "no pieces".into() });
        }
        Self::new(g, pieces, k_neighborhood)
    }

    pub fn to_pieces_file(&self, g: &MetricGraph) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for i in 0..self.piece_count() {
            let _ = write!(out, "{}:", self.label(g, i));
            for &m in self.members(i) {
                let _ = write!(out, " {m}");
            }
            out.push('\n');
        }
        out
    }
}

/// `K`-neighborhoods of the cosets of the selected peripheral factors,
/// plus `K`-balls around every vertex (the trivial-subgroup cosets).
/// With `k = 0` this is exactly cosets plus singletons.
pub fn pieces_from_cosets(g: &MetricGraph, peripheral_factors: &[usize], k: u32) -> Result<PieceSystem> {
    let words = g
        .words()
        .ok_or_else(|| CoreError::BadSpec("coset pieces need a group-generated graph".into()))?;
    let factor_count = words.spec.factors.len();
    for &f in peripheral_factors {
        if f >= factor_count {
            return Err(CoreError::BadSpec(format!("no factor {f} (group has {factor_count})")));
        }
    }

    let mut pieces: Vec<(PieceKind, Vec<u32>)> = Vec::new();
    for &f in peripheral_factors {
        // group vertices by the coset representative: the normal form with a
        // trailing factor-f syllable stripped
        let mut cosets: HashMap<Vec<u8>, Vec<u32>> = HashMap::new();
        for v in 0..g.vertex_count() {
            let rep = crate::word::strip_trailing_factor(words.spec(), words.get(v), f as u8);
            cosets.entry(rep).or_default().push(v);
        }
        let mut groups: Vec<Vec<u32>> = cosets.into_values().collect();
        groups.sort_unstable_by_key(|ms| *ms.iter().min().unwrap());
        for ms in groups {
            let rep = *ms.iter().min().unwrap();
            let ms = grow_by(g, ms, k);
            pieces.push((PieceKind::Coset { factor: f as u16, rep }, ms));
        }
    }
    for v in 0..g.vertex_count() {
        let ms = if k == 0 {
            vec![v]
        } else {
            g.ball_around(v, k).into_iter().map(|(u, _)| u).collect()
        };
        pieces.push((PieceKind::Ball { center: v }, ms));
    }
    PieceSystem::new(g, pieces, k)
}

/// Coset pieces only (no ball pieces): the tree-graded cover of a free
/// product by the cosets of its factors.
pub fn coset_line_pieces(g: &MetricGraph, factors: &[usize]) -> Result<PieceSystem> {
    let words = g
        .words()
        .ok_or_else(|| CoreError::BadSpec("coset pieces need a group-generated graph".into()))?;
    let mut pieces: Vec<(PieceKind, Vec<u32>)> = Vec::new();
    for &f in factors {
        if f >= words.spec.factors.len() {
            return Err(CoreError::BadSpec(format!("no factor {f}")));
        }
        let mut cosets: HashMap<Vec<u8>, Vec<u32>> = HashMap::new();
        for v in 0..g.vertex_count() {
            let rep = crate::word::strip_trailing_factor(words.spec(), words.get(v), f as u8);
            cosets.entry(rep).or_default().push(v);
        }
        let mut groups: Vec<Vec<u32>> = cosets.into_values().collect();
        groups.sort_unstable_by_key(|ms| *ms.iter().min().unwrap());
        for ms in groups {
            let rep = *ms.iter().min().unwrap();
            pieces.push((PieceKind::Coset { factor: f as u16, rep }, ms));
        }
    }
    PieceSystem::new(g, pieces, 0)
}

fn grow_by(g: &MetricGraph, seed: Vec<u32>, k: u32) -> Vec<u32> {
    if k == 0 {
        return seed;
    }
    let mut seen: std::collections::HashSet<u32> = seed.iter().copied().collect();
    let mut frontier = seed;
    for _ in 0..k {
        let mut next = Vec::new();
        for &u in &frontier {
            for &v in g.neighbors(u) {
                if seen.insert(v) {
                    next.push(v);
                }
            }
        }
        frontier = next;
    }
    seen.into_iter().collect()
}
