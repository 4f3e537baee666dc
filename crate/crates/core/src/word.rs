//! Group elements of model groups as canonical normal forms.
//!
//! Supported families: free groups, finitely generated abelian groups,
//! finite cyclic groups, and free products of those. Elements are stored as
//! alternating syllable words in a compact byte arena; the word metric
//! `|u⁻¹v|` is evaluated directly on the encodings. On the generated balls
//! this agrees with the graph metric: geodesics between ball elements can
//! always be routed through the common normal-form prefix without leaving
//! the ball.

use crate::error::{CoreError, Result};
use std::collections::HashMap;
use std::fmt::Write as _;

/// One free factor of the model group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Atomic {
    Free { rank: u32 },
    Abelian { rank: u32 },
    Cyclic { order: u32 },
}

impl Atomic {
    fn gen_count(&self) -> u32 {
        match self {
            Atomic::Free { rank } | Atomic::Abelian { rank } => *rank,
            Atomic::Cyclic { .. } => 1,
        }
    }
}

/// A model group together with a ball radius: the fixture generator's input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSpec {
    pub factors: Vec<Atomic>,
    pub radius: u32,
}

impl GroupSpec {
    pub fn new(factors: Vec<Atomic>, radius: u32) -> Result<Self> {
        if factors.is_empty() {
            return Err(CoreError::BadSpec("no factors".into()));
        }
        for f in &factors {
            match f {
                Atomic::Free { rank } | Atomic::Abelian { rank } if *rank < 1 => {
                    return Err(CoreError::BadSpec("rank must be >= 1".into()))
                }
                Atomic::Cyclic { order } if *order < 2 => {
                    return Err(CoreError::BadSpec("cyclic order must be >= 2".into()))
                }
                _ => {}
            }
        }
        Ok(GroupSpec { factors, radius })
    }

    pub fn free(rank: u32, radius: u32) -> Result<Self> {
        GroupSpec::new(vec![Atomic::Free { rank }], radius)
    }

    pub fn abelian(rank: u32, radius: u32) -> Result<Self> {
        GroupSpec::new(vec![Atomic::Abelian { rank }], radius)
    }

    pub fn cyclic(order: u32, radius: u32) -> Result<Self> {
        GroupSpec::new(vec![Atomic::Cyclic { order }], radius)
    }

    /// Free product of atomic factors, e.g. `Z * Z` or `Z² * Z`.
    pub fn free_product(factors: Vec<Atomic>, radius: u32) -> Result<Self> {
        if factors.len() < 2 {
            return Err(CoreError::BadSpec("free product needs >= 2 factors".into()));
        }
        GroupSpec::new(factors, radius)
    }

    /// Parse compact spec strings: `free(2)`, `abelian(2)`, `cyclic(5)`,
    /// `product(abelian(2),abelian(1))`, plus the fixture aliases
    /// `zxz` (= Z*Z) and `z2xz` (= Z²*Z). Radius supplied separately.
    pub fn parse(family: &str, radius: u32) -> Result<Self> {
        let fam = family.trim();
        let atoms = parse_family(fam)?;
        GroupSpec::new(atoms, radius)
    }

    /// Symmetric generating set size (counting a cyclic generator twice).
    pub fn generator_count(&self) -> u32 {
        self.factors.iter().map(|f| 2 * f.gen_count()).sum()
    }
}

fn parse_family(s: &str) -> Result<Vec<Atomic>> {
    let bad = |m: &str| CoreError::BadSpec(format!("{m}: {s}"));
    match s {
        "zxz" => return Ok(vec![Atomic::Abelian { rank: 1 }, Atomic::Abelian { rank: 1 }]),
        "z2xz" => return Ok(vec![Atomic::Abelian { rank: 2 }, Atomic::Abelian { rank: 1 }]),
        _ => {}
    }
    let (head, args) = match s.find('(') {
        Some(i) if s.ends_with(')') => (&s[..i], &s[i + 1..s.len() - 1]),
        _ => return Err(bad("expected family(args)")),
    };
    let int = |a: &str| a.trim().parse::<u32>().map_err(|_| bad("bad integer argument"));
    match head.trim() {
        "free" => Ok(vec![Atomic::Free { rank: int(args)? }]),
        "abelian" => Ok(vec![Atomic::Abelian { rank: int(args)? }]),
        "cyclic" => Ok(vec![Atomic::Cyclic { order: int(args)? }]),
        "product" | "free_product" | "rh_model" => {
            let mut atoms = Vec::new();
            let mut depth = 0usize;
            let mut start = 0usize;
            for (i, c) in args.char_indices() {
                match c {
                    '(' => depth += 1,
                    ')' => depth = depth.saturating_sub(1),
                    ',' if depth == 0 => {
                        atoms.extend(parse_family(args[start..i].trim())?);
                        start = i + 1;
                    }
                    _ => {}
                }
            }
            atoms.extend(parse_family(args[start..].trim())?);
            if atoms.len() < 2 {
                return Err(bad("free product needs >= 2 factors"));
            }
            Ok(atoms)
        }
        _ => Err(bad("unknown family")),
    }
}

/// Generator of the standard symmetric generating set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gen {
    pub factor: u8,
    pub local: u8,
    pub sign: i8,
}

/// Generators in the fixed deterministic order used by the ball BFS.
pub fn generators(spec: &GroupSpec) -> Vec<Gen> {
    let mut out = Vec::new();
    for (fi, f) in spec.factors.iter().enumerate() {
        for j in 0..f.gen_count() {
            for sign in [1i8, -1] {
                out.push(Gen { factor: fi as u8, local: j as u8, sign });
            }
        }
    }
    out
}

/// Single letter naming each (factor, local generator), in generator order.
pub fn gen_letters(spec: &GroupSpec) -> Vec<char> {
    let mut letters = Vec::new();
    let mut next = b'a';
    for f in &spec.factors {
        for _ in 0..f.gen_count() {
            letters.push(next as char);
            next += 1;
        }
    }
    letters
}

// Byte encoding of a normal form: per syllable, one factor byte followed by
// factor-specific payload. Canonical encodings are byte-equal iff the
// elements are equal.
//
//   Free:    count u8, then count * i8 letters (±(local+1)), freely reduced
//   Abelian: rank * i16 little-endian, not all zero
//   Cyclic:  u16 representative in 1..order

/// Identity element encoding.
pub fn identity() -> Vec<u8> {
    Vec::new()
}

struct SylView<'a> {
    factor: u8,
    payload: &'a [u8],
}

fn syllables<'a>(spec: &GroupSpec, mut bytes: &'a [u8]) -> Vec<SylView<'a>> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let factor = bytes[0];
        let rest = &bytes[1..];
        let plen = match &spec.factors[factor as usize] {
            Atomic::Free { .. } => 1 + rest[0] as usize,
            Atomic::Abelian { rank } => 2 * *rank as usize,
            Atomic::Cyclic { .. } => 2,
        };
        out.push(SylView { factor, payload: &rest[..plen] });
        bytes = &rest[plen..];
    }
    out
}

fn syl_word_len(spec: &GroupSpec, s: &SylView) -> u64 {
    match &spec.factors[s.factor as usize] {
        Atomic::Free { .. } => (s.payload.len() - 1) as u64,
        Atomic::Abelian { rank } => {
            let mut t = 0u64;
            for j in 0..*rank as usize {
                let e = i16::from_le_bytes([s.payload[2 * j], s.payload[2 * j + 1]]);
                t += e.unsigned_abs() as u64;
            }
            t
        }
        Atomic::Cyclic { order } => {
            let r = u16::from_le_bytes([s.payload[0], s.payload[1]]) as u32;
            r.min(order - r) as u64
        }
    }
}

/// Word length of an encoded element.
pub fn word_len(spec: &GroupSpec, bytes: &[u8]) -> u64 {
    syllables(spec, bytes).iter().map(|s| syl_word_len(spec, s)).sum()
}

fn syl_dist(spec: &GroupSpec, a: &SylView, b: &SylView) -> u64 {
    debug_assert_eq!(a.factor, b.factor);
    match &spec.factors[a.factor as usize] {
        Atomic::Free { .. } => {
            let (wa, wb) = (&a.payload[1..], &b.payload[1..]);
            let mut c = 0;
            while c < wa.len() && c < wb.len() && wa[c] == wb[c] {
                c += 1;
            }
            ((wa.len() - c) + (wb.len() - c)) as u64
        }
        Atomic::Abelian { rank } => {
            let mut t = 0u64;
            for j in 0..*rank as usize {
                let ea = i16::from_le_bytes([a.payload[2 * j], a.payload[2 * j + 1]]) as i64;
                let eb = i16::from_le_bytes([b.payload[2 * j], b.payload[2 * j + 1]]) as i64;
                t += (ea - eb).unsigned_abs();
            }
            t
        }
        Atomic::Cyclic { order } => {
            let ra = u16::from_le_bytes([a.payload[0], a.payload[1]]) as i64;
            let rb = u16::from_le_bytes([b.payload[0], b.payload[1]]) as i64;
            let d = (ra - rb).unsigned_abs() as u32;
            d.min(*order - d) as u64
        }
    }
}

/// Byte offset and factor of the last syllable, when the word is nonempty.
pub fn last_syllable_range(spec: &GroupSpec, bytes: &[u8]) -> Option<(usize, u8)> {
    let syls = syllables(spec, bytes);
    let last = syls.last()?;
    Some((bytes.len() - (last.payload.len() + 1), last.factor))
}

/// The coset representative of `bytes` under the given factor: the normal
/// form with a trailing syllable of that factor removed.
pub fn strip_trailing_factor(spec: &GroupSpec, bytes: &[u8], factor: u8) -> Vec<u8> {
    match last_syllable_range(spec, bytes) {
        Some((start, f)) if f == factor => bytes[..start].to_vec(),
        _ => bytes.to_vec(),
    }
}

/// Exponent coordinates of an element inside its coset of an abelian factor:
/// the trailing syllable's exponent vector, or all zeros when the element is
/// its own coset representative. `None` if the factor is not abelian.
pub fn trailing_abelian_exps(spec: &GroupSpec, bytes: &[u8], factor: u8) -> Option<Vec<i64>> {
    let Atomic::Abelian { rank } = spec.factors[factor as usize] else {
        return None;
    };
    let syls = syllables(spec, bytes);
    match syls.last() {
        Some(last) if last.factor == factor => {
            if let FactorElem::Exps(es) = decode_elem(spec, last) {
                Some(es.into_iter().map(|e| e as i64).collect())
            } else {
                None
            }
        }
        _ => Some(vec![0; rank as usize]),
    }
}

/// Word metric `|u⁻¹v|`: cancel the common syllable prefix, merge at the
/// junction when both sides continue in the same factor, and sum the rest.
pub fn word_dist(spec: &GroupSpec, u: &[u8], v: &[u8]) -> u64 {
    let su = syllables(spec, u);
    let sv = syllables(spec, v);
    let mut c = 0;
    while c < su.len() && c < sv.len() && su[c].factor == sv[c].factor && su[c].payload == sv[c].payload
    {
        c += 1;
    }
    let mut d = 0u64;
    let mut iu = c;
    let mut iv = c;
    if iu < su.len() && iv < sv.len() && su[iu].factor == sv[iv].factor {
        d += syl_dist(spec, &su[iu], &sv[iv]);
        iu += 1;
        iv += 1;
    }
    for s in &su[iu..] {
        d += syl_word_len(spec, s);
    }
    for s in &sv[iv..] {
        d += syl_word_len(spec, s);
    }
    d
}

fn push_syllable(out: &mut Vec<u8>, spec: &GroupSpec, factor: u8, elem: &FactorElem) {
    match elem {
        FactorElem::Letters(ls) => {
            if ls.is_empty() {
                return;
            }
            out.push(factor);
            out.push(ls.len() as u8);
            out.extend(ls.iter().map(|&l| l as u8));
        }
        FactorElem::Exps(es) => {
            if es.iter().all(|&e| e == 0) {
                return;
            }
            out.push(factor);
            for &e in es {
                out.extend_from_slice(&e.to_le_bytes());
            }
        }
        FactorElem::Rot(r) => {
            if *r == 0 {
                return;
            }
            out.push(factor);
            out.extend_from_slice(&(*r as u16).to_le_bytes());
        }
        FactorElem::Identity => {}
    }
    let _ = spec;
}

enum FactorElem {
    Letters(Vec<i8>),
    Exps(Vec<i16>),
    Rot(u32),
    Identity,
}

fn decode_elem(spec: &GroupSpec, s: &SylView) -> FactorElem {
    match &spec.factors[s.factor as usize] {
        Atomic::Free { .. } => {
            FactorElem::Letters(s.payload[1..].iter().map(|&b| b as i8).collect())
        }
        Atomic::Abelian { rank } => FactorElem::Exps(
            (0..*rank as usize)
                .map(|j| i16::from_le_bytes([s.payload[2 * j], s.payload[2 * j + 1]]))
                .collect(),
        ),
        Atomic::Cyclic { .. } => {
            FactorElem::Rot(u16::from_le_bytes([s.payload[0], s.payload[1]]) as u32)
        }
    }
}

fn elem_mul_gen(spec: &GroupSpec, factor: u8, elem: FactorElem, g: Gen) -> FactorElem {
    match (&spec.factors[factor as usize], elem) {
        (Atomic::Free { .. }, FactorElem::Letters(mut ls)) => {
            let letter = (g.local as i8 + 1) * g.sign;
            if ls.last() == Some(&-letter) {
                ls.pop();
            } else {
                ls.push(letter);
            }
            if ls.is_empty() {
                FactorElem::Identity
            } else {
                FactorElem::Letters(ls)
            }
        }
        (Atomic::Abelian { .. }, FactorElem::Exps(mut es)) => {
            es[g.local as usize] += g.sign as i16;
            if es.iter().all(|&e| e == 0) {
                FactorElem::Identity
            } else {
                FactorElem::Exps(es)
            }
        }
        (Atomic::Cyclic { order }, FactorElem::Rot(r)) => {
            let m = *order;
            let nr = (r + if g.sign > 0 { 1 } else { m - 1 }) % m;
            if nr == 0 {
                FactorElem::Identity
            } else {
                FactorElem::Rot(nr)
            }
        }
        _ => unreachable!("factor/element kind mismatch"),
    }
}

fn fresh_elem(spec: &GroupSpec, g: Gen) -> FactorElem {
    match &spec.factors[g.factor as usize] {
        Atomic::Free { .. } => FactorElem::Letters(vec![(g.local as i8 + 1) * g.sign]),
        Atomic::Abelian { rank } => {
            let mut es = vec![0i16; *rank as usize];
            es[g.local as usize] = g.sign as i16;
            FactorElem::Exps(es)
        }
        Atomic::Cyclic { order } => FactorElem::Rot(if g.sign > 0 { 1 } else { order - 1 }),
    }
}

/// Right-multiply an encoded normal form by a generator.
pub fn mul_gen(spec: &GroupSpec, bytes: &[u8], g: Gen) -> Vec<u8> {
    let syls = syllables(spec, bytes);
    let mut out = Vec::with_capacity(bytes.len() + 4);
    match syls.last() {
        Some(last) if last.factor == g.factor => {
            let head_len = bytes.len() - (last.payload.len() + 1);
            out.extend_from_slice(&bytes[..head_len]);
            let merged = elem_mul_gen(spec, g.factor, decode_elem(spec, last), g);
            push_syllable(&mut out, spec, g.factor, &merged);
        }
        _ => {
            out.extend_from_slice(bytes);
            push_syllable(&mut out, spec, g.factor, &fresh_elem(spec, g));
        }
    }
    out
}

/// Render a normal form: per generator letter, uppercase for inverse,
/// decimal magnitude when the exponent exceeds 1. Identity is `e`.
pub fn label(spec: &GroupSpec, bytes: &[u8]) -> String {
    if bytes.is_empty() {
        return "e".into();
    }
    let letters = gen_letters_per_factor(spec);
    let mut s = String::new();
    for syl in syllables(spec, bytes) {
        let ls = &letters[syl.factor as usize];
        match decode_elem(spec, &syl) {
            FactorElem::Letters(word) => {
                let mut i = 0;
                while i < word.len() {
                    let mut j = i;
                    while j < word.len() && word[j] == word[i] {
                        j += 1;
                    }
                    write_power(&mut s, ls[(word[i].unsigned_abs() - 1) as usize], word[i] < 0, (j - i) as u64);
                    i = j;
                }
            }
            FactorElem::Exps(es) => {
                for (j, &e) in es.iter().enumerate() {
                    if e != 0 {
                        write_power(&mut s, ls[j], e < 0, e.unsigned_abs() as u64);
                    }
                }
            }
            FactorElem::Rot(r) => write_power(&mut s, ls[0], false, r as u64),
            FactorElem::Identity => {}
        }
    }
    s
}

fn write_power(s: &mut String, letter: char, inverse: bool, mag: u64) {
    let c = if inverse { letter.to_ascii_uppercase() } else { letter };
    s.push(c);
    if mag > 1 {
        let _ = write!(s, "{mag}");
    }
}

fn gen_letters_per_factor(spec: &GroupSpec) -> Vec<Vec<char>> {
    let flat = gen_letters(spec);
    let mut out = Vec::new();
    let mut it = flat.into_iter();
    for f in &spec.factors {
        out.push((0..f.gen_count()).map(|_| it.next().unwrap()).collect());
    }
    out
}

/// Arena of interned normal forms; index = vertex id in discovery order.
pub struct WordStore {
    pub spec: GroupSpec,
    bytes: Vec<u8>,
    ends: Vec<u32>,
}

impl WordStore {
    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn get(&self, id: u32) -> &[u8] {
        let start = if id == 0 { 0 } else { self.ends[id as usize - 1] as usize };
        &self.bytes[..self.ends[id as usize] as usize][start..]
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn dist(&self, u: u32, v: u32) -> u64 {
        word_dist(&self.spec, self.get(u), self.get(v))
    }

    pub fn label(&self, id: u32) -> String {
        label(&self.spec, self.get(id))
    }
}

/// Breadth-first enumeration of the ball of the spec's radius.
///
/// Returns the interned words, per-vertex word length, and the edge list of
/// the induced subgraph. Vertex ids follow BFS discovery order with the
/// fixed generator order, so fixtures are reproducible byte for byte.
pub fn generate_ball(spec: &GroupSpec) -> (WordStore, Vec<u32>, Vec<(u32, u32)>) {
    let gens = generators(spec);
    let mut interned: HashMap<Vec<u8>, u32> = HashMap::new();
    let mut words: Vec<Vec<u8>> = Vec::new();
    let mut level: Vec<u32> = Vec::new();
    let mut edges: Vec<(u32, u32)> = Vec::new();

    interned.insert(identity(), 0);
    words.push(identity());
    level.push(0);

    let mut head = 0usize;
    while head < words.len() {
        let u = head as u32;
        let d = level[head];
        head += 1;
        let w = words[u as usize].clone();
        for &g in &gens {
            let next = mul_gen(spec, &w, g);
            if let Some(&v) = interned.get(&next) {
                if u < v {
                    edges.push((u, v));
                }
                continue;
            }
            if d < spec.radius {
                let v = words.len() as u32;
                interned.insert(next.clone(), v);
                words.push(next);
                level.push(d + 1);
                edges.push((u, v));
            }
        }
    }
    drop(interned);

    edges.sort_unstable();
    edges.dedup();

    let mut bytes = Vec::with_capacity(words.iter().map(Vec::len).sum());
    let mut ends = Vec::with_capacity(words.len());
    for w in &words {
        bytes.extend_from_slice(w);
        ends.push(bytes.len() as u32);
    }
    (WordStore { spec: spec.clone(), bytes, ends }, level, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball(fam: &str, r: u32) -> (WordStore, Vec<u32>, Vec<(u32, u32)>) {
        generate_ball(&GroupSpec::parse(fam, r).unwrap())
    }

    #[test]
    fn free2_ball_sizes() {
        let (ws, level, _) = ball("free(2)", 2);
        assert_eq!(ws.len(), 17);
        assert_eq!(level.iter().filter(|&&l| l == 1).count(), 4);
        assert_eq!(level.iter().filter(|&&l| l == 2).count(), 12);
    }

    #[test]
    fn abelian2_radius1() {
        let (ws, _, _) = ball("abelian(2)", 1);
        assert_eq!(ws.len(), 5);
    }

    #[test]
    fn zxz_matches_free2() {
        let (wa, la, ea) = ball("zxz", 2);
        let (wb, lb, eb) = ball("free(2)", 2);
        assert_eq!(wa.len(), wb.len());
        assert_eq!(la, lb);
        assert_eq!(ea, eb);
    }

    #[test]
    fn labels_are_canonical() {
        let spec = GroupSpec::parse("zxz", 3).unwrap();
        let (ws, _, _) = generate_ball(&spec);
        assert_eq!(ws.label(0), "e");
        let mut seen: Vec<String> = (0..ws.len() as u32).map(|i| ws.label(i)).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), ws.len());
        assert!(seen.contains(&"ab".to_string()));
        assert!(seen.contains(&"a2".to_string()));
        assert!(seen.contains(&"A2".to_string()));
    }

    #[test]
    fn word_dist_matches_levels_from_identity() {
        let spec = GroupSpec::parse("z2xz", 3).unwrap();
        let (ws, level, _) = generate_ball(&spec);
        for v in 0..ws.len() as u32 {
            assert_eq!(ws.dist(0, v), level[v as usize] as u64);
            assert_eq!(ws.dist(v, 0), level[v as usize] as u64);
        }
    }

    #[test]
    fn cyclic_ball_is_cycle() {
        let (ws, level, edges) = ball("cyclic(8)", 4);
        assert_eq!(ws.len(), 8);
        assert_eq!(*level.iter().max().unwrap(), 4);
        assert_eq!(edges.len(), 8);
    }

    #[test]
    fn triangle_inequality_spot_check() {
        let spec = GroupSpec::parse("product(abelian(2),abelian(1))", 3).unwrap();
        let (ws, _, _) = generate_ball(&spec);
        let n = ws.len() as u32;
        let step = (n / 17).max(1);
        let pick: Vec<u32> = (0..n).step_by(step as usize).collect();
        for &a in &pick {
            for &b in &pick {
                assert_eq!(ws.dist(a, b), ws.dist(b, a));
                for &c in &pick {
                    assert!(ws.dist(a, c) <= ws.dist(a, b) + ws.dist(b, c));
                }
            }
        }
    }
}
