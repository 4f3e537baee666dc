//! Sparse `ℓ^p` vectors over namespaced coordinates.
//!
//! Direct sums of `ℓ^p(X)` blocks are realized by namespacing coordinate
//! labels, so vectors from different scales or pieces never collide unless
//! the construction wants them to.

use crate::error::{CoreError, Result};
use std::collections::BTreeMap;

/// Coordinate label: a namespace (scale index, piece index, ...) plus a key
/// inside it (vertex id, piece-internal axis, ...).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoordLabel {
    pub namespace: String,
    pub key: String,
}

impl CoordLabel {
    pub fn new(namespace: impl Into<String>, key: impl Into<String>) -> Self {
        CoordLabel { namespace: namespace.into(), key: key.into() }
    }
}

/// Finitely supported vector with no stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct LpVector {
    p: f64,
    entries: BTreeMap<CoordLabel, f64>,
}

impl LpVector {
    pub fn zero(p: f64) -> Result<Self> {
        if !(p > 1.0) {
            return Err(CoreError::BadExponent(p));
        }
        Ok(LpVector { p, entries: BTreeMap::new() })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, label: &CoordLabel) -> f64 {
        self.entries.get(label).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CoordLabel, f64)> {
        self.entries.iter().map(|(l, &v)| (l, v))
    }

    /// Set a coordinate; zero removes it.
    pub fn set(&mut self, label: CoordLabel, value: f64) {
        if value == 0.0 {
            self.entries.remove(&label);
        } else {
            self.entries.insert(label, value);
        }
    }

    /// Add `value` to a coordinate, pruning exact zeros.
    pub fn add_to(&mut self, label: CoordLabel, value: f64) {
        use std::collections::btree_map::Entry;
        match self.entries.entry(label) {
            Entry::Vacant(e) => {
                if value != 0.0 {
                    e.insert(value);
                }
            }
            Entry::Occupied(mut e) => {
                let v = e.get_mut();
                *v += value;
                if *v == 0.0 {
                    e.remove();
                }
            }
        }
    }

    pub fn norm_pow(&self) -> f64 {
        if self.p == 2.0 {
            self.entries.values().map(|v| v * v).sum()
        } else {
            self.entries.values().map(|v| v.abs().powf(self.p)).sum()
        }
    }

    /// `(Σ|entry|^p)^{1/p}`.
    pub fn p_norm(&self) -> f64 {
        if self.p == 2.0 {
            self.norm_pow().sqrt()
        } else {
            self.norm_pow().powf(1.0 / self.p)
        }
    }

    fn check_p(&self, other: &LpVector) -> Result<()> {
        if self.p != other.p {
            return Err(CoreError::MismatchedP(self.p, other.p));
        }
        Ok(())
    }

    pub fn add(&self, other: &LpVector) -> Result<LpVector> {
        self.check_p(other)?;
        let mut out = self.clone();
        for (l, v) in other.iter() {
            out.add_to(l.clone(), v);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &LpVector) -> Result<LpVector> {
        self.check_p(other)?;
        let mut out = self.clone();
        for (l, v) in other.iter() {
            out.add_to(l.clone(), -v);
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> LpVector {
        if c == 0.0 {
            return LpVector { p: self.p, entries: BTreeMap::new() };
        }
        LpVector {
            p: self.p,
            entries: self.entries.iter().map(|(l, v)| (l.clone(), v * c)).collect(),
        }
    }

    /// Move every coordinate into `namespace`, keeping keys.
    pub fn into_namespace(self, namespace: &str) -> LpVector {
        LpVector {
            p: self.p,
            entries: self
                .entries
                .into_iter()
                .map(|(l, v)| (CoordLabel::new(namespace, l.key), v))
                .collect(),
        }
    }

    /// `‖u − v‖_p` without materializing the difference.
    pub fn dist(&self, other: &LpVector) -> Result<f64> {
        self.check_p(other)?;
        let mut acc = 0.0f64;
        let p = self.p;
        let pow = |x: f64| if p == 2.0 { x * x } else { x.abs().powf(p) };
        let mut a = self.entries.iter().peekable();
        let mut b = other.entries.iter().peekable();
        loop {
            match (a.peek(), b.peek()) {
                (Some((la, va)), Some((lb, vb))) => match la.cmp(lb) {
                    std::cmp::Ordering::Less => {
                        acc += pow(**va);
                        a.next();
                    }
                    std::cmp::Ordering::Greater => {
                        acc += pow(**vb);
                        b.next();
                    }
                    std::cmp::Ordering::Equal => {
                        acc += pow(**va - **vb);
                        a.next();
                        b.next();
                    }
                },
                (Some((_, va)), None) => {
                    acc += pow(**va);
                    a.next();
                }
                (None, Some((_, vb))) => {
                    acc += pow(**vb);
                    b.next();
                }
                (None, None) => break,
            }
        }
        Ok(if p == 2.0 { acc.sqrt() } else { acc.powf(1.0 / p) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vec_of(p: f64, entries: &[(&str, &str, f64)]) -> LpVector {
        let mut v = LpVector::zero(p).unwrap();
        for (ns, k, x) in entries {
            v.set(CoordLabel::new(*ns, *k), *x);
        }
        v
    }

    #[test]
    fn characteristic_norms() {
        let v = vec_of(2.0, &[("a", "1", 1.0), ("a", "2", 1.0), ("a", "3", 1.0)]);
        assert!((v.p_norm() - 3.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(LpVector::zero(2.0).unwrap().p_norm(), 0.0);
        let w = vec_of(2.0, &[("a", "1", 2.0), ("a", "2", -2.0)]);
        assert!((w.p_norm() - 8.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sub_self_is_empty() {
        let v = vec_of(2.0, &[("a", "1", 1.5), ("b", "2", -0.5)]);
        assert!(v.sub(&v).unwrap().is_zero());
        assert!(v.scale(0.0).is_zero());
    }

    #[test]
    fn disjoint_namespaces_union() {
        let v = vec_of(2.0, &[("a", "1", 1.0)]);
        let w = vec_of(2.0, &[("b", "1", 2.0)]);
        let s = v.add(&w).unwrap();
        assert_eq!(s.support_len(), 2);
    }

    #[test]
    fn p_mismatch_rejected() {
        let v = LpVector::zero(2.0).unwrap();
        let w = LpVector::zero(3.0).unwrap();
        assert!(v.add(&w).is_err());
    }

    #[test]
    fn bad_p_rejected() {
        assert!(LpVector::zero(1.0).is_err());
        assert!(LpVector::zero(0.5).is_err());
    }

    proptest! {
        #[test]
        fn triangle_inequality(
            xs in proptest::collection::vec((0u8..30, -10.0f64..10.0), 0..12),
            ys in proptest::collection::vec((0u8..30, -10.0f64..10.0), 0..12),
            p in 1.25f64..4.0,
        ) {
            let mut u = LpVector::zero(p).unwrap();
            for (k, v) in xs { u.add_to(CoordLabel::new("n", k.to_string()), v); }
            let mut w = LpVector::zero(p).unwrap();
            for (k, v) in ys { w.add_to(CoordLabel::new("n", k.to_string()), v); }
            let s = u.add(&w).unwrap();
            prop_assert!(s.p_norm() <= u.p_norm() + w.p_norm() + 1e-9);
            // dist agrees with materialized difference
            let d1 = u.dist(&w).unwrap();
            let d2 = u.sub(&w).unwrap().p_norm();
            prop_assert!((d1 - d2).abs() <= 1e-9 * (1.0 + d1.abs()));
        }

        #[test]
        fn disjoint_supports_add_power(
            xs in proptest::collection::vec((0u8..30, -10.0f64..10.0), 1..12),
            ys in proptest::collection::vec((0u8..30, -10.0f64..10.0), 1..12),
            p in 1.25f64..4.0,
        ) {
            let mut u = LpVector::zero(p).unwrap();
            for (k, v) in xs { u.add_to(CoordLabel::new("left", k.to_string()), v); }
            let mut w = LpVector::zero(p).unwrap();
            for (k, v) in ys { w.add_to(CoordLabel::new("right", k.to_string()), v); }
            let s = u.add(&w).unwrap();
            let lhs = s.norm_pow();
            let rhs = u.norm_pow() + w.norm_pow();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs));
        }
    }
}
