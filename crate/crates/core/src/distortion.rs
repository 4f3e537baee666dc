//! Empirical distortion of a finite embedding: per-distance envelopes of
//! image distances, a compression-exponent estimate from the lower
//! envelope, and the fitted bounds that go into reports.

use crate::error::{CoreError, Result};
use crate::graph::MetricGraph;
use crate::lp::LpVector;
use rayon::prelude::*;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub rho_minus: f64,
    pub rho_plus: f64,
    pub pairs: u64,
}

/// Per-distance min/max embedded distances over every evaluated pair.
#[derive(Debug, Clone)]
pub struct DistortionCurve {
    pub p: f64,
    pub per_r: BTreeMap<u32, CurvePoint>,
}

impl DistortionCurve {
    /// `max_r ρ_+(r)/r`: the measured Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        self.per_r
            .iter()
            .map(|(&r, c)| c.rho_plus / r as f64)
            .fold(0.0, f64::max)
    }

    pub fn max_distance(&self) -> u32 {
        self.per_r.keys().copied().max().unwrap_or(0)
    }
}

/// Exhaustive pair scan over the supplied vertices.
pub fn measure_distortion(g: &MetricGraph, vectors: &[(u32, LpVector)]) -> Result<DistortionCurve> {
    if vectors.is_empty() {
        return Err(CoreError::Precondition("no vertices to measure".into()));
    }
    let p = vectors[0].1.p();
    let n = vectors.len();
    let partial: Vec<BTreeMap<u32, CurvePoint>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc: BTreeMap<u32, CurvePoint> = BTreeMap::new();
            let (x, ref vx) = vectors[i];
            for (y, vy) in &vectors[i + 1..] {
                let r = g.dist(x, *y);
                if r == 0 {
                    continue;
                }
                let d = vx.dist(vy).expect("uniform p");
                let e = acc.entry(r).or_insert(CurvePoint {
                    rho_minus: f64::INFINITY,
                    rho_plus: f64::NEG_INFINITY,
                    pairs: 0,
                });
                e.rho_minus = e.rho_minus.min(d);
                e.rho_plus = e.rho_plus.max(d);
                e.pairs += 1;
            }
            acc
        })
        .collect();
    let mut per_r: BTreeMap<u32, CurvePoint> = BTreeMap::new();
    for acc in partial {
        for (r, c) in acc {
            let e = per_r.entry(r).or_insert(CurvePoint {
                rho_minus: f64::INFINITY,
                rho_plus: f64::NEG_INFINITY,
                pairs: 0,
            });
            e.rho_minus = e.rho_minus.min(c.rho_minus);
            e.rho_plus = e.rho_plus.max(c.rho_plus);
            e.pairs += c.pairs;
        }
    }
    Ok(DistortionCurve { p, per_r })
}

/// Least-squares slope of `log ρ_−` against `log r` over the upper half of
/// the distance range, clamped to `[0,1]`. Distances whose lower envelope
/// is zero carry no information for the log fit and are skipped.
pub fn estimate_compression(curve: &DistortionCurve) -> Result<f64> {
    if curve.per_r.len() < 5 {
        return Err(CoreError::Precondition(format!(
            "need at least 5 distinct distances, have {}",
            curve.per_r.len()
        )));
    }
    let r_max = curve.max_distance();
    let pts: Vec<(f64, f64)> = curve
        .per_r
        .iter()
        .filter(|(&r, c)| 2 * r >= r_max && c.rho_minus > 0.0)
        .map(|(&r, c)| ((r as f64).ln(), c.rho_minus.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(CoreError::Precondition("lower envelope vanishes on the upper range".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok((sxy / sxx).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy)]
pub struct LowerFit {
    pub c: f64,
    pub c_offset: f64,
    pub alpha: f64,
}

/// Largest `c` with `ρ_−(r) ≥ c·r^α` for every reported distance (zero
/// offset); `α` from the compression estimate.
pub fn fit_lower_bound(curve: &DistortionCurve) -> Result<LowerFit> {
    let alpha = estimate_compression(curve)?;
    let c = curve
        .per_r
        .iter()
        .map(|(&r, pt)| pt.rho_minus / (r as f64).powf(alpha))
        .fold(f64::INFINITY, f64::min);
    Ok(LowerFit { c, c_offset: 0.0, alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{CoordLabel, LpVector};

    fn identity_embedding(g: &MetricGraph) -> Vec<(u32, LpVector)> {
        (0..g.vertex_count())
            .map(|v| {
                let mut w = LpVector::zero(2.0).unwrap();
                w.set(CoordLabel::new("x", "0"), v as f64);
                (v, w)
            })
            .collect()
    }

    #[test]
    fn identity_curve_on_path() {
        let g = MetricGraph::path(9);
        let curve = measure_distortion(&g, &identity_embedding(&g)).unwrap();
        for (&r, c) in &curve.per_r {
            assert_eq!(c.rho_minus, r as f64);
            assert_eq!(c.rho_plus, r as f64);
        }
        assert_eq!(curve.lipschitz(), 1.0);
        assert!((estimate_compression(&curve).unwrap() - 1.0).abs() < 1e-12);
        let fit = fit_lower_bound(&curve).unwrap();
        for (&r, c) in &curve.per_r {
            assert!(c.rho_minus >= fit.c * (r as f64).powf(fit.alpha) - fit.c_offset - 1e-12);
        }
    }

    #[test]
    fn constant_map_gives_zero_curve() {
        let g = MetricGraph::path(9);
        let vecs: Vec<(u32, LpVector)> =
            (0..9).map(|v| (v, LpVector::zero(2.0).unwrap())).collect();
        let curve = measure_distortion(&g, &vecs).unwrap();
        for c in curve.per_r.values() {
            assert_eq!(c.rho_minus, 0.0);
            assert_eq!(c.rho_plus, 0.0);
        }
        assert!(estimate_compression(&curve).is_err());
    }

    #[test]
    fn sqrt_curve_recovers_half() {
        // exact log-log line rho_minus(r) = sqrt(r)
        let per_r: BTreeMap<u32, CurvePoint> = (1..=40)
            .map(|r| {
                let v = (r as f64).sqrt();
                (r, CurvePoint { rho_minus: v, rho_plus: v, pairs: 1 })
            })
            .collect();
        let curve = DistortionCurve { p: 2.0, per_r };
        let a = estimate_compression(&curve).unwrap();
        assert!((a - 0.5).abs() < 0.02, "a={a}");
    }

    #[test]
    fn scaling_invariance() {
        let g = MetricGraph::cycle(12);
        let vecs = identity_embedding(&g);
        let scaled: Vec<(u32, LpVector)> = vecs.iter().map(|(v, w)| (*v, w.scale(7.5))).collect();
        let a1 = estimate_compression(&measure_distortion(&g, &vecs).unwrap()).unwrap();
        let a2 = estimate_compression(&measure_distortion(&g, &scaled).unwrap()).unwrap();
        assert!((a1 - a2).abs() < 1e-12);
    }

    #[test]
    fn permutation_invariance() {
        let g = MetricGraph::cycle(12);
        let vecs = identity_embedding(&g);
        let mut shuffled = vecs.clone();
        shuffled.reverse();
        let c1 = measure_distortion(&g, &vecs).unwrap();
        let c2 = measure_distortion(&g, &shuffled).unwrap();
        for (a, b) in c1.per_r.iter().zip(c2.per_r.iter()) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1.rho_minus, b.1.rho_minus);
            assert_eq!(a.1.rho_plus, b.1.rho_plus);
            assert_eq!(a.1.pairs, b.1.pairs);
        }
    }

    #[test]
    fn too_few_distances_rejected() {
        let g = MetricGraph::path(4);
        let curve = measure_distortion(&g, &identity_embedding(&g)).unwrap();
        assert!(estimate_compression(&curve).is_err());
    }
}
