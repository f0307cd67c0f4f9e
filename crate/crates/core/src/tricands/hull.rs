//! Incremental convex hull in arbitrary dimension.
//!
//! Facets are kept in a flat list and scanned linearly for visibility, which
//! is plenty for the few hundred points a design ever holds.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// A hull facet: `dim` vertex indices and a unit outward normal.
#[derive(Debug, Clone)]
pub(crate) struct Facet {
    pub verts: Vec<usize>,
    pub normal: Vec<f64>,
    offset: f64,
}

impl Facet {
    fn signed_dist(&self, p: &[f64]) -> f64 {
        dot(&self.normal, p) - self.offset
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Determinant of a row-major `k × k` matrix by partial-pivot elimination.
pub(crate) fn det(m: &mut [f64], k: usize) -> f64 {
    let mut d = 1.0;
    for c in 0..k {
        let p = (c..k)
            .max_by(|&a, &b| m[a * k + c].abs().total_cmp(&m[b * k + c].abs()))
            .expect("nonempty");
        if m[p * k + c] == 0.0 {
            return 0.0;
        }
        if p != c {
            for j in 0..k {
                m.swap(p * k + j, c * k + j);
            }
            d = -d;
        }
        let piv = m[c * k + c];
        d *= piv;
        for r in c + 1..k {
            let f = m[r * k + c] / piv;
            if f != 0.0 {
                for j in c..k {
                    m[r * k + j] -= f * m[c * k + j];
                }
            }
        }
    }
    d
}

/// Vector orthogonal to the `dim - 1` edges `v_i - v_0`, by cofactor
/// expansion. Its length is the volume of the spanned parallelotope.
pub(crate) fn cofactor_normal(verts: &[&[f64]]) -> Vec<f64> {
    let dim = verts[0].len();
    let rows: Vec<Vec<f64>> = verts[1..].iter().map(|v| sub(v, verts[0])).collect();
    let k = dim - 1;
    let mut minor = vec![0.0; k * k];
    (0..dim)
        .map(|col| {
            for (r, row) in rows.iter().enumerate() {
                let mut c2 = 0;
                for (c, v) in row.iter().enumerate() {
                    if c != col {
                        minor[r * k + c2] = *v;
                        c2 += 1;
                    }
                }
            }
            let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
            sign * det(&mut minor, k)
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

struct Builder<'a> {
    pts: &'a [Vec<f64>],
    interior: Vec<f64>,
    eps: f64,
    facets: Vec<Facet>,
}

impl Builder<'_> {
    fn make_facet(&self, verts: Vec<usize>) -> Result<Facet> {
        let refs: Vec<&[f64]> = verts.iter().map(|&i| self.pts[i].as_slice()).collect();
        let mut normal = cofactor_normal(&refs);
        let len = norm(&normal);
        let scale: f64 = refs[1..].iter().map(|v| norm(&sub(v, refs[0]))).product();
        if !(len > 1e-12 * scale) {
            return Err(Error::Degenerate("flat hull facet".into()));
        }
        normal.iter_mut().for_each(|v| *v /= len);
        let mut offset = dot(&normal, refs[0]);
        if dot(&normal, &self.interior) - offset > 0.0 {
            normal.iter_mut().for_each(|v| *v = -*v);
            offset = -offset;
        }
        Ok(Facet { verts, normal, offset })
    }

    fn add_point(&mut self, p: usize) -> Result<()> {
        let x = &self.pts[p];
        let mut visible = Vec::new();
        for (f, facet) in self.facets.iter().enumerate() {
            let dist = facet.signed_dist(x);
            if dist.abs() <= self.eps {
                return Err(Error::Degenerate(format!("point {p} is coplanar with a hull facet")));
            }
            if dist > 0.0 {
                visible.push(f);
            }
        }
        if visible.is_empty() {
            return Err(Error::Degenerate(format!("point {p} is not extreme")));
        }
        let mut ridges: HashMap<Vec<usize>, usize> = HashMap::new();
        for &f in &visible {
            let verts = &self.facets[f].verts;
            for skip in 0..verts.len() {
                let mut ridge: Vec<usize> = verts
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != skip)
                    .map(|(_, v)| *v)
                    .collect();
                ridge.sort_unstable();
                *ridges.entry(ridge).or_default() += 1;
            }
        }
        let mut horizon: Vec<Vec<usize>> = ridges.into_iter().filter(|(_, c)| *c == 1).map(|(r, _)| r).collect();
        // HashMap order is random; keep facet order reproducible.
        horizon.sort_unstable();
        let mut keep = vec![true; self.facets.len()];
        visible.iter().for_each(|&f| keep[f] = false);
        let mut k = keep.iter();
        self.facets.retain(|_| *k.next().expect("same length"));
        for mut ridge in horizon {
            ridge.push(p);
            let facet = self.make_facet(ridge)?;
            self.facets.push(facet);
        }
        Ok(())
    }
}

/// Choose `dim + 1` affinely independent points greedily by distance from
/// the span of those already chosen.
fn initial_simplex(pts: &[Vec<f64>], eps: f64) -> Result<Vec<usize>> {
    let dim = pts[0].len();
    let first = (0..pts.len())
        .min_by(|&a, &b| pts[a][0].total_cmp(&pts[b][0]))
        .expect("nonempty");
    let mut chosen = vec![first];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while chosen.len() < dim + 1 {
        let residual = |i: usize| {
            let mut r = sub(&pts[i], &pts[first]);
            for b in &basis {
                let c = dot(&r, b);
                r.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            r
        };
        let (best, r) = (0..pts.len())
            .filter(|i| !chosen.contains(i))
            .map(|i| (i, residual(i)))
            .max_by(|a, b| norm(&a.1).total_cmp(&norm(&b.1)))
            .ok_or_else(|| Error::Degenerate("not enough points".into()))?;
        let len = norm(&r);
        if len <= eps {
            return Err(Error::Degenerate("points do not span the space".into()));
        }
        basis.push(r.into_iter().map(|v| v / len).collect());
        chosen.push(best);
    }
    Ok(chosen)
}

/// Convex hull of `pts` (all of one dimension `>= 2`). Every point must be a
/// hull vertex in general position; anything else is reported as degenerate.
pub(crate) fn convex_hull(pts: &[Vec<f64>], eps: f64) -> Result<Vec<Facet>> {
    let dim = pts[0].len();
    if pts.len() < dim + 1 {
        return Err(Error::TooFewPoints {
            needed: dim + 1,
            dim,
            got: pts.len(),
        });
    }
    let simplex = initial_simplex(pts, eps)?;
    let mut interior = vec![0.0; dim];
    for &i in &simplex {
        interior
            .iter_mut()
            .zip(&pts[i])
            .for_each(|(a, b)| *a += b / (dim + 1) as f64);
    }
    let mut b = Builder {
        pts,
        interior,
        eps,
        facets: Vec::new(),
    };
    for skip in 0..simplex.len() {
        let verts: Vec<usize> = simplex
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != skip)
            .map(|(_, v)| *v)
            .collect();
        let f = b.make_facet(verts)?;
        b.facets.push(f);
    }
    for p in 0..pts.len() {
        if !simplex.contains(&p) {
            b.add_point(p)?;
        }
    }
    Ok(b.facets)
}
