//! Triangulation candidates.
//!
//! Candidates come from a Delaunay triangulation of the design: one at the
//! barycenter of every simplex, and one per convex-hull facet, pushed along
//! the facet's outward normal a fraction `alpha` of the way to the boundary
//! of the unit cube.

mod hull;

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acquisition::Threshold;
use crate::codec::{fnv1a, Codec, Decoder, Encoder};
use crate::error::{Error, Result};
use crate::testfns::MAX_DIM;

use hull::{cofactor_normal, convex_hull, det, dot};

/// Default fringe placement fraction.
pub const DEFAULT_ALPHA: f64 = 0.9;
/// Simplices with volume at or below this are discarded.
pub const MIN_SIMPLEX_VOLUME: f64 = 1e-12;
/// Magnitude of the lift perturbation applied when the input is degenerate.
pub const JITTER: f64 = 1e-9;
const JITTER_SEED: u64 = 0x7472_6963_616e_6473;
const LOWER_FACET_TOL: f64 = 1e-10;

/// Default cap on the candidate count.
pub fn default_n_max(d: usize) -> usize {
    100 * d
}

/// A facet of the convex hull of the design.
#[derive(Debug, Clone, PartialEq)]
pub struct HullFacet {
    pub verts: Vec<usize>,
    /// Unit outward normal.
    pub normal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    pub simplices: Vec<Vec<usize>>,
    pub hull_facets: Vec<HullFacet>,
    /// Whether the lifted points had to be perturbed.
    pub jittered: bool,
}

fn check_design(x: ArrayView2<f64>) -> Result<()> {
    let (n, d) = x.dim();
    if d == 0 {
        return Err(Error::InvalidData("design has no columns".into()));
    }
    if d > MAX_DIM {
        return Err(Error::DimensionTooHigh(d));
    }
    if n < d + 1 {
        return Err(Error::TooFewPoints {
            needed: d + 1,
            dim: d,
            got: n,
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design coordinate"));
    }
    Ok(())
}

fn simplex_volume(x: ArrayView2<f64>, verts: &[usize]) -> f64 {
    let d = x.ncols();
    let mut m = Vec::with_capacity(d * d);
    for &v in &verts[1..] {
        m.extend((0..d).map(|h| x[[v, h]] - x[[verts[0], h]]));
    }
    let factorial: f64 = (1..=d).map(|k| k as f64).product();
    det(&mut m, d).abs() / factorial
}

/// Delaunay triangulation via the lower convex hull of the points lifted
/// onto a paraboloid. Degenerate input (for example cospherical points) is
/// retried once with a small seeded perturbation of the lift.
pub fn delaunay(x: ArrayView2<f64>) -> Result<Triangulation> {
    check_design(x)?;
    let (n, d) = x.dim();
    let mean: Vec<f64> = (0..d).map(|h| x.column(h).sum() / n as f64).collect();
    let spread = x
        .iter()
        .zip(mean.iter().cycle())
        .map(|(v, m)| (v - m).abs())
        .fold(0.0, f64::max);
    if spread == 0.0 {
        return Err(Error::Degenerate("all design points coincide".into()));
    }
    if n == d + 1 {
        // The lifted points span only a hyperplane; the design is its own simplex.
        let all: Vec<usize> = (0..n).collect();
        if simplex_volume(x, &all) <= MIN_SIMPLEX_VOLUME {
            return Err(Error::Degenerate("design points are affinely dependent".into()));
        }
        let simplices = vec![all];
        let hull_facets = boundary_facets(x, &simplices);
        return Ok(Triangulation {
            simplices,
            hull_facets,
            jittered: false,
        });
    }
    let mut lifted: Vec<Vec<f64>> = x
        .rows()
        .into_iter()
        .map(|r| {
            let mut p: Vec<f64> = r.iter().zip(&mean).map(|(v, m)| (v - m) / spread).collect();
            p.push(p.iter().map(|v| v * v).sum());
            p
        })
        .collect();
    let eps = 1e-12 * (1.0 + d as f64);

    let (facets, jittered) = match convex_hull(&lifted, eps) {
        Ok(f) => (f, false),
        Err(Error::Degenerate(first)) => {
            log::debug!("degenerate triangulation ({first}); retrying with jitter");
            let mut rng = ChaCha8Rng::seed_from_u64(JITTER_SEED);
            for p in &mut lifted {
                p[d] += JITTER * (2.0 * rng.random::<f64>() - 1.0);
            }
            let f = convex_hull(&lifted, eps).map_err(|e| match e {
                Error::Degenerate(msg) => Error::Degenerate(format!("{msg} (after jitter)")),
                other => other,
            })?;
            (f, true)
        }
        Err(e) => return Err(e),
    };

    let mut simplices: Vec<Vec<usize>> = facets
        .into_iter()
        .filter(|f| f.normal[d] < -LOWER_FACET_TOL)
        .map(|f| {
            let mut v = f.verts;
            v.sort_unstable();
            v
        })
        .filter(|v| simplex_volume(x, v) > MIN_SIMPLEX_VOLUME)
        .collect();
    simplices.sort_unstable();
    if simplices.is_empty() {
        return Err(Error::Degenerate(
            "triangulation has no simplex of positive volume".into(),
        ));
    }
    let hull_facets = boundary_facets(x, &simplices);
    Ok(Triangulation {
        simplices,
        hull_facets,
        jittered,
    })
}

/// Faces that belong to exactly one simplex, with normals pointing away from
/// that simplex's opposite vertex.
fn boundary_facets(x: ArrayView2<f64>, simplices: &[Vec<usize>]) -> Vec<HullFacet> {
    let d = x.ncols();
    let mut faces: HashMap<Vec<usize>, (usize, usize)> = HashMap::new();
    for s in simplices {
        for skip in 0..s.len() {
            let face: Vec<usize> = s
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, v)| *v)
                .collect();
            faces.entry(face).and_modify(|e| e.0 += 1).or_insert((1, s[skip]));
        }
    }
    let mut out: Vec<HullFacet> = faces
        .into_iter()
        .filter(|(_, (count, _))| *count == 1)
        .map(|(verts, (_, opposite))| {
            let rows: Vec<Vec<f64>> = verts.iter().map(|&v| x.row(v).to_vec()).collect();
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let mut normal = cofactor_normal(&refs);
            let len = dot(&normal, &normal).sqrt();
            normal.iter_mut().for_each(|v| *v /= len);
            let away: Vec<f64> = (0..d).map(|h| x[[opposite, h]] - rows[0][h]).collect();
            if dot(&normal, &away) > 0.0 {
                normal.iter_mut().for_each(|v| *v = -*v);
            }
            HullFacet { verts, normal }
        })
        .collect();
    out.sort_unstable_by(|a, b| a.verts.cmp(&b.verts));
    out
}

/// Where a candidate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    /// Barycenter of simplex `j`.
    Internal(usize),
    /// Pushed out from hull facet `j`.
    Fringe(usize),
}

impl Codec for Origin {
    fn encode(&self, e: &mut Encoder) {
        let (tag, j) = match self {
            Self::Internal(j) => (0, j),
            Self::Fringe(j) => (1, j),
        };
        e.u8(tag);
        e.usize(*j);
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        match (d.u8()?, d.usize()?) {
            (0, j) => Ok(Self::Internal(j)),
            (1, j) => Ok(Self::Fringe(j)),
            (tag, _) => Err(Error::Checkpoint(format!("unknown candidate origin tag {tag}"))),
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Internal(j) => write!(f, "internal:{j}"),
            Self::Fringe(j) => write!(f, "fringe:{j}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub x: Array2<f64>,
    pub origin: Vec<Origin>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.origin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origin.is_empty()
    }

    fn select(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select(ndarray::Axis(0), rows),
            origin: rows.iter().map(|&r| self.origin[r]).collect(),
        }
    }

    /// Hash of coordinates (as bits) and origins.
    pub fn fingerprint(&self) -> u64 {
        let mut e = Encoder::default();
        e.matrix(&self.x);
        for o in &self.origin {
            e.put(o);
        }
        fnv1a(&e.finish())
    }

    /// CSV with columns `x1..xd,origin,source`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let d = self.x.ncols();
        let header: Vec<String> = (1..=d).map(|h| format!("x{h}")).collect();
        writeln!(w, "{},origin,source", header.join(","))?;
        for (row, origin) in self.x.rows().into_iter().zip(&self.origin) {
            let coords: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let (kind, j) = match origin {
                Origin::Internal(j) => ("internal", j),
                Origin::Fringe(j) => ("fringe", j),
            };
            writeln!(w, "{},{kind},{j}", coords.join(","))?;
        }
        Ok(())
    }
}

impl Triangulation {
    /// Design rows that generated candidate `origin`.
    pub fn vertices_of(&self, origin: Origin) -> &[usize] {
        match origin {
            Origin::Internal(j) => &self.simplices[j],
            Origin::Fringe(j) => &self.hull_facets[j].verts,
        }
    }

    /// CSV of simplices, one row of vertex indices each.
    pub fn write_simplices_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let d = self.simplices.first().map_or(0, |s| s.len());
        let header: Vec<String> = (1..=d).map(|k| format!("v{k}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for s in &self.simplices {
            let cols: Vec<String> = s.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", cols.join(","))?;
        }
        Ok(())
    }
}

fn centroid(x: ArrayView2<f64>, verts: &[usize]) -> Vec<f64> {
    let k = verts.len() as f64;
    (0..x.ncols())
        .map(|h| verts.iter().map(|&v| x[[v, h]]).sum::<f64>() / k)
        .collect()
}

/// Barycenter of every simplex.
pub fn internal_candidates(tri: &Triangulation, x: ArrayView2<f64>) -> CandidateSet {
    let d = x.ncols();
    let rows: Vec<f64> = tri.simplices.iter().flat_map(|s| centroid(x, s)).collect();
    CandidateSet {
        x: Array2::from_shape_vec((tri.simplices.len(), d), rows).expect("shape"),
        origin: (0..tri.simplices.len()).map(Origin::Internal).collect(),
    }
}

/// Point a fraction `alpha` of the way from `midpoint` to where the ray along
/// `normal` leaves the unit cube, clamped into the cube. A midpoint already on
/// the boundary (in the direction of travel) is returned as is.
pub fn fringe_point(midpoint: &[f64], normal: &[f64], alpha: f64) -> Vec<f64> {
    let exit = midpoint
        .iter()
        .zip(normal)
        .filter(|(_, v)| **v != 0.0)
        .map(|(m, v)| if *v > 0.0 { (1.0 - m) / v } else { -m / v })
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
    let exit = if exit.is_finite() { exit } else { 0.0 };
    midpoint
        .iter()
        .zip(normal)
        .map(|(m, v)| (m + alpha * exit * v).clamp(0.0, 1.0))
        .collect()
}

/// One candidate per hull facet, pushed outward from the facet midpoint.
pub fn fringe_candidates(tri: &Triangulation, x: ArrayView2<f64>, alpha: f64) -> Result<CandidateSet> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidData(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let d = x.ncols();
    let mut rows = Vec::with_capacity(tri.hull_facets.len() * d);
    for f in &tri.hull_facets {
        let len = dot(&f.normal, &f.normal).sqrt();
        let mid = centroid(x, &f.verts);
        let inward = tri
            .simplices
            .iter()
            .find(|s| f.verts.iter().all(|v| s.contains(v)))
            .and_then(|s| s.iter().find(|v| !f.verts.contains(v)))
            .map(|&o| (0..d).map(|h| x[[o, h]] - mid[h]).collect::<Vec<_>>());
        let outward = inward.is_some_and(|w| dot(&w, &f.normal) < 0.0);
        assert!(
            (len - 1.0).abs() < 1e-9 && outward,
            "hull facet normal must be unit and outward"
        );
        rows.extend(fringe_point(&mid, &f.normal, alpha));
    }
    Ok(CandidateSet {
        x: Array2::from_shape_vec((tri.hull_facets.len(), d), rows).expect("shape"),
        origin: (0..tri.hull_facets.len()).map(Origin::Fringe).collect(),
    })
}

/// Triangulate `x` and return internal followed by fringe candidates.
pub fn tricands(x: ArrayView2<f64>, alpha: f64) -> Result<(Triangulation, CandidateSet)> {
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidData("design points must lie in the unit cube".into()));
    }
    let tri = delaunay(x)?;
    let inner = internal_candidates(&tri, x);
    let fringe = fringe_candidates(&tri, x, alpha)?;
    let mut all = inner;
    all.x.append(ndarray::Axis(0), fringe.x.view()).expect("same width");
    all.origin.extend(fringe.origin);
    Ok((tri, all))
}

/// Outcome of targeted sub-sampling, as indices into the full candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsample {
    /// `(design row, candidate)` pairs chosen for their proximity to the contour.
    pub targeted: Vec<(usize, usize)>,
    /// All retained candidates, ascending.
    pub kept: Vec<usize>,
}

/// Choose which candidates survive a cap of `n_max`.
///
/// Design points are ranked by `|y - g|`; walking the ranking (repeatedly if
/// needed), each point contributes one random unretained candidate it helped
/// generate, until a tenth of `n_max` is reached or a full pass adds nothing.
/// The rest is filled uniformly at random.
pub fn subsample_indices<R: Rng + ?Sized>(
    cands: &CandidateSet,
    tri: &Triangulation,
    y: ArrayView1<f64>,
    thr: &Threshold,
    n_max: usize,
    rng: &mut R,
) -> Result<Subsample> {
    if n_max == 0 {
        return Err(Error::InvalidData("n_max must be at least 1".into()));
    }
    let total = cands.len();
    if total <= n_max {
        return Ok(Subsample {
            targeted: Vec::new(),
            kept: (0..total).collect(),
        });
    }
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); y.len()];
    for (c, origin) in cands.origin.iter().enumerate() {
        for &v in tri.vertices_of(*origin) {
            let list = adjacency.get_mut(v).ok_or_else(|| Error::DimensionMismatch {
                expected: v + 1,
                got: y.len(),
            })?;
            list.push(c);
        }
    }
    let mut ranking: Vec<usize> = (0..y.len()).collect();
    ranking.sort_by(|&a, &b| (y[a] - thr.g).abs().total_cmp(&(y[b] - thr.g).abs()));

    let quota = n_max.div_ceil(10);
    let mut retained = vec![false; total];
    let mut targeted = Vec::new();
    'passes: loop {
        let before = targeted.len();
        for &i in &ranking {
            if targeted.len() >= quota {
                break 'passes;
            }
            let open: Vec<usize> = adjacency[i].iter().copied().filter(|&c| !retained[c]).collect();
            if !open.is_empty() {
                let c = open[rng.random_range(0..open.len())];
                retained[c] = true;
                targeted.push((i, c));
            }
        }
        if targeted.len() == before {
            break;
        }
    }
    let rest: Vec<usize> = (0..total).filter(|&c| !retained[c]).collect();
    let fill = (n_max - targeted.len()).min(rest.len());
    for k in sample(rng, rest.len(), fill).iter() {
        retained[rest[k]] = true;
    }
    let kept = (0..total).filter(|&c| retained[c]).collect();
    Ok(Subsample { targeted, kept })
}

/// Reduce `cands` to at most `n_max`, favoring candidates near the contour.
pub fn targeted_subsample<R: Rng + ?Sized>(
    cands: &CandidateSet,
    tri: &Triangulation,
    y: ArrayView1<f64>,
    thr: &Threshold,
    n_max: usize,
    rng: &mut R,
) -> Result<CandidateSet> {
    let s = subsample_indices(cands, tri, y, thr, n_max, rng)?;
    Ok(cands.select(&s.kept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::Direction;
    use ndarray::{array, Array1};

    /// No point strictly inside any simplex's circumsphere.
    pub(crate) fn empty_circumspheres(x: ArrayView2<f64>, tri: &Triangulation) -> bool {
        let d = x.ncols();
        tri.simplices.iter().all(|s| {
            // Solve 2 (v_i - v_0) · c = |v_i|² - |v_0|² by Gauss-Jordan.
            let mut a = vec![0.0; d * (d + 1)];
            let sq = |v: usize| (0..d).map(|h| x[[v, h]] * x[[v, h]]).sum::<f64>();
            for (r, &v) in s[1..].iter().enumerate() {
                for h in 0..d {
                    a[r * (d + 1) + h] = 2.0 * (x[[v, h]] - x[[s[0], h]]);
                }
                a[r * (d + 1) + d] = sq(v) - sq(s[0]);
            }
            for c in 0..d {
                let p = (c..d)
                    .max_by(|&i, &j| a[i * (d + 1) + c].abs().total_cmp(&a[j * (d + 1) + c].abs()))
                    .unwrap();
                for j in 0..=d {
                    a.swap(p * (d + 1) + j, c * (d + 1) + j);
                }
                for r in 0..d {
                    if r != c {
                        let f = a[r * (d + 1) + c] / a[c * (d + 1) + c];
                        for j in 0..=d {
                            a[r * (d + 1) + j] -= f * a[c * (d + 1) + j];
                        }
                    }
                }
            }
            let center: Vec<f64> = (0..d).map(|h| a[h * (d + 1) + d] / a[h * (d + 1) + h]).collect();
            let dist2 = |v: usize| (0..d).map(|h| (x[[v, h]] - center[h]).powi(2)).sum::<f64>();
            let r2 = dist2(s[0]);
            (0..x.nrows()).all(|p| dist2(p) >= r2 * (1.0 - 1e-9))
        })
    }

    #[test]
    fn single_triangle() {
        let x = array![[0.1, 0.1], [0.9, 0.2], [0.4, 0.8]];
        let tri = delaunay(x.view()).unwrap();
        assert_eq!(tri.simplices, vec![vec![0, 1, 2]]);
        assert_eq!(tri.hull_facets.len(), 3);
        assert!(!tri.jittered);
        let (_, c) = tricands(x.view(), 0.9).unwrap();
        assert_eq!(c.len(), 4);
    }

    #[test]
    fn cocircular_kite() {
        let x = array![[0.0, 0.0], [2.0, 0.0], [1.0, 1.0], [1.0, -1.0]];
        let tri = delaunay(x.view()).unwrap();
        assert!(tri.jittered);
        assert_eq!(tri.simplices.len(), 2);
        assert_eq!(tri.hull_facets.len(), 4);
        assert!(empty_circumspheres(x.view(), &tri));
    }

    #[test]
    fn square_corners_use_jitter() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let tri = delaunay(x.view()).unwrap();
        assert!(tri.jittered);
        assert_eq!(tri.simplices.len(), 2);
        assert!(empty_circumspheres(x.view(), &tri));
        assert_eq!(delaunay(x.view()).unwrap(), tri);
    }

    #[test]
    fn input_guards() {
        assert!(matches!(
            delaunay(array![[0.1, 0.2], [0.3, 0.4]].view()),
            Err(Error::TooFewPoints { .. })
        ));
        assert!(matches!(
            delaunay(Array2::zeros((12, 9)).view()),
            Err(Error::DimensionTooHigh(9))
        ));
        let collinear = array![[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]];
        assert!(matches!(delaunay(collinear.view()), Err(Error::Degenerate(_))));
        assert!(tricands(array![[0.0, 0.0], [1.2, 0.0], [0.0, 1.0]].view(), 0.5).is_err());
        assert!(tricands(array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]].view(), 1.5).is_err());
    }

    #[test]
    fn one_dimensional_design() {
        let x = array![[0.7], [0.1], [0.4]];
        let tri = delaunay(x.view()).unwrap();
        assert_eq!(tri.simplices, vec![vec![0, 2], vec![1, 2]]);
        let (_, c) = tricands(x.view(), 0.5).unwrap();
        let mut pts: Vec<f64> = c.x.column(0).to_vec();
        pts.sort_by(f64::total_cmp);
        let expect = [0.05, 0.25, 0.55, 0.85];
        assert!(pts.iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-12), "{pts:?}");
    }

    #[test]
    fn barycenters() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let tri = delaunay(x.view()).unwrap();
        let c = internal_candidates(&tri, x.view());
        assert!((c.x[[0, 0]] - 1.0 / 3.0).abs() < 1e-15 && (c.x[[0, 1]] - 1.0 / 3.0).abs() < 1e-15);

        let x3 = array![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let tri3 = delaunay(x3.view()).unwrap();
        let c3 = internal_candidates(&tri3, x3.view());
        assert_eq!(c3.x.row(0).to_vec(), vec![0.25, 0.25, 0.25]);
        assert_eq!(tri3.hull_facets.len(), 4);
    }

    #[test]
    fn fringe_examples() {
        assert_eq!(fringe_point(&[0.5, 0.2], &[0.0, -1.0], 0.9)[0], 0.5);
        assert!((fringe_point(&[0.5, 0.2], &[0.0, -1.0], 0.9)[1] - 0.02).abs() < 1e-15);
        assert_eq!(fringe_point(&[0.5, 0.2], &[0.0, -1.0], 0.0), vec![0.5, 0.2]);
        assert_eq!(fringe_point(&[0.5, 0.2], &[0.0, -1.0], 1.0), vec![0.5, 0.0]);
        assert_eq!(fringe_point(&[0.5, 0.0], &[0.0, -1.0], 0.9), vec![0.5, 0.0]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let p = fringe_point(&[0.8, 0.6], &[s, s], 1.0);
        assert!((p[0] - 1.0).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);

        // Through a full triangulation: the bottom edge of this triangle.
        let x = array![[0.2, 0.2], [0.8, 0.2], [0.5, 0.8]];
        let tri = delaunay(x.view()).unwrap();
        let bottom = tri.hull_facets.iter().position(|f| f.verts == vec![0, 1]).unwrap();
        assert!((tri.hull_facets[bottom].normal[1] + 1.0).abs() < 1e-15);
        let c = fringe_candidates(&tri, x.view(), 0.9).unwrap();
        assert!((c.x[[bottom, 0]] - 0.5).abs() < 1e-15 && (c.x[[bottom, 1]] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn random_designs_are_delaunay() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..60 {
            let d = 2 + trial % 2;
            let n = d + 1 + rng.random_range(0..30);
            let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>());
            let (tri, c) = tricands(x.view(), 0.9).unwrap();
            assert!(empty_circumspheres(x.view(), &tri));
            assert_eq!(c.len(), tri.simplices.len() + tri.hull_facets.len());
            assert!(c.x.iter().all(|v| (0.0..=1.0).contains(v)));
            // Barycentric reconstruction.
            for (j, s) in tri.simplices.iter().enumerate() {
                let b = centroid(x.view(), s);
                assert!(b.iter().zip(c.x.row(j)).all(|(a, v)| (a - v).abs() < 1e-15));
                assert!(simplex_volume(x.view(), s) > MIN_SIMPLEX_VOLUME);
            }
            // Simplices tile the hull: volumes add up to the hull's volume
            // measured as the cone from the centroid over the facets.
            let total: f64 = tri.simplices.iter().map(|s| simplex_volume(x.view(), s)).sum();
            let g = centroid(x.view(), &(0..n).collect::<Vec<_>>());
            let cone: f64 = tri
                .hull_facets
                .iter()
                .map(|f| {
                    let base = f.verts.iter().map(|&v| x.row(v).to_vec()).collect::<Vec<_>>();
                    let refs: Vec<&[f64]> = base.iter().map(|r| r.as_slice()).collect();
                    let area = dot(&cofactor_normal(&refs), &cofactor_normal(&refs)).sqrt();
                    let height = dot(&f.normal, &(0..d).map(|h| base[0][h] - g[h]).collect::<Vec<_>>());
                    area * height / (d as f64) / (1..d).map(|k| k as f64).product::<f64>()
                })
                .sum();
            assert!((total - cone).abs() < 1e-9, "{total} vs {cone}");
        }
    }

    #[test]
    fn higher_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in 4..=5 {
            let x = Array2::from_shape_fn((d + 12, d), |_| rng.random::<f64>());
            let (tri, c) = tricands(x.view(), 0.9).unwrap();
            assert!(empty_circumspheres(x.view(), &tri));
            assert!(c.x.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(tri.simplices.iter().all(|s| s.len() == d + 1));
            assert!(tri.hull_facets.iter().all(|f| f.verts.len() == d));
        }
    }

    #[test]
    fn boundary_collinear_points() {
        let x = array![[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [0.3, 0.7], [0.8, 0.4], [0.0, 1.0]];
        let tri = delaunay(x.view()).unwrap();
        assert!(empty_circumspheres(x.view(), &tri));
        let area: f64 = tri.simplices.iter().map(|s| simplex_volume(x.view(), s)).sum();
        // Hull polygon (0,0),(1,0),(0.8,0.4),(0,1) by the shoelace formula.
        assert!((area - 0.6).abs() < 1e-12, "{area}");
    }

    fn three_point_setup() -> (Array2<f64>, Triangulation, CandidateSet, Array1<f64>) {
        let x = array![[0.2, 0.2], [0.8, 0.3], [0.5, 0.9]];
        let (tri, c) = tricands(x.view(), 0.9).unwrap();
        (x, tri, c, array![0.1, 0.5, -0.9])
    }

    #[test]
    fn subsample_identity_when_small() {
        let (_, tri, c, y) = three_point_setup();
        let thr = Threshold {
            g: 0.0,
            direction: Direction::FailAbove,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(targeted_subsample(&c, &tri, y.view(), &thr, 4, &mut rng).unwrap(), c);
        assert_eq!(targeted_subsample(&c, &tri, y.view(), &thr, 50, &mut rng).unwrap(), c);
    }

    #[test]
    fn targeted_slot_goes_to_closest_point() {
        let (_, tri, c, y) = three_point_setup();
        let thr = Threshold {
            g: 0.0,
            direction: Direction::FailAbove,
        };
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = subsample_indices(&c, &tri, y.view(), &thr, 3, &mut rng).unwrap();
            assert_eq!(s.targeted.len(), 1);
            let (point, cand) = s.targeted[0];
            assert_eq!(point, 0);
            assert!(tri.vertices_of(c.origin[cand]).contains(&0));
            assert_eq!(s.kept.len(), 3);
            assert!(s.kept.contains(&cand));
        }
        let a = targeted_subsample(&c, &tri, y.view(), &thr, 2, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = targeted_subsample(&c, &tri, y.view(), &thr, 2, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn targeted_candidates_are_adjacent() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = Array2::from_shape_fn((40, 2), |_| rng.random::<f64>());
        let y = x.rows().into_iter().map(|r| r[0] + r[1] - 1.0).collect::<Array1<f64>>();
        let (tri, c) = tricands(x.view(), 0.9).unwrap();
        let thr = Threshold {
            g: 0.0,
            direction: Direction::FailAbove,
        };
        let s = subsample_indices(&c, &tri, y.view(), &thr, 50, &mut rng).unwrap();
        assert_eq!(s.kept.len(), 50);
        assert_eq!(s.targeted.len(), 5);
        let mut ranked: Vec<usize> = (0..40).collect();
        ranked.sort_by(|&a, &b| y[a].abs().total_cmp(&y[b].abs()));
        for (k, (point, cand)) in s.targeted.iter().enumerate() {
            assert_eq!(*point, ranked[k]);
            assert!(tri.vertices_of(c.origin[*cand]).contains(point));
        }
        let sub = targeted_subsample(&c, &tri, y.view(), &thr, 50, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(sub.x.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn csv_dumps() {
        let (_, tri, c, _) = three_point_setup();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1,x2,origin,source\n"));
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(1).unwrap().ends_with("internal,0"));
        let mut buf = Vec::new();
        tri.write_simplices_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "v1,v2,v3\n0,1,2\n");
    }

    #[test]
    fn candidate_count_grows_with_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut increases = 0;
        let trials = 20;
        for _ in 0..trials {
            let x = Array2::from_shape_fn((40, 2), |_| rng.random::<f64>());
            let small = delaunay(x.slice(ndarray::s![..20, ..])).unwrap().simplices.len();
            let large = delaunay(x.view()).unwrap().simplices.len();
            if large >= small {
                increases += 1;
            }
        }
        assert_eq!(increases, trials);
    }
}
