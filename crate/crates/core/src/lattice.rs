//! Sites, max-norm balls and their boundaries in `Z^d`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 4;

/// A lattice point. Unused trailing coordinates are kept at zero so that the
/// derived ordering is lexicographic within one dimension.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "Vec<i32>", try_from = "Vec<i32>")]
pub struct Site {
    dim: u8,
    coords: [i32; MAX_DIM],
}

impl Site {
    pub fn new(coords: &[i32]) -> Result<Site> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(Error::InvalidGeometry(format!(
                "site dimension must be in 1..={MAX_DIM}, got {}",
                coords.len()
            )));
        }
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Site {
            dim: coords.len() as u8,
            coords: c,
        })
    }

    pub fn origin(dim: usize) -> Site {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} out of range");
        Site {
            dim: dim as u8,
            coords: [0; MAX_DIM],
        }
    }

    /// Site `(x, 0, ..., 0)`.
    pub fn on_axis(dim: usize, x: i32) -> Site {
        let mut s = Site::origin(dim);
        s.coords[0] = x;
        s
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim()]
    }

    pub fn coord(&self, axis: usize) -> i32 {
        self.coords[axis]
    }

    pub fn shifted(&self, axis: usize, delta: i32) -> Site {
        let mut s = *self;
        s.coords[axis] += delta;
        s
    }

    pub fn offset(&self, other: &Site) -> Site {
        debug_assert_eq!(self.dim, other.dim);
        let mut s = *self;
        for i in 0..self.dim() {
            s.coords[i] += other.coords[i];
        }
        s
    }

    /// Max-norm distance; dimensions must agree.
    pub fn max_dist(&self, other: &Site) -> u32 {
        debug_assert_eq!(self.dim, other.dim);
        (0..self.dim())
            .map(|i| self.coords[i].abs_diff(other.coords[i]))
            .max()
            .unwrap_or(0)
    }

    /// Graph (ℓ¹) distance; dimensions must agree.
    pub fn graph_dist(&self, other: &Site) -> u32 {
        debug_assert_eq!(self.dim, other.dim);
        (0..self.dim())
            .map(|i| self.coords[i].abs_diff(other.coords[i]))
            .sum()
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl From<Site> for Vec<i32> {
    fn from(s: Site) -> Vec<i32> {
        s.coords().to_vec()
    }
}

impl TryFrom<Vec<i32>> for Site {
    type Error = Error;
    fn try_from(v: Vec<i32>) -> Result<Site> {
        Site::new(&v)
    }
}

fn check_dims(x: &Site, y: &Site) -> Result<()> {
    if x.dim != y.dim {
        return Err(Error::DimensionMismatch {
            left: x.dim(),
            right: y.dim(),
        });
    }
    Ok(())
}

pub fn dist_max(x: &Site, y: &Site) -> Result<u32> {
    check_dims(x, y)?;
    Ok(x.max_dist(y))
}

pub fn dist_graph(x: &Site, y: &Site) -> Result<u32> {
    check_dims(x, y)?;
    Ok(x.graph_dist(y))
}

/// Closed max-norm ball `B_r(center)` in the full lattice.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Ball {
    pub center: Site,
    pub radius: u32,
}

impl Ball {
    pub fn new(center: Site, radius: u32) -> Ball {
        Ball { center, radius }
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn contains(&self, x: &Site) -> bool {
        self.center.max_dist(x) <= self.radius
    }

    /// `self ⊆ other`.
    pub fn is_inside(&self, other: &Ball) -> bool {
        self.center.max_dist(&other.center) + self.radius <= other.radius
    }

    pub fn is_disjoint(&self, other: &Ball) -> bool {
        self.center.max_dist(&other.center) > self.radius + other.radius
    }

    pub fn len(&self) -> usize {
        (2 * self.radius as usize + 1).pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn region(&self) -> BoxRegion {
        let r = self.radius as i32;
        let mut lo = [0; MAX_DIM];
        let mut hi = [0; MAX_DIM];
        for i in 0..self.dim() {
            lo[i] = self.center.coords[i] - r;
            hi[i] = self.center.coords[i] + r;
        }
        BoxRegion {
            dim: self.center.dim,
            lo,
            hi,
        }
    }

    /// `2d (2r+1)^(d-1)`, the bond count of an unclipped ball.
    pub fn unclipped_bond_count(&self) -> usize {
        let d = self.dim();
        2 * d * (2 * self.radius as usize + 1).pow(d as u32 - 1)
    }
}

impl fmt::Display for Ball {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B_{}{}", self.radius, self.center)
    }
}

/// Axis-aligned box `[lo, hi]` (inclusive) with row-major indexing, the first
/// coordinate most significant. Empty when some `lo > hi`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct BoxRegion {
    dim: u8,
    lo: [i32; MAX_DIM],
    hi: [i32; MAX_DIM],
}

impl BoxRegion {
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn lo(&self) -> Site {
        Site {
            dim: self.dim,
            coords: self.lo,
        }
    }

    pub fn hi(&self) -> Site {
        Site {
            dim: self.dim,
            coords: self.hi,
        }
    }

    pub fn side(&self, axis: usize) -> usize {
        if self.hi[axis] < self.lo[axis] {
            0
        } else {
            (self.hi[axis] - self.lo[axis] + 1) as usize
        }
    }

    pub fn len(&self) -> usize {
        (0..self.dim()).map(|i| self.side(i)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, x: &Site) -> bool {
        x.dim == self.dim
            && (0..self.dim()).all(|i| self.lo[i] <= x.coords[i] && x.coords[i] <= self.hi[i])
    }

    pub fn index_of(&self, x: &Site) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let mut idx = 0usize;
        for i in 0..self.dim() {
            idx = idx * self.side(i) + (x.coords[i] - self.lo[i]) as usize;
        }
        Some(idx)
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        debug_assert!(idx < self.len());
        let mut coords = [0; MAX_DIM];
        for i in (0..self.dim()).rev() {
            let s = self.side(i);
            coords[i] = self.lo[i] + (idx % s) as i32;
            idx /= s;
        }
        Site {
            dim: self.dim,
            coords,
        }
    }

    pub fn intersect(&self, other: &BoxRegion) -> BoxRegion {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = *self;
        for i in 0..self.dim() {
            out.lo[i] = self.lo[i].max(other.lo[i]);
            out.hi[i] = self.hi[i].min(other.hi[i]);
        }
        out
    }

    /// Shrinks every side by `r` at both ends.
    pub fn shrink(&self, r: u32) -> BoxRegion {
        let mut out = *self;
        for i in 0..self.dim() {
            out.lo[i] += r as i32;
            out.hi[i] -= r as i32;
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(move |i| self.site_at(i))
    }
}

/// A ball, optionally clipped to an ambient ball. The site set is the box
/// `B_r(u) ∩ ambient`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(try_from = "LatticeBallRepr", into = "LatticeBallRepr")]
pub struct LatticeBall {
    ball: Ball,
    ambient: Option<Ball>,
    region: BoxRegion,
}

#[derive(Serialize, Deserialize)]
struct LatticeBallRepr {
    center: Site,
    radius: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ambient: Option<Ball>,
}

impl From<LatticeBall> for LatticeBallRepr {
    fn from(b: LatticeBall) -> Self {
        LatticeBallRepr {
            center: b.ball.center,
            radius: b.ball.radius,
            ambient: b.ambient,
        }
    }
}

impl TryFrom<LatticeBallRepr> for LatticeBall {
    type Error = Error;
    fn try_from(r: LatticeBallRepr) -> Result<LatticeBall> {
        LatticeBall::new(Ball::new(r.center, r.radius), r.ambient)
    }
}

impl LatticeBall {
    pub fn new(ball: Ball, ambient: Option<Ball>) -> Result<LatticeBall> {
        let mut region = ball.region();
        if let Some(a) = ambient {
            if a.dim() != ball.dim() {
                return Err(Error::DimensionMismatch {
                    left: ball.dim(),
                    right: a.dim(),
                });
            }
            if !a.contains(&ball.center) {
                return Err(Error::InvalidGeometry(format!(
                    "center of {ball} lies outside ambient {a}"
                )));
            }
            region = region.intersect(&a.region());
        }
        Ok(LatticeBall {
            ball,
            ambient,
            region,
        })
    }

    pub fn unclipped(ball: Ball) -> LatticeBall {
        LatticeBall {
            ball,
            ambient: None,
            region: ball.region(),
        }
    }

    /// `B_r(0)` in `Z^dim`.
    pub fn centered(dim: usize, radius: u32) -> LatticeBall {
        LatticeBall::unclipped(Ball::new(Site::origin(dim), radius))
    }

    pub fn ball(&self) -> Ball {
        self.ball
    }

    pub fn center(&self) -> Site {
        self.ball.center
    }

    pub fn radius(&self) -> u32 {
        self.ball.radius
    }

    pub fn dim(&self) -> usize {
        self.ball.dim()
    }

    pub fn ambient(&self) -> Option<Ball> {
        self.ambient
    }

    pub fn region(&self) -> &BoxRegion {
        &self.region
    }

    pub fn is_clipped(&self) -> bool {
        self.region.len() != self.ball.len()
    }

    pub fn len(&self) -> usize {
        self.region.len()
    }

    pub fn is_empty(&self) -> bool {
        self.region.is_empty()
    }

    pub fn contains(&self, x: &Site) -> bool {
        self.region.contains(x)
    }

    pub fn index_of(&self, x: &Site) -> Option<usize> {
        self.region.index_of(x)
    }

    pub fn site_at(&self, idx: usize) -> Site {
        self.region.site_at(idx)
    }

    pub fn sites(&self) -> Vec<Site> {
        self.region.iter().collect()
    }

    fn in_ambient(&self, x: &Site) -> bool {
        self.ambient.map_or(true, |a| a.contains(x))
    }

    /// Centers `v` with `B_r(v) ⊆` this (possibly clipped) ball.
    pub fn sub_ball_centers(&self, r: u32) -> BoxRegion {
        self.region.shrink(r)
    }

    /// Calls `f(x, y)` for each bond `x ∈ ∂⁻`, `y ∈ ∂⁺` in lexicographic
    /// order of `(x, y)`.
    fn for_each_bond(&self, mut f: impl FnMut(Site, Site)) {
        let u = self.ball.center;
        let r = self.ball.radius as i32;
        let d = self.dim();
        for x in self.region.iter() {
            if u.max_dist(&x) != r as u32 {
                continue;
            }
            // x - e_0 < x - e_1 < ... < x + e_1 < x + e_0
            for i in 0..d {
                if x.coords[i] - u.coords[i] == -r {
                    let y = x.shifted(i, -1);
                    if self.in_ambient(&y) {
                        f(x, y);
                    }
                }
            }
            for i in (0..d).rev() {
                if x.coords[i] - u.coords[i] == r {
                    let y = x.shifted(i, 1);
                    if self.in_ambient(&y) {
                        f(x, y);
                    }
                }
            }
        }
    }

    /// `|∂B|` by enumeration.
    pub fn boundary_size(&self) -> usize {
        let mut n = 0;
        self.for_each_bond(|_, _| n += 1);
        n
    }
}

impl fmt::Display for LatticeBall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.ambient {
            Some(a) if self.is_clipped() => write!(f, "{} ∩ {}", self.ball, a),
            _ => write!(f, "{}", self.ball),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundarySet {
    pub inner: Vec<Site>,
    pub outer: Vec<Site>,
    pub bonds: Vec<(Site, Site)>,
}

/// Sites of `B_L(center)`, clipped to `ambient`, in lexicographic order.
pub fn ball_sites(center: Site, radius: u32, ambient: Option<&Ball>) -> Result<Vec<Site>> {
    let lb = LatticeBall::new(Ball::new(center, radius), ambient.copied())?;
    Ok(lb.sites())
}

/// Inner boundary, outer boundary and boundary bonds of `ball` relative to its
/// ambient (the whole lattice when unclipped).
pub fn boundary(ball: &LatticeBall) -> BoundarySet {
    let u = ball.center();
    let r = ball.radius();
    let inner: Vec<Site> = ball
        .region()
        .iter()
        .filter(|x| u.max_dist(x) == r)
        .collect();
    let mut bonds = Vec::new();
    ball.for_each_bond(|x, y| bonds.push((x, y)));
    let mut outer: Vec<Site> = bonds.iter().map(|&(_, y)| y).collect();
    outer.sort();
    outer.dedup();
    BoundarySet {
        inner,
        outer,
        bonds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(c: &[i32]) -> Site {
        Site::new(c).unwrap()
    }

    #[test]
    fn ball_site_counts() {
        assert_eq!(
            ball_sites(Site::origin(1), 2, None).unwrap(),
            (-2..=2).map(|x| s(&[x])).collect::<Vec<_>>()
        );
        assert_eq!(ball_sites(Site::origin(2), 1, None).unwrap().len(), 9);
        assert_eq!(ball_sites(Site::origin(3), 2, None).unwrap().len(), 125);
    }

    #[test]
    fn center_outside_ambient_is_rejected() {
        let amb = Ball::new(Site::origin(1), 3);
        assert!(ball_sites(s(&[5]), 1, Some(&amb)).is_err());
    }

    #[test]
    fn clipped_ball_is_intersection() {
        let amb = Ball::new(Site::origin(2), 3);
        let sites = ball_sites(s(&[3, 0]), 2, Some(&amb)).unwrap();
        // x in [1,3], y in [-2,2]
        assert_eq!(sites.len(), 15);
        assert!(sites.iter().all(|x| amb.contains(x)));
    }

    #[test]
    fn boundary_examples() {
        let b = boundary(&LatticeBall::centered(1, 3));
        assert_eq!(b.inner, vec![s(&[-3]), s(&[3])]);
        assert_eq!(b.outer, vec![s(&[-4]), s(&[4])]);
        assert_eq!(b.bonds.len(), 2);

        let b = boundary(&LatticeBall::centered(2, 1));
        assert_eq!(b.inner.len(), 8);
        assert_eq!(b.bonds.len(), 12);
        assert_eq!(b.outer.len(), 12);

        let whole = Ball::new(Site::origin(2), 4);
        let b = boundary(&LatticeBall::new(whole, Some(whole)).unwrap());
        assert!(b.outer.is_empty() && b.bonds.is_empty());
        assert_eq!(b.inner.len(), 32);
    }

    #[test]
    fn clipped_boundary_keeps_only_ambient_bonds() {
        let amb = Ball::new(Site::origin(1), 5);
        let lb = LatticeBall::new(Ball::new(s(&[4]), 2), Some(amb)).unwrap();
        let b = boundary(&lb);
        assert_eq!(b.inner, vec![s(&[2])]);
        assert_eq!(b.bonds, vec![(s(&[2]), s(&[1]))]);
        assert_eq!(lb.boundary_size(), 1);
    }

    #[test]
    fn distances() {
        let x = s(&[0, 0]);
        let y = s(&[3, -2]);
        assert_eq!(dist_max(&x, &y).unwrap(), 3);
        assert_eq!(dist_graph(&x, &y).unwrap(), 5);
        assert_eq!(dist_max(&x, &x).unwrap(), 0);
        assert_eq!(dist_graph(&s(&[0]), &s(&[7])).unwrap(), 7);
        assert!(matches!(
            dist_max(&s(&[0]), &x),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn site_serializes_as_array() {
        let j = serde_json::to_string(&s(&[1, -2])).unwrap();
        assert_eq!(j, "[1,-2]");
        let back: Site = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s(&[1, -2]));
    }

    #[test]
    fn bond_order_is_lexicographic() {
        let b = boundary(&LatticeBall::centered(2, 2));
        let mut sorted = b.bonds.clone();
        sorted.sort();
        assert_eq!(b.bonds, sorted);
    }
}
