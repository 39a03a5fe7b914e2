//! `(ℓ,q)`-subharmonic functions on lattice balls and the descent bounds they
//! satisfy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Ball, LatticeBall, Site};
use crate::predicates::SampleWorkspace;
use crate::spectral::{green_column, RESONANCE_TOL};

const REL_TOL: f64 = 1e-9;

/// A nonnegative function on the sites of a (possibly clipped) ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub domain: LatticeBall,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(domain: LatticeBall, values: Vec<f64>) -> Result<GridFunction> {
        if values.len() != domain.len() {
            return Err(Error::InvalidParameter(format!(
                "{} values for {} sites",
                values.len(),
                domain.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "function value {v} is not a nonnegative number"
            )));
        }
        Ok(GridFunction { domain, values })
    }

    pub fn from_fn(domain: LatticeBall, f: impl Fn(&Site) -> f64) -> Result<GridFunction> {
        let values = domain.region().iter().map(|x| f(&x)).collect();
        GridFunction::new(domain, values)
    }

    pub fn get(&self, x: &Site) -> Option<f64> {
        self.domain.index_of(x).map(|i| self.values[i])
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Max over `‖y - v‖ ≤ r` within the domain.
    pub fn local_max(&self, v: &Site, r: u32) -> f64 {
        let reg = Ball::new(*v, r).region().intersect(self.domain.region());
        reg.iter()
            .map(|y| self.get(&y).unwrap_or(0.0))
            .fold(0.0, f64::max)
    }

    /// Max over `B_r(u)` intersected with the domain.
    pub fn max_on(&self, u: &Site, r: u32) -> f64 {
        self.local_max(u, r)
    }
}

/// A function built to be `(ℓ,q)`-subharmonic on `region`, with its global max.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubharmonicWitness {
    pub region: LatticeBall,
    pub l: u32,
    pub q: f64,
    pub f: GridFunction,
    pub global_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubharmonicCheck {
    pub holds: bool,
    pub first_violation: Option<Site>,
    pub centers_checked: usize,
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "q = {q} must lie in (0, 1)"
        )));
    }
    Ok(())
}

/// `B_{L+1}(u)` clipped to the region's ambient ball.
fn enlargement(region: &LatticeBall) -> Result<LatticeBall> {
    LatticeBall::new(
        Ball::new(region.center(), region.radius() + 1),
        region.ambient(),
    )
}

/// Checks `f(v) ≤ q · max_{‖y-v‖ ≤ ℓ+1} f(y)` at every `v` with
/// `B_ℓ(v) ⊆ region`, in lexicographic order of `v`.
pub fn is_lq_subharmonic(
    f: &GridFunction,
    region: &LatticeBall,
    l: u32,
    q: f64,
) -> Result<SubharmonicCheck> {
    check_q(q)?;
    if l > region.radius() {
        return Err(Error::InvalidParameter(format!(
            "ℓ = {l} exceeds the radius {}",
            region.radius()
        )));
    }
    let need = enlargement(region)?;
    let dom = f.domain.region();
    let r = need.region();
    if !(dom.contains(&r.lo()) && dom.contains(&r.hi())) {
        return Err(Error::Precondition(format!("f must be defined on {need}")));
    }
    let mut checked = 0;
    for v in region.sub_ball_centers(l).iter() {
        checked += 1;
        let fv = f.get(&v).expect("center lies in the domain");
        let m = f.local_max(&v, l + 1);
        if fv > q * m {
            return Ok(SubharmonicCheck {
                holds: false,
                first_violation: Some(v),
                centers_checked: checked,
            });
        }
    }
    Ok(SubharmonicCheck {
        holds: true,
        first_violation: None,
        centers_checked: checked,
    })
}

/// `q^{⌊(L+1)/(ℓ+1)⌋} M`.
pub fn radial_descent_bound(l_big: u32, l: u32, q: f64, m: f64) -> Result<f64> {
    check_q(q)?;
    if l > l_big {
        return Err(Error::InvalidParameter(format!(
            "ℓ = {l} exceeds L = {l_big}"
        )));
    }
    Ok(q.powi(((l_big + 1) / (l + 1)) as i32) * m)
}

/// `q^{⌊(r'+1)/(ℓ+1)⌋ + ⌊(r''+1)/(ℓ+1)⌋} M`.
pub fn bi_descent_bound(r1: u32, r2: u32, l: u32, q: f64, m: f64) -> Result<f64> {
    check_q(q)?;
    Ok(q.powi(((r1 + 1) / (l + 1) + (r2 + 1) / (l + 1)) as i32) * m)
}

/// `max f` on `B_{n(ℓ+1)}(u)` for `n = 0..=⌊(L+1)/(ℓ+1)⌋`; for a subharmonic `f`
/// each entry is at most `q` times the next.
pub fn descent_profile(f: &GridFunction, region: &LatticeBall, l: u32) -> Vec<f64> {
    let steps = (region.radius() + 1) / (l + 1);
    (0..=steps)
        .map(|n| f.max_on(&region.center(), n * (l + 1)))
        .collect()
}

/// Random values in `[0, 1)` off the centers, then inward propagation
/// `f(v) = q · max_{‖y-v‖≤ℓ+1} f(y) · (1 - slack·U)` in order of decreasing
/// distance from the center.
pub fn random_witness<R: Rng + ?Sized>(
    rng: &mut R,
    region: &LatticeBall,
    l: u32,
    q: f64,
    slack: f64,
) -> Result<SubharmonicWitness> {
    check_q(q)?;
    let dom = enlargement(region)?;
    let centers = region.sub_ball_centers(l);
    let mut values: Vec<f64> = dom
        .region()
        .iter()
        .map(|x| {
            if centers.contains(&x) {
                0.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    let mut order: Vec<Site> = centers.iter().collect();
    let u = region.center();
    order.sort_by_key(|v| std::cmp::Reverse(u.max_dist(v)));
    let mut f = GridFunction {
        domain: dom,
        values: Vec::new(),
    };
    for v in order {
        f.values = std::mem::take(&mut values);
        let m = f.local_max(&v, l + 1);
        values = std::mem::take(&mut f.values);
        let i = dom.index_of(&v).expect("center lies in the domain");
        values[i] = q * m * (1.0 - slack * rng.random::<f64>());
    }
    let f = GridFunction::new(dom, values)?;
    let global_max = f.max();
    Ok(SubharmonicWitness {
        region: *region,
        l,
        q,
        f,
        global_max,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CondPart {
    Eigenfunction,
    Green,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondViolation {
    pub part: CondPart,
    pub eigen_index: Option<usize>,
    pub y: Option<Site>,
    pub v: Site,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CondSubhReport {
    /// `e^{-γ(m,ℓ)ℓ + 2ℓ^β}`, the contraction the NS hypothesis delivers.
    pub q_asserted: f64,
    /// `e^{-γ(m,ℓ)ℓ}`, tallied but not asserted.
    pub q_stated: f64,
    pub eigen_checked: usize,
    /// Eigenpairs whose inner balls are not all NS at `E_j`.
    pub eigen_skipped: usize,
    pub green_checked: usize,
    pub green_skipped: Option<String>,
    pub violations: Vec<CondViolation>,
    /// Checked functions that fail with the stated `q`.
    pub stated_q_failures: usize,
}

impl CondSubhReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

fn first_failure(
    vals: &[f64],
    outer: &LatticeBall,
    centers: &[Site],
    l: u32,
    q: f64,
    abs_tol: f64,
) -> Option<(Site, f64, f64)> {
    for v in centers {
        let fv = vals[outer.index_of(v).expect("center in outer ball")];
        let reg = Ball::new(*v, l + 1).region().intersect(outer.region());
        let m = reg
            .iter()
            .map(|y| vals[outer.index_of(&y).expect("site in outer ball")])
            .fold(0.0, f64::max);
        if fv > q * m * (1.0 + REL_TOL) + abs_tol {
            return Some((*v, fv, q * m));
        }
    }
    None
}

/// Checks that `|ψ_j|` (for each eigenpair whose inner balls `B_ℓ(v)`,
/// `v ∈ region`, are all `(E_j,m)`-NS) and `|G(·,y;E)|` (if those balls are
/// `(E,m)`-NS and `outer` is E-NR, for `y` outside `B_{R+ℓ}(x')`) are
/// `(ℓ,q)`-subharmonic on `region = B_R(x')`.
pub fn check_conditional_subharmonicity(
    ws: &mut SampleWorkspace,
    outer: &LatticeBall,
    region: &Ball,
    l: u32,
    e: f64,
) -> Result<CondSubhReport> {
    let params = ws.params().clone();
    let reach = Ball::new(region.center, region.radius + l);
    let inside = outer.region();
    let rr = reach.region();
    if !(inside.contains(&rr.lo()) && inside.contains(&rr.hi())) {
        return Err(Error::Precondition(format!(
            "{reach} must lie inside {outer}"
        )));
    }
    let q_asserted = (-params.gamma(l) * l as f64 + 2.0 * params.l_beta(l)).exp();
    let q_stated = (-params.gamma(l) * l as f64).exp();
    let centers: Vec<Site> = region.region().iter().collect();
    let inner: Vec<LatticeBall> = centers
        .iter()
        .map(|v| LatticeBall::unclipped(Ball::new(*v, l)))
        .collect();
    let profiles = inner
        .iter()
        .map(|b| ws.profile(b))
        .collect::<Result<Vec<_>>>()?;
    let all_ns = |x: f64| profiles.iter().all(|p| !p.is_singular(x));
    let sd = ws.spectral(outer)?;
    let mut report = CondSubhReport {
        q_asserted,
        q_stated,
        ..Default::default()
    };

    for j in 0..sd.len() {
        let ej = sd.eigenvalues()[j];
        if !all_ns(ej) {
            report.eigen_skipped += 1;
            continue;
        }
        report.eigen_checked += 1;
        let vals: Vec<f64> = sd.eigenvector(j).iter().map(|a| a.abs()).collect();
        let abs_tol = 1e-14;
        if let Some((v, lhs, rhs)) = first_failure(&vals, outer, &centers, l, q_asserted, abs_tol) {
            report.violations.push(CondViolation {
                part: CondPart::Eigenfunction,
                eigen_index: Some(j),
                y: None,
                v,
                lhs,
                rhs,
            });
        }
        if first_failure(&vals, outer, &centers, l, q_stated, abs_tol).is_some() {
            report.stated_q_failures += 1;
        }
    }

    let (gap, _) = sd.nearest(e);
    if gap <= RESONANCE_TOL || gap < params.resonance_threshold(outer.radius()) {
        report.green_skipped = Some("outer ball is E-resonant".into());
    } else if !all_ns(e) {
        report.green_skipped = Some("an inner ball is (E,m)-singular".into());
    } else {
        let abs_tol = 1e-14 / gap;
        for (k, y) in outer.sites().into_iter().enumerate() {
            if y.max_dist(&region.center) <= reach.radius {
                continue;
            }
            report.green_checked += 1;
            let vals: Vec<f64> = green_column(&sd, e, k).iter().map(|g| g.abs()).collect();
            if let Some((v, lhs, rhs)) =
                first_failure(&vals, outer, &centers, l, q_asserted, abs_tol)
            {
                report.violations.push(CondViolation {
                    part: CondPart::Green,
                    eigen_index: None,
                    y: Some(y),
                    v,
                    lhs,
                    rhs,
                });
            }
            if first_failure(&vals, outer, &centers, l, q_stated, abs_tol).is_some() {
                report.stated_q_failures += 1;
            }
        }
    }
    Ok(report)
}
