//! Geometric resolvent inequality checks.
//!
//! For `A = B_ℓ(u) ∩ B`, `x ∈ A` and `y ∈ B \ A`, the resolvent identity gives
//! `|G_B(x,y)| ≤ |∂A| · max_{w ∈ ∂⁻A} |G_A(x,w)| · max_{‖v-u‖ ≤ ℓ+1} |G_B(v,y)|`
//! and, for an eigenpair `(E_j, ψ_j)` of `H_B`,
//! `|ψ_j(x)| ≤ |∂A| · max_{w ∈ ∂⁻A} |G_A(x,w;E_j)| · max_{‖v-u‖ ≤ ℓ+1} |ψ_j(v)|`.

use serde::{Deserialize, Serialize};

use super::{eig, green_column, SpectralData, RESONANCE_TOL};
use crate::error::{Error, Result};
use crate::lattice::{Ball, LatticeBall, Site};
use crate::operator::FiniteHamiltonian;

const REL_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GriForm {
    Resolvent,
    Eigenfunction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GriViolation {
    pub form: GriForm,
    pub x: Site,
    pub y: Option<Site>,
    pub eigen_index: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GriReport {
    pub skipped: Option<String>,
    pub boundary_size: usize,
    pub resolvent_checked: usize,
    pub eigen_checked: usize,
    /// Eigenpairs whose energy hits the inner spectrum.
    pub eigen_skipped: usize,
    pub violations: Vec<GriViolation>,
    /// Largest lhs/rhs ratio seen among checked inequalities with rhs > 0.
    pub worst_ratio: f64,
}

impl GriReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

struct Setup {
    inner: LatticeBall,
    inner_idx: Vec<usize>,
    exterior_idx: Vec<usize>,
    inner_boundary: Vec<usize>,
    collar: Vec<usize>,
    inner_sd: SpectralData,
    boundary_size: usize,
}

fn setup(outer_h: &FiniteHamiltonian, inner: &Ball) -> Result<std::result::Result<Setup, String>> {
    let outer_ball = outer_h.ball;
    if outer_ball.is_clipped() {
        return Err(Error::InvalidGeometry(
            "the outer ball must be unclipped".into(),
        ));
    }
    let a = LatticeBall::new(*inner, Some(outer_ball.ball()))?;
    if a.len() == outer_ball.len() {
        return Ok(Err("inner ball covers the outer ball".into()));
    }
    let u = inner.center;
    let l = inner.radius;
    let mut inner_idx = Vec::new();
    let mut exterior_idx = Vec::new();
    let mut inner_boundary = Vec::new();
    let mut collar = Vec::new();
    for (i, x) in outer_ball.region().iter().enumerate() {
        let dist = u.max_dist(&x);
        if a.contains(&x) {
            inner_idx.push(i);
        } else {
            exterior_idx.push(i);
        }
        if dist <= l + 1 {
            collar.push(i);
        }
        if dist == l {
            inner_boundary.push(a.index_of(&x).expect("inner boundary site lies in A"));
        }
    }
    let inner_sd = eig(&outer_h.restrict(&a)?)?;
    Ok(Ok(Setup {
        inner: a,
        inner_idx,
        exterior_idx,
        inner_boundary,
        collar,
        inner_sd,
        boundary_size: a.boundary_size(),
    }))
}

fn max_abs_over(col: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| col[i].abs()).fold(0.0, f64::max)
}

fn run(
    outer_h: &FiniteHamiltonian,
    outer: &SpectralData,
    inner: &Ball,
    e: f64,
    pair: Option<(Site, Site)>,
) -> Result<GriReport> {
    let s = match setup(outer_h, inner)? {
        Ok(s) => s,
        Err(reason) => {
            return Ok(GriReport {
                skipped: Some(reason),
                ..Default::default()
            })
        }
    };
    let mut report = GriReport {
        boundary_size: s.boundary_size,
        ..Default::default()
    };
    if s.boundary_size == 0 {
        report.skipped = Some("inner ball has no boundary bonds inside the outer ball".into());
        return Ok(report);
    }
    let c = s.boundary_size as f64;

    let (xs, ys): (Vec<(usize, usize)>, Vec<usize>) = match pair {
        Some((x, y)) => {
            let xi = s
                .inner
                .index_of(&x)
                .ok_or_else(|| Error::InvalidGeometry(format!("{x} is not in the inner ball")))?;
            let yo = outer.index_of(&y)?;
            if s.inner.contains(&y) {
                return Err(Error::InvalidGeometry(format!(
                    "{y} lies in the inner ball"
                )));
            }
            (vec![(xi, outer.index_of(&x)?)], vec![yo])
        }
        None => (
            s.inner_idx
                .iter()
                .enumerate()
                .map(|(ai, &oi)| (ai, oi))
                .collect(),
            s.exterior_idx.clone(),
        ),
    };

    let outer_gap = outer.nearest(e).0;
    let inner_gap = if s.inner_sd.is_empty() {
        f64::INFINITY
    } else {
        s.inner_sd.nearest(e).0
    };
    if outer_gap <= RESONANCE_TOL || inner_gap <= RESONANCE_TOL {
        report.skipped = Some(format!("energy {e} hits the spectrum"));
    } else {
        let abs_tol = 1e-12 / outer_gap.min(inner_gap);
        // max over the collar of |G_B(v, y)| for each y
        let collar_max: Vec<f64> = ys
            .iter()
            .map(|&y| max_abs_over(&green_column(outer, e, y), &s.collar))
            .collect();
        for &(ai, oi) in &xs {
            let ga = green_column(&s.inner_sd, e, ai);
            let ga_max = max_abs_over(&ga, &s.inner_boundary);
            let gb_x = green_column(outer, e, oi);
            for (k, &y) in ys.iter().enumerate() {
                let lhs = gb_x[y].abs();
                let rhs = c * ga_max * collar_max[k];
                report.resolvent_checked += 1;
                if rhs > 0.0 {
                    report.worst_ratio = report.worst_ratio.max(lhs / rhs);
                }
                if lhs > rhs * (1.0 + REL_TOL) + abs_tol {
                    report.violations.push(GriViolation {
                        form: GriForm::Resolvent,
                        x: s.inner.site_at(ai),
                        y: Some(outer.ball().site_at(y)),
                        eigen_index: None,
                        lhs,
                        rhs,
                    });
                }
            }
        }
    }

    for j in 0..outer.len() {
        let ej = outer.eigenvalues()[j];
        let gap = if s.inner_sd.is_empty() {
            f64::INFINITY
        } else {
            s.inner_sd.nearest(ej).0
        };
        if gap <= RESONANCE_TOL {
            report.eigen_skipped += 1;
            continue;
        }
        let abs_tol = 1e-12 / gap;
        let psi_collar = s
            .collar
            .iter()
            .map(|&i| outer.amp(i, j).abs())
            .fold(0.0, f64::max);
        for &(ai, oi) in &xs {
            let ga = green_column(&s.inner_sd, ej, ai);
            let lhs = outer.amp(oi, j).abs();
            let rhs = c * max_abs_over(&ga, &s.inner_boundary) * psi_collar;
            report.eigen_checked += 1;
            if rhs > 0.0 {
                report.worst_ratio = report.worst_ratio.max(lhs / rhs);
            }
            if lhs > rhs * (1.0 + REL_TOL) + abs_tol {
                report.violations.push(GriViolation {
                    form: GriForm::Eigenfunction,
                    x: s.inner.site_at(ai),
                    y: None,
                    eigen_index: Some(j),
                    lhs,
                    rhs,
                });
            }
        }
    }
    Ok(report)
}

/// Checks both forms for every `x ∈ B_ℓ(u) ∩ B` and every `y ∈ B \ B_ℓ(u)`.
pub fn verify_gri(
    outer_h: &FiniteHamiltonian,
    outer: &SpectralData,
    inner: &Ball,
    e: f64,
) -> Result<GriReport> {
    run(outer_h, outer, inner, e, None)
}

/// Checks both forms for one pair `x ∈ B_ℓ(u)`, `y ∉ B_ℓ(u)`.
pub fn verify_gri_pair(
    outer_h: &FiniteHamiltonian,
    outer: &SpectralData,
    inner: &Ball,
    e: f64,
    x: &Site,
    y: &Site,
) -> Result<GriReport> {
    run(outer_h, outer, inner, e, Some((*x, *y)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GriFuzzOutcome {
    pub sample_index: u64,
    pub inner: Ball,
    pub energies: Vec<f64>,
    pub reports: Vec<GriReport>,
}

impl GriFuzzOutcome {
    pub fn violations(&self) -> usize {
        self.reports.iter().map(|r| r.violations.len()).sum()
    }
}

/// Energies between consecutive points of `σ(H_B) ∪ σ(H_A)` (evenly picked)
/// plus one below and one above both spectra.
pub fn spectra_avoiding_energies(outer: &[f64], inner: &[f64], count: usize) -> Vec<f64> {
    let mut all: Vec<f64> = outer.iter().chain(inner).copied().collect();
    all.sort_by(f64::total_cmp);
    let mids: Vec<f64> = all
        .windows(2)
        .filter(|w| w[1] - w[0] > 1e-6)
        .map(|w| 0.5 * (w[0] + w[1]))
        .collect();
    let mut out = Vec::new();
    if let (Some(lo), Some(hi)) = (all.first(), all.last()) {
        out.push(lo - 0.5);
        out.push(hi + 0.5);
    }
    if !mids.is_empty() && count > 0 {
        for k in 0..count {
            out.push(mids[k * mids.len() / count]);
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// One random instance: a field on `B_L(0)`, a random inner center in the
/// ball and `verify_gri` at spectra-avoiding energies.
pub fn gri_fuzz_instance(
    model: &crate::operator::Model,
    generator: &crate::disorder::GeneratorSpec,
    dim: usize,
    radius: u32,
    inner_radius: u32,
    energies: usize,
    index: u64,
    seed: u64,
) -> Result<GriFuzzOutcome> {
    use rand::{Rng, SeedableRng};
    let outer = LatticeBall::centered(dim, radius);
    let field = crate::disorder::sample(&outer, generator, index, seed)?;
    let h = model.assemble(&outer, &field)?;
    let sd = eig(&h)?;
    let mut rng =
        rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(0x6772_69);
    let r = radius as i32;
    let coords: Vec<i32> = (0..dim).map(|_| rng.random_range(-r..=r)).collect();
    let inner = Ball::new(Site::new(&coords)?, inner_radius);
    let a = LatticeBall::new(inner, Some(outer.ball()))?;
    let inner_eigs = super::eigenvalues(&h.restrict(&a)?)?;
    let es = spectra_avoiding_energies(sd.eigenvalues(), &inner_eigs, energies);
    let reports = es
        .iter()
        .map(|&e| verify_gri(&h, &sd, &inner, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(GriFuzzOutcome {
        sample_index: index,
        inner,
        energies: es,
        reports,
    })
}
