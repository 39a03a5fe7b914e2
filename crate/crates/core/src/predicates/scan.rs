use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::grid::{EnergyGrid, PrSet};
use super::workspace::{SampleWorkspace, SingularityProfile};
use super::{is_e_resonant, is_resonance_hit, LocWitness, PairWitness, ScaleParams};
use crate::error::{Error, Result};
use crate::lattice::{Ball, LatticeBall, Site};
use crate::spectral::Interval;

/// Uniform grid points allowed before coarsening.
pub const MAX_UNIFORM_POINTS: usize = 1 << 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TunnelingVariant {
    /// Two nloc sub-balls at distance `> 2ℓ`.
    #[default]
    Disjoint,
    /// Two distinct nloc sub-balls at distance `≤ 3ℓ`.
    #[serde(rename = "within_3l")]
    Within3l,
}

impl TunnelingVariant {
    pub fn admits(&self, dist: u32, l: u32) -> bool {
        match self {
            TunnelingVariant::Disjoint => dist > 2 * l,
            TunnelingVariant::Within3l => dist > 0 && dist <= 3 * l,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonantBall {
    pub ball: Ball,
    pub eigenvalue: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnrVerdict {
    pub cnr: bool,
    pub witness: Option<ResonantBall>,
    pub sub_balls_checked: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunnelingVerdict {
    pub tunneling: bool,
    pub witness: Option<(Site, Site)>,
    pub nloc_count: usize,
    pub sub_balls: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiWitness {
    pub energy: f64,
    pub first: Site,
    pub second: Site,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiTunnelingVerdict {
    pub tunneling: bool,
    pub witness: Option<MiWitness>,
    pub grid_points: usize,
    pub grid_limited: bool,
}

/// Default radius set `[⌈L^{1/α}⌉, L]`.
pub fn cnr_radii(params: &ScaleParams, l: u32) -> Vec<u32> {
    (params.cnr_min_radius(l).min(l)..=l).collect()
}

/// Sub-balls of `ball` with the given radius; radius `L` means the ball itself.
fn subs_of(ws: &SampleWorkspace, ball: &LatticeBall, r: u32) -> Vec<LatticeBall> {
    if r == ball.radius() {
        vec![*ball]
    } else {
        ws.sub_balls(ball, r)
    }
}

fn checked_radii(
    ball: &LatticeBall,
    params: &ScaleParams,
    radius_set: Option<&[u32]>,
) -> Result<Vec<u32>> {
    let radii = match radius_set {
        Some(r) => r.to_vec(),
        None => cnr_radii(params, ball.radius()),
    };
    if let Some(bad) = radii.iter().find(|&&r| r > ball.radius()) {
        return Err(Error::InvalidParameter(format!(
            "radius {bad} exceeds {}",
            ball.radius()
        )));
    }
    Ok(radii)
}

fn count_subs(ball: &LatticeBall, radii: &[u32]) -> usize {
    radii
        .iter()
        .map(|&r| {
            if r == ball.radius() {
                1
            } else {
                ball.sub_ball_centers(r).len()
            }
        })
        .sum()
}

pub fn is_e_cnr(
    ws: &mut SampleWorkspace,
    ball: &LatticeBall,
    e: f64,
    radius_set: Option<&[u32]>,
) -> Result<CnrVerdict> {
    let radii = checked_radii(ball, ws.params(), radius_set)?;
    ws.guard(count_subs(ball, &radii))?;
    let mut checked = 0;
    for r in radii {
        let t = ws.params().resonance_threshold(r);
        for sub in subs_of(ws, ball, r) {
            checked += 1;
            let ev = ws.eigenvalues(&sub)?;
            if ev.is_empty() {
                continue;
            }
            let (gap, j) = crate::spectral::nearest_in(&ev, e);
            if gap < t {
                return Ok(CnrVerdict {
                    cnr: false,
                    witness: Some(ResonantBall {
                        ball: sub.ball(),
                        eigenvalue: ev[j],
                        gap,
                    }),
                    sub_balls_checked: checked,
                });
            }
        }
    }
    Ok(CnrVerdict {
        cnr: true,
        witness: None,
        sub_balls_checked: checked,
    })
}

/// Energies at which `ball` is partially resonant, tagged by index into the
/// returned sub-ball list.
pub fn pr_set(
    ws: &mut SampleWorkspace,
    ball: &LatticeBall,
    radius_set: Option<&[u32]>,
) -> Result<(PrSet, Vec<LatticeBall>)> {
    let radii = checked_radii(ball, ws.params(), radius_set)?;
    ws.guard(count_subs(ball, &radii))?;
    let mut set = PrSet::new();
    let mut balls = Vec::new();
    for r in radii {
        let t = ws.params().resonance_threshold(r);
        for sub in subs_of(ws, ball, r) {
            let ev = ws.eigenvalues(&sub)?;
            for &ej in ev.iter() {
                set.push(ej, t, balls.len());
            }
            balls.push(sub);
        }
    }
    set.finish();
    Ok((set, balls))
}

pub fn is_m_tunneling(
    ws: &mut SampleWorkspace,
    ball: &LatticeBall,
    l: u32,
    variant: TunnelingVariant,
) -> Result<TunnelingVerdict> {
    if l > ball.radius() {
        return Err(Error::InvalidParameter(format!(
            "sub-ball radius {l} exceeds {}",
            ball.radius()
        )));
    }
    let subs = subs_of(ws, ball, l);
    ws.guard(subs.len())?;
    let mut nloc = Vec::new();
    for sub in &subs {
        if !ws.localization(sub)?.localized {
            nloc.push(sub.center());
        }
    }
    let mut witness = None;
    'outer: for i in 0..nloc.len() {
        for j in i + 1..nloc.len() {
            if variant.admits(nloc[i].max_dist(&nloc[j]), l) {
                witness = Some((nloc[i], nloc[j]));
                break 'outer;
            }
        }
    }
    Ok(TunnelingVerdict {
        tunneling: witness.is_some(),
        witness,
        nloc_count: nloc.len(),
        sub_balls: subs.len(),
    })
}

/// All radius-`ℓ` sub-balls of a ball with their singularity profiles.
pub struct SingularFamily {
    radius: u32,
    balls: Vec<LatticeBall>,
    profiles: Vec<Rc<SingularityProfile>>,
}

impl SingularFamily {
    pub fn new(ws: &mut SampleWorkspace, ball: &LatticeBall, l: u32) -> Result<SingularFamily> {
        if l > ball.radius() {
            return Err(Error::InvalidParameter(format!(
                "sub-ball radius {l} exceeds {}",
                ball.radius()
            )));
        }
        let balls = subs_of(ws, ball, l);
        ws.guard(balls.len())?;
        let profiles = balls
            .iter()
            .map(|b| ws.profile(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(SingularFamily {
            radius: l,
            balls,
            profiles,
        })
    }

    /// A family of given balls of one radius.
    pub fn from_balls(ws: &mut SampleWorkspace, balls: Vec<LatticeBall>) -> Result<SingularFamily> {
        let radius = balls.first().map_or(0, |b| b.radius());
        if balls.iter().any(|b| b.radius() != radius) {
            return Err(Error::InvalidParameter(
                "family balls must share one radius".into(),
            ));
        }
        let profiles = balls
            .iter()
            .map(|b| ws.profile(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(SingularFamily {
            radius,
            balls,
            profiles,
        })
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn balls(&self) -> &[LatticeBall] {
        &self.balls
    }

    pub fn profiles(&self) -> &[Rc<SingularityProfile>] {
        &self.profiles
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    pub fn spectra(&self) -> Vec<&[f64]> {
        self.profiles
            .iter()
            .map(|p| p.spectral().eigenvalues())
            .collect()
    }

    pub fn max_window(&self) -> f64 {
        self.profiles.iter().map(|p| p.window()).fold(0.0, f64::max)
    }

    pub fn singular_at(&self, e: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.profiles[i].is_singular(e))
            .collect()
    }

    /// Two members at distance `> 2ℓ`: the extreme centers along some axis.
    pub fn disjoint_pair(&self, members: &[usize]) -> Option<(usize, usize)> {
        let first = *members.first()?;
        let dim = self.balls[first].dim();
        for axis in 0..dim {
            let key = |&i: &usize| self.balls[i].center().coord(axis);
            let lo = *members.iter().min_by_key(|i| key(i))?;
            let hi = *members.iter().max_by_key(|i| key(i))?;
            if key(&hi) - key(&lo) > 2 * self.radius as i32 {
                return Some((lo.min(hi), lo.max(hi)));
            }
        }
        None
    }

    pub fn pair_at(&self, e: f64) -> Option<(usize, usize)> {
        self.disjoint_pair(&self.singular_at(e))
    }

    /// `(grid index, members)` for grid points where at least two members
    /// could be singular and are far enough apart to form a pair.
    fn pair_candidates(&self, grid: &[f64]) -> Vec<(usize, Vec<usize>)> {
        let mut events: Vec<(usize, usize)> = Vec::new();
        for (b, p) in self.profiles.iter().enumerate() {
            events.extend(p.candidates(grid).into_iter().map(|i| (i, b)));
        }
        events.sort_unstable();
        let mut out = Vec::new();
        let mut k = 0;
        while k < events.len() {
            let idx = events[k].0;
            let mut members = Vec::new();
            while k < events.len() && events[k].0 == idx {
                members.push(events[k].1);
                k += 1;
            }
            if members.len() >= 2 && self.disjoint_pair(&members).is_some() {
                out.push((idx, members));
            }
        }
        out
    }

    /// Every grid index with a disjoint singular pair.
    pub fn pair_indices(&self, grid: &[f64]) -> Vec<(usize, (usize, usize))> {
        self.pair_candidates(grid)
            .into_iter()
            .filter_map(|(idx, members)| {
                let s: Vec<usize> = members
                    .into_iter()
                    .filter(|&b| self.profiles[b].is_singular(grid[idx]))
                    .collect();
                self.disjoint_pair(&s).map(|p| (idx, p))
            })
            .collect()
    }

    pub fn first_pair(&self, grid: &[f64]) -> Option<(usize, (usize, usize))> {
        self.pair_candidates(grid)
            .into_iter()
            .find_map(|(idx, members)| {
                let s: Vec<usize> = members
                    .into_iter()
                    .filter(|&b| self.profiles[b].is_singular(grid[idx]))
                    .collect();
                self.disjoint_pair(&s).map(|p| (idx, p))
            })
    }
}

/// Grid over the hull of `spectra` widened by `min(max_window, max_extension)`
/// (at least `2t`), with a lattice of step `t/2`. Flagged as limited when the
/// singular windows reach past the widening.
pub fn hull_grid(
    spectra: &[&[f64]],
    max_window: f64,
    t: f64,
    extra: &[f64],
    max_extension: f64,
    max_uniform: usize,
) -> Result<EnergyGrid> {
    let lo = spectra
        .iter()
        .flat_map(|s| s.first())
        .fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = spectra
        .iter()
        .flat_map(|s| s.last())
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !(lo <= hi) {
        return Err(Error::InvalidParameter(
            "no spectra to build an energy grid from".into(),
        ));
    }
    let ext = max_window.min(max_extension).max(2.0 * t);
    let mut grid = EnergyGrid::build(
        spectra,
        Interval::new(lo - ext, hi + ext),
        t / 2.0,
        extra,
        max_uniform,
    )?;
    if max_window > max_extension {
        grid.mark_limited();
    }
    Ok(grid)
}

/// First energy (on a hull grid) at which two disjoint members are singular.
pub fn first_singular_pair(
    ws: &SampleWorkspace,
    family: &SingularFamily,
) -> Result<(Option<MiWitness>, bool)> {
    let t = ws.params().resonance_threshold(family.radius());
    let grid = hull_grid(
        &family.spectra(),
        family.max_window(),
        t,
        &[],
        1.0,
        MAX_UNIFORM_POINTS,
    )?;
    let w = family
        .first_pair(grid.points())
        .map(|(idx, (a, b))| MiWitness {
            energy: grid.points()[idx],
            first: family.balls[a].center(),
            second: family.balls[b].center(),
        });
    Ok((w, grid.grid_limited()))
}

/// Searches the grid (by default: family eigenvalues in `I`, their midpoints
/// and a lattice of step `e^{-ℓ^β}/2`) for two disjoint singular sub-balls.
pub fn is_mi_tunneling(
    ws: &mut SampleWorkspace,
    ball: &LatticeBall,
    l: u32,
    interval: Interval,
    grid: Option<&EnergyGrid>,
) -> Result<MiTunnelingVerdict> {
    let family = SingularFamily::new(ws, ball, l)?;
    let built;
    let grid = match grid {
        Some(g) => g,
        None => {
            let step = ws.params().resonance_threshold(l) / 2.0;
            built = EnergyGrid::build(&family.spectra(), interval, step, &[], MAX_UNIFORM_POINTS)?;
            &built
        }
    };
    if grid.is_empty() {
        return Err(Error::InvalidParameter("energy grid is empty".into()));
    }
    let pts: Vec<f64> = grid
        .points()
        .iter()
        .copied()
        .filter(|&e| interval.contains(e))
        .collect();
    let witness = family.first_pair(&pts).map(|(idx, (a, b))| MiWitness {
        energy: pts[idx],
        first: family.balls[a].center(),
        second: family.balls[b].center(),
    });
    Ok(MiTunnelingVerdict {
        tunneling: witness.is_some(),
        witness,
        grid_points: pts.len(),
        grid_limited: grid.grid_limited(),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerdictWitnesses {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resonant: Option<ResonantBall>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partially_resonant: Option<ResonantBall>,
    /// `None` inside `Some` marks an energy on the spectrum.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub singular: Option<Option<PairWitness>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nloc: Option<LocWitness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tunneling: Option<(Site, Site)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mi_tunneling: Option<MiWitness>,
}

/// Every classification of one ball at one energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredicateVerdict {
    pub ball: LatticeBall,
    pub energy: f64,
    pub e_resonant: bool,
    pub e_cnr: bool,
    pub em_singular: bool,
    pub m_localized: bool,
    pub m_tunneling: Option<bool>,
    pub mi_tunneling: Option<bool>,
    pub witnesses: VerdictWitnesses,
}

/// Classifies `ball` at `e`; tunneling flags need a sub-ball radius, and
/// `(m,I)`-tunneling an interval as well.
pub fn classify_ball(
    ws: &mut SampleWorkspace,
    ball: &LatticeBall,
    e: f64,
    sub_radius: Option<u32>,
    interval: Option<Interval>,
    variant: TunnelingVariant,
) -> Result<PredicateVerdict> {
    let params = ws.params().clone();
    let sd = ws.spectral(ball)?;
    let mut w = VerdictWitnesses::default();
    let e_resonant = is_e_resonant(&sd, e, &params);
    if e_resonant {
        let (gap, j) = sd.nearest(e);
        w.resonant = Some(ResonantBall {
            ball: ball.ball(),
            eigenvalue: sd.eigenvalues()[j],
            gap,
        });
    }
    let cnr = is_e_cnr(ws, ball, e, None)?;
    w.partially_resonant = cnr.witness.clone();
    let profile = ws.profile(ball)?;
    let em_singular = if is_resonance_hit(&sd, e) {
        w.singular = Some(None);
        true
    } else {
        let v = profile.verdict(e)?;
        if !v.nonsingular {
            w.singular = Some(v.worst.clone());
        }
        !v.nonsingular
    };
    let loc = ws.localization(ball)?;
    if !loc.localized {
        w.nloc = loc.worst.clone();
    }
    let mut m_tunneling = None;
    let mut mi_tunneling = None;
    if let Some(l) = sub_radius {
        let t = is_m_tunneling(ws, ball, l, variant)?;
        m_tunneling = Some(t.tunneling);
        w.tunneling = t.witness;
        if let Some(iv) = interval {
            let mi = is_mi_tunneling(ws, ball, l, iv, None)?;
            mi_tunneling = Some(mi.tunneling);
            w.mi_tunneling = mi.witness;
        }
    }
    Ok(PredicateVerdict {
        ball: *ball,
        energy: e,
        e_resonant,
        e_cnr: cnr.cnr,
        em_singular,
        m_localized: loc.localized,
        m_tunneling,
        mi_tunneling,
        witnesses: w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{sample, GeneratorSpec, PotentialField};
    use crate::operator::Model;

    fn ws_from(values: Vec<f64>, g: f64) -> SampleWorkspace {
        let r = (values.len() as u32 - 1) / 2;
        let f = PotentialField::from_values(LatticeBall::centered(1, r), values).unwrap();
        SampleWorkspace::new(f, Model::new(g), ScaleParams::default()).unwrap()
    }

    fn random_ws(l: u32, g: f64, seed: u64) -> SampleWorkspace {
        let f = sample(
            &LatticeBall::centered(1, l),
            &GeneratorSpec::uniform(),
            0,
            seed,
        )
        .unwrap();
        SampleWorkspace::new(f, Model::new(g), ScaleParams::default()).unwrap()
    }

    #[test]
    fn degenerate_radius_set() {
        let p = ScaleParams::default();
        assert_eq!(cnr_radii(&p, 1), vec![1]);
        assert_eq!(cnr_radii(&p, 0), vec![0]);
        assert_eq!(cnr_radii(&p, 17), (9..=17).collect::<Vec<_>>());
        let mut ws = ws_from(vec![0.0, 0.0, 0.0], 1.0);
        let b = *ws.field().ball();
        // spectrum of the 3-site path: 0, ±√2
        assert!(!is_e_cnr(&mut ws, &b, 0.0, None).unwrap().cnr);
        let v = is_e_cnr(&mut ws, &b, 0.7, None).unwrap();
        assert!(v.cnr && v.sub_balls_checked == 1);
    }

    #[test]
    fn cnr_implies_nr_and_matches_pr_set() {
        let mut ws = random_ws(17, 5.0, 4);
        let b = *ws.field().ball();
        let (set, balls) = pr_set(&mut ws, &b, None).unwrap();
        let sd = ws.spectral(&b).unwrap();
        for k in 0..400 {
            let e = -2.0 + k as f64 * 0.0231;
            let v = is_e_cnr(&mut ws, &b, e, None).unwrap();
            assert_eq!(v.cnr, !set.contains(e));
            if v.cnr {
                assert!(!is_e_resonant(&sd, e, ws.params()));
            } else {
                let tag = set.witness(e).unwrap();
                assert!(balls[tag].radius() >= 9);
            }
        }
    }

    #[test]
    fn planted_resonant_sub_ball() {
        let mut ws = random_ws(17, 100.0, 9);
        let b = *ws.field().ball();
        let sub = LatticeBall::unclipped(Ball::new(Site::on_axis(1, -4), 9));
        let e = ws.eigenvalues(&sub).unwrap()[5] + 1e-6;
        // the same eigenvalue must not be resonant for anything earlier in
        // the enumeration, so check the witness is a radius-9 ball
        let v = is_e_cnr(&mut ws, &b, e, Some(&[9])).unwrap();
        assert!(!v.cnr);
        let wb = v.witness.unwrap();
        assert!(wb.gap < 1e-5 && wb.ball.radius == 9);
    }

    #[test]
    fn free_chain_tunnels() {
        let mut ws = ws_from(vec![0.0; 35], 0.0);
        let b = *ws.field().ball();
        let t = is_m_tunneling(&mut ws, &b, 8, TunnelingVariant::Disjoint).unwrap();
        assert!(t.tunneling);
        let (v, w) = t.witness.unwrap();
        assert!(v.max_dist(&w) > 16);
        let t3 = is_m_tunneling(&mut ws, &b, 8, TunnelingVariant::Within3l).unwrap();
        let (v, w) = t3.witness.unwrap();
        assert!(v != w && v.max_dist(&w) <= 24);
    }

    #[test]
    fn strong_disorder_no_tunneling() {
        let mut ws = random_ws(17, 100.0, 12);
        let b = *ws.field().ball();
        let t = is_m_tunneling(&mut ws, &b, 8, TunnelingVariant::Disjoint).unwrap();
        assert!(!t.tunneling && t.witness.is_none() && t.sub_balls == 19);
    }

    #[test]
    fn planted_double_resonance() {
        // two disjoint radius-3 sub-balls with identical potential share their spectrum
        let block = [0.31, 0.77, 0.05, 0.92, 0.48, 0.66, 0.13];
        let mut vals: Vec<f64> = (0..35).map(|i| ((i * 37 % 101) as f64) / 101.0).collect();
        vals[2..9].copy_from_slice(&block);
        vals[26..33].copy_from_slice(&block);
        let mut ws = ws_from(vals, 100.0);
        let b = *ws.field().ball();
        let sub = LatticeBall::unclipped(Ball::new(Site::on_axis(1, -12), 3));
        let e_star = ws.eigenvalues(&sub).unwrap()[3];
        let iv = Interval::new(e_star - 0.01, e_star + 0.01);
        let v = is_mi_tunneling(&mut ws, &b, 3, iv, None).unwrap();
        let w = v.witness.unwrap();
        assert!((w.energy - e_star).abs() < 1e-4, "{w:?} {e_star}");
        assert!(w.first.max_dist(&w.second) > 6);
        let fam = SingularFamily::new(&mut ws, &b, 3).unwrap();
        assert!(fam.pair_at(e_star).is_some());
    }

    #[test]
    fn far_interval_no_mi_tunneling() {
        let mut ws = random_ws(17, 1.0, 3);
        let b = *ws.field().ball();
        let v = is_mi_tunneling(&mut ws, &b, 8, Interval::new(50.0, 51.0), None).unwrap();
        assert!(!v.tunneling && v.grid_points > 0);
    }

    #[test]
    fn classify_witness_iff_negative() {
        for (g, seed) in [(0.0, 0), (100.0, 1), (2.0, 5)] {
            let mut ws = random_ws(17, g, seed);
            let b = *ws.field().ball();
            let v = classify_ball(
                &mut ws,
                &b,
                0.37,
                Some(8),
                Some(Interval::new(-3.0, 3.0)),
                TunnelingVariant::Disjoint,
            )
            .unwrap();
            assert_eq!(v.e_resonant, v.witnesses.resonant.is_some());
            assert_eq!(!v.e_cnr, v.witnesses.partially_resonant.is_some());
            assert_eq!(v.em_singular, v.witnesses.singular.is_some());
            assert_eq!(!v.m_localized, v.witnesses.nloc.is_some());
            assert_eq!(v.m_tunneling.unwrap(), v.witnesses.tunneling.is_some());
            assert_eq!(v.mi_tunneling.unwrap(), v.witnesses.mi_tunneling.is_some());
            if v.e_cnr {
                assert!(!v.e_resonant);
            }
        }
    }
}
