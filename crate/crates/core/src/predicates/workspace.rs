use std::collections::HashMap;
use std::rc::Rc;

use super::{
    is_resonance_hit, LocVerdict, LocWitness, NsVerdict, PairWitness, ScaleParams, COST_LIMIT,
    SCREEN_SLACK,
};
use crate::disorder::PotentialField;
use crate::error::{Error, Result};
use crate::lattice::{Ball, LatticeBall};
use crate::operator::{BoundaryCondition, FiniteHamiltonian, Model};
use crate::spectral::{self, SpectralData, RESONANCE_TOL};

/// Site-index pairs `(i, k, ‖x_i - x_k‖)` with `i < k` at distance at least a floor,
/// sorted by `i` then `k`.
#[derive(Clone, Debug, Default)]
pub struct PairTable {
    pairs: Vec<(u32, u32, u32)>,
    max_dist: u32,
}

impl PairTable {
    pub fn for_ball(ball: &LatticeBall, floor: u32) -> PairTable {
        let sites = ball.sites();
        let mut pairs = Vec::new();
        let mut max_dist = 0;
        for i in 0..sites.len() {
            for k in i + 1..sites.len() {
                let d = sites[i].max_dist(&sites[k]);
                if d >= floor {
                    pairs.push((i as u32, k as u32, d));
                    max_dist = max_dist.max(d);
                }
            }
        }
        PairTable { pairs, max_dist }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(u32, u32, u32)] {
        &self.pairs
    }

    pub fn max_dist(&self) -> u32 {
        self.max_dist
    }
}

/// `ln` of the NS bound over `|∂B|`, indexed by distance.
pub(crate) fn log_bounds(sd: &SpectralData, pairs: &PairTable, params: &ScaleParams) -> Vec<f64> {
    let l = sd.ball().radius();
    let boundary = sd.ball().boundary_size();
    (0..=pairs.max_dist)
        .map(|d| params.log_ns_bound(l, d, boundary))
        .collect()
}

/// Exact NS scan at a non-resonant energy.
pub(crate) fn ns_scan(sd: &SpectralData, pairs: &PairTable, lb: &[f64], e: f64) -> NsVerdict {
    if let Some(t) = sd.tridiagonal_green(e) {
        return worst_pair(
            sd,
            pairs,
            pairs
                .pairs
                .iter()
                .map(|&(i, k, d)| t.log_abs(i as usize, k as usize) - lb[d as usize]),
        );
    }
    let ev = sd.eigenvalues();
    let mut u = vec![0.0; sd.len()];
    let mut cur = u32::MAX;
    let margins = pairs.pairs.iter().map(|&(i, k, d)| {
        if i != cur {
            cur = i;
            for ((uj, a), ej) in u.iter_mut().zip(sd.site_row(i as usize)).zip(ev) {
                *uj = a / (ej - e);
            }
        }
        let g: f64 = u
            .iter()
            .zip(sd.site_row(k as usize))
            .map(|(a, b)| a * b)
            .sum();
        g.abs().ln() - lb[d as usize]
    });
    worst_pair(sd, pairs, margins)
}

fn worst_pair(
    sd: &SpectralData,
    pairs: &PairTable,
    margins: impl Iterator<Item = f64>,
) -> NsVerdict {
    let mut worst = f64::NEG_INFINITY;
    let mut arg = None;
    for (p, margin) in margins.enumerate() {
        if margin > worst || arg.is_none() {
            worst = margin;
            arg = Some(p);
        }
    }
    let witness = arg.map(|p| {
        let (i, k, d) = pairs.pairs[p];
        PairWitness {
            x: sd.ball().site_at(i as usize),
            y: sd.ball().site_at(k as usize),
            dist: d,
            log_margin: worst,
        }
    });
    NsVerdict {
        nonsingular: !(worst > 0.0),
        log_margin: worst,
        worst: witness,
        pairs_checked: pairs.len(),
    }
}

pub(crate) fn loc_scan(sd: &SpectralData, pairs: &PairTable, gamma: f64) -> LocVerdict {
    let n = sd.len();
    let la: Vec<f64> = (0..n * n)
        .map(|idx| sd.amp(idx / n, idx % n).abs().ln())
        .collect();
    let mut worst = f64::NEG_INFINITY;
    let mut arg = None;
    for (p, &(i, k, d)) in pairs.pairs.iter().enumerate() {
        let ri = &la[i as usize * n..(i as usize + 1) * n];
        let rk = &la[k as usize * n..(k as usize + 1) * n];
        let mut best = f64::NEG_INFINITY;
        let mut bj = 0;
        for j in 0..n {
            let s = ri[j] + rk[j];
            if s > best {
                best = s;
                bj = j;
            }
        }
        let margin = best + gamma * d as f64;
        if margin > worst || arg.is_none() {
            worst = margin;
            arg = Some((p, bj));
        }
    }
    let witness = arg.map(|(p, j)| {
        let (i, k, d) = pairs.pairs[p];
        LocWitness {
            eigen_index: j,
            x: sd.ball().site_at(i as usize),
            y: sd.ball().site_at(k as usize),
            dist: d,
            log_margin: worst,
        }
    });
    LocVerdict {
        localized: !(worst > 0.0),
        log_margin: worst,
        worst: witness,
        pairs_checked: pairs.len(),
    }
}

/// Precomputed data for deciding `(E,m)`-singularity of one ball at many
/// energies. With `w_j = max_{pairs} |ψ_j(x)ψ_j(y)| / b(x,y)` (where `b` is the
/// NS bound over `|∂B|`), `Σ_j w_j / |E_j - E| ≤ 1` certifies NS at `E`.
#[derive(Debug)]
pub struct SingularityProfile {
    sd: Rc<SpectralData>,
    pairs: Rc<PairTable>,
    log_bound: Vec<f64>,
    weights: Vec<f64>,
    window: f64,
}

impl SingularityProfile {
    pub fn new(
        sd: Rc<SpectralData>,
        pairs: Rc<PairTable>,
        params: &ScaleParams,
    ) -> SingularityProfile {
        let log_bound = log_bounds(&sd, &pairs, params);
        let n = sd.len();
        let mut weights = vec![0.0f64; n];
        let scale: Vec<f64> = log_bound.iter().map(|b| (-b).exp()).collect();
        for &(i, k, d) in pairs.pairs() {
            let f = scale[d as usize];
            for ((w, a), b) in weights
                .iter_mut()
                .zip(sd.site_row(i as usize))
                .zip(sd.site_row(k as usize))
            {
                *w = w.max((a * b).abs() * f);
            }
        }
        let window = weights.iter().sum::<f64>() / (1.0 - SCREEN_SLACK);
        SingularityProfile {
            sd,
            pairs,
            log_bound,
            weights,
            window,
        }
    }

    pub fn spectral(&self) -> &Rc<SpectralData> {
        &self.sd
    }

    pub fn ball(&self) -> &LatticeBall {
        self.sd.ball()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Energies farther than this from every eigenvalue pass the screen.
    pub fn window(&self) -> f64 {
        self.window
    }

    /// True when the screen certifies NS at `e`.
    pub fn screened(&self, e: f64) -> bool {
        if self.pairs.is_empty() {
            return true;
        }
        let s: f64 = self
            .weights
            .iter()
            .zip(self.sd.eigenvalues())
            .map(|(w, ej)| if *w > 0.0 { w / (ej - e).abs() } else { 0.0 })
            .sum();
        s <= 1.0 - SCREEN_SLACK
    }

    /// `(E,m)`-singular; an energy on the spectrum counts as singular.
    pub fn is_singular(&self, e: f64) -> bool {
        if is_resonance_hit(&self.sd, e) {
            return true;
        }
        if self.screened(e) {
            return false;
        }
        !ns_scan(&self.sd, &self.pairs, &self.log_bound, e).nonsingular
    }

    pub fn verdict(&self, e: f64) -> Result<NsVerdict> {
        spectral::check_resonance(&self.sd, e)?;
        Ok(ns_scan(&self.sd, &self.pairs, &self.log_bound, e))
    }

    /// Indices of an ascending grid that the screen does not clear.
    pub fn candidates(&self, grid: &[f64]) -> Vec<usize> {
        let r = self.window.max(RESONANCE_TOL);
        if self.pairs.is_empty() {
            return within(grid, self.sd.eigenvalues(), RESONANCE_TOL);
        }
        within(grid, self.sd.eigenvalues(), r)
    }

    /// Grid indices where the ball is singular.
    pub fn singular_indices(&self, grid: &[f64]) -> Vec<usize> {
        self.candidates(grid)
            .into_iter()
            .filter(|&i| self.is_singular(grid[i]))
            .collect()
    }
}

/// Indices of grid points within `r` of some eigenvalue.
fn within(grid: &[f64], eigs: &[f64], r: f64) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let mut next = 0;
    for &ej in eigs {
        let lo = grid.partition_point(|&x| x < ej - r).max(next);
        let hi = grid.partition_point(|&x| x <= ej + r);
        out.extend(lo..hi);
        next = next.max(hi);
    }
    out
}

/// Per-sample state: one potential field, caches of sub-ball spectra and
/// derived verdicts, and an eigensolve budget.
pub struct SampleWorkspace {
    field: PotentialField,
    model: Model,
    params: ScaleParams,
    spectra: HashMap<LatticeBall, Rc<SpectralData>>,
    values: HashMap<LatticeBall, Rc<Vec<f64>>>,
    loc: HashMap<LatticeBall, Rc<LocVerdict>>,
    profiles: HashMap<LatticeBall, Rc<SingularityProfile>>,
    pair_tables: HashMap<(usize, [usize; 4], u32), Rc<PairTable>>,
    eigensolves: u64,
    budget: Option<u64>,
    force: bool,
}

impl SampleWorkspace {
    pub fn new(
        field: PotentialField,
        model: Model,
        params: ScaleParams,
    ) -> Result<SampleWorkspace> {
        model.validate()?;
        params.validate()?;
        if field.ball().dim() != params.dim {
            return Err(Error::DimensionMismatch {
                left: field.ball().dim(),
                right: params.dim,
            });
        }
        Ok(SampleWorkspace {
            field,
            model,
            params,
            spectra: HashMap::new(),
            values: HashMap::new(),
            loc: HashMap::new(),
            profiles: HashMap::new(),
            pair_tables: HashMap::new(),
            eigensolves: 0,
            budget: None,
            force: false,
        })
    }

    pub fn field(&self) -> &PotentialField {
        &self.field
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn params(&self) -> &ScaleParams {
        &self.params
    }

    pub fn eigensolves(&self) -> u64 {
        self.eigensolves
    }

    pub fn set_budget(&mut self, budget: Option<u64>) {
        self.budget = budget;
    }

    /// Lifts the sub-ball cost guard.
    pub fn set_force(&mut self, force: bool) {
        self.force = force;
    }

    pub(crate) fn guard(&self, requested: usize) -> Result<()> {
        if !self.force && requested > COST_LIMIT {
            return Err(Error::CostGuard {
                requested,
                limit: COST_LIMIT,
            });
        }
        Ok(())
    }

    fn charge(&mut self) -> Result<()> {
        if let Some(b) = self.budget {
            if self.eigensolves >= b {
                return Err(Error::BudgetExceeded { budget: b });
            }
        }
        self.eigensolves += 1;
        Ok(())
    }

    /// Operator on `ball`; the field's own ball keeps the model's boundary
    /// condition, every other ball is a Dirichlet restriction.
    pub fn hamiltonian(&self, ball: &LatticeBall) -> Result<FiniteHamiltonian> {
        let outer = self.field.ball().region();
        let r = ball.region();
        if !(outer.contains(&r.lo()) && outer.contains(&r.hi())) {
            return Err(Error::InvalidGeometry(format!(
                "{ball} is not covered by the field on {}",
                self.field.ball()
            )));
        }
        let model = if ball == self.field.ball() {
            self.model
        } else {
            Model {
                bc: BoundaryCondition::Dirichlet,
                ..self.model
            }
        };
        model.assemble(ball, &self.field)
    }

    pub fn spectral(&mut self, ball: &LatticeBall) -> Result<Rc<SpectralData>> {
        if let Some(sd) = self.spectra.get(ball) {
            return Ok(sd.clone());
        }
        let h = self.hamiltonian(ball)?;
        self.charge()?;
        let sd = Rc::new(spectral::eig(&h)?);
        self.spectra.insert(*ball, sd.clone());
        Ok(sd)
    }

    pub fn eigenvalues(&mut self, ball: &LatticeBall) -> Result<Rc<Vec<f64>>> {
        if let Some(v) = self.values.get(ball) {
            return Ok(v.clone());
        }
        let v = match self.spectra.get(ball) {
            Some(sd) => Rc::new(sd.eigenvalues().to_vec()),
            None => {
                let h = self.hamiltonian(ball)?;
                self.charge()?;
                Rc::new(spectral::eigenvalues(&h)?)
            }
        };
        self.values.insert(*ball, v.clone());
        Ok(v)
    }

    pub fn pair_table(&mut self, ball: &LatticeBall) -> Rc<PairTable> {
        let floor = self.params.distance_floor(ball.radius());
        let region = ball.region();
        let mut sides = [0; 4];
        for (a, s) in sides.iter_mut().enumerate().take(region.dim()) {
            *s = region.side(a);
        }
        self.pair_tables
            .entry((region.dim(), sides, floor))
            .or_insert_with(|| Rc::new(PairTable::for_ball(ball, floor)))
            .clone()
    }

    pub fn localization(&mut self, ball: &LatticeBall) -> Result<Rc<LocVerdict>> {
        if let Some(v) = self.loc.get(ball) {
            return Ok(v.clone());
        }
        let sd = self.spectral(ball)?;
        let pairs = self.pair_table(ball);
        let v = Rc::new(loc_scan(&sd, &pairs, self.params.gamma(ball.radius())));
        self.loc.insert(*ball, v.clone());
        Ok(v)
    }

    pub fn profile(&mut self, ball: &LatticeBall) -> Result<Rc<SingularityProfile>> {
        if let Some(p) = self.profiles.get(ball) {
            return Ok(p.clone());
        }
        let sd = self.spectral(ball)?;
        let pairs = self.pair_table(ball);
        let p = Rc::new(SingularityProfile::new(sd, pairs, &self.params));
        self.profiles.insert(*ball, p.clone());
        Ok(p)
    }

    /// Every `B_r(v)` inside `ball`, in lexicographic order of `v`.
    pub fn sub_balls(&self, ball: &LatticeBall, r: u32) -> Vec<LatticeBall> {
        ball.sub_ball_centers(r)
            .iter()
            .map(|v| LatticeBall::unclipped(Ball::new(v, r)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{sample, GeneratorSpec};
    use crate::predicates::is_em_nonsingular;

    fn ws(l: u32, g: f64, seed: u64) -> SampleWorkspace {
        let ball = LatticeBall::centered(1, l);
        let f = sample(&ball, &GeneratorSpec::uniform(), 0, seed).unwrap();
        SampleWorkspace::new(f, Model::new(g), ScaleParams::default()).unwrap()
    }

    #[test]
    fn screen_agrees_with_exact_scan() {
        for (g, seed) in [(100.0, 1), (3.0, 2), (0.5, 3)] {
            let mut w = ws(16, g, seed);
            let b = *w.field().ball();
            let prof = w.profile(&b).unwrap();
            let sd = prof.spectral().clone();
            let ev = sd.eigenvalues().to_vec();
            let mut es: Vec<f64> = ev.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
            es.extend(ev.iter().map(|e| e + 1e-3));
            es.extend(ev.iter().map(|e| e - 1e-7));
            for e in es {
                let exact = !is_em_nonsingular(&sd, e, w.params()).unwrap().nonsingular;
                assert_eq!(prof.is_singular(e), exact, "g={g} e={e}");
                if prof.screened(e) {
                    assert!(!exact);
                }
            }
        }
    }

    #[test]
    fn candidates_cover_singular_points() {
        let mut w = ws(16, 2.0, 7);
        let b = *w.field().ball();
        let prof = w.profile(&b).unwrap();
        let grid: Vec<f64> = (0..4000).map(|k| -3.0 + k as f64 * 0.002).collect();
        let cand = prof.candidates(&grid);
        for (i, &e) in grid.iter().enumerate() {
            if prof.is_singular(e) {
                assert!(cand.binary_search(&i).is_ok());
            }
        }
    }

    #[test]
    fn caches_and_budget() {
        let mut w = ws(8, 100.0, 0);
        let b = *w.field().ball();
        w.spectral(&b).unwrap();
        w.spectral(&b).unwrap();
        w.eigenvalues(&b).unwrap();
        assert_eq!(w.eigensolves(), 1);
        w.set_budget(Some(2));
        let subs = w.sub_balls(&b, 3);
        assert_eq!(subs.len(), 11);
        w.eigenvalues(&subs[0]).unwrap();
        assert!(matches!(
            w.eigenvalues(&subs[1]),
            Err(Error::BudgetExceeded { budget: 2 })
        ));
    }

    #[test]
    fn outside_field_rejected() {
        let w = ws(4, 1.0, 0);
        let far = LatticeBall::unclipped(Ball::new(crate::lattice::Site::on_axis(1, 3), 2));
        assert!(w.hamiltonian(&far).is_err());
    }
}
