//! Ball classifications: resonance, complete non-resonance, singularity,
//! localization and tunneling, plus sample-level lemma checks.

mod grid;
mod lemmas;
mod scan;
mod workspace;

pub use grid::{EnergyGrid, PrSet};
pub use lemmas::{
    deterministic_implication_check, lemma_sweep, GateReport, ImplicationReport, LemmaId,
    LemmaOutcome, LemmaVerdict, LemmaWitness, SweepOptions,
};
pub use scan::{
    classify_ball, cnr_radii, first_singular_pair, hull_grid, is_e_cnr, is_m_tunneling,
    is_mi_tunneling, pr_set, CnrVerdict, MiTunnelingVerdict, MiWitness, PredicateVerdict,
    ResonantBall, SingularFamily, TunnelingVariant, TunnelingVerdict, VerdictWitnesses,
    MAX_UNIFORM_POINTS,
};
pub use workspace::{PairTable, SampleWorkspace, SingularityProfile};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Site;
use crate::spectral::{SpectralData, RESONANCE_TOL};

/// Sub-ball eigensolves allowed per query unless forced.
pub const COST_LIMIT: usize = 1_000_000;

/// Relative slack of the singularity screen.
pub(crate) const SCREEN_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleParams {
    pub l0: u32,
    pub alpha: f64,
    pub beta: f64,
    pub beta_prime: f64,
    pub rho: f64,
    pub tau: f64,
    pub m: f64,
    pub p: f64,
    pub b: f64,
    pub dim: usize,
}

impl Default for ScaleParams {
    fn default() -> Self {
        ScaleParams {
            l0: 8,
            alpha: 4.0 / 3.0,
            beta: 0.5,
            beta_prime: 0.25,
            rho: 1.0 / 6.0,
            tau: 1.0 / 8.0,
            m: 1.0,
            p: 17.0,
            b: 0.002,
            dim: 1,
        }
    }
}

impl ScaleParams {
    pub fn with_m(&self, m: f64) -> ScaleParams {
        ScaleParams { m, ..self.clone() }
    }

    pub fn with_dim(&self, dim: usize) -> ScaleParams {
        ScaleParams {
            dim,
            ..self.clone()
        }
    }

    /// Range checks on the exponents; the induction conditions on `p`, `b`
    /// live in the scaling module.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.alpha > 1.0 && self.alpha.is_finite()) {
            return bad("alpha must exceed 1");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.beta_prime > 0.0 && self.beta_prime < self.beta) {
            return bad("beta' must lie in (0, beta)");
        }
        if !(self.rho >= 0.0 && self.tau > 0.0) {
            return bad("rho must be >= 0 and tau > 0");
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return bad("m must be positive");
        }
        if self.dim == 0 || self.dim > crate::lattice::MAX_DIM {
            return bad("dim out of range");
        }
        Ok(())
    }

    pub fn gamma(&self, l: u32) -> f64 {
        self.m * (1.0 + (l.max(1) as f64).powf(-self.tau))
    }

    pub fn l_beta(&self, l: u32) -> f64 {
        (l as f64).powf(self.beta)
    }

    /// `e^{-L^β}`; a gap below it is resonant.
    pub fn resonance_threshold(&self, l: u32) -> f64 {
        (-self.l_beta(l)).exp()
    }

    /// `⌈L^{(1+ρ)/α}⌉`, the distance floor of the decay predicates.
    pub fn distance_floor(&self, l: u32) -> u32 {
        ceil_power(l, (1.0 + self.rho) / self.alpha)
    }

    /// `⌈L^{1/α}⌉`, the smallest radius in the complete non-resonance check.
    pub fn cnr_min_radius(&self, l: u32) -> u32 {
        ceil_power(l, 1.0 / self.alpha)
    }

    /// `ln` of the right side of the NS bound divided by `|∂B|`.
    pub fn log_ns_bound(&self, l: u32, dist: u32, boundary_size: usize) -> f64 {
        -self.gamma(l) * dist as f64 + 2.0 * self.l_beta(l) - (boundary_size as f64).ln()
    }
}

/// `m(1 + L^{-1/8})`.
pub fn gamma(m: f64, l: u32) -> f64 {
    m * (1.0 + (l.max(1) as f64).powf(-0.125))
}

/// `⌈L^e⌉`, snapping powers that are integers up to rounding.
pub fn ceil_power(l: u32, e: f64) -> u32 {
    let x = (l as f64).powf(e);
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r as u32
    } else {
        x.ceil() as u32
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairWitness {
    pub x: Site,
    pub y: Site,
    pub dist: u32,
    /// `ln(|∂B| |G(x,y)|)` minus the log of the bound; positive means violated.
    pub log_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NsVerdict {
    pub nonsingular: bool,
    pub log_margin: f64,
    pub worst: Option<PairWitness>,
    pub pairs_checked: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocWitness {
    pub eigen_index: usize,
    pub x: Site,
    pub y: Site,
    pub dist: u32,
    pub log_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocVerdict {
    pub localized: bool,
    /// Largest `ln|ψ_j(x)ψ_j(y)| + γ‖x-y‖` over qualifying pairs.
    pub log_margin: f64,
    pub worst: Option<LocWitness>,
    pub pairs_checked: usize,
}

/// Gap below `e^{-L^β}` with `L` the radius of the ball behind `sd`.
pub fn is_e_resonant(sd: &SpectralData, e: f64, params: &ScaleParams) -> bool {
    if sd.is_empty() {
        return false;
    }
    sd.nearest(e).0 < params.resonance_threshold(sd.ball().radius())
}

pub fn is_em_nonsingular(sd: &SpectralData, e: f64, params: &ScaleParams) -> Result<NsVerdict> {
    crate::spectral::check_resonance(sd, e)?;
    let pairs = PairTable::for_ball(sd.ball(), params.distance_floor(sd.ball().radius()));
    Ok(workspace::ns_scan(
        sd,
        &pairs,
        &workspace::log_bounds(sd, &pairs, params),
        e,
    ))
}

pub fn is_m_localized(sd: &SpectralData, params: &ScaleParams) -> LocVerdict {
    let l = sd.ball().radius();
    let pairs = PairTable::for_ball(sd.ball(), params.distance_floor(l));
    workspace::loc_scan(sd, &pairs, params.gamma(l))
}

pub(crate) fn is_resonance_hit(sd: &SpectralData, e: f64) -> bool {
    !sd.is_empty() && sd.nearest(e).0 <= RESONANCE_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::PotentialField;
    use crate::lattice::LatticeBall;
    use crate::operator::Model;
    use crate::spectral::eig;

    fn sd_1d(values: Vec<f64>, g: f64) -> SpectralData {
        let r = (values.len() as u32 - 1) / 2;
        let ball = LatticeBall::centered(1, r);
        let v = PotentialField::from_values(ball, values).unwrap();
        eig(&Model::new(g).assemble(&ball, &v).unwrap()).unwrap()
    }

    #[test]
    fn gamma_examples() {
        assert!((gamma(1.0, 256) - 1.5).abs() < 1e-12);
        assert!((gamma(2.0, 6561) - 8.0 / 3.0).abs() < 1e-12);
        // the excess over m is L^{-1/8}, about 0.075 at L = 1e9
        let big = gamma(1.0, 1_000_000_000);
        assert!(big > 1.0 && (big - 1.0 - 10f64.powf(-9.0 / 8.0)).abs() < 1e-12);
        assert!(gamma(1.0, u32::MAX) < big);
        let p = ScaleParams::default();
        assert_eq!(p.gamma(256), gamma(1.0, 256));
    }

    #[test]
    fn floors() {
        let p = ScaleParams::default();
        let d: Vec<u32> = [8, 16, 17, 44, 256]
            .iter()
            .map(|&l| p.distance_floor(l))
            .collect();
        assert_eq!(d, vec![7, 12, 12, 28, 128]);
        let c: Vec<u32> = [8, 16, 17, 44, 1, 0]
            .iter()
            .map(|&l| p.cnr_min_radius(l))
            .collect();
        assert_eq!(c, vec![5, 8, 9, 18, 1, 0]);
    }

    #[test]
    fn resonance_tie_is_non_resonant() {
        let p = ScaleParams::default();
        // spectrum {-1, 1}
        let amb = crate::lattice::Ball::new(Site::origin(1), 1);
        let ball =
            LatticeBall::new(crate::lattice::Ball::new(Site::on_axis(1, 1), 1), Some(amb)).unwrap();
        let v = PotentialField::from_values(ball, vec![0.0, 0.0]).unwrap();
        let sd = eig(&Model::new(1.0).assemble(&ball, &v).unwrap()).unwrap();
        assert!(!is_e_resonant(&sd, 0.0, &p));
        assert!(is_e_resonant(&sd, 1.0, &p));
        let t = p.resonance_threshold(1);
        let e0 = sd.eigenvalues()[0];
        let gap = (e0 + t) - e0;
        assert_eq!(is_e_resonant(&sd, e0 + t, &p), gap < t);
    }

    #[test]
    fn free_chain_is_singular_and_nloc() {
        let p = ScaleParams::default();
        let sd = sd_1d(vec![0.0; 33], 0.0);
        let ns = is_em_nonsingular(&sd, 0.05, &p).unwrap();
        assert!(!ns.nonsingular);
        assert!(ns.worst.is_some());
        let loc = is_m_localized(&sd, &p);
        assert!(!loc.localized);
        assert!(loc.worst.unwrap().dist >= 12);
    }

    #[test]
    fn diagonal_is_localized() {
        let p = ScaleParams::default();
        let vals: Vec<f64> = (0..33).map(|i| i as f64).collect();
        let ball = LatticeBall::centered(1, 16);
        let v = PotentialField::from_values(ball, vals).unwrap();
        let mut h = Model::new(1.0).assemble(&ball, &v).unwrap();
        for i in 0..33 {
            for j in 0..33 {
                if i != j {
                    h.matrix.set(i, j, 0.0);
                }
            }
        }
        let sd = eig(&h).unwrap();
        assert!(is_m_localized(&sd, &p).localized);
        assert!(is_m_localized(&sd, &p.with_m(50.0)).localized);
    }

    #[test]
    fn vacuous_ns_without_pairs() {
        let p = ScaleParams::default();
        let sd = sd_1d(vec![0.0, 0.0, 0.0], 0.0);
        // L = 1: floor 1, pairs exist; L = 0 has none
        let sd0 = sd_1d(vec![0.3], 1.0);
        let v = is_em_nonsingular(&sd0, 0.0, &p).unwrap();
        assert!(v.nonsingular && v.pairs_checked == 0);
        assert!(is_em_nonsingular(&sd, sd.eigenvalues()[1], &p).is_err());
    }
}
