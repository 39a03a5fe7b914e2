//! Monte Carlo estimates of single-ball resonance and two-ball spectral
//! coincidence, with closed-form values for the cases that have them.

use serde::{Deserialize, Serialize};

use crate::disorder::{sample, GeneratorSpec};
use crate::error::{Error, Result};
use crate::lattice::{Ball, LatticeBall, Site};
use crate::montecarlo::run_samples;
use crate::operator::Model;
use crate::predicates::ScaleParams;
use crate::spectral::{eigenvalues, nearest_in};
use crate::stats::MonteCarloEstimate;

/// Offset added to the master seed for the second ball of a decoupled pair.
const DECOUPLED_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WegnerSetup {
    pub model: Model,
    pub generator: GeneratorSpec,
    pub params: ScaleParams,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairMode {
    /// Both balls see one disorder field.
    #[default]
    Joint,
    /// The second ball draws from an independent field.
    Decoupled,
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    Ok(())
}

fn ball_at(dim: usize, x: i32, l: u32) -> LatticeBall {
    LatticeBall::unclipped(Ball::new(Site::on_axis(dim, x), l))
}

fn spectrum(setup: &WegnerSetup, ball: &LatticeBall, index: u64, seed: u64) -> Result<Vec<f64>> {
    let v = sample(ball, &setup.generator, index, seed)?;
    eigenvalues(&setup.model.assemble(ball, &v)?)
}

/// Frequency of `dist(E, σ(H_{B_L(0)})) < t`, `t` defaulting to `e^{-L^β}`.
pub fn estimate_single_resonance(
    setup: &WegnerSetup,
    l: u32,
    e: f64,
    threshold: Option<f64>,
    n: u64,
) -> Result<MonteCarloEstimate> {
    check_n(n)?;
    setup.generator.validate(setup.params.dim)?;
    let t = threshold.unwrap_or_else(|| setup.params.resonance_threshold(l));
    let ball = ball_at(setup.params.dim, 0, l);
    let flags = run_samples(n, setup.workers, |i| {
        let ev = spectrum(setup, &ball, i, setup.seed)?;
        Ok(nearest_in(&ev, e).0 < t)
    })?;
    let event = format!(
        "single-resonance d={} L={l} E={e} t={t:e} g={}",
        setup.params.dim, setup.model.coupling
    );
    Ok(MonteCarloEstimate::from_flags(event, &flags, setup.seed))
}

/// Smallest `|a - b|` over two ascending lists.
pub fn min_spacing(a: &[f64], b: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        best = best.min((a[i] - b[j]).abs());
        if a[i] < b[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    best
}

/// Frequency of `min_{i,j} |E_i(x) - E_j(y)| ≤ t` for `B_L(0)` and
/// `B_L(s e_1)`, `t` defaulting to `2e^{-L^β}`.
pub fn estimate_pair_resonance(
    setup: &WegnerSetup,
    l: u32,
    separation: u32,
    threshold: Option<f64>,
    mode: PairMode,
    n: u64,
) -> Result<MonteCarloEstimate> {
    check_n(n)?;
    setup.generator.validate(setup.params.dim)?;
    if separation <= 2 * l {
        return Err(Error::InvalidGeometry(format!(
            "balls of radius {l} at distance {separation} overlap"
        )));
    }
    let t = threshold.unwrap_or_else(|| 2.0 * setup.params.resonance_threshold(l));
    let dim = setup.params.dim;
    let bx = ball_at(dim, 0, l);
    let by = ball_at(dim, separation as i32, l);
    let seed_y = match mode {
        PairMode::Joint => setup.seed,
        PairMode::Decoupled => setup.seed.wrapping_add(DECOUPLED_SEED_OFFSET),
    };
    let flags = run_samples(n, setup.workers, |i| {
        let ex = spectrum(setup, &bx, i, setup.seed)?;
        let ey = spectrum(setup, &by, i, seed_y)?;
        Ok(min_spacing(&ex, &ey) <= t)
    })?;
    let event = format!(
        "pair-resonance d={dim} L={l} sep={separation} t={t:e} g={} mode={mode:?}",
        setup.model.coupling
    );
    Ok(MonteCarloEstimate::from_flags(event, &flags, setup.seed))
}

/// `P[|gU - E| < t]` for `U` uniform on `[0,1]`.
pub fn single_site_resonance_probability(e: f64, t: f64, g: f64) -> f64 {
    if g == 0.0 {
        return if e.abs() < t { 1.0 } else { 0.0 };
    }
    let (a, b) = ((e - t) / g, (e + t) / g);
    let (lo, hi) = (a.min(b), a.max(b));
    (hi.min(1.0) - lo.max(0.0)).max(0.0)
}

/// `P[|U - U'| ≤ s]` for independent uniforms on `[0,1]`, `s = t/g`.
pub fn single_site_pair_probability(t: f64, g: f64) -> f64 {
    let s = (t / g).clamp(0.0, 1.0);
    2.0 * s - s * s
}

/// `C |B| t / g` with `C = 2 ρ_max` (`ρ_max` the marginal's density bound).
pub fn wegner_bound(ball_len: usize, t: f64, g: f64, density_max: f64) -> f64 {
    2.0 * density_max * ball_len as f64 * t / g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(dim: usize, g: f64, seed: u64) -> WegnerSetup {
        WegnerSetup {
            model: Model::new(g),
            generator: GeneratorSpec::uniform(),
            params: ScaleParams::default().with_dim(dim),
            seed,
            workers: 1,
        }
    }

    #[test]
    fn analytic_values() {
        assert!((single_site_resonance_probability(0.5, 0.01, 1.0) - 0.02).abs() < 1e-15);
        assert!((single_site_resonance_probability(0.0, 0.01, 1.0) - 0.01).abs() < 1e-15);
        assert!((single_site_pair_probability(0.1, 1.0) - 0.19).abs() < 1e-15);
        assert_eq!(single_site_pair_probability(0.0, 1.0), 0.0);
    }

    #[test]
    fn single_site_oracles() {
        let s = setup(1, 1.0, 5);
        let est = estimate_single_resonance(&s, 0, 0.5, Some(0.01), 4000).unwrap();
        assert!(est.contains(0.02), "{est:?}");
        let pair = estimate_pair_resonance(&s, 0, 3, Some(0.1), PairMode::Joint, 4000).unwrap();
        assert!(pair.contains(0.19), "{pair:?}");
        let none = estimate_pair_resonance(&s, 0, 3, Some(0.0), PairMode::Joint, 500).unwrap();
        assert_eq!(none.hits, 0);
        assert!(estimate_pair_resonance(&s, 2, 4, None, PairMode::Joint, 10).is_err());
    }

    #[test]
    fn spacing() {
        assert_eq!(min_spacing(&[0.0, 1.0, 5.0], &[2.5, 4.5]), 0.5);
        assert_eq!(min_spacing(&[], &[1.0]), f64::INFINITY);
    }

    #[test]
    fn workers_do_not_change_hits() {
        let mut s = setup(1, 1.0, 9);
        let a = estimate_single_resonance(&s, 4, 0.3, Some(0.05), 300).unwrap();
        s.workers = 3;
        let b = estimate_single_resonance(&s, 4, 0.3, Some(0.05), 300).unwrap();
        assert_eq!(a, b);
    }
}
