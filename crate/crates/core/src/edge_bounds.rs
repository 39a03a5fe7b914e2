//! Band-edge estimates: Combes–Thomas decay, Lifshitz-tail statistics of the
//! lowest Neumann eigenvalue and low-energy singularity frequencies.

use serde::{Deserialize, Serialize};

use crate::disorder::{sample, GeneratorSpec};
use crate::error::{Error, Result};
use crate::lattice::LatticeBall;
use crate::montecarlo::run_samples;
use crate::operator::{BoundaryCondition, KineticConvention, Model};
use crate::predicates::{EnergyGrid, SampleWorkspace, ScaleParams, MAX_UNIFORM_POINTS};
use crate::spectral::{eig, eigenvalues, green_column, Interval, SpectralData, RESONANCE_TOL};
use crate::stats::MonteCarloEstimate;

const REL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CombesThomasReport {
    pub energy: f64,
    /// `dist(E, σ(H))`.
    pub eta: f64,
    pub skipped: bool,
    /// `2d(e^{η/(5d)} - 1) ≤ η/2`, the range where the conjugated operator
    /// stays invertible with the stated constant.
    pub within_validity: bool,
    pub pairs_checked: usize,
    pub violations: usize,
    /// Largest `ln|G(x,y)| - ln(2/η) + η‖x-y‖/(5d)`.
    pub worst_log_margin: f64,
    /// Same with `12d` in place of `5d`.
    pub worst_log_margin_12d: f64,
}

impl CombesThomasReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

pub fn combes_thomas_within_validity(eta: f64, d: usize) -> bool {
    let d = d as f64;
    2.0 * d * ((eta / (5.0 * d)).exp() - 1.0) <= eta / 2.0
}

/// Checks `|G(x,y;E)| ≤ 2η^{-1} e^{-η‖x-y‖/(5d)}` for every site pair.
pub fn combes_thomas_check(sd: &SpectralData, e: f64, d: usize) -> CombesThomasReport {
    let eta = sd.nearest(e).0;
    let mut rep = CombesThomasReport {
        energy: e,
        eta,
        worst_log_margin: f64::NEG_INFINITY,
        worst_log_margin_12d: f64::NEG_INFINITY,
        ..Default::default()
    };
    if !(eta > RESONANCE_TOL) || sd.is_empty() {
        rep.skipped = true;
        return rep;
    }
    rep.within_validity = combes_thomas_within_validity(eta, d);
    let sites = sd.ball().sites();
    let pre = (2.0 / eta).ln();
    let (r5, r12) = (eta / (5.0 * d as f64), eta / (12.0 * d as f64));
    for k in 0..sd.len() {
        let col = green_column(sd, e, k);
        for (i, g) in col.iter().enumerate() {
            let dist = sites[i].max_dist(&sites[k]) as f64;
            let lg = g.abs().ln();
            let m5 = lg - pre + r5 * dist;
            rep.pairs_checked += 1;
            rep.worst_log_margin = rep.worst_log_margin.max(m5);
            rep.worst_log_margin_12d = rep.worst_log_margin_12d.max(lg - pre + r12 * dist);
            let bound = 2.0 / eta * (-r5 * dist).exp();
            if g.abs() > bound * (1.0 + REL_TOL) + 1e-15 / eta {
                rep.violations += 1;
            }
        }
    }
    rep
}

/// Nonnegative, bounded marginal on `B_L(0)` with the graph-laplacian kinetic term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSetup {
    pub dim: usize,
    pub l: u32,
    pub coupling: f64,
    pub generator: GeneratorSpec,
    pub seed: u64,
    pub workers: usize,
}

impl EdgeSetup {
    fn validate(&self) -> Result<(f64, f64)> {
        self.generator.validate(self.dim)?;
        let (lo, hi) = self.generator.support();
        if lo < 0.0 {
            return Err(Error::InvalidGenerator(format!(
                "edge statistics need a nonnegative potential, support starts at {lo}"
            )));
        }
        if !(hi > lo) {
            return Err(Error::InvalidGenerator(
                "edge statistics need a nonconstant potential".into(),
            ));
        }
        if !(self.coupling > 0.0 && self.coupling.is_finite()) {
            return Err(Error::InvalidOperator(format!(
                "coupling {} must be positive",
                self.coupling
            )));
        }
        Ok((lo, hi))
    }

    fn model(&self, bc: BoundaryCondition) -> Model {
        Model {
            coupling: self.coupling,
            bc,
            convention: KineticConvention::GraphLaplacian,
        }
    }

    fn ball(&self) -> LatticeBall {
        LatticeBall::centered(self.dim, self.l)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSample {
    pub sample_index: u64,
    pub mean_potential: f64,
    pub ground_neumann: f64,
    pub ground_dirichlet: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub l0: u32,
    pub eta: f64,
    pub volume: usize,
    /// Frequency of `mean_B V ≤ 2η`.
    pub low_mean: MonteCarloEstimate,
    /// `exp(-2(μ - 2η)²|B| / v_max²)` for IID marginals with `μ > 2η`.
    pub hoeffding_bound: Option<f64>,
    /// Sorted `E_0^N` with empirical CDF values `i/n`.
    pub cdf: Vec<(f64, f64)>,
    /// `P[E_0^N ≤ θ]` for each `θ`.
    pub thresholds: Vec<(f64, MonteCarloEstimate)>,
    /// Samples with `E_0^N > E_0^D` beyond rounding.
    pub bracketing_failures: u64,
}

fn edge_sample(setup: &EdgeSetup, index: u64) -> Result<EdgeSample> {
    let ball = setup.ball();
    let field = sample(&ball, &setup.generator, index, setup.seed)?;
    let mean_potential = field.values().iter().sum::<f64>() / field.values().len() as f64;
    let n = eigenvalues(
        &setup
            .model(BoundaryCondition::Neumann)
            .assemble(&ball, &field)?,
    )?;
    let d = eigenvalues(
        &setup
            .model(BoundaryCondition::Dirichlet)
            .assemble(&ball, &field)?,
    )?;
    Ok(EdgeSample {
        sample_index: index,
        mean_potential,
        ground_neumann: n[0],
        ground_dirichlet: d[0],
    })
}

/// Default threshold grid `c·L^{-1/2}` for `c ∈ {1/4, 1/2, 1, 2}`.
pub fn default_thresholds(l: u32) -> Vec<f64> {
    let s = (l as f64).powf(-0.5);
    [0.25, 0.5, 1.0, 2.0].iter().map(|c| c * s).collect()
}

pub fn lifshitz_stats(
    setup: &EdgeSetup,
    eta: f64,
    thresholds: &[f64],
    n: u64,
) -> Result<(EdgeReport, Vec<EdgeSample>)> {
    let (_, vmax) = setup.validate()?;
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "eta = {eta} must be positive"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let samples = run_samples(n, setup.workers, |i| edge_sample(setup, i))?;
    let volume = setup.ball().len();
    let flags: Vec<bool> = samples
        .iter()
        .map(|s| s.mean_potential <= 2.0 * eta)
        .collect();
    let low_mean = MonteCarloEstimate::from_flags(
        format!("mean V <= {} L={}", 2.0 * eta, setup.l),
        &flags,
        setup.seed,
    );
    let mu = setup.generator.mean();
    let hoeffding_bound = (setup.generator.is_iid() && mu > 2.0 * eta)
        .then(|| (-2.0 * (mu - 2.0 * eta).powi(2) * volume as f64 / (vmax * vmax)).exp());
    let mut ground: Vec<f64> = samples.iter().map(|s| s.ground_neumann).collect();
    ground.sort_by(f64::total_cmp);
    let cdf = ground
        .iter()
        .enumerate()
        .map(|(i, &e)| (e, (i + 1) as f64 / n as f64))
        .collect();
    let thresholds = thresholds
        .iter()
        .map(|&t| {
            let flags: Vec<bool> = samples.iter().map(|s| s.ground_neumann <= t).collect();
            (
                t,
                MonteCarloEstimate::from_flags(
                    format!("E0N <= {t:.6} L={}", setup.l),
                    &flags,
                    setup.seed,
                ),
            )
        })
        .collect();
    let bracketing_failures = samples
        .iter()
        .filter(|s| {
            s.ground_neumann > s.ground_dirichlet + 1e-12 * (1.0 + s.ground_dirichlet.abs())
        })
        .count() as u64;
    Ok((
        EdgeReport {
            l0: setup.l,
            eta,
            volume,
            low_mean,
            hoeffding_bound,
            cdf,
            thresholds,
            bracketing_failures,
        },
        samples,
    ))
}

/// `C·L^{-1/2}`.
pub fn edge_mass(c: f64, l: u32) -> f64 {
    c * (l as f64).powf(-0.5)
}

/// Smallest Dirichlet ground energy over `n` pilot samples drawn from a
/// seed set disjoint from the main run.
pub fn pilot_edge(setup: &EdgeSetup, n: u64) -> Result<f64> {
    setup.validate()?;
    let pilot = EdgeSetup {
        seed: setup.seed ^ 0x9170_7ed9_e000_0000,
        ..setup.clone()
    };
    let s = run_samples(n.max(1), setup.workers, |i| edge_sample(&pilot, i))?;
    Ok(s.iter()
        .map(|s| s.ground_dirichlet)
        .fold(f64::INFINITY, f64::min))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandEstimate {
    pub band: Interval,
    pub estimate: MonteCarloEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowEnergyReport {
    pub l0: u32,
    pub m: f64,
    /// One entry per band, in the order given (bands are nested).
    pub bands: Vec<BandEstimate>,
    /// Samples where a smaller band has the event and a larger one does not.
    pub monotonicity_failures: u64,
    pub grid_limited_samples: u64,
}

/// Frequency of `∃E ∈ [E0, E0 + η]` (on a grid) with `B_{L0}(0)` `(E, m)`-singular,
/// for each `η` (ascending). The grids share the step `e^{-L^β}/2` so they nest.
pub fn low_energy_singularity_estimate(
    setup: &EdgeSetup,
    params: &ScaleParams,
    e0: f64,
    etas: &[f64],
    m: f64,
    n: u64,
) -> Result<LowEnergyReport> {
    setup.validate()?;
    if etas.is_empty() || etas.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidParameter("bands need positive widths".into()));
    }
    if etas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter(
            "band widths must be ascending".into(),
        ));
    }
    let params = ScaleParams {
        l0: setup.l,
        dim: setup.dim,
        ..params.clone()
    }
    .with_m(m);
    params.validate()?;
    let bands: Vec<Interval> = etas.iter().map(|&w| Interval::new(e0, e0 + w)).collect();
    let step = params.resonance_threshold(setup.l) / 2.0;
    let model = setup.model(BoundaryCondition::Dirichlet);
    let ball = setup.ball();
    let per = run_samples(n, setup.workers, |i| {
        let field = sample(&ball, &setup.generator, i, setup.seed)?;
        let mut ws = SampleWorkspace::new(field, model, params.clone())?;
        let prof = ws.profile(&ball)?;
        let spec = [prof.spectral().eigenvalues()];
        let mut out = Vec::new();
        let mut limited = false;
        for band in &bands {
            let grid = EnergyGrid::build(&spec, *band, step, &[], MAX_UNIFORM_POINTS)?;
            limited |= grid.grid_limited();
            out.push(!prof.singular_indices(grid.points()).is_empty());
        }
        Ok((out, limited))
    })?;
    let estimates = bands
        .iter()
        .enumerate()
        .map(|(b, band)| {
            let flags: Vec<bool> = per.iter().map(|p| p.0[b]).collect();
            let label = format!(
                "singular in [{:.4}, {:.4}] L={} m={m:.4}",
                band.lo, band.hi, setup.l
            );
            BandEstimate {
                band: *band,
                estimate: MonteCarloEstimate::from_flags(label, &flags, setup.seed),
            }
        })
        .collect();
    let monotonicity_failures = per
        .iter()
        .filter(|p| p.0.windows(2).any(|w| w[0] && !w[1]))
        .count() as u64;
    Ok(LowEnergyReport {
        l0: setup.l,
        m,
        bands: estimates,
        monotonicity_failures,
        grid_limited_samples: per.iter().filter(|p| p.1).count() as u64,
    })
}

/// Combes–Thomas check of `B_L(0)` at `E = min σ(H) - η` for each sample.
pub fn combes_thomas_sweep(
    dim: usize,
    l: u32,
    model: Model,
    generator: &GeneratorSpec,
    eta: f64,
    n: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<CombesThomasReport>> {
    model.validate()?;
    generator.validate(dim)?;
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "eta = {eta} must be positive"
        )));
    }
    let ball = LatticeBall::centered(dim, l);
    run_samples(n, workers, |i| {
        let field = sample(&ball, generator, i, seed)?;
        let sd = eig(&model.assemble(&ball, &field)?)?;
        let e = sd.eigenvalues()[0] - eta;
        Ok(combes_thomas_check(&sd, e, dim))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::PotentialField;

    #[test]
    fn single_site_is_one_over_eta() {
        let ball = LatticeBall::centered(1, 0);
        let v = PotentialField::from_values(ball, vec![0.7]).unwrap();
        let sd = eig(&Model::new(1.0).assemble(&ball, &v).unwrap()).unwrap();
        let r = combes_thomas_check(&sd, 0.2, 1);
        assert!((r.eta - 0.5).abs() < 1e-15);
        assert!(r.holds());
        assert!((r.worst_log_margin - (0.5f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn skipped_on_the_spectrum() {
        let ball = LatticeBall::centered(1, 0);
        let v = PotentialField::from_values(ball, vec![0.7]).unwrap();
        let sd = eig(&Model::new(1.0).assemble(&ball, &v).unwrap()).unwrap();
        assert!(combes_thomas_check(&sd, 0.7, 1).skipped);
    }

    #[test]
    fn validity_range() {
        assert!(combes_thomas_within_validity(1.0, 1));
        assert!(combes_thomas_within_validity(2.0, 1));
        assert!(!combes_thomas_within_validity(50.0, 1));
        assert!(combes_thomas_within_validity(4.0, 2));
    }

    #[test]
    fn random_chains_below_the_spectrum() {
        let reps = combes_thomas_sweep(
            1,
            16,
            Model::new(1.0),
            &GeneratorSpec::uniform(),
            1.0,
            20,
            3,
            1,
        )
        .unwrap();
        assert!(reps
            .iter()
            .all(|r| r.holds() && r.within_validity && !r.skipped));
    }

    #[test]
    fn hoeffding_example() {
        let setup = EdgeSetup {
            dim: 1,
            l: 16,
            coupling: 1.0,
            generator: GeneratorSpec::uniform(),
            seed: 4,
            workers: 1,
        };
        let (rep, _) = lifshitz_stats(&setup, 0.1, &default_thresholds(16), 200).unwrap();
        let b = rep.hoeffding_bound.unwrap();
        assert!((b - (-2.0 * 0.09 * 33.0f64).exp()).abs() < 1e-15);
        assert!((b - 2.6e-3).abs() < 1e-4);
        assert!(rep.low_mean.ci_low <= b);
        assert_eq!(rep.bracketing_failures, 0);
        assert!(rep
            .cdf
            .windows(2)
            .all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
    }

    #[test]
    fn constant_or_negative_potential_rejected() {
        let mut setup = EdgeSetup {
            dim: 1,
            l: 4,
            coupling: 1.0,
            generator: GeneratorSpec::IidUniform {
                low: 0.0,
                high: 0.0,
            },
            seed: 1,
            workers: 1,
        };
        assert!(lifshitz_stats(&setup, 0.1, &[], 5).is_err());
        setup.generator = GeneratorSpec::IidUniform {
            low: -1.0,
            high: 1.0,
        };
        assert!(lifshitz_stats(&setup, 0.1, &[], 5).is_err());
    }

    #[test]
    fn far_band_is_never_singular() {
        let setup = EdgeSetup {
            dim: 1,
            l: 8,
            coupling: 1.0,
            generator: GeneratorSpec::uniform(),
            seed: 6,
            workers: 1,
        };
        let rep = low_energy_singularity_estimate(
            &setup,
            &ScaleParams::default(),
            -30.0,
            &[1.0],
            0.5,
            20,
        )
        .unwrap();
        assert_eq!(rep.bands[0].estimate.hits, 0);
    }

    #[test]
    fn bulk_band_at_weak_disorder() {
        let setup = EdgeSetup {
            dim: 1,
            l: 8,
            coupling: 0.1,
            generator: GeneratorSpec::uniform(),
            seed: 6,
            workers: 1,
        };
        let e0 = pilot_edge(&setup, 5).unwrap();
        let rep = low_energy_singularity_estimate(
            &setup,
            &ScaleParams::default(),
            e0,
            &[0.05, 0.5, 4.0],
            edge_mass(1.0, 8),
            20,
        )
        .unwrap();
        assert_eq!(rep.monotonicity_failures, 0);
        assert!(rep.bands[2].estimate.p_hat > 0.9);
        assert!(rep
            .bands
            .windows(2)
            .all(|w| w[0].estimate.hits <= w[1].estimate.hits));
    }
}
