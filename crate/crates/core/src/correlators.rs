//! Eigenfunction correlators, the finite-volume dynamical-localization bound
//! and the localization-center decay proxy.

use serde::{Deserialize, Serialize};

use crate::disorder::{sample, GeneratorSpec};
use crate::error::{Error, Result};
use crate::lattice::{Ball, LatticeBall, Site};
use crate::montecarlo::run_samples;
use crate::operator::Model;
use crate::predicates::{first_singular_pair, MiWitness};
use crate::predicates::{
    EnergyGrid, SampleWorkspace, ScaleParams, SingularFamily, MAX_UNIFORM_POINTS,
};
use crate::spectral::{eig, Interval, SpectralData};
use crate::stats::{mean_se, MonteCarloEstimate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorRecord {
    pub x: Site,
    pub y: Site,
    pub interval: Interval,
    /// `Σ_{E_i ∈ I} |ψ_i(x)| |ψ_i(y)|`.
    pub q: f64,
    pub distance: u32,
    /// Two eigenvalues in `I` closer than `1e-10·‖H‖`; `q` then depends on
    /// the basis chosen inside the eigenspace.
    pub degenerate: bool,
}

pub fn ef_correlator(
    sd: &SpectralData,
    x: &Site,
    y: &Site,
    interval: Interval,
) -> Result<CorrelatorRecord> {
    let i = sd.index_of(x)?;
    let k = sd.index_of(y)?;
    let ev = sd.eigenvalues();
    let inside: Vec<usize> = (0..sd.len())
        .filter(|&j| interval.contains(ev[j]))
        .collect();
    let q = inside
        .iter()
        .map(|&j| (sd.amp(i, j) * sd.amp(k, j)).abs())
        .sum();
    let tol = 1e-10 * sd.h_norm().max(1.0);
    let degenerate = inside.windows(2).any(|w| ev[w[1]] - ev[w[0]] < tol);
    Ok(CorrelatorRecord {
        x: *x,
        y: *y,
        interval,
        q,
        distance: x.max_dist(y),
        degenerate,
    })
}

/// One field on `Λ = B_R(0)`, correlator between `x` and `y`, and the event
/// that `B_L(x)` and `B_L(y)` are both `(E, m)`-singular for some `E ∈ I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DlSetup {
    pub params: ScaleParams,
    pub model: Model,
    pub generator: GeneratorSpec,
    pub l: u32,
    pub ambient_radius: u32,
    pub x: Site,
    pub y: Site,
    pub interval: Interval,
    pub seed: u64,
    pub workers: usize,
}

impl DlSetup {
    /// `Λ = B_25`, `x = -9 e_1`, `y = 9 e_1`, `L = 8`, `I = ℝ`.
    pub fn standard(
        params: ScaleParams,
        model: Model,
        generator: GeneratorSpec,
        seed: u64,
    ) -> DlSetup {
        let d = params.dim;
        DlSetup {
            params,
            model,
            generator,
            l: 8,
            ambient_radius: 25,
            x: Site::on_axis(d, -9),
            y: Site::on_axis(d, 9),
            interval: Interval::everything(),
            seed,
            workers: 1,
        }
    }

    fn geometry(&self) -> Result<(LatticeBall, LatticeBall, LatticeBall)> {
        let d = self.params.dim;
        if self.x.dim() != d || self.y.dim() != d {
            return Err(Error::DimensionMismatch {
                left: d,
                right: if self.x.dim() != d {
                    self.x.dim()
                } else {
                    self.y.dim()
                },
            });
        }
        let ambient = Ball::new(Site::origin(d), self.ambient_radius);
        let (bx, by) = (Ball::new(self.x, self.l), Ball::new(self.y, self.l));
        if !(bx.is_inside(&ambient) && by.is_inside(&ambient)) {
            return Err(Error::InvalidGeometry(format!(
                "{bx} and {by} must lie inside {ambient}"
            )));
        }
        if self.x.max_dist(&self.y) <= 2 * self.l + 1 {
            return Err(Error::InvalidGeometry(format!(
                "dist({}, {}) = {} must exceed 2L+1 = {}",
                self.x,
                self.y,
                self.x.max_dist(&self.y),
                2 * self.l + 1
            )));
        }
        let a = LatticeBall::unclipped(ambient);
        Ok((
            a,
            LatticeBall::new(bx, Some(ambient))?,
            LatticeBall::new(by, Some(ambient))?,
        ))
    }

    /// `2|S| e^{-mL}` with `|S|` the larger boundary of the two balls.
    pub fn deterministic_bound(&self) -> Result<f64> {
        let (_, bx, by) = self.geometry()?;
        let s = bx.boundary_size().max(by.boundary_size()) as f64;
        Ok(2.0 * s * (-self.params.m * self.l as f64).exp())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DlSample {
    pub sample_index: u64,
    pub q: f64,
    pub degenerate: bool,
    pub pair_singular: Option<MiWitness>,
    pub grid_limited: bool,
    /// `q ≤ 2|S|e^{-mL}` (informational; only implied off the singular event).
    pub within_deterministic_bound: bool,
}

fn pair_event(
    ws: &mut SampleWorkspace,
    bx: LatticeBall,
    by: LatticeBall,
    interval: Interval,
) -> Result<(Option<MiWitness>, bool)> {
    let fam = SingularFamily::from_balls(ws, vec![bx, by])?;
    if !(interval.lo.is_finite() && interval.hi.is_finite()) {
        return first_singular_pair(ws, &fam);
    }
    let t = ws.params().resonance_threshold(fam.radius());
    let grid = EnergyGrid::build(&fam.spectra(), interval, t / 2.0, &[], MAX_UNIFORM_POINTS)?;
    let w = fam
        .first_pair(grid.points())
        .map(|(idx, (a, b))| MiWitness {
            energy: grid.points()[idx],
            first: fam.balls()[a].center(),
            second: fam.balls()[b].center(),
        });
    Ok((w, grid.grid_limited()))
}

fn dl_sample(setup: &DlSetup, seed: u64, index: u64, bound: f64) -> Result<DlSample> {
    let (a, bx, by) = setup.geometry()?;
    let field = sample(&a, &setup.generator, index, seed)?;
    let mut ws = SampleWorkspace::new(field, setup.model, setup.params.clone())?;
    let sd = ws.spectral(&a)?;
    let rec = ef_correlator(&sd, &setup.x, &setup.y, setup.interval)?;
    let (pair_singular, grid_limited) = pair_event(&mut ws, bx, by, setup.interval)?;
    Ok(DlSample {
        sample_index: index,
        q: rec.q,
        degenerate: rec.degenerate,
        pair_singular,
        grid_limited,
        within_deterministic_bound: rec.q <= bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DlReport {
    pub samples: u64,
    pub mean_q: f64,
    pub se_q: f64,
    pub boundary_size: usize,
    /// `2|S| e^{-mL}`.
    pub deterministic_bound: f64,
    /// Frequency of the pair-singular event on the same samples.
    pub f_hat: MonteCarloEstimate,
    /// `mean_q ≤ deterministic_bound + f_hat + 3·se`.
    pub holds: bool,
    /// Samples outside the singular event with `q` above the deterministic bound.
    pub off_event_excess: u64,
    /// `C` with `C L^d e^{-mL}` matching the largest off-event `q` of a
    /// calibration run on a disjoint seed set.
    pub fitted_c: Option<f64>,
    pub holds_with_fitted_c: Option<bool>,
    pub grid_limited_samples: u64,
}

const CALIBRATION_SALT: u64 = 0x5eed_ca11_b4a7_e000;

pub fn dl_bound_check(
    setup: &DlSetup,
    n: u64,
    calibration: u64,
) -> Result<(DlReport, Vec<DlSample>)> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    setup.params.validate()?;
    setup.model.validate()?;
    setup.generator.validate(setup.params.dim)?;
    let (_, bx, by) = setup.geometry()?;
    let bound = setup.deterministic_bound()?;
    let samples = run_samples(n, setup.workers, |i| dl_sample(setup, setup.seed, i, bound))?;
    let qs: Vec<f64> = samples.iter().map(|s| s.q).collect();
    let (mean_q, se_q) = mean_se(&qs);
    let se = if se_q.is_finite() { se_q } else { 0.0 };
    let flags: Vec<bool> = samples.iter().map(|s| s.pair_singular.is_some()).collect();
    let f_hat =
        MonteCarloEstimate::from_flags(format!("pair-singular L={}", setup.l), &flags, setup.seed);
    let holds = mean_q <= bound + f_hat.p_hat + 3.0 * se;
    let off_event_excess = samples
        .iter()
        .filter(|s| s.pair_singular.is_none() && !s.within_deterministic_bound)
        .count() as u64;

    let scale =
        (setup.l as f64).powi(setup.params.dim as i32) * (-setup.params.m * setup.l as f64).exp();
    let fitted_c = if calibration > 0 {
        let cal = run_samples(calibration, setup.workers, |i| {
            dl_sample(setup, setup.seed ^ CALIBRATION_SALT, i, bound)
        })?;
        Some(
            cal.iter()
                .filter(|s| s.pair_singular.is_none())
                .map(|s| s.q / scale)
                .fold(0.0, f64::max),
        )
    } else {
        None
    };
    let holds_with_fitted_c = fitted_c.map(|c| mean_q <= c * scale + f_hat.p_hat + 3.0 * se);
    let report = DlReport {
        samples: n,
        mean_q,
        se_q: se,
        boundary_size: bx.boundary_size().max(by.boundary_size()),
        deterministic_bound: bound,
        f_hat,
        holds,
        off_event_excess,
        fitted_c,
        holds_with_fitted_c,
        grid_limited_samples: samples.iter().filter(|s| s.grid_limited).count() as u64,
    };
    Ok((report, samples))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub eigen_index: usize,
    pub energy: f64,
    /// First site (in lexicographic order) where `|ψ|` is largest.
    pub center: Site,
    /// Least-squares slope of `-ln|ψ(y)|` against `‖y - center‖` over sites
    /// at distance `≥ ⌈L^{7/8}⌉`; `None` with fewer than two distinct distances.
    pub rate: Option<f64>,
    pub max_residual: Option<f64>,
    pub qualifying: usize,
    /// `|ψ(y)| ≤ e^{-m‖y - center‖}` at every qualifying `y`.
    pub passes: bool,
    /// Largest `ln|ψ(y)| + m‖y - center‖` over qualifying `y`.
    pub worst_log_margin: Option<f64>,
}

pub fn decay_fit(sd: &SpectralData, params: &ScaleParams) -> Vec<DecayFit> {
    let ball = sd.ball();
    let floor = params.distance_floor(ball.radius());
    let sites = ball.sites();
    (0..sd.len())
        .map(|j| {
            let mut c = 0;
            for i in 1..sd.len() {
                if sd.amp(i, j).abs() > sd.amp(c, j).abs() {
                    c = i;
                }
            }
            let center = sites[c];
            let mut pts: Vec<(f64, f64)> = Vec::new();
            let mut worst: Option<f64> = None;
            for (i, y) in sites.iter().enumerate() {
                let dist = center.max_dist(y);
                if dist < floor {
                    continue;
                }
                let a = sd.amp(i, j).abs();
                let la = if a > 0.0 { a.ln() } else { f64::NEG_INFINITY };
                let margin = la + params.m * dist as f64;
                worst = Some(worst.map_or(margin, |w: f64| w.max(margin)));
                if a > 0.0 {
                    pts.push((dist as f64, la));
                }
            }
            let qualifying = sites.iter().filter(|y| center.max_dist(y) >= floor).count();
            let (rate, max_residual) = fit_line(&pts);
            DecayFit {
                eigen_index: j,
                energy: sd.eigenvalues()[j],
                center,
                rate,
                max_residual,
                qualifying,
                passes: worst.map_or(true, |w| w <= 0.0),
                worst_log_margin: worst,
            }
        })
        .collect()
}

/// Slope `-b` and largest residual of the least-squares line `ln|ψ| = a + b·r`.
fn fit_line(pts: &[(f64, f64)]) -> (Option<f64>, Option<f64>) {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (None, None);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return (None, None);
    }
    let b = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let a = my - b * mx;
    let res = pts
        .iter()
        .map(|p| (p.1 - a - b * p.0).abs())
        .fold(0.0, f64::max);
    (Some(-b), Some(res))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecaySurvey {
    pub radius: u32,
    pub samples: u64,
    pub eigenfunctions: u64,
    pub passed: u64,
    pub fraction: f64,
    /// Fitted rates of every eigenfunction with a fit, in sample order.
    pub rates: Vec<f64>,
}

/// Decay fits of every eigenfunction of `B_L(0)` over `n` samples.
pub fn decay_survey(
    params: &ScaleParams,
    model: Model,
    generator: &GeneratorSpec,
    l: u32,
    n: u64,
    seed: u64,
    workers: usize,
) -> Result<DecaySurvey> {
    params.validate()?;
    model.validate()?;
    generator.validate(params.dim)?;
    let ball = LatticeBall::centered(params.dim, l);
    let fits = run_samples(n, workers, |i| {
        let field = sample(&ball, generator, i, seed)?;
        Ok(decay_fit(&eig(&model.assemble(&ball, &field)?)?, params))
    })?;
    let all: Vec<&DecayFit> = fits.iter().flatten().collect();
    let passed = all.iter().filter(|f| f.passes).count() as u64;
    Ok(DecaySurvey {
        radius: l,
        samples: n,
        eigenfunctions: all.len() as u64,
        passed,
        fraction: passed as f64 / all.len().max(1) as f64,
        rates: all.iter().filter_map(|f| f.rate).collect(),
    })
}

/// Histogram of rates on `bins` equal bins over `[lo, hi)`; values outside are clamped.
pub fn rate_histogram(rates: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, u64)> {
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &r in rates {
        let b = (((r - lo) / w).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * w, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::PotentialField;
    use crate::spectral::apply_function;
    use rand::{Rng, SeedableRng};

    fn sd_of(values: Vec<f64>, g: f64) -> SpectralData {
        let r = (values.len() as u32 - 1) / 2;
        let ball = LatticeBall::centered(1, r);
        let v = PotentialField::from_values(ball, values).unwrap();
        eig(&Model::new(g).assemble(&ball, &v).unwrap()).unwrap()
    }

    #[test]
    fn two_site_correlator() {
        let ball = LatticeBall::new(
            Ball::new(Site::origin(1), 1),
            Some(Ball::new(Site::on_axis(1, 1), 1)),
        )
        .unwrap();
        assert_eq!(ball.len(), 2);
        let v = PotentialField::from_values(ball, vec![0.0, 0.0]).unwrap();
        let sd = eig(&Model::new(0.0).assemble(&ball, &v).unwrap()).unwrap();
        let r = ef_correlator(
            &sd,
            &Site::origin(1),
            &Site::on_axis(1, 1),
            Interval::everything(),
        )
        .unwrap();
        assert!((r.q - 1.0).abs() < 1e-14);
    }

    #[test]
    fn parseval_and_empty_interval() {
        let sd = sd_of(vec![0.3, 0.9, 0.1, 0.5, 0.7], 2.0);
        let o = Site::origin(1);
        let r = ef_correlator(&sd, &o, &o, Interval::everything()).unwrap();
        assert!((r.q - 1.0).abs() < 1e-13);
        let r = ef_correlator(&sd, &o, &Site::on_axis(1, 2), Interval::new(100.0, 101.0)).unwrap();
        assert_eq!(r.q, 0.0);
    }

    #[test]
    fn sup_dominance() {
        let sd = sd_of(vec![0.3, 0.9, 0.1, 0.5, 0.7, 0.2, 0.4], 1.5);
        let (x, y) = (Site::on_axis(1, -2), Site::on_axis(1, 3));
        let i = Interval::new(-1.0, 2.0);
        let q = ef_correlator(&sd, &x, &y, i).unwrap().q;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let coeffs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let phi = |e: f64| {
                (coeffs[0] + coeffs[1] * e.sin() + coeffs[2] * (3.0 * e).cos() + coeffs[3] * e * e)
                    .tanh()
            };
            let v = apply_function(&sd, phi, i, &x, &y).unwrap();
            assert!(v.abs() <= q + 1e-12);
        }
        let signs = |e: f64| {
            let j = sd.nearest(e).1;
            (sd.amp(sd.index_of(&x).unwrap(), j) * sd.amp(sd.index_of(&y).unwrap(), j)).signum()
        };
        assert!((apply_function(&sd, signs, i, &x, &y).unwrap() - q).abs() < 1e-12);
    }

    #[test]
    fn delta_eigenvectors_pass() {
        let sd = sd_of((0..17).map(|i| i as f64).collect(), 1e9);
        let fits = decay_fit(&sd, &ScaleParams::default());
        assert!(fits.iter().all(|f| f.passes));
        assert_eq!(fits[0].center, Site::on_axis(1, -8));
    }

    #[test]
    fn extended_states_fail() {
        let sd = sd_of(vec![0.0; 89], 0.0);
        let fits = decay_fit(&sd, &ScaleParams::default());
        let failing = fits.iter().filter(|f| !f.passes).count();
        assert!(failing * 2 > fits.len());
        let mean_rate: f64 = fits
            .iter()
            .filter_map(|f| f.rate)
            .map(f64::abs)
            .sum::<f64>()
            / fits.len() as f64;
        assert!(mean_rate < 0.1, "{mean_rate}");
    }

    #[test]
    fn geometry_is_checked() {
        let mut s = DlSetup::standard(
            ScaleParams::default(),
            Model::new(100.0),
            GeneratorSpec::uniform(),
            1,
        );
        assert!(s.deterministic_bound().is_ok());
        s.y = Site::on_axis(1, 8);
        assert!(matches!(
            s.deterministic_bound(),
            Err(Error::InvalidGeometry(_))
        ));
        s.y = Site::on_axis(1, 20);
        assert!(matches!(
            s.deterministic_bound(),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn dl_bound_small_run() {
        let s = DlSetup::standard(
            ScaleParams::default(),
            Model::new(100.0),
            GeneratorSpec::uniform(),
            2,
        );
        let (rep, _) = dl_bound_check(&s, 20, 10).unwrap();
        assert!(rep.holds);
        assert_eq!(rep.boundary_size, 2);
        assert!((rep.deterministic_bound - 4.0 * (-8.0f64).exp()).abs() < 1e-15);
        let s0 = DlSetup {
            model: Model::new(0.0),
            ..s
        };
        let (rep0, _) = dl_bound_check(&s0, 5, 0).unwrap();
        assert!(rep0.holds && rep0.f_hat.p_hat > 0.5);
    }

    #[test]
    fn histogram_counts_everything() {
        let h = rate_histogram(&[0.1, 0.5, 0.9, 5.0, -1.0], 0.0, 1.0, 4);
        assert_eq!(h.iter().map(|b| b.1).sum::<u64>(), 5);
        assert_eq!(h[0].1, 2);
    }
}
