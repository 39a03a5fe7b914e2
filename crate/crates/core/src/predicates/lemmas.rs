//! Sample-level checks of the deterministic implications between predicates.
//! Each lemma is classified as precondition-unmet, holds or violated.

use serde::{Deserialize, Serialize};

use super::scan::{
    hull_grid, is_m_tunneling, pr_set, SingularFamily, TunnelingVariant, MAX_UNIFORM_POINTS,
};
use super::workspace::SampleWorkspace;
use super::{LocWitness, PairWitness, ScaleParams};
use crate::error::{Error, Result};
use crate::lattice::LatticeBall;
use crate::spectral::nearest_in;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaId {
    /// loc and E-NR (with the volume gate) imply (E,m)-NS.
    LocNrImpliesNs,
    /// E-CNR and no disjoint singular pair of sub-balls imply NS.
    CnrNoPairImpliesNs,
    /// m-NT and E-CNR imply NS.
    NtCnrImpliesNs,
    /// No disjoint singular pair at any energy implies loc.
    NoPairImpliesLoc,
    /// Correlated setting: m-NT and E-NR imply NS.
    CorrNtNrImpliesNs,
    /// Correlated setting: m-NT implies loc.
    CorrNtImpliesLoc,
}

impl LemmaId {
    pub const ALL: [LemmaId; 6] = [
        LemmaId::LocNrImpliesNs,
        LemmaId::CnrNoPairImpliesNs,
        LemmaId::NtCnrImpliesNs,
        LemmaId::NoPairImpliesLoc,
        LemmaId::CorrNtNrImpliesNs,
        LemmaId::CorrNtImpliesLoc,
    ];

    pub const IID: [LemmaId; 4] = [
        LemmaId::LocNrImpliesNs,
        LemmaId::CnrNoPairImpliesNs,
        LemmaId::NtCnrImpliesNs,
        LemmaId::NoPairImpliesLoc,
    ];

    pub const CORRELATED: [LemmaId; 2] = [LemmaId::CorrNtNrImpliesNs, LemmaId::CorrNtImpliesLoc];

    pub fn name(&self) -> &'static str {
        match self {
            LemmaId::LocNrImpliesNs => "loc-nr-implies-ns",
            LemmaId::CnrNoPairImpliesNs => "cnr-no-pair-implies-ns",
            LemmaId::NtCnrImpliesNs => "nt-cnr-implies-ns",
            LemmaId::NoPairImpliesLoc => "no-pair-implies-loc",
            LemmaId::CorrNtNrImpliesNs => "corr-nt-nr-implies-ns",
            LemmaId::CorrNtImpliesLoc => "corr-nt-implies-loc",
        }
    }

    pub fn needs_sub_radius(&self) -> bool {
        *self != LemmaId::LocNrImpliesNs
    }

    /// Whether the statement quantifies over a single energy.
    pub fn is_per_energy(&self) -> bool {
        !matches!(self, LemmaId::NoPairImpliesLoc | LemmaId::CorrNtImpliesLoc)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaVerdict {
    PreconditionUnmet,
    Holds,
    Violated,
}

/// The volume gate `d ln(2L+1) ≤ L^β`; `boundary_absorbed` records the
/// stronger `ln(|∂B||B|) ≤ L^β`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub log_volume: f64,
    pub l_beta: f64,
    pub passed: bool,
    pub boundary_absorbed: bool,
}

impl GateReport {
    pub fn new(params: &ScaleParams, ball: &LatticeBall) -> GateReport {
        let l = ball.radius();
        let log_volume = params.dim as f64 * ((2 * l + 1) as f64).ln();
        let l_beta = params.l_beta(l);
        let absorbed = ((ball.boundary_size() * ball.len()) as f64).ln() <= l_beta;
        GateReport {
            log_volume,
            l_beta,
            passed: log_volume <= l_beta,
            boundary_absorbed: absorbed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaWitness {
    pub energy: Option<f64>,
    pub ns: Option<PairWitness>,
    pub nloc: Option<LocWitness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaOutcome {
    pub lemma: LemmaId,
    pub ball: LatticeBall,
    pub sub_radius: Option<u32>,
    pub variant: Option<TunnelingVariant>,
    pub verdict: LemmaVerdict,
    pub energies_checked: usize,
    /// Energies at which every precondition held.
    pub energies_met: usize,
    pub grid_limited: bool,
    pub gate: Option<GateReport>,
    pub unmet_reason: Option<String>,
    pub witness: Option<LemmaWitness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub variant: TunnelingVariant,
    pub max_uniform: usize,
    /// Cap on how far beyond the spectral hull the grid extends.
    pub max_extension: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            variant: TunnelingVariant::Disjoint,
            max_uniform: MAX_UNIFORM_POINTS,
            max_extension: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImplicationReport {
    pub energy: f64,
    pub outcomes: Vec<LemmaOutcome>,
}

struct Context {
    family: Option<SingularFamily>,
    pr: Option<super::PrSet>,
    nt_disjoint: Option<bool>,
    nt_variant: Option<bool>,
}

fn context(
    ws: &mut SampleWorkspace,
    big: &LatticeBall,
    sub: Option<u32>,
    lemmas: &[LemmaId],
    variant: TunnelingVariant,
) -> Result<Context> {
    let has = |ids: &[LemmaId]| lemmas.iter().any(|l| ids.contains(l));
    let need_sub = lemmas.iter().any(|l| l.needs_sub_radius());
    let l = match (sub, need_sub) {
        (Some(l), _) => l,
        (None, false) => 0,
        (None, true) => {
            return Err(Error::InvalidParameter(
                "these lemmas need a sub-ball radius".into(),
            ))
        }
    };
    let family = if has(&[LemmaId::CnrNoPairImpliesNs, LemmaId::NoPairImpliesLoc]) {
        Some(SingularFamily::new(ws, big, l)?)
    } else {
        None
    };
    let pr = if has(&[LemmaId::CnrNoPairImpliesNs, LemmaId::NtCnrImpliesNs]) {
        Some(pr_set(ws, big, None)?.0)
    } else {
        None
    };
    let nt_disjoint = if has(&[LemmaId::NtCnrImpliesNs])
        || (variant == TunnelingVariant::Disjoint && has(&LemmaId::CORRELATED))
    {
        Some(!is_m_tunneling(ws, big, l, TunnelingVariant::Disjoint)?.tunneling)
    } else {
        None
    };
    let nt_variant = if has(&LemmaId::CORRELATED) {
        match variant {
            TunnelingVariant::Disjoint => nt_disjoint,
            v => Some(!is_m_tunneling(ws, big, l, v)?.tunneling),
        }
    } else {
        None
    };
    Ok(Context {
        family,
        pr,
        nt_disjoint,
        nt_variant,
    })
}

fn evaluate(
    ws: &mut SampleWorkspace,
    big: &LatticeBall,
    sub: Option<u32>,
    lemmas: &[LemmaId],
    ctx: &Context,
    pts: &[f64],
    grid_limited: bool,
    variant: TunnelingVariant,
) -> Result<Vec<LemmaOutcome>> {
    let params = ws.params().clone();
    let t = params.resonance_threshold(big.radius());
    let top = ws.profile(big)?;
    let loc = ws.localization(big)?;
    let eigs = top.spectral().eigenvalues().to_vec();
    let nr: Vec<bool> = pts
        .iter()
        .map(|&e| eigs.is_empty() || !(nearest_in(&eigs, e).0 < t))
        .collect();
    let cnr: Vec<bool> = match &ctx.pr {
        Some(p) => pts.iter().map(|&e| !p.contains(e)).collect(),
        None => Vec::new(),
    };
    let mut pair = vec![false; pts.len()];
    if let Some(f) = &ctx.family {
        for (i, _) in f.pair_indices(pts) {
            pair[i] = true;
        }
    }
    let top_candidates = top.candidates(pts);

    let mut out = Vec::new();
    for &lemma in lemmas {
        let mut o = LemmaOutcome {
            lemma,
            ball: *big,
            sub_radius: if lemma.needs_sub_radius() { sub } else { None },
            variant: if matches!(
                lemma,
                LemmaId::CorrNtNrImpliesNs | LemmaId::CorrNtImpliesLoc
            ) {
                Some(variant)
            } else {
                None
            },
            verdict: LemmaVerdict::PreconditionUnmet,
            energies_checked: pts.len(),
            energies_met: 0,
            grid_limited,
            gate: None,
            unmet_reason: None,
            witness: None,
        };
        let met: Option<Vec<bool>> = match lemma {
            LemmaId::LocNrImpliesNs => {
                let gate = GateReport::new(&params, big);
                let ok = gate.passed;
                o.gate = Some(gate);
                if !ok {
                    o.unmet_reason = Some("volume gate fails".into());
                    None
                } else if !loc.localized {
                    o.unmet_reason = Some("ball is m-nloc".into());
                    None
                } else {
                    Some(nr.clone())
                }
            }
            LemmaId::CnrNoPairImpliesNs => {
                Some((0..pts.len()).map(|i| cnr[i] && !pair[i]).collect())
            }
            LemmaId::NtCnrImpliesNs => {
                if ctx.nt_disjoint == Some(true) {
                    Some(cnr.clone())
                } else {
                    o.unmet_reason = Some("ball is m-tunneling".into());
                    None
                }
            }
            LemmaId::CorrNtNrImpliesNs => {
                if ctx.nt_variant == Some(true) {
                    Some(nr.clone())
                } else {
                    o.unmet_reason = Some("ball is m-tunneling".into());
                    None
                }
            }
            LemmaId::NoPairImpliesLoc | LemmaId::CorrNtImpliesLoc => {
                let ok = if lemma == LemmaId::NoPairImpliesLoc {
                    o.energies_met = pair.iter().filter(|p| !**p).count();
                    !pair.iter().any(|p| *p)
                } else {
                    ctx.nt_variant == Some(true)
                };
                if ok {
                    o.verdict = if loc.localized {
                        LemmaVerdict::Holds
                    } else {
                        LemmaVerdict::Violated
                    };
                    if !loc.localized {
                        o.witness = Some(LemmaWitness {
                            energy: None,
                            ns: None,
                            nloc: loc.worst.clone(),
                        });
                    }
                } else {
                    o.unmet_reason = Some(if lemma == LemmaId::NoPairImpliesLoc {
                        "disjoint singular pair exists".into()
                    } else {
                        "ball is m-tunneling".into()
                    });
                }
                out.push(o);
                continue;
            }
        };
        if let Some(met) = met {
            o.energies_met = met.iter().filter(|m| **m).count();
            if o.energies_met == 0 {
                o.unmet_reason
                    .get_or_insert_with(|| "no energy meets the preconditions".into());
            } else {
                o.verdict = LemmaVerdict::Holds;
                for &i in &top_candidates {
                    if met[i] && top.is_singular(pts[i]) {
                        let v = top.verdict(pts[i])?;
                        o.verdict = LemmaVerdict::Violated;
                        o.witness = Some(LemmaWitness {
                            energy: Some(pts[i]),
                            ns: v.worst,
                            nloc: None,
                        });
                        break;
                    }
                }
            }
        }
        out.push(o);
    }
    Ok(out)
}

/// Outcome for a lemma whose volume gate fails, decided without any eigensolve.
fn gated_out(
    params: &ScaleParams,
    big: &LatticeBall,
    lemma: LemmaId,
    energies: usize,
) -> Option<LemmaOutcome> {
    if lemma != LemmaId::LocNrImpliesNs {
        return None;
    }
    let gate = GateReport::new(params, big);
    if gate.passed {
        return None;
    }
    Some(LemmaOutcome {
        lemma,
        ball: *big,
        sub_radius: None,
        variant: None,
        verdict: LemmaVerdict::PreconditionUnmet,
        energies_checked: energies,
        energies_met: 0,
        grid_limited: false,
        gate: Some(gate),
        unmet_reason: Some("volume gate fails".into()),
        witness: None,
    })
}

/// Splits off gated-out lemmas, runs the rest and restores the input order.
fn with_gate(
    ws: &mut SampleWorkspace,
    big: &LatticeBall,
    lemmas: &[LemmaId],
    energies: usize,
    run: impl FnOnce(&mut SampleWorkspace, &[LemmaId]) -> Result<Vec<LemmaOutcome>>,
) -> Result<Vec<LemmaOutcome>> {
    let params = ws.params().clone();
    let gated: Vec<Option<LemmaOutcome>> = lemmas
        .iter()
        .map(|&l| gated_out(&params, big, l, energies))
        .collect();
    let rest: Vec<LemmaId> = lemmas
        .iter()
        .zip(&gated)
        .filter(|(_, g)| g.is_none())
        .map(|(l, _)| *l)
        .collect();
    let mut done = if rest.is_empty() {
        Vec::new()
    } else {
        run(ws, &rest)?
    }
    .into_iter();
    Ok(gated
        .into_iter()
        .map(|g| g.unwrap_or_else(|| done.next().expect("one outcome per lemma")))
        .collect())
}

/// Evaluates the E-dependent lemmas at one energy for the scale pair
/// `(big radius, sub_radius)`.
pub fn deterministic_implication_check(
    ws: &mut SampleWorkspace,
    big: &LatticeBall,
    sub_radius: u32,
    e: f64,
    variant: TunnelingVariant,
) -> Result<ImplicationReport> {
    let lemmas: Vec<LemmaId> = LemmaId::ALL
        .iter()
        .copied()
        .filter(|l| l.is_per_energy())
        .collect();
    let outcomes = with_gate(ws, big, &lemmas, 1, |ws, lemmas| {
        let ctx = context(ws, big, Some(sub_radius), lemmas, variant)?;
        evaluate(
            ws,
            big,
            Some(sub_radius),
            lemmas,
            &ctx,
            &[e],
            false,
            variant,
        )
    })?;
    Ok(ImplicationReport {
        energy: e,
        outcomes,
    })
}

/// Evaluates lemmas over an energy grid spanning the relevant spectra:
/// eigenvalues, midpoints, resonance-interval endpoints and a lattice of
/// step `e^{-L^β}/2`.
pub fn lemma_sweep(
    ws: &mut SampleWorkspace,
    big: &LatticeBall,
    sub_radius: Option<u32>,
    lemmas: &[LemmaId],
    opts: &SweepOptions,
) -> Result<Vec<LemmaOutcome>> {
    with_gate(ws, big, lemmas, 0, |ws, lemmas| {
        sweep(ws, big, sub_radius, lemmas, opts)
    })
}

fn sweep(
    ws: &mut SampleWorkspace,
    big: &LatticeBall,
    sub_radius: Option<u32>,
    lemmas: &[LemmaId],
    opts: &SweepOptions,
) -> Result<Vec<LemmaOutcome>> {
    let ctx = context(ws, big, sub_radius, lemmas, opts.variant)?;
    let t = ws.params().resonance_threshold(big.radius());
    let top = ws.profile(big)?;
    let mut spectra: Vec<&[f64]> = vec![top.spectral().eigenvalues()];
    let mut max_window = top.window();
    if let Some(f) = &ctx.family {
        spectra.extend(f.spectra());
        max_window = max_window.max(f.max_window());
    }
    let mut extra: Vec<f64> = top
        .spectral()
        .eigenvalues()
        .iter()
        .flat_map(|&e| [e - t, e + t])
        .collect();
    if let Some(p) = &ctx.pr {
        extra.extend(p.endpoints());
    }
    let grid = hull_grid(
        &spectra,
        max_window,
        t,
        &extra,
        opts.max_extension,
        opts.max_uniform,
    )?;
    let limited = grid.grid_limited();
    evaluate(
        ws,
        big,
        sub_radius,
        lemmas,
        &ctx,
        grid.points(),
        limited,
        opts.variant,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{sample, GeneratorSpec, PotentialField};
    use crate::operator::Model;

    fn ws(dim: usize, l: u32, g: f64, seed: u64) -> SampleWorkspace {
        let f = sample(
            &LatticeBall::centered(dim, l),
            &GeneratorSpec::uniform(),
            0,
            seed,
        )
        .unwrap();
        SampleWorkspace::new(f, Model::new(g), ScaleParams::default().with_dim(dim)).unwrap()
    }

    #[test]
    fn gate_arithmetic() {
        let p = ScaleParams::default();
        let g = GateReport::new(&p, &LatticeBall::centered(1, 16));
        assert!(g.passed && (g.log_volume - 33f64.ln()).abs() < 1e-12);
        assert!(!g.boundary_absorbed);
        let g2 = GateReport::new(&p.with_dim(2), &LatticeBall::centered(2, 16));
        assert!(!g2.passed);
        assert!(!GateReport::new(&p, &LatticeBall::centered(1, 8)).passed);
    }

    #[test]
    fn strong_disorder_sweep_holds() {
        for seed in 0..3 {
            let mut w = ws(1, 17, 100.0, seed);
            let b = *w.field().ball();
            let out =
                lemma_sweep(&mut w, &b, Some(8), &LemmaId::ALL, &SweepOptions::default()).unwrap();
            assert_eq!(out.len(), 6);
            for o in &out {
                assert_ne!(o.verdict, LemmaVerdict::Violated, "{o:?}");
            }
            assert_eq!(out[0].verdict, LemmaVerdict::Holds);
            assert!(out[0].energies_met > 0);
        }
    }

    #[test]
    fn two_dimensional_gate_unmet() {
        let mut w = ws(2, 16, 100.0, 0);
        let b = *w.field().ball();
        let out = lemma_sweep(
            &mut w,
            &b,
            None,
            &[LemmaId::LocNrImpliesNs],
            &SweepOptions::default(),
        )
        .unwrap();
        assert_eq!(out[0].verdict, LemmaVerdict::PreconditionUnmet);
        assert_eq!(w.eigensolves(), 0);
    }

    #[test]
    fn nloc_ball_is_unmet_not_violated() {
        let f = PotentialField::from_values(LatticeBall::centered(1, 16), vec![0.0; 33]).unwrap();
        let mut w = SampleWorkspace::new(f, Model::new(0.0), ScaleParams::default()).unwrap();
        let b = *w.field().ball();
        let out = lemma_sweep(
            &mut w,
            &b,
            None,
            &[LemmaId::LocNrImpliesNs],
            &SweepOptions::default(),
        )
        .unwrap();
        assert_eq!(out[0].verdict, LemmaVerdict::PreconditionUnmet);
        assert_eq!(out[0].unmet_reason.as_deref(), Some("ball is m-nloc"));
    }

    #[test]
    fn per_energy_report() {
        let mut w = ws(1, 17, 100.0, 4);
        let b = *w.field().ball();
        let r = deterministic_implication_check(&mut w, &b, 8, 37.3, TunnelingVariant::Disjoint)
            .unwrap();
        assert_eq!(r.outcomes.len(), 4);
        assert!(r
            .outcomes
            .iter()
            .all(|o| o.energies_checked == 1 && o.verdict != LemmaVerdict::Violated));
        assert!(lemma_sweep(
            &mut w,
            &b,
            None,
            &[LemmaId::NoPairImpliesLoc],
            &SweepOptions::default()
        )
        .is_err());
    }
}
