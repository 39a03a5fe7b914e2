//! Subcommand drivers. Each returns the records, tables and text it produced;
//! nothing is written here.

use std::fmt::Write as _;

use anyhow::Result;
use locscale_core::correlators::{decay_survey, dl_bound_check, rate_histogram, DlSetup};
use locscale_core::disorder::sample;
use locscale_core::edge_bounds::{
    combes_thomas_sweep, default_thresholds, edge_mass, lifshitz_stats,
    low_energy_singularity_estimate, pilot_edge, EdgeSetup,
};
use locscale_core::lattice::{LatticeBall, Site};
use locscale_core::montecarlo::run_samples;
use locscale_core::predicates::{
    classify_ball, deterministic_implication_check, LemmaOutcome, LemmaVerdict, SampleWorkspace,
};
use locscale_core::records::Record;
use locscale_core::scaling::{
    compare_to_target, run_induction, InductionConfig, InductionSetup, TargetComparison,
};
use locscale_core::spectral::{gri_fuzz_instance, Interval};
use locscale_core::stats::MonteCarloEstimate;
use locscale_core::wegner::{
    estimate_pair_resonance, estimate_single_resonance, single_site_pair_probability,
    single_site_resonance_probability, wegner_bound, WegnerSetup,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::output::{fmt_f, RunOutput, Table};

pub struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    pub seed: u64,
    pub workers: usize,
}

fn verdict_name(v: impl Serialize) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

fn flag(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Some(b), Value::Object(e)) = (base.as_object_mut(), extra) {
        b.extend(e);
    }
    base
}

/// Estimate record; `data` carries the counts so runs can be pooled.
fn estimate_record(
    seed: u64,
    id: &str,
    verdict: &str,
    est: &MonteCarloEstimate,
    extra: Value,
) -> Record {
    Record::new(seed, None, "estimate", id, verdict).with_data(merge(
        serde_json::to_value(est).expect("serializable"),
        extra,
    ))
}

fn estimate_row(g: f64, id: &str, est: &MonteCarloEstimate) -> Vec<String> {
    vec![
        fmt_f(g),
        id.to_string(),
        est.trials.to_string(),
        est.hits.to_string(),
        fmt_f(est.p_hat),
        fmt_f(est.ci_low),
        fmt_f(est.ci_high),
    ]
}

const ESTIMATE_HEADER: [&str; 7] = ["g", "event", "trials", "hits", "p_hat", "ci_low", "ci_high"];

fn lemma_record(seed: u64, index: u64, g: f64, o: &LemmaOutcome) -> Record {
    let scope = match o.sub_radius {
        Some(l) => format!("L={},l={l}", o.ball.radius()),
        None => format!("L={}", o.ball.radius()),
    };
    Record::new(
        seed,
        Some(index),
        "lemma",
        o.lemma.name(),
        verdict_name(o.verdict),
    )
    .with_witness(&o.witness)
    .with_data(merge(
        serde_json::to_value(o).expect("serializable"),
        json!({"g": g, "scope": scope}),
    ))
}

fn interval_of(iv: Option<[f64; 2]>) -> Interval {
    iv.map_or(Interval::everything(), |[lo, hi]| Interval::new(lo, hi))
}

pub fn classify(ctx: &Ctx) -> Result<RunOutput> {
    let cfg = ctx.cfg;
    let o = &cfg.classify;
    let gen = cfg.generator()?;
    let ball = LatticeBall::centered(cfg.dim(), o.radius);
    let mut out = RunOutput {
        complete: true,
        ..Default::default()
    };
    let mut table = Table::new("classify.csv", &ESTIMATE_HEADER);
    let mut text = format!(
        "classify: B_{}(0), d = {}, E = {}, {} samples\n",
        o.radius,
        cfg.dim(),
        o.energy,
        cfg.samples
    );
    for &g in &cfg.couplings {
        let model = cfg.model(g);
        let per = run_samples(cfg.samples, ctx.workers, |i| {
            let field = sample(&ball, &gen, i, ctx.seed)?;
            let mut ws = SampleWorkspace::new(field, model, cfg.params.clone())?;
            let iv = o.interval.map(|[lo, hi]| Interval::new(lo, hi));
            let v = classify_ball(&mut ws, &ball, o.energy, o.sub_radius, iv, o.variant)?;
            let lemmas = match (o.lemmas, o.sub_radius) {
                (true, Some(l)) => {
                    deterministic_implication_check(&mut ws, &ball, l, o.energy, o.variant)?
                        .outcomes
                }
                _ => Vec::new(),
            };
            Ok((v, lemmas))
        })?;
        let data = json!({"g": g, "radius": o.radius, "energy": o.energy});
        let mut flags: Vec<(&str, Vec<bool>)> = [
            "e-resonant",
            "e-cnr",
            "em-singular",
            "m-localized",
            "m-tunneling",
            "mi-tunneling",
        ]
        .iter()
        .map(|&n| (n, Vec::new()))
        .collect();
        for (i, (v, lemmas)) in per.iter().enumerate() {
            let i = i as u64;
            let w = &v.witnesses;
            let preds: [(&str, Option<bool>, Value); 6] = [
                ("e-resonant", Some(v.e_resonant), json!(w.resonant)),
                ("e-cnr", Some(v.e_cnr), json!(w.partially_resonant)),
                ("em-singular", Some(v.em_singular), json!(w.singular)),
                ("m-localized", Some(v.m_localized), json!(w.nloc)),
                ("m-tunneling", v.m_tunneling, json!(w.tunneling)),
                ("mi-tunneling", v.mi_tunneling, json!(w.mi_tunneling)),
            ];
            for (k, (id, val, wit)) in preds.into_iter().enumerate() {
                if let Some(b) = val {
                    out.samples.push(
                        Record::new(ctx.seed, Some(i), "predicate", id, flag(b))
                            .with_witness(wit)
                            .with_data(&data),
                    );
                    flags[k].1.push(b);
                }
            }
            for l in lemmas {
                out.violations += (l.verdict == LemmaVerdict::Violated) as u64;
                out.samples.push(lemma_record(ctx.seed, i, g, l));
            }
        }
        writeln!(text, "g = {g}")?;
        for (id, f) in &flags {
            if f.is_empty() {
                continue;
            }
            let label = format!("{id} g={g} L={} E={}", o.radius, o.energy);
            let est = MonteCarloEstimate::from_flags(&label, f, ctx.seed);
            writeln!(
                text,
                "  {id:<14} {:>6}/{:<6} p = {:.4} [{:.4}, {:.4}]",
                est.hits, est.trials, est.p_hat, est.ci_low, est.ci_high
            )?;
            table.push(estimate_row(g, id, &est));
            out.estimates.push(estimate_record(
                ctx.seed,
                &label,
                "estimate",
                &est,
                data.clone(),
            ));
        }
    }
    if o.lemmas {
        writeln!(text, "lemma violations: {}", out.violations)?;
    }
    out.tables.push(table);
    out.report = text;
    Ok(out)
}

pub fn induct(ctx: &Ctx) -> Result<RunOutput> {
    let cfg = ctx.cfg;
    let o = &cfg.induct;
    let gen = cfg.generator()?;
    let mut out = RunOutput {
        complete: true,
        ..Default::default()
    };
    let mut est_table = Table::new(
        "induction.csv",
        &[
            "g",
            "k",
            "L",
            "event",
            "trials",
            "hits",
            "p_hat",
            "ci_low",
            "ci_high",
            "target",
            "comparison",
        ],
    );
    let mut lemma_table = Table::new(
        "lemmas.csv",
        &[
            "g",
            "lemma",
            "radius",
            "sub_radius",
            "holds",
            "precondition_unmet",
            "violated",
            "grid_limited",
        ],
    );
    let mut text = String::new();
    let mut first_scale: Vec<(f64, MonteCarloEstimate)> = Vec::new();
    for &g in &cfg.couplings {
        let setup = InductionSetup {
            params: cfg.params.clone(),
            model: cfg.model(g),
            generator: gen.clone(),
            seed: ctx.seed,
            workers: ctx.workers,
            variant: o.variant,
            budget: o.budget,
        };
        let icfg = InductionConfig {
            setup,
            steps: o.steps,
            samples: cfg.samples,
            lemmas: o.lemmas.clone(),
        };
        let (rep, samples) = run_induction(&icfg)?;
        if text.is_empty() {
            writeln!(
                text,
                "induct: scales {:?}, d = {}, {} samples, variant {:?}",
                rep.schedule.lengths,
                cfg.dim(),
                cfg.samples,
                o.variant
            )?;
        }
        out.complete &= !rep.budget_exceeded;
        let viol = rep.violations() + rep.containment_counterexamples() + rep.witness_failures();
        out.violations += viol;

        for s in &samples {
            let i = s.sample_index;
            let base = json!({"g": g, "complete": s.complete, "eigensolves": s.eigensolves});
            if !s.complete {
                out.samples.push(
                    Record::new(ctx.seed, Some(i), "sample", "budget", "incomplete")
                        .with_data(&base),
                );
            }
            for (k, &nloc) in s.nloc.iter().enumerate() {
                let d = merge(base.clone(), json!({"k": k, "L": rep.schedule.lengths[k]}));
                out.samples.push(
                    Record::new(ctx.seed, Some(i), "event", format!("nloc({k})"), flag(nloc))
                        .with_witness(&s.nloc_witness[k])
                        .with_data(d),
                );
            }
            for k in 0..s
                .pair_singular
                .len()
                .min(s.pair_pr.len())
                .min(s.tunneling.len())
            {
                let d = merge(
                    base.clone(),
                    json!({"k": k, "L": rep.schedule.lengths[k], "big": rep.schedule.lengths[k + 1]}),
                );
                let ps = &s.pair_singular[k];
                out.samples.push(
                    Record::new(
                        ctx.seed,
                        Some(i),
                        "event",
                        format!("pair-s({k})"),
                        flag(ps.is_some()),
                    )
                    .with_witness(ps)
                    .with_data(merge(
                        d.clone(),
                        json!({"grid_limited": s.pair_singular_grid_limited[k]}),
                    )),
                );
                let pp = &s.pair_pr[k];
                out.samples.push(
                    Record::new(
                        ctx.seed,
                        Some(i),
                        "event",
                        format!("pair-pr({k})"),
                        flag(pp.is_some()),
                    )
                    .with_witness(pp)
                    .with_data(d.clone()),
                );
                let t = &s.tunneling[k];
                out.samples.push(
                    Record::new(
                        ctx.seed,
                        Some(i),
                        "event",
                        format!("tunneling({k})"),
                        flag(t.is_some()),
                    )
                    .with_witness(t)
                    .with_data(d.clone()),
                );
                if let Some(&ok) = s.containment_ok.get(k) {
                    let gated = rep.scales[k].gate_passed;
                    let verdict = match (ok, gated) {
                        (true, _) => "holds",
                        (false, true) => "violated",
                        (false, false) => "violated-ungated",
                    };
                    let dc = merge(d.clone(), json!({"gate_passed": gated}));
                    out.samples.push(
                        Record::new(
                            ctx.seed,
                            Some(i),
                            "property",
                            format!("containment({k})"),
                            verdict,
                        )
                        .with_data(dc),
                    );
                }
                if let Some(Some(ok)) = s.witness_ok.get(k) {
                    out.samples.push(
                        Record::new(
                            ctx.seed,
                            Some(i),
                            "property",
                            format!("tunneling-witness({k})"),
                            if *ok { "holds" } else { "violated" },
                        )
                        .with_witness(t)
                        .with_data(d),
                    );
                }
            }
            for l in &s.lemmas {
                out.samples.push(lemma_record(ctx.seed, i, g, l));
            }
        }

        writeln!(
            text,
            "\ng = {g}: {}/{} samples complete",
            rep.complete_samples, rep.samples
        )?;
        for s in &rep.scales {
            let label = |ev: &str| format!("{ev}({}) g={g} L={}", s.k, s.length);
            let cmp = verdict_name(s.comparison);
            writeln!(
                text,
                "  k={} L={:<3} nloc {:>5}/{:<5} p = {:.4} [{:.3e}, {:.3e}]  target {:.3e}  {}",
                s.k,
                s.length,
                s.nloc.hits,
                s.nloc.trials,
                s.nloc.p_hat,
                s.nloc.ci_low,
                s.nloc.ci_high,
                s.target,
                cmp
            )?;
            let extra =
                json!({"g": g, "k": s.k, "L": s.length, "target": s.target, "comparison": cmp});
            out.estimates.push(estimate_record(
                ctx.seed,
                &label("nloc"),
                &cmp,
                &s.nloc,
                extra,
            ));
            let mut row = estimate_row(g, "nloc", &s.nloc);
            row.insert(1, s.k.to_string());
            row.insert(2, s.length.to_string());
            row.extend([fmt_f(s.target), cmp.clone()]);
            est_table.push(row);
            for (ev, e) in [
                ("pair-s", &s.pair_singular),
                ("pair-pr", &s.pair_pr),
                ("tunneling", &s.tunneling),
            ] {
                if let Some(e) = e {
                    writeln!(
                        text,
                        "        {ev:<9} {:>5}/{:<5} p = {:.4} [{:.3e}, {:.3e}]",
                        e.hits, e.trials, e.p_hat, e.ci_low, e.ci_high
                    )?;
                    out.estimates.push(estimate_record(
                        ctx.seed,
                        &label(ev),
                        "estimate",
                        e,
                        json!({"g": g, "k": s.k, "L": s.length}),
                    ));
                    let mut row = estimate_row(g, ev, e);
                    row.insert(1, s.k.to_string());
                    row.insert(2, s.length.to_string());
                    row.extend([String::new(), String::new()]);
                    est_table.push(row);
                }
            }
            if s.k + 1 < rep.scales.len() {
                writeln!(
                    text,
                    "        containment counterexamples {}{}, witness failures {}, grid-limited samples {}",
                    s.containment_counterexamples,
                    if s.gate_passed { "" } else { " (volume gate fails at this L)" },
                    s.witness_failures,
                    s.grid_limited_samples
                )?;
            }
        }
        for t in &rep.lemmas {
            writeln!(
                text,
                "  {:<24} L={:<3} l={:<4} holds {:>5}  unmet {:>5}  violated {:>3}",
                t.lemma.name(),
                t.radius,
                t.sub_radius.map_or("-".into(), |l| l.to_string()),
                t.holds,
                t.unmet,
                t.violated
            )?;
            lemma_table.push(vec![
                fmt_f(g),
                t.lemma.name().into(),
                t.radius.to_string(),
                t.sub_radius.map_or(String::new(), |l| l.to_string()),
                t.holds.to_string(),
                t.unmet.to_string(),
                t.violated.to_string(),
                t.grid_limited.to_string(),
            ]);
        }
        writeln!(
            text,
            "  nloc nonincreasing in k: {}",
            rep.nloc_nonincreasing
        )?;
        for n in &rep.notes {
            writeln!(text, "  note: {n}")?;
        }
        first_scale.push((g, rep.scales[0].nloc.clone()));
    }
    if first_scale.len() > 1 {
        let mut sorted = first_scale.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let trend = sorted
            .windows(2)
            .all(|w| w[1].1.p_hat <= w[0].1.p_hat || w[1].1.overlaps(&w[0].1));
        writeln!(
            text,
            "\nnloc(0) nonincreasing in g (ties within CI allowed): {trend}"
        )?;
    }
    writeln!(text, "\ndeterministic violations: {}", out.violations)?;
    if !out.complete {
        writeln!(text, "PARTIAL: the eigensolve budget cut some samples short; they are excluded from every estimate")?;
    }
    out.tables = vec![est_table, lemma_table];
    out.report = text;
    Ok(out)
}

pub fn wegner(ctx: &Ctx) -> Result<RunOutput> {
    let cfg = ctx.cfg;
    let o = &cfg.wegner;
    let gen = cfg.generator()?;
    let unit_uniform = gen == locscale_core::disorder::GeneratorSpec::uniform();
    let mut out = RunOutput {
        complete: true,
        ..Default::default()
    };
    let mut table = Table::new(
        "wegner.csv",
        &[
            "g",
            "event",
            "trials",
            "hits",
            "p_hat",
            "ci_low",
            "ci_high",
            "oracle",
            "wegner_bound",
        ],
    );
    let mut text = format!(
        "wegner: L = {}, d = {}, {} samples\n",
        o.radius,
        cfg.dim(),
        cfg.samples
    );
    let l = o.radius;
    let len = LatticeBall::centered(cfg.dim(), l).len();
    let rho = gen.holder_constant();
    for &g in &cfg.couplings {
        let setup = WegnerSetup {
            model: cfg.model(g),
            generator: gen.clone(),
            params: cfg.params.clone(),
            seed: ctx.seed,
            workers: ctx.workers,
        };
        let mut emit = |text: &mut String,
                        id: &str,
                        est: &MonteCarloEstimate,
                        oracle: Option<f64>,
                        bound: f64|
         -> Result<()> {
            let within = oracle.map(|p| est.contains(p));
            writeln!(
                text,
                "  {id:<44} {:>6}/{:<6} p = {:.5} [{:.5}, {:.5}]  oracle {}  bound {bound:.4e}",
                est.hits,
                est.trials,
                est.p_hat,
                est.ci_low,
                est.ci_high,
                oracle.map_or("-".into(), |p| format!(
                    "{p:.5} ({})",
                    if within == Some(true) {
                        "inside CI"
                    } else {
                        "outside CI"
                    }
                )),
            )?;
            let mut row = estimate_row(g, id, est);
            row.extend([oracle.map_or(String::new(), fmt_f), fmt_f(bound)]);
            table.push(row);
            out.estimates.push(estimate_record(
                ctx.seed,
                &est.event,
                "estimate",
                est,
                json!({"g": g, "oracle": oracle, "within_ci": within, "wegner_bound": bound}),
            ));
            Ok(())
        };
        writeln!(text, "g = {g}")?;
        for &e in &o.energies {
            let t = o
                .threshold
                .unwrap_or_else(|| cfg.params.resonance_threshold(l));
            let est = estimate_single_resonance(&setup, l, e, Some(t), cfg.samples)?;
            let oracle =
                (l == 0 && unit_uniform).then(|| single_site_resonance_probability(e, t, g));
            emit(
                &mut text,
                &format!("single E={e}"),
                &est,
                oracle,
                wegner_bound(len, t, g, rho),
            )?;
        }
        let t = o
            .pair_threshold
            .unwrap_or_else(|| 2.0 * cfg.params.resonance_threshold(l));
        let sep = o.separation.unwrap_or(2 * l + 1);
        let est = estimate_pair_resonance(&setup, l, sep, Some(t), o.mode, cfg.samples)?;
        let oracle = (l == 0 && unit_uniform).then(|| single_site_pair_probability(t, g));
        emit(
            &mut text,
            &format!("pair sep={sep}"),
            &est,
            oracle,
            wegner_bound(len, t, g, rho),
        )?;
    }
    out.tables.push(table);
    out.report = text;
    Ok(out)
}

pub fn correlator(ctx: &Ctx) -> Result<RunOutput> {
    let cfg = ctx.cfg;
    let o = &cfg.correlator;
    let gen = cfg.generator()?;
    let d = cfg.dim();
    let mut out = RunOutput {
        complete: true,
        ..Default::default()
    };
    let mut table = Table::new(
        "correlator.csv",
        &[
            "g",
            "samples",
            "mean_q",
            "se_q",
            "boundary_size",
            "deterministic_bound",
            "f_hat",
            "holds",
            "fitted_c",
            "decay_pass_fraction",
        ],
    );
    let mut hist = Table::new("decay_rates.csv", &["g", "bin_low", "count"]);
    let mut text = format!(
        "correlator: L = {}, Λ = B_{}, x = {}, y = {}, d = {d}, {} samples\n",
        o.l, o.ambient_radius, o.x, o.y, cfg.samples
    );
    for &g in &cfg.couplings {
        let setup = DlSetup {
            params: cfg.params.clone(),
            model: cfg.model(g),
            generator: gen.clone(),
            l: o.l,
            ambient_radius: o.ambient_radius,
            x: Site::on_axis(d, o.x),
            y: Site::on_axis(d, o.y),
            interval: interval_of(o.interval),
            seed: ctx.seed,
            workers: ctx.workers,
        };
        let (rep, samples) = dl_bound_check(&setup, cfg.samples, o.calibration)?;
        for s in &samples {
            let v = if s.pair_singular.is_some() {
                "singular"
            } else {
                "regular"
            };
            out.samples.push(
                Record::new(ctx.seed, Some(s.sample_index), "correlator", "dl-bound", v)
                    .with_witness(&s.pair_singular)
                    .with_data(merge(serde_json::to_value(s)?, json!({"g": g}))),
            );
        }
        out.violations += (!rep.holds) as u64;
        let fid = format!("pair-singular g={g} L={}", o.l);
        out.estimates.push(estimate_record(
            ctx.seed,
            &fid,
            "estimate",
            &rep.f_hat,
            json!({"g": g}),
        ));
        out.estimates.push(
            Record::new(
                ctx.seed,
                None,
                "property",
                format!("dl-bound g={g} L={}", o.l),
                if rep.holds { "holds" } else { "violated" },
            )
            .with_data(serde_json::to_value(&rep)?),
        );
        let n_decay = o.decay_samples.unwrap_or(cfg.samples);
        let survey = decay_survey(
            &cfg.params,
            cfg.model(g),
            &gen,
            o.decay_radius,
            n_decay,
            ctx.seed,
            ctx.workers,
        )?;
        let did = format!("decay-pass g={g} L={}", o.decay_radius);
        let dest = MonteCarloEstimate::from_counts(
            &did,
            survey.passed,
            survey.eigenfunctions.max(1),
            ctx.seed,
        );
        let bins = rate_histogram(&survey.rates, 0.0, 10.0, 40);
        out.estimates.push(estimate_record(
            ctx.seed,
            &did,
            "estimate",
            &dest,
            json!({"g": g, "histogram": bins, "samples": n_decay}),
        ));
        for (lo, c) in &bins {
            hist.push(vec![fmt_f(g), fmt_f(*lo), c.to_string()]);
        }
        table.push(vec![
            fmt_f(g),
            rep.samples.to_string(),
            fmt_f(rep.mean_q),
            fmt_f(rep.se_q),
            rep.boundary_size.to_string(),
            fmt_f(rep.deterministic_bound),
            fmt_f(rep.f_hat.p_hat),
            rep.holds.to_string(),
            rep.fitted_c.map_or(String::new(), fmt_f),
            fmt_f(survey.fraction),
        ]);
        writeln!(
            text,
            "g = {g}\n  mean Q = {:.4e} ± {:.2e}, 2|S|e^(-mL) = {:.4e} (|S| = {}), f̂ = {:.4} [{:.4}, {:.4}]\n  bound {}{}\n  off-event samples above the deterministic bound: {}\n  decay check on B_{}: {}/{} eigenfunctions pass ({:.4})",
            rep.mean_q,
            rep.se_q,
            rep.deterministic_bound,
            rep.boundary_size,
            rep.f_hat.p_hat,
            rep.f_hat.ci_low,
            rep.f_hat.ci_high,
            if rep.holds { "holds" } else { "VIOLATED" },
            rep.fitted_c.map_or(String::new(), |c| format!(" (fitted C = {c:.3e})")),
            rep.off_event_excess,
            o.decay_radius,
            survey.passed,
            survey.eigenfunctions,
            survey.fraction
        )?;
    }
    out.tables = vec![table, hist];
    out.report = text;
    Ok(out)
}

pub fn edge(ctx: &Ctx) -> Result<RunOutput> {
    let cfg = ctx.cfg;
    let o = &cfg.edge;
    let gen = cfg.generator()?;
    let d = cfg.dim();
    let mut out = RunOutput {
        complete: true,
        ..Default::default()
    };
    let mut cdf = Table::new("edge_cdf.csv", &["g", "e0_neumann", "cdf"]);
    let mut table = Table::new("edge.csv", &ESTIMATE_HEADER);
    let mut text = format!("edge: L = {}, d = {d}, {} samples\n", o.radius, cfg.samples);
    for &g in &cfg.couplings {
        writeln!(text, "g = {g}")?;
        let ct = combes_thomas_sweep(
            d,
            o.radius,
            cfg.model(g),
            &gen,
            o.ct_eta,
            cfg.samples,
            ctx.seed,
            ctx.workers,
        )?;
        let mut ct_viol = 0;
        for (i, r) in ct.iter().enumerate() {
            let v = match (r.skipped, r.holds(), r.within_validity) {
                (true, _, _) => "skipped",
                (false, true, _) => "holds",
                (false, false, true) => {
                    ct_viol += 1;
                    "violated"
                }
                (false, false, false) => "violated-outside-validity",
            };
            out.samples.push(
                Record::new(ctx.seed, Some(i as u64), "property", "combes-thomas", v)
                    .with_data(merge(serde_json::to_value(r)?, json!({"g": g}))),
            );
        }
        out.violations += ct_viol;
        let worst = ct
            .iter()
            .map(|r| r.worst_log_margin)
            .fold(f64::NEG_INFINITY, f64::max);
        writeln!(
            text,
            "  Combes–Thomas at η = {}: {} violations in {} samples, worst log margin {worst:.4}",
            o.ct_eta,
            ct_viol,
            ct.len()
        )?;

        let setup = EdgeSetup {
            dim: d,
            l: o.radius,
            coupling: g,
            generator: gen.clone(),
            seed: ctx.seed,
            workers: ctx.workers,
        };
        let th = o
            .thresholds
            .clone()
            .unwrap_or_else(|| default_thresholds(o.radius));
        let (rep, samples) = lifshitz_stats(&setup, o.eta, &th, cfg.samples)?;
        for s in &samples {
            let ok =
                s.ground_neumann <= s.ground_dirichlet + 1e-12 * (1.0 + s.ground_dirichlet.abs());
            out.samples.push(
                Record::new(
                    ctx.seed,
                    Some(s.sample_index),
                    "edge",
                    "ground-energy",
                    if ok { "holds" } else { "violated" },
                )
                .with_data(merge(serde_json::to_value(s)?, json!({"g": g}))),
            );
        }
        out.violations += rep.bracketing_failures;
        let id = format!("low-mean eta={} g={g} L={}", o.eta, o.radius);
        out.estimates.push(estimate_record(
            ctx.seed,
            &id,
            "estimate",
            &rep.low_mean,
            json!({"g": g, "hoeffding_bound": rep.hoeffding_bound}),
        ));
        table.push(estimate_row(g, &id, &rep.low_mean));
        writeln!(
            text,
            "  P[mean V ≤ 2η] = {:.4} [{:.4}, {:.4}], Hoeffding bound {}",
            rep.low_mean.p_hat,
            rep.low_mean.ci_low,
            rep.low_mean.ci_high,
            rep.hoeffding_bound
                .map_or("n/a".into(), |b| format!("{b:.4e}"))
        )?;
        for (t, est) in &rep.thresholds {
            let id = format!("e0n<={t} g={g} L={}", o.radius);
            writeln!(
                text,
                "  P[E0N ≤ {t:.4}] = {:.4} [{:.4}, {:.4}]",
                est.p_hat, est.ci_low, est.ci_high
            )?;
            out.estimates.push(estimate_record(
                ctx.seed,
                &id,
                "estimate",
                est,
                json!({"g": g, "theta": t}),
            ));
            table.push(estimate_row(g, &id, est));
        }
        writeln!(
            text,
            "  Neumann above Dirichlet ground energy: {} samples",
            rep.bracketing_failures
        )?;
        for (e, f) in &rep.cdf {
            cdf.push(vec![fmt_f(g), fmt_f(*e), fmt_f(*f)]);
        }

        let e0 = pilot_edge(&setup, o.pilot)?;
        let m = edge_mass(o.mass_c, o.radius);
        let low = low_energy_singularity_estimate(
            &setup,
            &cfg.params,
            e0,
            &o.band_widths,
            m,
            cfg.samples,
        )?;
        out.violations += low.monotonicity_failures;
        writeln!(
            text,
            "  low-energy bands from E0 = {e0:.5}, m = {m:.4}: monotonicity failures {}",
            low.monotonicity_failures
        )?;
        for b in &low.bands {
            let id = format!(
                "singular-band width={} g={g} L={}",
                b.band.hi - b.band.lo,
                o.radius
            );
            writeln!(
                text,
                "    [{:.4}, {:.4}] p = {:.4} [{:.4}, {:.4}]",
                b.band.lo, b.band.hi, b.estimate.p_hat, b.estimate.ci_low, b.estimate.ci_high
            )?;
            out.estimates.push(estimate_record(
                ctx.seed,
                &id,
                "estimate",
                &b.estimate,
                json!({"g": g, "m": m, "e0": e0}),
            ));
            table.push(estimate_row(g, &id, &b.estimate));
        }
    }
    out.tables = vec![table, cdf];
    out.report = text;
    Ok(out)
}

pub fn gri_fuzz(ctx: &Ctx) -> Result<RunOutput> {
    let cfg = ctx.cfg;
    let o = &cfg.gri_fuzz;
    let gen = cfg.generator()?;
    let d = cfg.dim();
    let mut out = RunOutput {
        complete: true,
        ..Default::default()
    };
    let mut table = Table::new(
        "gri.csv",
        &[
            "g",
            "instances",
            "resolvent_checked",
            "eigen_checked",
            "violations",
            "worst_ratio",
        ],
    );
    let mut text = format!(
        "gri-fuzz: L = {}, ℓ = {}, d = {d}, {} instances\n",
        o.radius, o.inner_radius, cfg.samples
    );
    for &g in &cfg.couplings {
        let model = cfg.model(g);
        let res = run_samples(cfg.samples, ctx.workers, |i| {
            gri_fuzz_instance(
                &model,
                &gen,
                d,
                o.radius,
                o.inner_radius,
                o.energies,
                i,
                ctx.seed,
            )
        })?;
        let (mut rc, mut ec, mut viol, mut worst) = (0usize, 0usize, 0usize, 0.0f64);
        for r in &res {
            let v = r.violations();
            viol += v;
            let first = r.reports.iter().flat_map(|x| x.violations.first()).next();
            rc += r.reports.iter().map(|x| x.resolvent_checked).sum::<usize>();
            ec += r.reports.iter().map(|x| x.eigen_checked).sum::<usize>();
            worst = r
                .reports
                .iter()
                .map(|x| x.worst_ratio)
                .fold(worst, f64::max);
            out.samples.push(
                Record::new(
                    ctx.seed,
                    Some(r.sample_index),
                    "property",
                    "gri",
                    if v == 0 { "holds" } else { "violated" },
                )
                .with_witness(first)
                .with_data(
                    json!({"g": g, "inner": r.inner, "energies": r.energies, "violations": v}),
                ),
            );
        }
        out.violations += viol as u64;
        writeln!(text, "g = {g}: {rc} resolvent and {ec} eigenfunction inequalities, {viol} violations, worst ratio {worst:.4}")?;
        table.push(vec![
            fmt_f(g),
            res.len().to_string(),
            rc.to_string(),
            ec.to_string(),
            viol.to_string(),
            fmt_f(worst),
        ]);
    }
    out.tables.push(table);
    out.report = text;
    Ok(out)
}

/// `TargetComparison` in kebab case.
pub fn comparison_name(c: TargetComparison) -> String {
    verdict_name(c)
}

pub fn compare(est: &MonteCarloEstimate, target: f64) -> String {
    comparison_name(compare_to_target(est, target))
}
