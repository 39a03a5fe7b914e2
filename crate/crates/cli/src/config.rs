//! Experiment configuration files (TOML).

use std::path::Path;

use locscale_core::disorder::GeneratorSpec;
use locscale_core::operator::{BoundaryCondition, KineticConvention, Model};
use locscale_core::predicates::{LemmaId, ScaleParams, TunnelingVariant};
use locscale_core::scaling::validate_params;
use locscale_core::wegner::PairMode;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeneratorConfig {
    /// `"uniform"` or `"moving-average"` (the default product kernel).
    Preset(String),
    Spec(GeneratorSpec),
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig::Preset("uniform".into())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    pub bc: BoundaryCondition,
    pub convention: KineticConvention,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyOptions {
    pub radius: u32,
    pub energy: f64,
    pub sub_radius: Option<u32>,
    pub interval: Option<[f64; 2]>,
    pub variant: TunnelingVariant,
    /// Also run the per-energy lemma checks (needs `sub_radius`).
    pub lemmas: bool,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            radius: 8,
            energy: 0.0,
            sub_radius: None,
            interval: None,
            variant: TunnelingVariant::Disjoint,
            lemmas: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InductOptions {
    pub steps: usize,
    pub lemmas: Vec<LemmaId>,
    pub variant: TunnelingVariant,
    /// Eigensolves allowed per sample.
    pub budget: Option<u64>,
}

impl Default for InductOptions {
    fn default() -> Self {
        InductOptions {
            steps: 2,
            lemmas: LemmaId::ALL.to_vec(),
            variant: TunnelingVariant::Disjoint,
            budget: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WegnerOptions {
    pub radius: u32,
    pub energies: Vec<f64>,
    pub threshold: Option<f64>,
    pub pair_threshold: Option<f64>,
    /// Distance between the pair centers; defaults to `2L + 1`.
    pub separation: Option<u32>,
    pub mode: PairMode,
}

impl Default for WegnerOptions {
    fn default() -> Self {
        WegnerOptions {
            radius: 0,
            energies: vec![0.05, 0.5, 0.95],
            threshold: None,
            pair_threshold: None,
            separation: None,
            mode: PairMode::Joint,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelatorOptions {
    pub l: u32,
    pub ambient_radius: u32,
    /// First coordinates of `x` and `y` (other coordinates are zero).
    pub x: i32,
    pub y: i32,
    pub interval: Option<[f64; 2]>,
    /// Samples of the calibration run for the fitted constant; 0 skips it.
    pub calibration: u64,
    pub decay_radius: u32,
    pub decay_samples: Option<u64>,
}

impl Default for CorrelatorOptions {
    fn default() -> Self {
        CorrelatorOptions {
            l: 8,
            ambient_radius: 25,
            x: -9,
            y: 9,
            interval: None,
            calibration: 100,
            decay_radius: 44,
            decay_samples: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeOptions {
    pub radius: u32,
    /// Gap below the spectrum for the Combes–Thomas sweep.
    pub ct_eta: f64,
    /// Sample-mean threshold parameter of the Lifshitz statistics.
    pub eta: f64,
    pub thresholds: Option<Vec<f64>>,
    /// Band widths (ascending) of the low-energy estimate.
    pub band_widths: Vec<f64>,
    /// `m = mass_c · L^{-1/2}`.
    pub mass_c: f64,
    pub pilot: u64,
}

impl Default for EdgeOptions {
    fn default() -> Self {
        EdgeOptions {
            radius: 16,
            ct_eta: 1.0,
            eta: 0.1,
            thresholds: None,
            band_widths: vec![0.05, 0.1, 0.2, 0.4],
            mass_c: 1.0,
            pilot: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GriFuzzOptions {
    pub radius: u32,
    pub inner_radius: u32,
    pub energies: usize,
}

impl Default for GriFuzzOptions {
    fn default() -> Self {
        GriFuzzOptions {
            radius: 8,
            inner_radius: 2,
            energies: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Lattice dimension; overrides `params.dim`.
    pub dim: Option<usize>,
    pub generator: GeneratorConfig,
    /// Coupling grid `g`.
    pub couplings: Vec<f64>,
    pub model: ModelOptions,
    pub params: ScaleParams,
    pub samples: u64,
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    pub classify: ClassifyOptions,
    pub induct: InductOptions,
    pub wegner: WegnerOptions,
    pub correlator: CorrelatorOptions,
    pub edge: EdgeOptions,
    pub gri_fuzz: GriFuzzOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dim: None,
            generator: GeneratorConfig::default(),
            couplings: vec![100.0],
            model: ModelOptions::default(),
            params: ScaleParams::default(),
            samples: 100,
            workers: None,
            classify: ClassifyOptions::default(),
            induct: InductOptions::default(),
            wegner: WegnerOptions::default(),
            correlator: CorrelatorOptions::default(),
            edge: EdgeOptions::default(),
            gri_fuzz: GriFuzzOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        ExperimentConfig::parse(&text)
    }

    pub fn parse(text: &str) -> anyhow::Result<ExperimentConfig> {
        let mut cfg: ExperimentConfig = toml::from_str(text)?;
        if let Some(d) = cfg.dim {
            cfg.params.dim = d;
        }
        Ok(cfg)
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn generator(&self) -> anyhow::Result<GeneratorSpec> {
        let g = match &self.generator {
            GeneratorConfig::Preset(p) => match p.as_str() {
                "uniform" => GeneratorSpec::uniform(),
                "moving-average" => GeneratorSpec::default_moving_average(self.dim()),
                other => anyhow::bail!("unknown generator preset {other:?}"),
            },
            GeneratorConfig::Spec(s) => s.clone(),
        };
        g.validate(self.dim())?;
        Ok(g)
    }

    pub fn model(&self, g: f64) -> Model {
        Model {
            coupling: g,
            bc: self.model.bc,
            convention: self.model.convention,
        }
    }

    /// Checks everything that can be checked without computing.
    pub fn validate(&self, induct: bool) -> anyhow::Result<()> {
        self.params.validate()?;
        if induct {
            validate_params(&self.params)?;
        }
        self.generator()?;
        if self.couplings.is_empty() {
            anyhow::bail!("couplings must not be empty");
        }
        for &g in &self.couplings {
            self.model(g).validate()?;
        }
        if self.samples == 0 {
            anyhow::bail!("samples must be positive");
        }
        if self.workers == Some(0) {
            anyhow::bail!("workers must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = ExperimentConfig::parse("dim = 2\nsamples = 5\n[params]\np = 33.0\nb = 0.001\n")
            .unwrap();
        assert_eq!(c.dim(), 2);
        assert_eq!(c.samples, 5);
        assert!(c.validate(true).is_ok());
        assert_eq!(c.induct.steps, 2);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::parse("sampels = 5\n").is_err());
        assert!(ExperimentConfig::parse("[induct]\nstepz = 1\n").is_err());
    }

    #[test]
    fn generator_forms() {
        let c = ExperimentConfig::parse("generator = \"moving-average\"\n").unwrap();
        assert!(!c.generator().unwrap().is_iid());
        let c =
            ExperimentConfig::parse("[generator]\nkind = \"iid-uniform\"\nlow = 0.0\nhigh = 2.0\n")
                .unwrap();
        assert_eq!(c.generator().unwrap().support(), (0.0, 2.0));
        let c = ExperimentConfig::parse("generator = \"gaussian\"\n").unwrap();
        assert!(c.generator().is_err());
    }

    #[test]
    fn induction_conditions_checked() {
        let c = ExperimentConfig::parse("[params]\np = 1.0\n").unwrap();
        assert!(c.validate(false).is_ok());
        assert!(c.validate(true).is_err());
    }
}
