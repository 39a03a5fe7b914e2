//! Random potentials: IID marginals and finite-range moving averages.
//!
//! Every site value is a pure function of `(master_seed, sample_index, site)`.
//! A ChaCha8 stream is keyed by the seed pair and selected by the packed site
//! coordinates, so fields never depend on enumeration order or worker count.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeBall, Site};

const KEY_TAG: u64 = 0x6c6f_6373_6361_6c65;

fn default_high() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTap {
    pub offset: Vec<i32>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// Uniform marginal on `[low, high]`.
    IidUniform {
        #[serde(default)]
        low: f64,
        #[serde(default = "default_high")]
        high: f64,
    },
    /// Continuous piecewise-linear CDF through the knots `(x, F(x))`.
    IidCustomCdf { knots: Vec<[f64; 2]> },
    /// `V(x) = Σ_y a_y U(x+y)` with `U` IID uniform on `[0,1]`.
    MovingAverage { kernel: Vec<KernelTap> },
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec::IidUniform {
            low: 0.0,
            high: 1.0,
        }
    }
}

impl GeneratorSpec {
    pub fn uniform() -> GeneratorSpec {
        GeneratorSpec::default()
    }

    /// Product kernel with per-axis weights `{-1: 1/2, 0: 1, 1: 1/2}`.
    pub fn default_moving_average(dim: usize) -> GeneratorSpec {
        let w = [0.5, 1.0, 0.5];
        let mut kernel = Vec::new();
        let n = 3usize.pow(dim as u32);
        for k in 0..n {
            let mut rest = k;
            let mut offset = vec![0; dim];
            let mut weight = 1.0;
            for i in (0..dim).rev() {
                let digit = rest % 3;
                rest /= 3;
                offset[i] = digit as i32 - 1;
                weight *= w[digit];
            }
            kernel.push(KernelTap { offset, weight });
        }
        GeneratorSpec::MovingAverage { kernel }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            GeneratorSpec::IidUniform { .. } => "iid-uniform",
            GeneratorSpec::IidCustomCdf { .. } => "iid-custom-cdf",
            GeneratorSpec::MovingAverage { .. } => "moving-average",
        }
    }

    pub fn is_iid(&self) -> bool {
        !matches!(self, GeneratorSpec::MovingAverage { .. })
    }

    /// Dependence range `r`: values at max-distance `> 2r` are independent.
    pub fn range(&self) -> u32 {
        match self {
            GeneratorSpec::MovingAverage { kernel } => kernel
                .iter()
                .map(|t| t.offset.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0))
                .max()
                .unwrap_or(0),
            _ => 0,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGenerator(m));
        match self {
            GeneratorSpec::IidUniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return bad(format!(
                        "uniform marginal needs finite low < high, got [{low}, {high}]"
                    ));
                }
            }
            GeneratorSpec::IidCustomCdf { knots } => {
                if knots.len() < 2 {
                    return bad("custom CDF needs at least two knots".into());
                }
                if knots.iter().any(|k| !k[0].is_finite() || !k[1].is_finite()) {
                    return bad("custom CDF knots must be finite".into());
                }
                if knots.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return bad("custom CDF abscissae must be strictly increasing".into());
                }
                if knots.windows(2).any(|w| w[1][1] < w[0][1]) {
                    return bad("custom CDF values must be nondecreasing".into());
                }
                if knots[0][1] != 0.0 || knots[knots.len() - 1][1] != 1.0 {
                    return bad("custom CDF must start at 0 and end at 1".into());
                }
            }
            GeneratorSpec::MovingAverage { kernel } => {
                if kernel.is_empty() {
                    return bad("moving-average kernel is empty".into());
                }
                let mut seen = Vec::new();
                let mut a0 = 0.0;
                for t in kernel {
                    if t.offset.len() != dim {
                        return bad(format!(
                            "kernel offset {:?} does not have dimension {dim}",
                            t.offset
                        ));
                    }
                    if !t.weight.is_finite() {
                        return bad(format!("kernel weight at {:?} is not finite", t.offset));
                    }
                    if seen.contains(&t.offset) {
                        return bad(format!("duplicate kernel offset {:?}", t.offset));
                    }
                    seen.push(t.offset.clone());
                    if t.offset.iter().all(|&c| c == 0) {
                        a0 = t.weight;
                    }
                }
                if a0 == 0.0 {
                    return bad("moving-average kernel needs a nonzero weight at offset 0".into());
                }
            }
        }
        Ok(())
    }

    /// Smallest interval containing the support of the marginal.
    pub fn support(&self) -> (f64, f64) {
        match self {
            GeneratorSpec::IidUniform { low, high } => (*low, *high),
            GeneratorSpec::IidCustomCdf { knots } => (knots[0][0], knots[knots.len() - 1][0]),
            GeneratorSpec::MovingAverage { kernel } => {
                let lo = kernel.iter().map(|t| t.weight.min(0.0)).sum();
                let hi = kernel.iter().map(|t| t.weight.max(0.0)).sum();
                (lo, hi)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            GeneratorSpec::IidUniform { low, high } => 0.5 * (low + high),
            GeneratorSpec::IidCustomCdf { knots } => knots
                .windows(2)
                .map(|w| 0.5 * (w[0][0] + w[1][0]) * (w[1][1] - w[0][1]))
                .sum(),
            GeneratorSpec::MovingAverage { kernel } => {
                0.5 * kernel.iter().map(|t| t.weight).sum::<f64>()
            }
        }
    }

    /// Lipschitz constant of the single-site CDF (Hölder exponent 1). For the
    /// moving average this is the conditional CDF given all other `U`.
    pub fn holder_constant(&self) -> f64 {
        match self {
            GeneratorSpec::IidUniform { low, high } => 1.0 / (high - low),
            GeneratorSpec::IidCustomCdf { knots } => knots
                .windows(2)
                .map(|w| (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]))
                .fold(0.0, f64::max),
            GeneratorSpec::MovingAverage { kernel } => {
                let a0 = kernel
                    .iter()
                    .find(|t| t.offset.iter().all(|&c| c == 0))
                    .map_or(0.0, |t| t.weight);
                1.0 / a0.abs()
            }
        }
    }

    fn transform(&self, u: f64) -> f64 {
        match self {
            GeneratorSpec::IidUniform { low, high } => low + (high - low) * u,
            GeneratorSpec::IidCustomCdf { knots } => {
                // first knot with F > u; u < 1 so it exists
                let k = knots
                    .partition_point(|k| k[1] <= u)
                    .clamp(1, knots.len() - 1);
                let (x0, f0) = (knots[k - 1][0], knots[k - 1][1]);
                let (x1, f1) = (knots[k][0], knots[k][1]);
                x0 + (u - f0) / (f1 - f0) * (x1 - x0)
            }
            GeneratorSpec::MovingAverage { .. } => {
                unreachable!("moving average has no scalar transform")
            }
        }
    }
}

fn stream_id(site: &Site) -> u64 {
    let d = site.dim();
    let bits = 64 / d as u32;
    let mask = if bits == 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    };
    let bias = 1u64 << (bits - 1);
    site.coords().iter().fold(0u64, |acc, &c| {
        let v = (c as i64 as u64).wrapping_add(bias) & mask;
        if bits == 64 {
            v
        } else {
            (acc << bits) | v
        }
    })
}

/// The uniform `[0,1)` variate attached to `site` in sample `sample_index`.
pub fn site_uniform(master_seed: u64, sample_index: u64, site: &Site) -> f64 {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&sample_index.to_le_bytes());
    key[16..24].copy_from_slice(&KEY_TAG.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream_id(site));
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum Provenance {
    Generated {
        generator: GeneratorSpec,
        master_seed: u64,
        sample_index: u64,
    },
    Explicit,
}

/// One disorder realization on a ball, stored in the ball's site order.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialField {
    ball: LatticeBall,
    values: Vec<f64>,
    provenance: Provenance,
}

impl PotentialField {
    pub fn from_values(ball: LatticeBall, values: Vec<f64>) -> Result<PotentialField> {
        if values.len() != ball.len() {
            return Err(Error::InvalidParameter(format!(
                "{} values given for a ball with {} sites",
                values.len(),
                ball.len()
            )));
        }
        Ok(PotentialField {
            ball,
            values,
            provenance: Provenance::Explicit,
        })
    }

    pub fn ball(&self) -> &LatticeBall {
        &self.ball
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn value(&self, x: &Site) -> Option<f64> {
        self.ball.index_of(x).map(|i| self.values[i])
    }

    /// Overwrites one site; the field becomes explicit.
    pub fn set(&mut self, x: &Site, v: f64) -> Result<()> {
        let i = self
            .ball
            .index_of(x)
            .ok_or_else(|| Error::InvalidGeometry(format!("{x} is not in {}", self.ball)))?;
        self.values[i] = v;
        self.provenance = Provenance::Explicit;
        Ok(())
    }

    /// Restriction to a sub-ball contained in this field's ball.
    pub fn restrict(&self, sub: &LatticeBall) -> Result<PotentialField> {
        let mut values = Vec::with_capacity(sub.len());
        for x in sub.region().iter() {
            values.push(self.value(&x).ok_or_else(|| {
                Error::InvalidGeometry(format!("{x} of {sub} is not covered by {}", self.ball))
            })?);
        }
        Ok(PotentialField {
            ball: *sub,
            values,
            provenance: self.provenance.clone(),
        })
    }

    /// Draws the field again from its provenance.
    pub fn regenerate(&self) -> Result<PotentialField> {
        match &self.provenance {
            Provenance::Generated {
                generator,
                master_seed,
                sample_index,
            } => sample(&self.ball, generator, *sample_index, *master_seed),
            Provenance::Explicit => Err(Error::InvalidParameter(
                "explicit field has no generator".into(),
            )),
        }
    }
}

pub fn sample(
    ball: &LatticeBall,
    spec: &GeneratorSpec,
    sample_index: u64,
    master_seed: u64,
) -> Result<PotentialField> {
    match spec {
        GeneratorSpec::MovingAverage { .. } => sample_ma(ball, spec, sample_index, master_seed),
        _ => sample_iid(ball, spec, sample_index, master_seed),
    }
}

pub fn sample_iid(
    ball: &LatticeBall,
    spec: &GeneratorSpec,
    sample_index: u64,
    master_seed: u64,
) -> Result<PotentialField> {
    if !spec.is_iid() {
        return Err(Error::InvalidGenerator(format!(
            "{} is not an IID generator",
            spec.kind()
        )));
    }
    spec.validate(ball.dim())?;
    let values = ball
        .region()
        .iter()
        .map(|x| spec.transform(site_uniform(master_seed, sample_index, &x)))
        .collect();
    Ok(PotentialField {
        ball: *ball,
        values,
        provenance: Provenance::Generated {
            generator: spec.clone(),
            master_seed,
            sample_index,
        },
    })
}

pub fn sample_ma(
    ball: &LatticeBall,
    spec: &GeneratorSpec,
    sample_index: u64,
    master_seed: u64,
) -> Result<PotentialField> {
    let GeneratorSpec::MovingAverage { kernel } = spec else {
        return Err(Error::InvalidGenerator(format!(
            "{} is not a moving-average generator",
            spec.kind()
        )));
    };
    spec.validate(ball.dim())?;
    let offsets: Vec<(Site, f64)> = kernel
        .iter()
        .map(|t| Ok((Site::new(&t.offset)?, t.weight)))
        .collect::<Result<_>>()?;
    let values = ball
        .region()
        .iter()
        .map(|x| {
            offsets
                .iter()
                .map(|(y, a)| a * site_uniform(master_seed, sample_index, &x.offset(y)))
                .sum()
        })
        .collect();
    Ok(PotentialField {
        ball: *ball,
        values,
        provenance: Provenance::Generated {
            generator: spec.clone(),
            master_seed,
            sample_index,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_values_in_support_and_deterministic() {
        let ball = LatticeBall::centered(2, 3);
        let a = sample_iid(&ball, &GeneratorSpec::uniform(), 7, 42).unwrap();
        let b = sample_iid(&ball, &GeneratorSpec::uniform(), 7, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|v| (0.0..1.0).contains(v)));
        let c = sample_iid(&ball, &GeneratorSpec::uniform(), 8, 42).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn values_do_not_depend_on_the_enclosing_ball() {
        let big = sample(
            &LatticeBall::centered(1, 10),
            &GeneratorSpec::uniform(),
            3,
            1,
        )
        .unwrap();
        let sub = LatticeBall::unclipped(crate::lattice::Ball::new(Site::on_axis(1, 4), 2));
        let small = sample(&sub, &GeneratorSpec::uniform(), 3, 1).unwrap();
        assert_eq!(big.restrict(&sub).unwrap().values(), small.values());
    }

    #[test]
    fn stream_ids_are_injective_on_a_box() {
        let mut ids: Vec<u64> = LatticeBall::centered(3, 4)
            .sites()
            .iter()
            .map(stream_id)
            .collect();
        let n = ids.len();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), n);
    }

    #[test]
    fn degenerate_kernel_reproduces_iid() {
        let ball = LatticeBall::centered(2, 2);
        let ma = GeneratorSpec::MovingAverage {
            kernel: vec![KernelTap {
                offset: vec![0, 0],
                weight: 1.0,
            }],
        };
        let a = sample_ma(&ball, &ma, 5, 9).unwrap();
        let b = sample_iid(&ball, &GeneratorSpec::uniform(), 5, 9).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn zero_center_weight_is_rejected() {
        let ma = GeneratorSpec::MovingAverage {
            kernel: vec![
                KernelTap {
                    offset: vec![1],
                    weight: 1.0,
                },
                KernelTap {
                    offset: vec![0],
                    weight: 0.0,
                },
            ],
        };
        assert!(matches!(ma.validate(1), Err(Error::InvalidGenerator(_))));
        assert!(sample_ma(&LatticeBall::centered(1, 2), &ma, 0, 0).is_err());
    }

    #[test]
    fn default_kernel_shape() {
        let GeneratorSpec::MovingAverage { kernel } = GeneratorSpec::default_moving_average(2)
        else {
            panic!()
        };
        assert_eq!(kernel.len(), 9);
        let total: f64 = kernel.iter().map(|t| t.weight).sum();
        assert!((total - 4.0).abs() < 1e-15);
        assert_eq!(GeneratorSpec::default_moving_average(2).range(), 1);
    }

    #[test]
    fn custom_cdf_inverse() {
        let spec = GeneratorSpec::IidCustomCdf {
            knots: vec![[0.0, 0.0], [1.0, 0.5], [3.0, 1.0]],
        };
        spec.validate(1).unwrap();
        assert_eq!(spec.transform(0.25), 0.5);
        assert_eq!(spec.transform(0.75), 2.0);
        assert_eq!(spec.holder_constant(), 0.5);
        assert!((spec.mean() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn generator_spec_toml_shape() {
        let spec: GeneratorSpec = serde_json::from_str(r#"{"kind":"iid-uniform"}"#).unwrap();
        assert_eq!(spec, GeneratorSpec::uniform());
        let spec: GeneratorSpec = serde_json::from_str(
            r#"{"kind":"moving-average","kernel":[{"offset":[0],"weight":1.0}]}"#,
        )
        .unwrap();
        assert_eq!(spec.kind(), "moving-average");
    }
}
