//! Finite-volume Hamiltonians `H_B = -Δ + gV`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::disorder::PotentialField;
use crate::error::{Error, Result};
use crate::lattice::LatticeBall;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryCondition {
    #[default]
    Dirichlet,
    Neumann,
}

/// How the kinetic part is written.
///
/// `Adjacency`: `-A`. `GraphLaplacian`: `2d·I - A` under Dirichlet
/// truncation, `D_B - A` (in-ball degrees) under Neumann.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KineticConvention {
    #[default]
    Adjacency,
    GraphLaplacian,
}

/// Coupling and conventions shared by every operator of one experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub coupling: f64,
    #[serde(default)]
    pub bc: BoundaryCondition,
    #[serde(default)]
    pub convention: KineticConvention,
}

impl Model {
    pub fn new(coupling: f64) -> Model {
        Model {
            coupling,
            bc: BoundaryCondition::Dirichlet,
            convention: KineticConvention::Adjacency,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.coupling.is_finite() {
            return Err(Error::InvalidOperator(format!(
                "coupling {} is not finite",
                self.coupling
            )));
        }
        if self.bc == BoundaryCondition::Neumann && self.convention == KineticConvention::Adjacency
        {
            return Err(Error::InvalidOperator(
                "Neumann conditions require the graph-laplacian convention".into(),
            ));
        }
        Ok(())
    }

    pub fn assemble(&self, ball: &LatticeBall, v: &PotentialField) -> Result<FiniteHamiltonian> {
        assemble(ball, v, self.coupling, self.bc, self.convention)
    }
}

/// Dense row-major symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> DenseMatrix {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> DenseMatrix {
        let n = rows.len();
        let mut m = DenseMatrix::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(r);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_tridiagonal(&self) -> bool {
        let n = self.n;
        (0..n).all(|i| (0..n).all(|j| i.abs_diff(j) <= 1 || self.data[i * n + j] == 0.0))
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Maximum absolute row sum, an upper bound on the spectral radius.
    pub fn inf_norm(&self) -> f64 {
        self.data
            .chunks(self.n.max(1))
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn principal_submatrix(&self, idx: &[usize]) -> DenseMatrix {
        let k = idx.len();
        let mut m = DenseMatrix::zeros(k);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                m.data[a * k + b] = self.get(i, j);
            }
        }
        m
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.n)
            .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Text dump, one row per line.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for r in self.data.chunks(self.n.max(1)) {
            let row: Vec<String> = r.iter().map(|v| format!("{v:.17e}")).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct FiniteHamiltonian {
    pub ball: LatticeBall,
    pub matrix: DenseMatrix,
    pub coupling: f64,
    pub bc: BoundaryCondition,
    pub convention: KineticConvention,
}

impl FiniteHamiltonian {
    pub fn len(&self) -> usize {
        self.matrix.n()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.n() == 0
    }

    /// Principal submatrix on a sub-ball (Dirichlet restriction).
    pub fn restrict(&self, sub: &LatticeBall) -> Result<FiniteHamiltonian> {
        let idx = sub
            .region()
            .iter()
            .map(|x| {
                self.ball.index_of(&x).ok_or_else(|| {
                    Error::InvalidGeometry(format!("{sub} is not inside {}", self.ball))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FiniteHamiltonian {
            ball: *sub,
            matrix: self.matrix.principal_submatrix(&idx),
            coupling: self.coupling,
            bc: BoundaryCondition::Dirichlet,
            convention: self.convention,
        })
    }
}

pub fn assemble(
    ball: &LatticeBall,
    v: &PotentialField,
    g: f64,
    bc: BoundaryCondition,
    convention: KineticConvention,
) -> Result<FiniteHamiltonian> {
    Model {
        coupling: g,
        bc,
        convention,
    }
    .validate()?;
    let region = ball.region();
    let n = region.len();
    let d = ball.dim();
    let mut m = DenseMatrix::zeros(n);
    for i in 0..n {
        let x = region.site_at(i);
        let vx = v
            .value(&x)
            .ok_or_else(|| Error::InvalidOperator(format!("potential is missing site {x}")))?;
        if !vx.is_finite() {
            return Err(Error::InvalidOperator(format!(
                "potential at {x} is not finite"
            )));
        }
        let mut degree = 0;
        for axis in 0..d {
            for delta in [-1, 1] {
                if let Some(j) = region.index_of(&x.shifted(axis, delta)) {
                    m.data[i * n + j] = -1.0;
                    degree += 1;
                }
            }
        }
        let kinetic = match (convention, bc) {
            (KineticConvention::Adjacency, _) => 0.0,
            (KineticConvention::GraphLaplacian, BoundaryCondition::Dirichlet) => (2 * d) as f64,
            (KineticConvention::GraphLaplacian, BoundaryCondition::Neumann) => degree as f64,
        };
        m.data[i * n + i] = kinetic + g * vx;
    }
    Ok(FiniteHamiltonian {
        ball: *ball,
        matrix: m,
        coupling: g,
        bc,
        convention,
    })
}
