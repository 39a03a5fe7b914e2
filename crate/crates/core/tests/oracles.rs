use locscale_core::disorder::{sample, GeneratorSpec};
use locscale_core::lattice::LatticeBall;
use locscale_core::operator::{BoundaryCondition, FiniteHamiltonian, KineticConvention, Model};
use locscale_core::spectral::{eig, green_column, symeig};
use nalgebra::{DMatrix, DVector};

fn hamiltonian(dim: usize, l: u32, g: f64, index: u64, bc: BoundaryCondition) -> FiniteHamiltonian {
    let ball = LatticeBall::centered(dim, l);
    let f = sample(&ball, &GeneratorSpec::uniform(), index, 23).unwrap();
    let convention = match bc {
        BoundaryCondition::Dirichlet => KineticConvention::Adjacency,
        BoundaryCondition::Neumann => KineticConvention::GraphLaplacian,
    };
    Model {
        coupling: g,
        bc,
        convention,
    }
    .assemble(&ball, &f)
    .unwrap()
}

fn to_na(h: &FiniteHamiltonian) -> DMatrix<f64> {
    DMatrix::from_row_slice(h.len(), h.len(), h.matrix.data())
}

/// Largest column deviation relative to the column's sup norm.
fn green_deviation(h: &FiniteHamiltonian, e: f64) -> f64 {
    let sd = eig(h).unwrap();
    let n = h.len();
    let lu = (to_na(h) - DMatrix::identity(n, n) * e).lu();
    let mut worst = 0.0f64;
    for k in 0..n {
        let mut rhs = DVector::zeros(n);
        rhs[k] = 1.0;
        let direct = lu.solve(&rhs).unwrap();
        let ours = green_column(&sd, e, k);
        let scale = direct.amax();
        for i in 0..n {
            worst = worst.max((ours[i] - direct[i]).abs() / scale);
        }
    }
    worst
}

#[test]
fn green_matches_direct_solve() {
    for (dim, l) in [(1, 12), (2, 3), (3, 1)] {
        for index in 0..20 {
            let h = hamiltonian(dim, l, 4.0, index, BoundaryCondition::Dirichlet);
            let sd = eig(&h).unwrap();
            // midpoint of a random gap keeps the solve well posed
            let ev = sd.eigenvalues();
            let j = (index as usize * 7) % (ev.len() - 1);
            let e = 0.5 * (ev[j] + ev[j + 1]);
            let dev = green_deviation(&h, e);
            assert!(dev < 1e-8, "d={dim} index={index}: {dev:e}");
        }
    }
}

#[test]
fn neumann_operators_below_the_spectrum() {
    for (dim, l) in [(1, 10), (2, 3)] {
        let h = hamiltonian(dim, l, 2.0, 1, BoundaryCondition::Neumann);
        assert!(green_deviation(&h, -0.5) < 1e-8, "d={dim}");
    }
}

#[test]
fn eigenvalues_match_nalgebra() {
    for (dim, l) in [(1, 20), (2, 4)] {
        for index in 0..5 {
            let h = hamiltonian(dim, l, 10.0, index, BoundaryCondition::Dirichlet);
            let sd = eig(&h).unwrap();
            let mut reference: Vec<f64> = to_na(&h)
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .copied()
                .collect();
            reference.sort_by(f64::total_cmp);
            for (a, b) in sd.eigenvalues().iter().zip(&reference) {
                assert!((a - b).abs() < 1e-10 * sd.h_norm().max(1.0));
            }
            let n = h.len();
            for j in 0..n {
                let v = sd.eigenvector(j);
                let hv = h.matrix.mul_vec(&v);
                let res: f64 = hv
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| (a - sd.eigenvalues()[j] * b).powi(2))
                    .sum();
                assert!(res.sqrt() < 1e-11 * sd.h_norm().max(1.0));
            }
        }
    }
}

#[test]
fn tridiagonal_vectors_keep_tails() {
    // strong disorder: the largest entries agree with the dense solver, and the
    // far tail stays far below the dense solver's rounding floor
    let h = hamiltonian(1, 44, 100.0, 302, BoundaryCondition::Dirichlet);
    let (_, tri) = symeig::eigh_tridiagonal(&h.matrix).unwrap();
    let (_, dense) = symeig::eigh_dense(&h.matrix).unwrap();
    let n = h.len();
    for j in 0..n {
        let col = |m: &[f64]| (0..n).map(|i| m[i * n + j]).collect::<Vec<f64>>();
        let (a, b) = (col(&tri), col(&dense));
        let sign = if a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() < 0.0 {
            -1.0
        } else {
            1.0
        };
        for (x, y) in a.iter().zip(&b) {
            if y.abs() > 1e-6 {
                assert!((x - sign * y).abs() < 1e-9);
            }
        }
    }
    let tail = (0..n)
        .map(|i| tri[i * n].abs())
        .fold(f64::INFINITY, f64::min);
    assert!(tail < 1e-40, "{tail:e}");
}
