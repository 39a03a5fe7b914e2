//! Dense symmetric eigensolver: Householder tridiagonalization followed by the
//! implicit QL iteration, plus a twisted-factorization path for matrices that
//! are already tridiagonal.
//!
//! Public eigenvector matrices are row-major with `v[i * n + j]` the `i`-th
//! component of the `j`-th eigenvector. Internally the reduction and the QL
//! sweeps work on the transpose so that rotations touch contiguous rows.

use crate::error::{Error, Result};
use crate::operator::DenseMatrix;

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

/// Householder reduction to tridiagonal form. Returns the diagonal `d`, the
/// subdiagonal `e` (`e[i]` couples `i-1` and `i`, `e[0] = 0`) and, if requested,
/// the accumulated orthogonal transform stored column by column
/// (`q[j * n + i] = Q[i][j]`).
pub(crate) fn tridiagonalize(
    a: &DenseMatrix,
    want_vectors: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = a.n();
    let mut v = a.data().to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    if n == 0 {
        return (d, e, v);
    }
    // column-major view of the symmetric input
    let idx = |i: usize, j: usize| j * n + i;

    for (j, dj) in d.iter_mut().enumerate() {
        *dj = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
                v[idx(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in j + 1..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    if !want_vectors {
        for (i, di) in d.iter_mut().enumerate() {
            *di = v[idx(i, i)];
        }
        e[0] = 0.0;
        return (d, e, Vec::new());
    }

    for i in 0..n - 1 {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = 0.0;
    }
    v[idx(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
    (d, e, v)
}

/// Implicit QL on the tridiagonal `(d, e)` in the layout produced by
/// [`tridiagonalize`]. On success `d` holds the eigenvalues in ascending order
/// and `v`, if given, the correspondingly permuted eigenvectors, one per row.
pub(crate) fn tql(
    d: &mut [f64],
    e: &mut [f64],
    mut v: Option<&mut [f64]>,
) -> std::result::Result<(), usize> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_SWEEPS_PER_EIGENVALUE {
                    return Err(l);
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(v) = v.as_deref_mut() {
                        let (a, b) = v[i * n..(i + 2) * n].split_at_mut(n);
                        for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                            let hk = *y;
                            *y = s * *x + c * hk;
                            *x = c * *x - s * hk;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // selection sort keeps the permutation of eigenvector columns simple
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            if let Some(v) = v.as_deref_mut() {
                let (a, b) = v.split_at_mut(k * n);
                a[i * n..(i + 1) * n].swap_with_slice(&mut b[..n]);
            }
        }
    }
    Ok(())
}

fn no_convergence(a: &DenseMatrix) -> Error {
    Error::NoConvergence {
        n: a.n(),
        dump: a.dump(),
    }
}

/// Diagonal and super-diagonal of a tridiagonal matrix.
pub(crate) fn bands(a: &DenseMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.n();
    let diag = (0..n).map(|i| a.get(i, i)).collect();
    let off = (0..n.saturating_sub(1)).map(|i| a.get(i, i + 1)).collect();
    (diag, off)
}

pub fn eigvalsh(a: &DenseMatrix) -> Result<Vec<f64>> {
    let n = a.n();
    let (mut d, mut e) = if a.is_tridiagonal() {
        let (diag, off) = bands(a);
        let mut e = vec![0.0; n];
        e[1..].copy_from_slice(&off);
        (diag, e)
    } else {
        let (d, e, _) = tridiagonalize(a, false);
        (d, e)
    };
    tql(&mut d, &mut e, None).map_err(|_| no_convergence(a))?;
    Ok(d)
}

/// Full decomposition via Householder + QL.
pub fn eigh_dense(a: &DenseMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut d, mut e, mut q) = tridiagonalize(a, true);
    tql(&mut d, &mut e, Some(&mut q)).map_err(|_| no_convergence(a))?;
    let n = d.len();
    let mut v = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            v[i * n + j] = q[j * n + i];
        }
    }
    Ok((d, v))
}

/// Resolvent entries of a tridiagonal matrix built from its forward and
/// backward pivots. `G(i,k) = G(k,k) ∏_{t=i}^{k-1} (-b_t / d⁺_t)` for `i < k`,
/// so distant entries are products and keep their relative accuracy where an
/// eigen-expansion would lose them to cancellation.
#[derive(Clone, Debug)]
pub struct TridiagonalGreen {
    log_diag: Vec<f64>,
    sign_diag: Vec<f64>,
    prefix: Vec<f64>,
    sign_prefix: Vec<f64>,
}

impl TridiagonalGreen {
    pub fn new(diag: &[f64], off: &[f64], e: f64) -> TridiagonalGreen {
        let n = diag.len();
        let bmax = off.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        let pivmin = f64::MIN_POSITIVE.max(f64::EPSILON * f64::EPSILON * (1.0 + bmax * bmax));
        let guard = |x: f64| {
            if x.abs() < pivmin {
                if x < 0.0 {
                    -pivmin
                } else {
                    pivmin
                }
            } else {
                x
            }
        };
        let mut dp = vec![0.0; n];
        let mut dm = vec![0.0; n];
        if n > 0 {
            dp[0] = guard(diag[0] - e);
            for i in 1..n {
                dp[i] = guard(diag[i] - e - off[i - 1] * off[i - 1] / dp[i - 1]);
            }
            dm[n - 1] = guard(diag[n - 1] - e);
            for i in (0..n - 1).rev() {
                dm[i] = guard(diag[i] - e - off[i] * off[i] / dm[i + 1]);
            }
        }
        let mut log_diag = Vec::with_capacity(n);
        let mut sign_diag = Vec::with_capacity(n);
        for i in 0..n {
            let g = 1.0 / (dp[i] + dm[i] - (diag[i] - e));
            log_diag.push(g.abs().ln());
            sign_diag.push(g.signum());
        }
        let mut prefix = vec![0.0; n];
        let mut sign_prefix = vec![1.0; n];
        for t in 1..n {
            let r = -off[t - 1] / dp[t - 1];
            prefix[t] = prefix[t - 1] + r.abs().ln();
            sign_prefix[t] = sign_prefix[t - 1] * if r < 0.0 { -1.0 } else { 1.0 };
        }
        TridiagonalGreen {
            log_diag,
            sign_diag,
            prefix,
            sign_prefix,
        }
    }

    pub fn log_abs(&self, i: usize, k: usize) -> f64 {
        let (lo, hi) = if i <= k { (i, k) } else { (k, i) };
        self.log_diag[hi] + self.prefix[hi] - self.prefix[lo]
    }

    pub fn value(&self, i: usize, k: usize) -> f64 {
        let (lo, hi) = if i <= k { (i, k) } else { (k, i) };
        self.sign_diag[hi] * self.sign_prefix[hi] * self.sign_prefix[lo] * self.log_abs(i, k).exp()
    }
}

/// Eigenvector of the tridiagonal `(diag, off)` for the eigenvalue `lambda`,
/// computed from the twisted factorization with the smallest twist element.
/// Components are formed by products of stable ratios, so exponentially small
/// tails keep their relative accuracy.
fn twisted_vector(
    diag: &[f64],
    off: &[f64],
    lambda: f64,
    pivmin: f64,
    out: &mut [f64],
    dp: &mut [f64],
    dm: &mut [f64],
) {
    let n = diag.len();
    let guard = |x: f64| {
        if x.abs() < pivmin {
            if x < 0.0 {
                -pivmin
            } else {
                pivmin
            }
        } else {
            x
        }
    };
    dp[0] = guard(diag[0] - lambda);
    for i in 1..n {
        dp[i] = guard(diag[i] - lambda - off[i - 1] * off[i - 1] / dp[i - 1]);
    }
    dm[n - 1] = guard(diag[n - 1] - lambda);
    for i in (0..n - 1).rev() {
        dm[i] = guard(diag[i] - lambda - off[i] * off[i] / dm[i + 1]);
    }
    let mut k = 0;
    let mut best = f64::INFINITY;
    for i in 0..n {
        let gamma = (dp[i] + dm[i] - (diag[i] - lambda)).abs();
        if gamma < best {
            best = gamma;
            k = i;
        }
    }
    out[k] = 1.0;
    for i in (0..k).rev() {
        out[i] = -off[i] * out[i + 1] / dp[i];
    }
    for i in k + 1..n {
        out[i] = -off[i - 1] * out[i - 1] / dm[i];
    }
    let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in out.iter_mut() {
        *x /= norm;
    }
}

/// Decomposition of a tridiagonal matrix with twisted-factorization
/// eigenvectors, reorthogonalized by Gram-Schmidt. Falls back to the
/// QL vectors when the result does not validate.
pub fn eigh_tridiagonal(a: &DenseMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = a.n();
    let (diag, off) = bands(a);
    let mut d = diag.clone();
    let mut e = vec![0.0; n];
    if n > 1 {
        e[1..].copy_from_slice(&off);
    }
    tql(&mut d, &mut e, None).map_err(|_| no_convergence(a))?;
    if n <= 1 {
        return Ok((d, vec![1.0; n]));
    }

    let norm = a.inf_norm().max(1.0);
    let bmax = off.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    let pivmin = f64::EPSILON * f64::EPSILON * (1.0 + bmax * bmax);
    let mut cols = vec![0.0; n * n]; // column-major while building
    let mut dp = vec![0.0; n];
    let mut dm = vec![0.0; n];
    for j in 0..n {
        twisted_vector(
            &diag,
            &off,
            d[j],
            pivmin,
            &mut cols[j * n..(j + 1) * n],
            &mut dp,
            &mut dm,
        );
    }

    let mut ok = true;
    for j in 1..n {
        for _pass in 0..2 {
            for i in 0..j {
                let (head, tail) = cols.split_at_mut(j * n);
                let vi = &head[i * n..(i + 1) * n];
                let vj = &mut tail[..n];
                let c: f64 = vi.iter().zip(vj.iter()).map(|(a, b)| a * b).sum();
                // projections at rounding level would only smear noise into the tails
                if c.abs() <= 1e-14 {
                    continue;
                }
                for (b, a) in vj.iter_mut().zip(vi) {
                    *b -= c * a;
                }
            }
            let vj = &mut cols[j * n..(j + 1) * n];
            let nrm = vj.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm < 0.5 {
                ok = false;
            }
            for x in vj.iter_mut() {
                *x /= nrm;
            }
        }
    }

    if ok {
        let tol = 1e-12 * norm;
        'check: for j in 0..n {
            let v = &cols[j * n..(j + 1) * n];
            let mut res = 0.0;
            for i in 0..n {
                let mut r = (diag[i] - d[j]) * v[i];
                if i > 0 {
                    r += off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    r += off[i] * v[i + 1];
                }
                res += r * r;
            }
            if !(res.sqrt() <= tol) {
                ok = false;
                break 'check;
            }
            for i in 0..j {
                let w = &cols[i * n..(i + 1) * n];
                let dot: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
                if dot.abs() > 1e-12 {
                    ok = false;
                    break 'check;
                }
            }
        }
    }

    if !ok {
        return eigh_dense(a);
    }
    let mut v = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            v[i * n + j] = cols[j * n + i];
        }
    }
    Ok((d, v))
}

pub fn eigh(a: &DenseMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.n() > 1 && a.is_tridiagonal() {
        eigh_tridiagonal(a)
    } else {
        eigh_dense(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(n);
        for i in 0..n - 1 {
            m.set(i, i + 1, -1.0);
            m.set(i + 1, i, -1.0);
        }
        m
    }

    #[test]
    fn tridiagonal_green_far_entries() {
        // constant chain: G(0, n-1) = 1 / U_n(a/2), U_n(cosh μ) = sinh((n+1)μ) / sinh μ
        let (n, a) = (89, 100.0);
        let diag = vec![a; n];
        let off = vec![-1.0; n - 1];
        let t = TridiagonalGreen::new(&diag, &off, 0.0);
        let mu = (a / 2.0f64).acosh();
        let exact = mu.sinh().ln() - ((n as f64 + 1.0) * mu).sinh().ln();
        assert!((t.log_abs(0, n - 1) - exact).abs() < 1e-10);
        assert!(t.value(0, n - 1) > 0.0);

        let mut m = path(6);
        let v = [0.3, -1.2, 2.0, 0.7, -0.4, 1.5];
        for (i, x) in v.iter().enumerate() {
            m.set(i, i, *x);
        }
        let (d, o) = bands(&m);
        let (ev, psi) = eigh_dense(&m).unwrap();
        let t = TridiagonalGreen::new(&d, &o, 0.1);
        for i in 0..6 {
            for k in 0..6 {
                let g: f64 = (0..6)
                    .map(|j| psi[i * 6 + j] * psi[k * 6 + j] / (ev[j] - 0.1))
                    .sum();
                assert!(
                    (t.value(i, k) - g).abs() < 1e-12 * g.abs().max(1.0),
                    "{i} {k}"
                );
            }
        }
    }

    #[test]
    fn small_spectra() {
        let (d, _) = eigh(&path(2)).unwrap();
        assert!((d[0] + 1.0).abs() < 1e-15 && (d[1] - 1.0).abs() < 1e-15);
        let s2 = std::f64::consts::SQRT_2;
        for solver in [eigh_dense, eigh_tridiagonal] {
            let (d, _) = solver(&path(3)).unwrap();
            assert!((d[0] + s2).abs() < 1e-14 && d[1].abs() < 1e-14 && (d[2] - s2).abs() < 1e-14);
        }
        let diag = DenseMatrix::from_rows(&[vec![3., 0., 0.], vec![0., 1., 0.], vec![0., 0., 2.]]);
        assert_eq!(eigvalsh(&diag).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn eigenvalue_only_reduction_matches_full() {
        let n = 7;
        let mut m = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v = ((i * 31 + j * 17) % 11) as f64 - 5.0;
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        let a = eigvalsh(&m).unwrap();
        let (b, _) = eigh_dense(&m).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn dense_vectors_satisfy_eigen_equation() {
        let n = 23;
        let mut m = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v = ((i * 7919 + j * 104729) % 1009) as f64 / 1009.0 - 0.5;
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        let (d, v) = eigh_dense(&m).unwrap();
        for j in 0..n {
            let x: Vec<f64> = (0..n).map(|i| v[i * n + j]).collect();
            let y = m.mul_vec(&x);
            let res: f64 = y
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - d[j] * b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(res < 1e-12, "residual {res:e}");
            for k in 0..j {
                let dot: f64 = (0..n).map(|i| v[i * n + k] * x[i]).sum();
                assert!(dot.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn twisted_vectors_resolve_tiny_tails() {
        // strongly disordered chain: the eigenvector localized at the left end
        // decays like 1/100 per site, far below the QL noise floor at the far end
        let n = 12;
        let mut m = path(n);
        for i in 0..n {
            m.set(i, i, 100.0 * i as f64);
        }
        let (d, v) = eigh_tridiagonal(&m).unwrap();
        let j = 0;
        assert!(d[j].abs() < 0.02);
        let tail = v[(n - 1) * n + j].abs();
        // |ψ(i+1)/ψ(i)| ≈ 1/(100(i+1))
        let expected: f64 = (1..n).map(|i| 1.0 / (100.0 * i as f64)).product();
        assert!(
            tail > 0.5 * expected && tail < 2.0 * expected,
            "tail {tail:e} vs {expected:e}"
        );
    }
}
