use super::C64;
use nalgebra::DMatrix;

pub(crate) struct Svd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// Thin SVD with singular values in descending order.
///
/// One-sided Jacobi (Hestenes) rotations on the columns of the narrower
/// orientation. nalgebra's bidiagonal SVD can return factors that do not
/// reproduce an exactly rank-one matrix (a static scene), in either
/// orientation; Jacobi stays accurate on rank-deficient input.
pub(crate) fn sorted_svd(x: &DMatrix<f64>) -> Svd {
    if x.nrows() < x.ncols() {
        let t = sorted_svd(&x.transpose());
        return Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
    }
    let k = x.ncols();
    let mut w = x.clone();
    let mut v = DMatrix::<f64>::identity(k, k);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..k).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let u = DMatrix::from_fn(x.nrows(), k, |i, j| {
        let c = order[j];
        if norms[c] > 0.0 {
            w[(i, c)] / norms[c]
        } else {
            0.0
        }
    });
    Svd {
        u,
        sigma: order.iter().map(|&j| norms[j]).collect(),
        v: DMatrix::from_fn(k, k, |i, j| v[(i, order[j])]),
    }
}

const JACOBI_MAX_SWEEPS: usize = 60;

/// Columns `(p, q) <- (c p - s q, s p + c q)`.
fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (a, b) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * a - s * b;
        m[(i, q)] = s * a + c * b;
    }
}

/// Minimum-norm least-squares solution of `a x = y` for complex `a`,
/// ignoring singular values at or below `floor_rel * sigma_max`. Also
/// returns the condition number `sigma_max / sigma_min`.
///
/// Solved through the real embedding `[[Re a, -Im a], [Im a, Re a]]`, whose
/// singular values are those of `a`, each twice.
pub(crate) fn complex_least_squares(a: &DMatrix<C64>, y: &[C64], floor_rel: f64) -> (Vec<C64>, f64) {
    let (n, r) = a.shape();
    let e = DMatrix::from_fn(2 * n, 2 * r, |i, j| {
        let z = a[(i % n, j % r)];
        match (i < n, j < r) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let rhs = nalgebra::DVector::from_iterator(2 * n, y.iter().map(|z| z.re).chain(y.iter().map(|z| z.im)));
    let svd = sorted_svd(&e);
    let smax = svd.sigma.first().copied().unwrap_or(0.0);
    let smin = svd.sigma.last().copied().unwrap_or(0.0);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let mut x = nalgebra::DVector::<f64>::zeros(2 * r);
    for (j, &s) in svd.sigma.iter().enumerate() {
        if s > smax * floor_rel {
            let coef = svd.u.column(j).dot(&rhs) / s;
            x += svd.v.column(j) * coef;
        }
    }
    ((0..r).map(|j| C64::new(x[j], x[r + j])).collect(), condition)
}

/// Eigenvalues and unit-norm eigenvectors of a general complex matrix.
///
/// Uses the complex Schur form `A = Q T Q*`; eigenvectors of the triangular
/// factor come from back-substitution and are mapped back through `Q`.
/// Near-equal diagonal entries are separated by a small floor, so repeated
/// eigenvalues yield (nearly) parallel vectors rather than a failure.
pub fn eig_complex(a: &DMatrix<C64>) -> (Vec<C64>, DMatrix<C64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigendecomposition needs a square matrix");
    let (q, t) = nalgebra::linalg::Schur::new(a.clone()).unpack();
    let lambdas: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    let tiny = f64::EPSILON * t.norm().max(f64::MIN_POSITIVE);

    let mut y = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        y[(k, k)] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = C64::new(0.0, 0.0);
            for j in i + 1..=k {
                s += t[(i, j)] * y[(j, k)];
            }
            let mut d = t[(i, i)] - lambdas[k];
            if d.norm() < tiny {
                d = C64::new(tiny, 0.0);
            }
            y[(i, k)] = -s / d;
        }
    }
    let mut w = q * y;
    for k in 0..n {
        let norm = w.column(k).norm();
        let col = w.column(k) / C64::new(norm, 0.0);
        w.set_column(k, &col);
    }
    (lambdas, w)
}
