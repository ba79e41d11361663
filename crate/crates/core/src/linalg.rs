//! Fixed-size vector helpers and tiny dense solves.

use crate::scalar::Real;

pub type Vec3<T> = [T; 3];

#[inline]
pub fn add<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale<T: Real>(a: &Vec3<T>, s: T) -> Vec3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn axpy<T: Real>(a: &Vec3<T>, s: T, b: &Vec3<T>) -> Vec3<T> {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

#[inline]
pub fn dot<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm<T: Real>(a: &Vec3<T>) -> T {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    norm(&sub(a, b))
}

pub fn normalize<T: Real>(a: &Vec3<T>) -> Option<Vec3<T>> {
    let n = norm(a);
    if n > T::zero() && n.is_finite() {
        Some(scale(a, T::one() / n))
    } else {
        None
    }
}

/// Solves `m x = rhs` by Gaussian elimination with partial pivoting.
/// Returns `None` when the matrix is numerically singular.
pub fn solve3<T: Real>(m: &[[T; 3]; 3], rhs: &Vec3<T>) -> Option<Vec3<T>> {
    let mut a = *m;
    let mut b = *rhs;
    let scale_max = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(T::zero(), |acc, v| acc.max(v.abs()));
    if scale_max == T::zero() {
        return None;
    }
    let tiny = scale_max * T::epsilon() * T::lit(16.0);
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[piv][col].abs() <= tiny {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = [T::zero(); 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in row + 1..3 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Solves a 2x2 system; `None` if `|det|` is below `min_det`.
pub fn solve2<T: Real>(m: &[[T; 2]; 2], rhs: &[T; 2], min_det: T) -> Option<[T; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() <= min_det || !det.is_finite() {
        return None;
    }
    Some([
        (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det,
        (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det,
    ])
}

/// Eigenvalues of a real 2x2 matrix. `Err((re, im))` when they are complex.
pub fn eig2(m: &[[f64; 2]; 2]) -> Result<(f64, f64), (f64, f64)> {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = 0.25 * tr * tr - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        let (l1, l2) = (0.5 * tr + r, 0.5 * tr - r);
        Ok((l1, l2))
    } else {
        Err((0.5 * tr, (-disc).sqrt()))
    }
}

/// Minimum-norm solution of the underdetermined system `J dx = rhs` with
/// `J` 2x3 (rows `r0`, `r1`): `dx = J^T (J J^T)^{-1} rhs`.
pub fn min_norm_2x3<T: Real>(r0: &Vec3<T>, r1: &Vec3<T>, rhs: &[T; 2]) -> Option<Vec3<T>> {
    let g = [[dot(r0, r0), dot(r0, r1)], [dot(r1, r0), dot(r1, r1)]];
    let det_scale = g[0][0] * g[1][1];
    let y = solve2(&g, rhs, det_scale * T::epsilon() * T::lit(64.0))?;
    Some(axpy(&scale(r0, y[0]), y[1], r1))
}
