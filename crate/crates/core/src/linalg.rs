//! Fixed-size helpers for vectors and matrices in dimension 2 or 3.
//!
//! Vectors are stored as `[f64; 3]` and matrices as `[[f64; 3]; 3]`; for `d = 2`
//! the trailing component / row / column is kept at zero. Every function takes
//! the active dimension explicitly so padding never leaks into results.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const ZERO3: Vec3 = [0.0; 3];
pub const ZERO33: Mat3 = [[0.0; 3]; 3];

#[inline]
pub fn from_slice(x: &[f64]) -> Vec3 {
    let mut v = ZERO3;
    v[..x.len()].copy_from_slice(x);
    v
}

#[inline]
pub fn dot(a: &Vec3, b: &Vec3, d: usize) -> f64 {
    (0..d).map(|i| a[i] * b[i]).sum()
}

#[inline]
pub fn norm(a: &Vec3, d: usize) -> f64 {
    dot(a, a, d).sqrt()
}

#[inline]
pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn axpy(y: &Vec3, s: f64, x: &Vec3) -> Vec3 {
    [y[0] + s * x[0], y[1] + s * x[1], y[2] + s * x[2]]
}

pub fn identity(d: usize) -> Mat3 {
    let mut m = ZERO33;
    for (i, row) in m.iter_mut().enumerate().take(d) {
        row[i] = 1.0;
    }
    m
}

pub fn outer(a: &Vec3, b: &Vec3, d: usize) -> Mat3 {
    let mut m = ZERO33;
    for i in 0..d {
        for j in 0..d {
            m[i][j] = a[i] * b[j];
        }
    }
    m
}

pub fn mat_vec(m: &Mat3, v: &Vec3, d: usize) -> Vec3 {
    let mut out = ZERO3;
    for i in 0..d {
        out[i] = (0..d).map(|j| m[i][j] * v[j]).sum();
    }
    out
}

pub fn mat_mul(a: &Mat3, b: &Mat3, d: usize) -> Mat3 {
    let mut out = ZERO33;
    for i in 0..d {
        for j in 0..d {
            out[i][j] = (0..d).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut out = ZERO33;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[j][i] = *v;
        }
    }
    out
}

pub fn mat_scale(a: &Mat3, s: f64) -> Mat3 {
    let mut out = *a;
    for row in out.iter_mut() {
        for v in row.iter_mut() {
            *v *= s;
        }
    }
    out
}

pub fn mat_sub(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = *a;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] -= b[i][j];
        }
    }
    out
}

pub fn trace(a: &Mat3, d: usize) -> f64 {
    (0..d).map(|i| a[i][i]).sum()
}

/// `xᵀ A y`
pub fn quad_form(a: &Mat3, x: &Vec3, y: &Vec3, d: usize) -> f64 {
    dot(x, &mat_vec(a, y, d), d)
}

pub fn det(a: &Mat3, d: usize) -> f64 {
    match d {
        1 => a[0][0],
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        _ => {
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        }
    }
}

/// Adjugate (transpose of the cofactor matrix) by explicit cofactors.
pub fn adjugate(a: &Mat3, d: usize) -> Mat3 {
    let mut out = ZERO33;
    match d {
        2 => {
            out[0][0] = a[1][1];
            out[0][1] = -a[0][1];
            out[1][0] = -a[1][0];
            out[1][1] = a[0][0];
        }
        3 => {
            for i in 0..3 {
                for j in 0..3 {
                    let (r0, r1) = others(j);
                    let (c0, c1) = others(i);
                    let minor = a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0];
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    // out[i][j] = cofactor(j, i)
                    out[i][j] = sign * minor;
                }
            }
        }
        _ => panic!("adjugate only implemented for d in {{2,3}}"),
    }
    out
}

fn others(k: usize) -> (usize, usize) {
    match k {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// Eigen-decomposition of a symmetric matrix. Eigenvectors are returned as rows.
pub fn sym_eigen(a: &Mat3, d: usize) -> (Vec<f64>, Vec<Vec3>) {
    match d {
        2 => {
            let m = Matrix2::new(a[0][0], a[0][1], a[1][0], a[1][1]);
            let e = SymmetricEigen::new(m);
            let vals = e.eigenvalues.iter().copied().collect();
            let vecs = (0..2)
                .map(|k| [e.eigenvectors[(0, k)], e.eigenvectors[(1, k)], 0.0])
                .collect();
            (vals, vecs)
        }
        3 => {
            let m = Matrix3::new(
                a[0][0], a[0][1], a[0][2], a[1][0], a[1][1], a[1][2], a[2][0], a[2][1], a[2][2],
            );
            let e = SymmetricEigen::new(m);
            let vals = e.eigenvalues.iter().copied().collect();
            let vecs = (0..3)
                .map(|k| {
                    [
                        e.eigenvectors[(0, k)],
                        e.eigenvectors[(1, k)],
                        e.eigenvectors[(2, k)],
                    ]
                })
                .collect();
            (vals, vecs)
        }
        _ => panic!("sym_eigen only implemented for d in {{2,3}}"),
    }
}

/// Lower-triangular half-vectorization, column-major: (0,0),(1,0),..,(d-1,0),(1,1),...
pub fn vech(a: &Mat3, d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for j in 0..d {
        for i in j..d {
            out.push(a[i][j]);
        }
    }
    out
}

/// Inverse of [`vech`] for a symmetric matrix.
pub fn unvech(v: &[f64], d: usize) -> Mat3 {
    let mut m = ZERO33;
    let mut k = 0;
    for j in 0..d {
        for i in j..d {
            m[i][j] = v[k];
            m[j][i] = v[k];
            k += 1;
        }
    }
    m
}

/// Position of entry `(i, j)` (either order) inside [`vech`].
pub fn vech_index(i: usize, j: usize, d: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    // columns before c contribute d, d-1, ..., d-c+1 entries
    c * d - c * c.saturating_sub(1) / 2 + (r - c)
}
