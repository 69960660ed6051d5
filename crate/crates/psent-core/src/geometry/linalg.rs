//! Fixed-size 3D linear algebra: just enough for rigid registration.
//!
//! The 3x3 SVD is built on a symmetric Jacobi eigensolver, which is compact
//! and numerically robust at this size; pulling in a general linear-algebra
//! crate for one decomposition was not worth the dependency surface in a
//! no_std core.

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// 3-vector.
pub type Vec3 = [f64; 3];
/// Row-major 3x3 matrix.
pub type Mat3 = [[f64; 3]; 3];

/// `a + b`.
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// `a - b`.
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// `s * a`.
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Dot product.
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Cross product.
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Euclidean norm.
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Squared distance between points.
pub fn dist2(a: Vec3, b: Vec3) -> f64 {
    let d = sub(a, b);
    dot(d, d)
}

/// Unit vector along `a`, or `None` for a (near-)zero vector.
pub fn normalize(a: Vec3) -> Option<Vec3> {
    let n = norm(a);
    if n < 1e-12 {
        None
    } else {
        Some(scale(a, 1.0 / n))
    }
}

/// Matrix-vector product.
pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

/// Matrix product.
pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

/// Transpose.
pub fn transpose(m: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
    }
    out
}

/// Determinant.
pub fn det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Identity.
pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Rotation matrix from a unit axis and an angle (Rodrigues).
pub fn rotation_from_axis_angle(axis: Vec3, angle_rad: f64) -> Mat3 {
    let [x, y, z] = axis;
    let (s, c) = (angle_rad.sin(), angle_rad.cos());
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

/// Rotation angle in radians of a proper rotation matrix.
pub fn rotation_angle(r: &Mat3) -> f64 {
    let tr = r[0][0] + r[1][1] + r[2][2];
    ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi sweeps.
/// Returns eigenvalues in descending order with matching unit eigenvector
/// columns.
fn jacobi_sym3(m: &Mat3) -> ([f64; 3], Mat3) {
    let mut a = *m;
    let mut v = IDENTITY;
    for _sweep in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off < 1e-30 {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q].abs() < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            // A <- J^T A J with the (p,q) Givens rotation J.
            let mut rot = IDENTITY;
            rot[p][p] = c;
            rot[q][q] = c;
            rot[p][q] = s;
            rot[q][p] = -s;
            a = mat_mul(&mat_mul(&transpose(&rot), &a), &rot);
            a[p][q] = 0.0;
            a[q][p] = 0.0;
            v = mat_mul(&v, &rot);
        }
    }
    let mut order = [0usize, 1, 2];
    // Descending by eigenvalue; insertion-style for three items.
    order.sort_unstable_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    let vals = [a[order[0]][order[0]], a[order[1]][order[1]], a[order[2]][order[2]]];
    let mut vecs = [[0.0; 3]; 3];
    for (k, &src) in order.iter().enumerate() {
        for row in 0..3 {
            vecs[row][k] = v[row][src];
        }
    }
    (vals, vecs)
}

/// Relative scale below which a singular value from [`svd3`] is treated as
/// zero. Working through `A^T A` squares the condition number, so singular
/// values under roughly `sqrt(machine eps) * s[0]` (about `1.5e-8 * s[0]`)
/// are round-off noise; this cutoff sits safely above that floor while
/// staying far below any meaningful singular value of a non-degenerate
/// point-cloud covariance.
pub const SVD_RANK_EPS: f64 = 1e-6;

/// Singular value decomposition `A = U diag(S) V^T` with `S` descending.
/// `U` and `V` have unit columns. `U` columns whose singular value falls
/// below `SVD_RANK_EPS * s[0]` cannot be recovered from `A` (the quotient
/// `A v_k / s_k` is noise), so they are completed by orthogonalization; the
/// result is always a proper orthonormal basis.
pub fn svd3(a: &Mat3) -> (Mat3, [f64; 3], Mat3) {
    let ata = mat_mul(&transpose(a), a);
    let (vals, v) = jacobi_sym3(&ata);
    let s = [
        vals[0].max(0.0).sqrt(),
        vals[1].max(0.0).sqrt(),
        vals[2].max(0.0).sqrt(),
    ];
    let cutoff = SVD_RANK_EPS * s[0].max(1e-300);
    let col = |k: usize| mat_vec(a, [v[0][k], v[1][k], v[2][k]]);

    let u0 = normalize(col(0)).unwrap_or([1.0, 0.0, 0.0]);
    let u1 = if s[1] > cutoff {
        let w = col(1);
        let w = sub(w, scale(u0, dot(w, u0)));
        normalize(w).unwrap_or_else(|| orthogonal_to(u0))
    } else {
        orthogonal_to(u0)
    };
    let u2 = if s[2] > cutoff {
        let w = col(2);
        let w = sub(w, scale(u0, dot(w, u0)));
        let w = sub(w, scale(u1, dot(w, u1)));
        normalize(w).unwrap_or_else(|| cross(u0, u1))
    } else {
        cross(u0, u1)
    };
    let mut u = [[0.0; 3]; 3];
    for row in 0..3 {
        u[row][0] = u0[row];
        u[row][1] = u1[row];
        u[row][2] = u2[row];
    }
    (u, s, v)
}

fn orthogonal_to(v: Vec3) -> Vec3 {
    let candidate = if v[0].abs() < 0.9 {
        cross(v, [1.0, 0.0, 0.0])
    } else {
        cross(v, [0.0, 1.0, 0.0])
    };
    normalize(candidate).unwrap_or([0.0, 0.0, 1.0])
}

/// Least-squares rigid fit: rotation and translation minimizing
/// `sum_i ||R p_i + t - q_i||^2` (Kabsch with reflection correction).
/// Returns `None` when the pairing is too degenerate to define a rotation
/// (fewer than 3 pairs, or all points collinear).
pub fn kabsch(pairs: &[(Vec3, Vec3)]) -> Option<(Mat3, Vec3)> {
    if pairs.len() < 3 {
        return None;
    }
    let n = pairs.len() as f64;
    let mut pc = [0.0; 3];
    let mut qc = [0.0; 3];
    for (p, q) in pairs {
        pc = add(pc, *p);
        qc = add(qc, *q);
    }
    pc = scale(pc, 1.0 / n);
    qc = scale(qc, 1.0 / n);

    // Cross-covariance H = sum (p - pc)(q - qc)^T.
    let mut h = [[0.0; 3]; 3];
    for (p, q) in pairs {
        let dp = sub(*p, pc);
        let dq = sub(*q, qc);
        for i in 0..3 {
            for j in 0..3 {
                h[i][j] += dp[i] * dq[j];
            }
        }
    }

    let (u, s, v) = svd3(&h);
    // Collinear input: only one significant singular value; the rotation
    // about that axis is unconstrained.
    if s[1] <= SVD_RANK_EPS * s[0].max(1e-300) {
        return None;
    }
    let d = det(&mat_mul(&v, &transpose(&u)));
    let mut v_fixed = v;
    if d < 0.0 {
        for row in &mut v_fixed {
            row[2] = -row[2];
        }
    }
    let r = mat_mul(&v_fixed, &transpose(&u));
    let t = sub(qc, mat_vec(&r, pc));
    Some((r, t))
}
