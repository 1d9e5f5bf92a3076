//! Cone blocks, Nesterov-Todd scalings and the Jordan-algebra operations
//! driving the interior-point iteration.
//!
//! The solver core only sees zero, nonnegative and second-order cones;
//! rotated cones are mapped to plain second-order cones by an orthogonal
//! row transform before the iteration starts.

use crate::sparse::norm2;

/// Cone block in the solver-internal decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InternalCone {
    Zero(usize),
    NonNegative(usize),
    SecondOrder(usize),
}

impl InternalCone {
    pub fn dim(&self) -> usize {
        match *self {
            InternalCone::Zero(n) | InternalCone::NonNegative(n) | InternalCone::SecondOrder(n) => n,
        }
    }

    /// Barrier degree: each nonnegative component counts one, each
    /// second-order block counts one, zero blocks do not contribute.
    pub fn degree(&self) -> usize {
        match *self {
            InternalCone::Zero(_) => 0,
            InternalCone::NonNegative(n) => n,
            InternalCone::SecondOrder(_) => 1,
        }
    }
}

/// Nesterov-Todd scaling state for one cone block.
#[derive(Debug, Clone)]
pub enum Scaling {
    Zero {
        dim: usize,
    },
    /// `w[i] = sqrt(s[i]/z[i])`, so `W = diag(w)`.
    NonNegative { w: Vec<f64> },
    /// `W = eta * H(wbar)` with `H(w) = [w0 w1^T; w1 I + w1 w1^T/(1+w0)]`.
    SecondOrder { eta: f64, wbar: Vec<f64> },
}

impl Scaling {
    /// Identity scaling, used by the initialization solve.
    pub fn identity(cone: InternalCone) -> Self {
        match cone {
            InternalCone::Zero(n) => Scaling::Zero { dim: n },
            InternalCone::NonNegative(n) => Scaling::NonNegative { w: vec![1.0; n] },
            InternalCone::SecondOrder(n) => {
                let mut wbar = vec![0.0; n];
                wbar[0] = 1.0;
                Scaling::SecondOrder { eta: 1.0, wbar }
            }
        }
    }

    /// NT scaling from a strictly interior primal-dual pair.
    pub fn from_pair(cone: InternalCone, s: &[f64], z: &[f64]) -> Option<Self> {
        match cone {
            InternalCone::Zero(n) => Some(Scaling::Zero { dim: n }),
            InternalCone::NonNegative(_) => {
                let mut w = Vec::with_capacity(s.len());
                for (&si, &zi) in s.iter().zip(z) {
                    if si <= 0.0 || zi <= 0.0 {
                        return None;
                    }
                    w.push((si / zi).sqrt());
                }
                Some(Scaling::NonNegative { w })
            }
            InternalCone::SecondOrder(_) => {
                let rs2 = jnorm2(s);
                let rz2 = jnorm2(z);
                if rs2 <= 0.0 || rz2 <= 0.0 || s[0] <= 0.0 || z[0] <= 0.0 {
                    return None;
                }
                let rs = rs2.sqrt();
                let rz = rz2.sqrt();
                let mut sbar: Vec<f64> = s.iter().map(|v| v / rs).collect();
                let zbar: Vec<f64> = z.iter().map(|v| v / rz).collect();
                let mut dot_sz = sbar[0] * zbar[0];
                for i in 1..sbar.len() {
                    dot_sz += sbar[i] * zbar[i];
                }
                let gamma = ((1.0 + dot_sz) / 2.0).sqrt();
                if !gamma.is_finite() || gamma <= 0.0 {
                    return None;
                }
                // wbar = (sbar + J zbar) / (2 gamma)
                sbar[0] += zbar[0];
                for i in 1..sbar.len() {
                    sbar[i] -= zbar[i];
                }
                for v in sbar.iter_mut() {
                    *v /= 2.0 * gamma;
                }
                let eta = (rs / rz).sqrt();
                Some(Scaling::SecondOrder { eta, wbar: sbar })
            }
        }
    }

    /// `out = W v`
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Zero { .. } => out.fill(0.0),
            Scaling::NonNegative { w } => {
                for i in 0..w.len() {
                    out[i] = w[i] * v[i];
                }
            }
            Scaling::SecondOrder { eta, wbar } => {
                apply_h(wbar, v, out);
                for o in out.iter_mut() {
                    *o *= eta;
                }
            }
        }
    }

    /// `out = W^{-1} v` (W is symmetric, so this is also `W^{-T} v`).
    pub fn apply_inv(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Zero { .. } => out.fill(0.0),
            Scaling::NonNegative { w } => {
                for i in 0..w.len() {
                    out[i] = v[i] / w[i];
                }
            }
            Scaling::SecondOrder { eta, wbar } => {
                // H(wbar)^{-1} = H(J wbar) for J-unitary wbar
                let mut jw = wbar.clone();
                for x in jw.iter_mut().skip(1) {
                    *x = -*x;
                }
                apply_h(&jw, v, out);
                for o in out.iter_mut() {
                    *o /= eta;
                }
            }
        }
    }

    /// Dense upper-triangle entries of `W^2` for this block, as
    /// `(local_row, local_col, value)` with `local_row <= local_col`.
    pub fn w_squared_upper(&self, out: &mut Vec<(usize, usize, f64)>) {
        out.clear();
        match self {
            Scaling::Zero { .. } => {}
            Scaling::NonNegative { w } => {
                for (i, &wi) in w.iter().enumerate() {
                    out.push((i, i, wi * wi));
                }
            }
            Scaling::SecondOrder { eta, wbar } => {
                // W^2 = eta^2 (2 wbar wbar^T - J)
                let e2 = eta * eta;
                let n = wbar.len();
                for i in 0..n {
                    for j in i..n {
                        let mut v = 2.0 * wbar[i] * wbar[j];
                        if i == j {
                            v -= if i == 0 { 1.0 } else { -1.0 };
                        }
                        out.push((i, j, e2 * v));
                    }
                }
            }
        }
    }

    /// `out = W^2 v` without forming the matrix.
    pub fn apply_w2(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Zero { .. } => out.fill(0.0),
            Scaling::NonNegative { w } => {
                for i in 0..w.len() {
                    out[i] = w[i] * w[i] * v[i];
                }
            }
            Scaling::SecondOrder { eta, wbar } => {
                let e2 = eta * eta;
                let mut wv = wbar[0] * v[0];
                for i in 1..wbar.len() {
                    wv += wbar[i] * v[i];
                }
                out[0] = e2 * (2.0 * wbar[0] * wv - v[0]);
                for i in 1..wbar.len() {
                    out[i] = e2 * (2.0 * wbar[i] * wv + v[i]);
                }
            }
        }
    }

    /// Scaled point `lambda = W z`.
    pub fn lambda(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        self.apply(z, &mut out);
        out
    }
}

fn apply_h(wbar: &[f64], v: &[f64], out: &mut [f64]) {
    let n = wbar.len();
    let mut w1v1 = 0.0;
    for i in 1..n {
        w1v1 += wbar[i] * v[i];
    }
    out[0] = wbar[0] * v[0] + w1v1;
    let coef = v[0] + w1v1 / (1.0 + wbar[0]);
    for i in 1..n {
        out[i] = v[i] + coef * wbar[i];
    }
}

/// `s0^2 - ||s1||^2`, the second-order cone quadratic form.
pub fn jnorm2(s: &[f64]) -> f64 {
    let mut acc = s[0] * s[0];
    for &v in &s[1..] {
        acc -= v * v;
    }
    acc
}

/// Jordan product `u o v` for one cone block.
pub fn jordan_product(cone: InternalCone, u: &[f64], v: &[f64], out: &mut [f64]) {
    match cone {
        InternalCone::Zero(_) => out.fill(0.0),
        InternalCone::NonNegative(_) => {
            for i in 0..u.len() {
                out[i] = u[i] * v[i];
            }
        }
        InternalCone::SecondOrder(_) => {
            let mut uv = 0.0;
            for i in 0..u.len() {
                uv += u[i] * v[i];
            }
            out[0] = uv;
            for i in 1..u.len() {
                out[i] = u[0] * v[i] + v[0] * u[i];
            }
        }
    }
}

/// Solve `u o x = d` for `x` (inverse of the arrow matrix of `u`).
pub fn jordan_solve(cone: InternalCone, u: &[f64], d: &[f64], out: &mut [f64]) {
    match cone {
        InternalCone::Zero(_) => out.fill(0.0),
        InternalCone::NonNegative(_) => {
            for i in 0..u.len() {
                out[i] = d[i] / u[i];
            }
        }
        InternalCone::SecondOrder(_) => {
            let det = jnorm2(u);
            let u0 = u[0];
            let mut u1d1 = 0.0;
            for i in 1..u.len() {
                u1d1 += u[i] * d[i];
            }
            out[0] = (u0 * d[0] - u1d1) / det;
            let coef = (u1d1 / u0 - d[0]) / det;
            for i in 1..u.len() {
                out[i] = d[i] / u0 + coef * u[i];
            }
        }
    }
}

/// Identity element of the Jordan algebra for one block.
pub fn unit_element(cone: InternalCone, out: &mut [f64]) {
    match cone {
        InternalCone::Zero(_) => out.fill(0.0),
        InternalCone::NonNegative(_) => out.fill(1.0),
        InternalCone::SecondOrder(_) => {
            out.fill(0.0);
            out[0] = 1.0;
        }
    }
}

/// Largest step `alpha` keeping `v + alpha dv` inside the cone; `f64::INFINITY`
/// when unconstrained. `v` must be strictly interior.
pub fn step_to_boundary(cone: InternalCone, v: &[f64], dv: &[f64]) -> f64 {
    match cone {
        InternalCone::Zero(_) => f64::INFINITY,
        InternalCone::NonNegative(_) => {
            let mut alpha = f64::INFINITY;
            for i in 0..v.len() {
                if dv[i] < 0.0 {
                    alpha = alpha.min(-v[i] / dv[i]);
                }
            }
            alpha
        }
        InternalCone::SecondOrder(_) => {
            // roots of |v0 + a d0|^2 - ||v1 + a d1||^2 = 0
            let a = jnorm2(dv);
            let c = jnorm2(v);
            let mut b = v[0] * dv[0];
            for i in 1..v.len() {
                b -= v[i] * dv[i];
            }
            let mut alpha = smallest_positive_root(a, 2.0 * b, c);
            if dv[0] < 0.0 {
                alpha = alpha.min(-v[0] / dv[0]);
            }
            alpha
        }
    }
}

/// Margin to the cone boundary: positive means strictly interior.
pub fn interior_margin(cone: InternalCone, v: &[f64]) -> f64 {
    match cone {
        InternalCone::Zero(_) => 0.0,
        InternalCone::NonNegative(_) => v.iter().fold(f64::INFINITY, |m, &x| m.min(x)),
        InternalCone::SecondOrder(_) => v[0] - norm2(&v[1..]),
    }
}

/// Smallest positive root of `a x^2 + b x + c = 0`, or infinity.
fn smallest_positive_root(a: f64, b: f64, c: f64) -> f64 {
    let eps = 1e-300;
    if a.abs() < eps {
        if b.abs() < eps {
            return f64::INFINITY;
        }
        let r = -c / b;
        return if r > 0.0 { r } else { f64::INFINITY };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = [q / a, if q.abs() < eps { f64::INFINITY } else { c / q }];
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    for r in roots {
        if r > 0.0 && r.is_finite() {
            return r;
        }
    }
    f64::INFINITY
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nt_scaling_maps_pair_to_common_point() {
        let cone = InternalCone::SecondOrder(3);
        let s = [2.0, 0.3, -0.5];
        let z = [1.5, -0.2, 0.7];
        let w = Scaling::from_pair(cone, &s, &z).unwrap();
        let lam_z = w.lambda(&z);
        let mut lam_s = vec![0.0; 3];
        w.apply_inv(&s, &mut lam_s);
        for i in 0..3 {
            assert!((lam_z[i] - lam_s[i]).abs() < 1e-12, "W z != W^-1 s at {i}");
        }
        // W^2 z should equal s composed through the scaling
        let mut w2z = vec![0.0; 3];
        w.apply_w2(&z, &mut w2z);
        for i in 0..3 {
            assert!((w2z[i] - s[i]).abs() < 1e-12, "W^2 z != s at {i}");
        }
    }

    #[test]
    fn jordan_solve_inverts_product() {
        let cone = InternalCone::SecondOrder(4);
        let u = [3.0, 0.5, -1.0, 0.25];
        let d = [0.7, -0.3, 0.1, 2.0];
        let mut x = vec![0.0; 4];
        jordan_solve(cone, &u, &d, &mut x);
        let mut back = vec![0.0; 4];
        jordan_product(cone, &u, &x, &mut back);
        for i in 0..4 {
            assert!((back[i] - d[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn step_length_hits_boundary() {
        let cone = InternalCone::SecondOrder(3);
        let v = [1.0, 0.0, 0.0];
        let dv = [0.0, 1.0, 0.0];
        let alpha = step_to_boundary(cone, &v, &dv);
        assert!((alpha - 1.0).abs() < 1e-12);
        let margin = interior_margin(cone, &[1.0, alpha, 0.0]);
        assert!(margin.abs() < 1e-12);
    }

    #[test]
    fn nonneg_step_length() {
        let cone = InternalCone::NonNegative(2);
        let alpha = step_to_boundary(cone, &[1.0, 2.0], &[-0.5, 1.0]);
        assert!((alpha - 2.0).abs() < 1e-12);
    }
}
