//! Action of `exp(-i H h)` on a vector for a real symmetric tridiagonal `H`
//! with arbitrary diagonal and a constant off-diagonal, by Chebyshev expansion.
//!
//! The series is truncated once the Bessel coefficients fall below `1e-18`,
//! which keeps each application unitary to machine precision.

use num_complex::Complex64;

const COEFF_CUTOFF: f64 = 1e-18;

/// `J_k(x)` for `k = 0..=kmax` by Miller's backward recurrence.
pub fn bessel_j_sequence(x: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = {
        let s = kmax.max(x.ceil() as usize) + 30 + (40.0 * (kmax as f64 + x)).sqrt() as usize;
        s + (s & 1)
    };
    let mut next = 0.0f64;
    let mut cur = 1e-300f64;
    let mut even_sum = 0.0;
    let mut tail = vec![0.0; start + 1];
    tail[start] = cur;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        tail[k - 1] = cur;
        if cur.abs() > 1e250 {
            for v in tail[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
            next *= 1e-250;
            cur *= 1e-250;
        }
    }
    for (k, v) in tail.iter().enumerate() {
        if k % 2 == 0 && k > 0 {
            even_sum += v;
        }
    }
    let norm = tail[0] + 2.0 * even_sum;
    for (o, t) in out.iter_mut().zip(&tail) {
        *o = t / norm;
    }
    out
}

/// Number of Chebyshev terms needed for argument `x = radius * h`.
fn term_count(x: f64) -> usize {
    let half = x / 2.0;
    let mut bound = 1.0;
    let mut k = 0usize;
    loop {
        k += 1;
        bound *= half / k as f64;
        if k as f64 > x && bound < COEFF_CUTOFF {
            return k;
        }
    }
}

/// Reusable scratch space for repeated exponentials of the same size.
#[derive(Clone, Debug, Default)]
pub struct TridiagExp {
    prev: Vec<Complex64>,
    cur: Vec<Complex64>,
    next: Vec<Complex64>,
    acc: Vec<Complex64>,
    coeffs: Vec<Complex64>,
}

impl TridiagExp {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replace `psi` by `exp(-i h H) psi`, `H = diag(diag) + offdiag (S + S^T)`.
    pub fn apply(&mut self, diag: &[f64], offdiag: f64, h: f64, psi: &mut [Complex64]) {
        let n = psi.len();
        debug_assert_eq!(diag.len(), n);
        if n == 0 || h == 0.0 {
            return;
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &d in diag {
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let spread = if n > 1 { 2.0 * offdiag.abs() } else { 0.0 };
        lo -= spread;
        hi += spread;
        let center = 0.5 * (hi + lo);
        let radius = (0.5 * (hi - lo)).max(1e-300);
        let x = radius * h;

        let kmax = term_count(x.abs());
        let j = bessel_j_sequence(x.abs(), kmax);
        self.coeffs.clear();
        let mut phase = Complex64::new(1.0, 0.0);
        // (-i)^k for positive h, (+i)^k for negative h
        let step = if h > 0.0 { Complex64::new(0.0, -1.0) } else { Complex64::new(0.0, 1.0) };
        for (k, &jk) in j.iter().enumerate() {
            let w = if k == 0 { 1.0 } else { 2.0 };
            self.coeffs.push(phase * (w * jk));
            phase *= step;
        }

        for buf in [&mut self.prev, &mut self.cur, &mut self.next, &mut self.acc] {
            buf.clear();
            buf.resize(n, Complex64::new(0.0, 0.0));
        }
        let inv_r = 1.0 / radius;
        let scaled_off = offdiag * inv_r;

        // T0 = psi, T1 = H~ psi
        self.prev.copy_from_slice(psi);
        apply_scaled(diag, center, inv_r, scaled_off, &self.prev, &mut self.cur, 1.0, None);
        for i in 0..n {
            self.acc[i] = self.coeffs[0] * self.prev[i] + self.coeffs[1] * self.cur[i];
        }
        for c in &self.coeffs[2..] {
            apply_scaled(diag, center, inv_r, scaled_off, &self.cur, &mut self.next, 2.0, Some(&self.prev));
            for i in 0..n {
                self.acc[i] += c * self.next[i];
            }
            std::mem::swap(&mut self.prev, &mut self.cur);
            std::mem::swap(&mut self.cur, &mut self.next);
        }
        let global = Complex64::from_polar(1.0, -center * h);
        for (p, a) in psi.iter_mut().zip(&self.acc) {
            *p = global * a;
        }
    }
}

/// `out = factor * H~ v - sub`, with `H~ = (H - center) / radius`.
#[allow(clippy::too_many_arguments)]
#[inline]
fn apply_scaled(
    diag: &[f64],
    center: f64,
    inv_r: f64,
    scaled_off: f64,
    v: &[Complex64],
    out: &mut [Complex64],
    factor: f64,
    sub: Option<&[Complex64]>,
) {
    let n = v.len();
    for i in 0..n {
        let mut acc = v[i] * ((diag[i] - center) * inv_r);
        if i > 0 {
            acc += v[i - 1] * scaled_off;
        }
        if i + 1 < n {
            acc += v[i + 1] * scaled_off;
        }
        out[i] = acc * factor;
    }
    if let Some(sub) = sub {
        for (o, s) in out.iter_mut().zip(sub) {
            *o -= s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};

    #[test]
    fn bessel_values() {
        // reference values of J_k(x)
        let j = bessel_j_sequence(1.0, 3);
        assert!((j[0] - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((j[1] - 0.440_050_585_744_933_5).abs() < 1e-14);
        assert!((j[2] - 0.114_903_484_931_900_5).abs() < 1e-14);
        let j = bessel_j_sequence(10.0, 5);
        assert!((j[0] + 0.245_935_764_451_348_3).abs() < 1e-13);
        assert!((j[5] + 0.234_061_528_186_793_6).abs() < 1e-13);
    }

    fn dense_reference(diag: &[f64], off: f64, h: f64, psi: &[Complex64]) -> Vec<Complex64> {
        let n = diag.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = off;
                m[(i + 1, i)] = off;
            }
        }
        let eig = SymmetricEigen::new(m);
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for b in 0..n {
            let v = eig.eigenvectors.column(b);
            let proj: Complex64 = (0..n).map(|i| psi[i] * v[i]).sum();
            let ph = Complex64::from_polar(1.0, -eig.eigenvalues[b] * h);
            for i in 0..n {
                out[i] += ph * proj * v[i];
            }
        }
        out
    }

    #[test]
    fn matches_eigendecomposition() {
        let diag: Vec<f64> = (0..21).map(|i| { let p = 0.3 + 2.0 * (i as f64 - 10.0); p * p }).collect();
        let psi: Vec<Complex64> = (0..21).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.7).cos())).collect();
        for h in [1e-4, 3e-3, 0.05, 0.4] {
            let mut out = psi.clone();
            TridiagExp::new().apply(&diag, 1.82, h, &mut out);
            let reference = dense_reference(&diag, 1.82, h, &psi);
            for (a, b) in out.iter().zip(&reference) {
                assert!((a - b).norm() < 1e-12, "h = {h}");
            }
            let n0: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
            let n1: f64 = out.iter().map(|z| z.norm_sqr()).sum();
            assert!((n0 - n1).abs() < 1e-13 * n0);
        }
    }

    #[test]
    fn backward_step_inverts() {
        let diag: Vec<f64> = (0..9).map(|i| (i * i) as f64).collect();
        let psi: Vec<Complex64> = (0..9).map(|i| Complex64::new(1.0, i as f64)).collect();
        let mut out = psi.clone();
        let mut e = TridiagExp::new();
        e.apply(&diag, 0.9, 0.2, &mut out);
        e.apply(&diag, 0.9, -0.2, &mut out);
        for (a, b) in out.iter().zip(&psi) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
