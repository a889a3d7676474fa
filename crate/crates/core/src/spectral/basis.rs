//! Gauss–Legendre quadrature and Jacobi polynomial bases.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes increasing.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q > 0);
    let mut x = vec![0.0; q];
    let mut w = vec![0.0; q];
    for i in 0..(q + 1) / 2 {
        // Tricomi initial guess, then Newton on P_q.
        let mut z = (PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(q, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(q, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[q - 1 - i] = z;
        w[i] = wi;
        w[q - 1 - i] = wi;
    }
    if q % 2 == 1 {
        x[q / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Values `P_0^{(a,b)}(x) … P_deg^{(a,b)}(x)`.
pub fn jacobi_values(deg: usize, a: f64, b: f64, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(deg + 1);
    out.push(1.0);
    if deg == 0 {
        return out;
    }
    out.push(0.5 * (a - b) + 0.5 * (a + b + 2.0) * x);
    for n in 2..=deg {
        let n = n as f64;
        let s = 2.0 * n + a + b;
        let c1 = 2.0 * n * (n + a + b) * (s - 2.0);
        let c2 = (s - 1.0) * (s * (s - 2.0) * x + a * a - b * b);
        let c3 = 2.0 * (n + a - 1.0) * (n + b - 1.0) * s;
        let len = out.len();
        let v = (c2 * out[len - 1] - c3 * out[len - 2]) / c1;
        out.push(v);
    }
    out
}

/// Values and first derivatives of `P_n^{(a,b)}`, `n = 0..=deg`.
pub fn jacobi_with_derivatives(deg: usize, a: f64, b: f64, x: f64) -> (Vec<f64>, Vec<f64>) {
    let vals = jacobi_values(deg, a, b, x);
    let mut ders = vec![0.0; deg + 1];
    if deg > 0 {
        let shifted = jacobi_values(deg - 1, a + 1.0, b + 1.0, x);
        for n in 1..=deg {
            ders[n] = 0.5 * (n as f64 + a + b + 1.0) * shifted[n - 1];
        }
    }
    (vals, ders)
}
