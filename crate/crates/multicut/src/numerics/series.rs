//! Truncated power series over f64 and inverse-power tail sums.
//!
//! Used to expand 1/w and the near-infinity density of a differential in
//! powers of t = 1/z, and to evaluate the antiderivative of such a tail in
//! closed form. Reciprocal and square root are computed by Newton iteration
//! with precision doubling, so no coefficient recurrences are hand-rolled.

use crate::{C64, Error, Result};

/// Coefficients c[m] of sum c[m] t^m, truncated at the vector length.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerSeries(pub Vec<f64>);

impl PowerSeries {
    pub fn new(coeffs: Vec<f64>) -> Self {
        PowerSeries(coeffs)
    }

    pub fn constant(c: f64, len: usize) -> Self {
        let mut v = vec![0.0; len.max(1)];
        v[0] = c;
        PowerSeries(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn coeff(&self, m: usize) -> f64 {
        self.0.get(m).copied().unwrap_or(0.0)
    }

    pub fn truncate(&self, k: usize) -> Self {
        let mut v = self.0.clone();
        v.truncate(k);
        v.resize(k, 0.0);
        PowerSeries(v)
    }

    pub fn mul_trunc(&self, other: &Self, k: usize) -> Self {
        let mut out = vec![0.0; k];
        for (i, a) in self.0.iter().enumerate().take(k) {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in other.0.iter().enumerate().take(k - i) {
                out[i + j] += a * b;
            }
        }
        PowerSeries(out)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.len().max(other.len());
        PowerSeries((0..n).map(|m| self.coeff(m) + other.coeff(m)).collect())
    }

    pub fn scale(&self, s: f64) -> Self {
        PowerSeries(self.0.iter().map(|c| c * s).collect())
    }

    /// Multiplies by t^s (shifts coefficients up).
    pub fn shift(&self, s: usize) -> Self {
        let mut v = vec![0.0; s];
        v.extend_from_slice(&self.0);
        PowerSeries(v)
    }

    /// Newton iteration R <- R (2 - Q R), doubling correct digits each pass.
    pub fn recip(&self, k: usize) -> Result<Self> {
        let c0 = self.coeff(0);
        if c0 == 0.0 {
            return Err(Error::ContractViolation(
                "series reciprocal needs a nonzero constant term".into(),
            ));
        }
        let mut r = PowerSeries(vec![1.0 / c0]);
        let mut len = 1;
        while len < k {
            len = (2 * len).min(k);
            let qr = self.mul_trunc(&r, len);
            let two_minus = PowerSeries(
                (0..len)
                    .map(|m| if m == 0 { 2.0 - qr.coeff(0) } else { -qr.coeff(m) })
                    .collect(),
            );
            r = r.mul_trunc(&two_minus, len);
        }
        Ok(r.truncate(k))
    }

    /// Newton iteration S <- (S + Q/S) / 2 for the square root.
    pub fn sqrt(&self, k: usize) -> Result<Self> {
        let c0 = self.coeff(0);
        if c0 <= 0.0 {
            return Err(Error::ContractViolation(
                "series square root needs a positive constant term".into(),
            ));
        }
        let mut s = PowerSeries(vec![c0.sqrt()]);
        let mut len = 1;
        while len < k {
            len = (2 * len).min(k);
            let q_over_s = self.truncate(len).mul_trunc(&s.recip(len)?, len);
            s = s.add(&q_over_s).scale(0.5).truncate(len);
        }
        Ok(s.truncate(k))
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn eval_complex(&self, t: C64) -> C64 {
        self.0
            .iter()
            .rev()
            .fold(C64::new(0.0, 0.0), |acc, c| acc * t + c)
    }
}

/// Evaluates the antiderivative, vanishing at infinity, of the tail
/// sum_{m>=2} c[m] z^{-m}: the result is -sum_{m>=2} c[m] z^{1-m} / (m-1).
/// The m = 0 and m = 1 entries are ignored; callers must check separately
/// that they vanish, which is what makes the tail integrable at infinity.
pub fn tail_integral(c: &[f64], z: C64) -> C64 {
    let zinv = 1.0 / z;
    let mut acc = C64::new(0.0, 0.0);
    for m in (2..c.len()).rev() {
        acc = acc * zinv - c[m] / (m as f64 - 1.0);
    }
    acc * zinv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{integrate_est, Tolerance};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn multiplication_truncates() {
        let p = PowerSeries::new(vec![1.0, 1.0]);
        let sq = p.mul_trunc(&p, 4);
        assert_eq!(sq.0, vec![1.0, 2.0, 1.0, 0.0]);
        let sq2 = p.mul_trunc(&p, 2);
        assert_eq!(sq2.0, vec![1.0, 2.0]);
    }

    #[test]
    fn reciprocal_of_one_minus_t() {
        let q = PowerSeries::new(vec![1.0, -1.0]);
        let r = q.recip(6).unwrap();
        for m in 0..6 {
            assert!((r.coeff(m) - 1.0).abs() < 1e-14);
        }
        assert!(PowerSeries::new(vec![0.0, 1.0]).recip(3).is_err());
    }

    #[test]
    fn sqrt_binomial_coefficients() {
        // sqrt(1 - t^2) = 1 - t^2/2 - t^4/8 - t^6/16 - 5 t^8/128 - ...
        let q = PowerSeries::new(vec![1.0, 0.0, -1.0]);
        let s = q.sqrt(9).unwrap();
        let expect = [1.0, 0.0, -0.5, 0.0, -0.125, 0.0, -1.0 / 16.0, 0.0, -5.0 / 128.0];
        for (m, e) in expect.iter().enumerate() {
            assert!((s.coeff(m) - e).abs() < 1e-14, "m = {m}");
        }
        assert!(PowerSeries::new(vec![-1.0]).sqrt(3).is_err());
    }

    #[test]
    fn sqrt_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let mut q = vec![1.0];
            for _ in 0..11 {
                q.push(rng.gen_range(-0.5..0.5));
            }
            let q = PowerSeries::new(q);
            let s = q.sqrt(12).unwrap();
            let back = s.mul_trunc(&s, 12);
            for m in 0..12 {
                assert!((back.coeff(m) - q.coeff(m)).abs() < 1e-12, "m = {m}");
            }
        }
    }

    #[test]
    fn evaluation_matches_direct_sum() {
        let p = PowerSeries::new(vec![2.0, -1.0, 0.5, 0.25]);
        let t = 0.3;
        let direct = 2.0 - t + 0.5 * t * t + 0.25 * t * t * t;
        assert!((p.eval(t) - direct).abs() < 1e-15);
        let tc = C64::new(0.1, 0.2);
        let dc = C64::new(2.0, 0.0) - tc + 0.5 * tc * tc + 0.25 * tc * tc * tc;
        assert!((p.eval_complex(tc) - dc).norm() < 1e-15);
    }

    #[test]
    fn tail_single_term() {
        // c2 z^{-2} integrates to -c2 / z.
        let v = tail_integral(&[0.0, 0.0, 1.0], C64::new(10.0, 0.0));
        assert!((v - C64::new(-0.1, 0.0)).norm() < 1e-16);
    }

    #[test]
    fn tail_matches_quadrature_for_one_cut_density() {
        // Density of the normalized differential on the single-cut surface
        // w^2 = z^2 - 1, first sheet:
        //   -z / (2 (z^2 - 1)) + 1 / (2 sqrt(z^2 - 1)).
        // Its 1/z expansion is assembled from series primitives here and the
        // antiderivative identity T(a) - T(b) = -int_a^b density is checked
        // against direct quadrature.
        let k = 40;
        // 1/sqrt(1 - t^2) with t = 1/z.
        let s = PowerSeries::new(vec![1.0, 0.0, -1.0]).sqrt(k).unwrap().recip(k).unwrap();
        // B/w = (1/2) t / sqrt(1 - t^2).
        let b_over_w = s.shift(1).scale(0.5).truncate(k);
        // A = -z/(2(z^2-1)) = -(1/2) t / (1 - t^2).
        let a_part = PowerSeries::new(vec![1.0, 0.0, -1.0])
            .recip(k)
            .unwrap()
            .shift(1)
            .scale(-0.5)
            .truncate(k);
        let c = a_part.add(&b_over_w);
        assert!(c.coeff(0).abs() < 1e-15 && c.coeff(1).abs() < 1e-15);
        assert!((c.coeff(3) + 0.25).abs() < 1e-14);

        let density = |x: f64| -x / (2.0 * (x * x - 1.0)) + 1.0 / (2.0 * (x * x - 1.0).sqrt());
        let (quad, _, _) = integrate_est(
            &|x| Ok(C64::new(density(x), 0.0)),
            8.0,
            1e6,
            &Tolerance::new(1e-14, 1e-14),
        )
        .unwrap();
        let t8 = tail_integral(&c.0, C64::new(8.0, 0.0));
        let t_far = tail_integral(&c.0, C64::new(1e6, 0.0));
        // T(1e6) - T(8) equals the integral of the density from 8 to 1e6.
        assert!(((t_far - t8) - quad).norm() <= 1e-10, "{:?}", (t_far - t8) - quad);
    }

    #[test]
    fn truncation_order_doubling_converges() {
        let q = PowerSeries::new(vec![1.0, 0.3, -0.2, 0.05]);
        let s10 = q.sqrt(10).unwrap();
        let s20 = q.sqrt(20).unwrap();
        for m in 0..10 {
            assert!((s10.coeff(m) - s20.coeff(m)).abs() < 1e-13);
        }
        // Evaluations inside the convergence region settle as K grows.
        let t = 0.2;
        assert!((s10.eval(t) - s20.eval(t)).abs() < 1e-8);
    }
}
