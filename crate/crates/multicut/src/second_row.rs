//! Completion of the parametrix from its first row.
//!
//! The second row is the first row multiplied entrywise by a single
//! meromorphic function F on the surface: F carries simple poles exactly at
//! the divisor points of the first row (cancelling its zeros), vanishes at
//! infinity on sheet one, and grows linearly at infinity on sheet two with
//! the slope that drives the lower right entry to 1. Writing F as a pencil
//! (c w + polynomial) over the divisor polynomial turns existence into a
//! dimension count: the pole-cancellation constraints leave a two
//! dimensional space, constants plus one nontrivial family, so the
//! asymptotic normalization pins F uniquely. The only analytic input is the
//! 1/z moment of the upper right entry; everything else is read off the
//! surface and the divisor.

use crate::differentials::{poly_eval, poly_eval_c};
use crate::numerics::series::PowerSeries;
use crate::parametrix::ParametrixMatrix;
use crate::surface::{branch_w, Sheet, Side, SurfaceConfig};
use crate::{C64, Error, Result};
use nalgebra::Matrix2;

/// Multiplier that completes the parametrix. On sheet s it evaluates to
///
///   F(z) = c (w_s(z) - Q(z) + rho(z)) / prod_k (z - x_k),
///
/// where Q is the polynomial part of w on sheet one and rho interpolates
/// Q + w at the divisor projections, so each denominator zero is cancelled
/// on the lift opposite the divisor point and survives as a simple pole on
/// the divisor lift itself.
#[derive(Clone, Debug)]
pub struct SecondRowFunction {
    config: SurfaceConfig,
    /// Normalization: c = -1/(2 m), with m the 1/z moment of the upper
    /// right entry. It makes the completed lower right entry tend to 1.
    c: C64,
    /// Ascending coefficients of Q, monic of degree N.
    q: Vec<f64>,
    /// Ascending coefficients of rho, degree at most N-2.
    rho: Vec<f64>,
    xs: Vec<f64>,
    m_hat: C64,
}

/// The 1/z coefficient of the upper right entry, read off along the
/// imaginary axis at three radii. Two Richardson levels cancel the 1/z^2
/// and 1/z^3 corrections; the two first-level values must already agree,
/// otherwise the entry is not decaying like the clean power law the
/// construction guarantees and no stable normalization exists.
fn asymptotic_moment(m: &ParametrixMatrix) -> Result<C64> {
    let r0 = m.config().r0();
    let f = |r: f64| -> Result<C64> {
        let z = C64::new(0.0, r);
        Ok(z * m.eval(z, None)?[(0, 1)])
    };
    let f1 = f(1e3 * r0)?;
    let f2 = f(2e3 * r0)?;
    let f4 = f(4e3 * r0)?;
    let first = 2.0 * f2 - f1;
    let second = 2.0 * f4 - f2;
    let scale = second.norm().max(1e-2 * r0);
    if (first - second).norm() > 1e-5 * scale {
        return Err(Error::UnstableNormalization(format!(
            "extrapolated moments of the upper right entry disagree: {first} vs {second}"
        )));
    }
    let moment = (4.0 * second - first) / 3.0;
    if moment.norm() < 1e-8 * r0 {
        return Err(Error::UnstableNormalization(format!(
            "moment of the upper right entry is numerically zero ({moment})"
        )));
    }
    Ok(moment)
}

/// Newton divided-difference interpolant through (xs[i], ys[i]), expanded
/// into ascending monomial coefficients. Empty input gives the zero
/// polynomial.
fn newton_interpolant(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    if n == 0 {
        return vec![];
    }
    let mut dd = ys.to_vec();
    for j in 1..n {
        for i in (j..n).rev() {
            dd[i] = (dd[i] - dd[i - 1]) / (xs[i] - xs[i - j]);
        }
    }
    let mut c = vec![dd[n - 1]];
    for i in (0..n - 1).rev() {
        let mut next = vec![0.0; c.len() + 1];
        for (m, a) in c.iter().enumerate() {
            next[m] -= xs[i] * a;
            next[m + 1] += a;
        }
        next[0] += dd[i];
        c = next;
    }
    c
}

fn nearest(xs: &[f64], z: C64) -> Option<(f64, f64)> {
    xs.iter()
        .map(|x| (*x, (z - *x).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

impl SecondRowFunction {
    /// Builds the multiplier from a finished matrix. Fails with a
    /// degenerate-divisor error when a divisor point sits on a branch point:
    /// the two lifts of its projection coincide there, so no pencil can keep
    /// a pole on one lift while cancelling it on the other.
    pub fn build(m: &ParametrixMatrix) -> Result<Self> {
        let config = m.config().clone();
        let omega = m.evaluator(Sheet::One).differential();
        let xs = omega.divisor_x().to_vec();
        let ws = omega.divisor_w().to_vec();
        for (x, w) in xs.iter().zip(&ws) {
            if *w == 0.0 {
                return Err(Error::DegenerateDivisor(format!(
                    "divisor point at x = {x} sits on a branch point, so its two lifts coincide"
                )));
            }
        }

        let m_hat = asymptotic_moment(m)?;
        let c = -1.0 / (2.0 * m_hat);

        // Polynomial part of w on sheet one, from the expansion
        // w = z^N sqrt(prod (1 - r/z)) at infinity.
        let n = config.n_cuts();
        let mut kernel = PowerSeries::constant(1.0, 1);
        for r in config.branch_points() {
            kernel = kernel.mul_trunc(&PowerSeries::new(vec![1.0, -r]), n + 1);
        }
        let s = kernel.sqrt(n + 1)?;
        let q: Vec<f64> = (0..=n).map(|i| s.coeff(n - i)).collect();

        let values: Vec<f64> = xs
            .iter()
            .zip(&ws)
            .map(|(x, w)| poly_eval(&q, *x) + *w)
            .collect();
        let rho = newton_interpolant(&xs, &values);

        Ok(SecondRowFunction {
            config,
            c,
            q,
            rho,
            xs,
            m_hat,
        })
    }

    /// Evaluates F at z on the given sheet. The side tag matters only for
    /// real z strictly inside a cut. Close enough to a divisor projection
    /// that the numerator keeps fewer than eight significant digits, the
    /// value is refused rather than returned noisy.
    pub fn eval(&self, z: C64, sheet: Sheet, side: Option<Side>) -> Result<C64> {
        let w = branch_w(&self.config, z, sheet, side)?;
        let qv = poly_eval_c(&self.q, z);
        let rv = poly_eval_c(&self.rho, z);
        let numerator = self.c * (w - qv + rv);
        let scale = self.c.norm() * (w.norm() + qv.norm() + rv.norm());
        if let Some((x, dist)) = nearest(&self.xs, z) {
            if dist < 1e-4 * self.config.r0() && numerator.norm() < 1e-8 * scale {
                return Err(Error::NonCancellation {
                    x,
                    magnitude: numerator.norm() / scale,
                });
            }
        }
        let mut denom = C64::new(1.0, 0.0);
        for x in &self.xs {
            denom *= z - *x;
        }
        if denom.norm() == 0.0 {
            return Err(Error::AtPole { z });
        }
        Ok(numerator / denom)
    }

    /// The completed matrix at z: the first row is read from the given
    /// matrix, the second is that row times F on the matching sheets.
    pub fn complete(
        &self,
        m: &ParametrixMatrix,
        z: C64,
        side: Option<Side>,
    ) -> Result<Matrix2<C64>> {
        let full = m.eval(z, side)?;
        let f1 = self.eval(z, Sheet::One, side)?;
        let f2 = self.eval(z, Sheet::Two, side)?;
        Ok(Matrix2::new(
            full[(0, 0)],
            full[(0, 1)],
            full[(0, 0)] * f1,
            full[(0, 1)] * f2,
        ))
    }

    /// The extrapolated 1/z moment of the upper right entry.
    pub fn moment(&self) -> C64 {
        self.m_hat
    }

    /// The scale c multiplying the pencil.
    pub fn normalization(&self) -> C64 {
        self.c
    }

    /// Ascending coefficients of the polynomial part of w on sheet one.
    pub fn polynomial_part(&self) -> &[f64] {
        &self.q
    }

    /// Ascending coefficients of the interpolant through Q + w at the
    /// divisor projections.
    pub fn interpolant(&self) -> &[f64] {
        &self.rho
    }

    pub fn divisor_x(&self) -> &[f64] {
        &self.xs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::differentials::poly_from_roots;
    use crate::numerics::Tolerance;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerance {
        Tolerance::new(1e-12, 1e-12)
    }

    fn one_cut() -> ParametrixMatrix {
        let config = SurfaceConfig::new(vec![[-1.0, 1.0]]).unwrap();
        ParametrixMatrix::build(&config, &[], 0, &tol(), 1e-10).unwrap()
    }

    fn two_cut(alpha: f64, n: i64) -> ParametrixMatrix {
        let config = SurfaceConfig::new(vec![[-2.0, -1.0], [1.0, 2.0]]).unwrap();
        ParametrixMatrix::build(&config, &[alpha], n, &tol(), 1e-10).unwrap()
    }

    fn three_cut(alpha: [f64; 2], n: i64) -> ParametrixMatrix {
        let config =
            SurfaceConfig::new(vec![[-2.2, -1.4], [-0.5, 0.4], [1.1, 2.3]]).unwrap();
        ParametrixMatrix::build(&config, &alpha, n, &tol(), 1e-10).unwrap()
    }

    /// Complex sample points off the real axis, clear of the support scale.
    fn sample_points(config: &SurfaceConfig, seed: u64, count: usize) -> Vec<C64> {
        let r0 = config.r0();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let re = rng.gen_range(-1.5 * r0..1.5 * r0);
                let im = rng.gen_range(0.1..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                C64::new(re, im)
            })
            .collect()
    }

    /// One cut [-1, 1]: the pencil is c (w - z) with c = i, and the same
    /// ratio falls out of the fourth-root closed form, so both sheets can be
    /// checked against Moebius-ratio square roots that never touch the
    /// product form branch_w uses.
    #[test]
    fn one_cut_multiplier_is_linear_in_w() {
        let m = one_cut();
        let f = SecondRowFunction::build(&m).unwrap();
        assert!(
            (f.moment() - C64::new(0.0, 0.5)).norm() < 1e-8,
            "moment {} should be i/2",
            f.moment()
        );
        assert!((f.normalization() - C64::new(0.0, 1.0)).norm() < 1e-8);
        for z in [
            C64::new(0.7, 0.9),
            C64::new(-1.8, -0.4),
            C64::new(2.5, 0.0),
            C64::new(0.2, -2.1),
        ] {
            let g2 = ((z - 1.0) / (z + 1.0)).powf(0.5);
            let want_1 = C64::new(0.0, 1.0) * (g2 - 1.0) / (g2 + 1.0);
            let got_1 = f.eval(z, Sheet::One, None).unwrap();
            assert!(
                (got_1 - want_1).norm() < 1e-8,
                "sheet one mismatch at {z}: {got_1} vs {want_1}"
            );
            let got_2 = f.eval(z, Sheet::Two, None).unwrap();
            // The two lifts multiply to c^2 (z^2 - w^2) = -1 here.
            assert!(
                (got_1 * got_2 + 1.0).norm() < 1e-8,
                "lift product at {z}: {}",
                got_1 * got_2
            );
        }
    }

    /// The completed second row must agree with the row the full build
    /// produces directly; the two come from unrelated code paths (a pencil
    /// over the divisor polynomial versus exponentiated integrals of the
    /// second differential).
    #[test]
    fn completion_matches_the_direct_second_row() {
        let cases = [
            one_cut(),
            two_cut(0.3, 7),
            three_cut([0.3, 0.65], 2),
        ];
        for (ci, m) in cases.iter().enumerate() {
            let f = SecondRowFunction::build(m).unwrap();
            for z in sample_points(m.config(), 40 + ci as u64, 30) {
                let want = m.eval(z, None).unwrap();
                let got = f.complete(m, z, None).unwrap();
                for r in 0..2 {
                    for c in 0..2 {
                        let d = (got[(r, c)] - want[(r, c)]).norm();
                        assert!(
                            d < 1e-8 * (1.0 + want[(r, c)].norm()),
                            "case {ci}, entry ({r},{c}) at {z}: {} vs {}",
                            got[(r, c)],
                            want[(r, c)]
                        );
                    }
                }
            }
            // Boundary values on both sides of a cut and of a gap.
            let (a, b) = m.config().cut(1);
            let (lo, hi) = if m.config().n_cuts() > 1 {
                m.config().gap(1)
            } else {
                (b + 0.5, b + 1.5)
            };
            let xg = pick_clear_point(lo, hi, f.divisor_x());
            for side in [Side::Above, Side::Below] {
                for x in [0.5 * (a + b), xg] {
                    let z = C64::new(x, 0.0);
                    let want = m.eval(z, Some(side)).unwrap();
                    let got = f.complete(m, z, Some(side)).unwrap();
                    for r in 0..2 {
                        for c in 0..2 {
                            let d = (got[(r, c)] - want[(r, c)]).norm();
                            assert!(
                                d < 1e-8 * (1.0 + want[(r, c)].norm()),
                                "case {ci}, boundary ({r},{c}) at {z} {side:?}"
                            );
                        }
                    }
                }
            }
        }
    }

    /// Gap point staying clear of the divisor projections.
    fn pick_clear_point(lo: f64, hi: f64, xs: &[f64]) -> f64 {
        let width = hi - lo;
        [0.5, 0.3, 0.7]
            .iter()
            .map(|t| lo + t * width)
            .max_by(|p, q| {
                let dp = xs.iter().map(|x| (p - x).abs()).fold(f64::MAX, f64::min);
                let dq = xs.iter().map(|x| (q - x).abs()).fold(f64::MAX, f64::min);
                dp.total_cmp(&dq)
            })
            .unwrap()
    }

    #[test]
    fn completed_determinant_is_one() {
        let m = two_cut(0.41, 3);
        let f = SecondRowFunction::build(&m).unwrap();
        for z in sample_points(m.config(), 7, 12) {
            let mat = f.complete(&m, z, None).unwrap();
            let det = mat[(0, 0)] * mat[(1, 1)] - mat[(0, 1)] * mat[(1, 0)];
            assert!(
                (det - 1.0).norm() < 1e-8,
                "det at {z}: {det}"
            );
        }
    }

    /// The pencil (p(z), c) with p of degree N and constant c, constrained
    /// to cancel at the mirror lifts and to stay bounded at infinity on
    /// sheet one, has a null space of dimension exactly two: the constraint
    /// matrix keeps full row rank, and both the constants (p = divisor
    /// polynomial, c = 0) and the built numerator lie in its kernel.
    #[test]
    fn pencil_constraints_have_a_two_dimensional_null_space() {
        let m = three_cut([0.3, 0.65], 1);
        let f = SecondRowFunction::build(&m).unwrap();
        let omega = m.evaluator(Sheet::One).differential();
        let xs = omega.divisor_x();
        let ws = omega.divisor_w();
        let n = m.config().n_cuts();
        let rows = n;
        let cols = n + 2;
        let mut a = DMatrix::<f64>::zeros(rows, cols);
        for (k, (x, w)) in xs.iter().zip(ws).enumerate() {
            for i in 0..=n {
                a[(k, i)] = x.powi(i as i32);
            }
            a[(k, n + 1)] = -w;
        }
        // Boundedness at infinity on sheet one: the z^N terms of p and c w
        // must cancel (w is monic there).
        a[(rows - 1, n)] = 1.0;
        a[(rows - 1, n + 1)] = 1.0;

        let sv = a.clone().svd(false, false).singular_values;
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let smin = sv.iter().cloned().fold(f64::MAX, f64::min);
        assert!(
            smin > 1e-10 * smax,
            "constraint matrix lost rank: {sv:?}"
        );

        // Known kernel members: constants and the built pencil.
        let mut v_const = DMatrix::<f64>::zeros(cols, 1);
        for (i, coeff) in poly_from_roots(xs).iter().enumerate() {
            v_const[(i, 0)] = *coeff;
        }
        let mut v_built = DMatrix::<f64>::zeros(cols, 1);
        for i in 0..=n {
            let rho_i = f.interpolant().get(i).copied().unwrap_or(0.0);
            v_built[(i, 0)] = rho_i - f.polynomial_part()[i];
        }
        v_built[(n + 1, 0)] = 1.0;
        for (name, v) in [("constants", &v_const), ("pencil", &v_built)] {
            let residual = (&a * v).norm();
            assert!(
                residual < 1e-9 * a.norm() * v.norm(),
                "{name} vector left the kernel: residual {residual:.3e}"
            );
        }
        assert!(f.interpolant().len() <= m.config().genus().max(1));
    }

    /// Beside a divisor projection the lift opposite the pole stays bounded,
    /// the pole lift scales like a simple pole, and exact hits are refused
    /// with the matching error on each lift.
    #[test]
    fn pole_sits_on_one_lift_only() {
        let m = two_cut(0.3, 1);
        let f = SecondRowFunction::build(&m).unwrap();
        let omega = m.evaluator(Sheet::One).differential();
        let x0 = omega.divisor_x()[0];
        let pole_sheet = omega.divisor()[0].sheet();
        let calm_sheet = pole_sheet.other();

        let circle = |radius: f64, sheet: Sheet| -> Vec<C64> {
            (0..8)
                .map(|k| {
                    let phi = std::f64::consts::TAU * (k as f64 + 0.5) / 8.0;
                    C64::new(x0 + radius * phi.cos(), radius * phi.sin())
                })
                .map(|z| f.eval(z, sheet, None).unwrap())
                .collect()
        };

        let far = circle(5e-2, calm_sheet);
        let near = circle(1e-3, calm_sheet);
        let cap = far.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for v in &near {
            assert!(
                v.norm() < 10.0 * cap.max(1.0),
                "regular lift blew up: |F| = {}",
                v.norm()
            );
        }

        let scaled = |radius: f64| {
            circle(radius, pole_sheet)
                .iter()
                .map(|v| v.norm() * radius)
                .fold(0.0, f64::max)
        };
        let (r1, r2) = (scaled(1e-2), scaled(1e-3));
        assert!(
            (r1 - r2).abs() < 0.25 * r1,
            "residue scaling broke: {r1} vs {r2}"
        );

        let hit = C64::new(x0, 0.0);
        assert!(matches!(
            f.eval(hit, calm_sheet, None),
            Err(Error::NonCancellation { .. })
        ));
        assert!(matches!(
            f.eval(hit, pole_sheet, None),
            Err(Error::AtPole { .. })
        ));
    }

    /// F vanishes like 1/z at infinity on sheet one and grows like
    /// -2c z on sheet two, which is exactly what sends the completed
    /// diagonal to (1, 1).
    #[test]
    fn multiplier_normalizes_infinity() {
        let m = two_cut(0.27, 4);
        let f = SecondRowFunction::build(&m).unwrap();
        let r0 = m.config().r0();
        assert!(
            f.moment().re.abs() < 1e-9 * f.moment().norm(),
            "moment {} should be purely imaginary",
            f.moment()
        );
        let g3 = f.eval(C64::new(0.0, 1e3 * r0), Sheet::One, None).unwrap();
        let g4 = f.eval(C64::new(0.0, 1e4 * r0), Sheet::One, None).unwrap();
        let ratio = g3.norm() / g4.norm();
        assert!(
            (ratio - 10.0).abs() < 1.5,
            "sheet one decay is not 1/z: ratio {ratio}"
        );
        let z = C64::new(0.0, 1e4 * r0);
        let slope = f.eval(z, Sheet::Two, None).unwrap() / z;
        let want = -2.0 * f.normalization();
        assert!(
            (slope - want).norm() < 1e-3 * want.norm(),
            "sheet two slope {slope} vs {want}"
        );
    }

    /// A phase that lands a divisor point on a branch point leaves no room
    /// for the pole pencil; the build must refuse rather than divide by the
    /// vanished weight.
    #[test]
    fn merged_divisor_is_rejected() {
        let m = two_cut(0.25, 1);
        assert!(omega_is_degenerate(&m), "setup no longer degenerate");
        assert!(matches!(
            SecondRowFunction::build(&m),
            Err(Error::DegenerateDivisor(_))
        ));
    }

    fn omega_is_degenerate(m: &ParametrixMatrix) -> bool {
        m.evaluator(Sheet::One)
            .differential()
            .divisor()
            .iter()
            .any(|p| p.is_degenerate())
    }
}
