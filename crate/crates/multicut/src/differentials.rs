//! Meromorphic differentials on the two-sheeted surface with prescribed
//! simple poles and vanishing oval periods.
//!
//! The differential has the ansatz  omega = [A(z) + s B(z)/w(z)] dz  with s
//! the sheet sign. A(z) collects fixed half-pole and divisor terms; B(z)
//! carries the divisor weights, a leading z^(N-1) term fixing which infinity
//! is regular, and N-1 free polynomial coefficients. The free coefficients
//! are solved so every oval (A-cycle) period vanishes in the principal value
//! sense. Periods can then be computed two ways that share no code: closed
//! real-axis formulas obtained by collapsing the cycles onto cuts and gaps,
//! and direct complex contour quadrature on the original cycles. Tests hold
//! the two routes against each other.

use crate::numerics::series::PowerSeries;
use crate::numerics::{
    integrate_path, integrate_phi, Path, Segment, Tolerance,
};
use crate::surface::{
    branch_w, cut_complement_poly, gap_complement_poly, oval_coords, OvalPoint, Sheet, Side,
    SurfaceConfig,
};
use crate::{C64, Error, Result};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

/// Truncation order for 1/z expansions of the density near infinity. The
/// expansions are used only for |z| at least four times the largest branch
/// point, where term m is damped by at least 4^-m.
pub(crate) const SERIES_ORDER: usize = 24;

/// Homology cycle on the surface, 1-based. A(j) is the closed oval over gap
/// j; B(k) encircles cuts 1..=k.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cycle {
    A(usize),
    B(usize),
}

/// Which computational route evaluates a period.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Closed formulas on the real axis: principal-value gap integrals for
    /// A-cycles, cut integrals plus exact half-integer offsets for B-cycles.
    Collapsed,
    /// Contour quadrature on explicit complex cycles.
    Direct,
}

/// Residue stored in half-integer units so bookkeeping stays exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Residue(pub i32);

impl Residue {
    pub fn value(self) -> f64 {
        self.0 as f64 * 0.5
    }
}

/// A pole of the differential on the surface.
#[derive(Clone, Debug, PartialEq)]
pub enum Pole {
    /// Branch point; carries -1/2, or +1/2 when a degenerate divisor point
    /// sits on it.
    Branch { x: f64 },
    /// Divisor point on its sheet; carries +1.
    Divisor { gap: usize, x: f64, sheet: Sheet },
    /// The opposite lift of a divisor point; regular (residue 0).
    Mirror { gap: usize, x: f64, sheet: Sheet },
    /// Point above infinity; +1 on the non-normalized sheet, 0 on the other.
    Infinity { sheet: Sheet },
}

#[derive(Clone, Debug)]
pub struct MeromorphicDifferential {
    config: SurfaceConfig,
    nu: Sheet,
    divisor: Vec<OvalPoint>,
    xs: Vec<f64>,
    ws: Vec<f64>,
    /// Distance from each divisor projection to its gap's left and right
    /// endpoint, in half-angle form 2 rho sin^2(pi theta) / 2 rho cos^2(pi
    /// theta). Relative accuracy survives arbitrarily close to an endpoint,
    /// where x - lo computed from the rounded projection would not.
    edge_lo: Vec<f64>,
    edge_hi: Vec<f64>,
    gamma: Vec<f64>,
    c_lead: f64,
    w_poly: Vec<f64>,
    tail: [Vec<f64>; 2],
}

// Small exact-polynomial helpers (ascending coefficient order).

pub(crate) fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (i, a) in c.iter().enumerate() {
            next[i] -= r * a;
            next[i + 1] += a;
        }
        c = next;
    }
    c
}

pub(crate) fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

pub(crate) fn poly_eval_c(c: &[f64], z: C64) -> C64 {
    c.iter().rev().fold(C64::new(0.0, 0.0), |acc, a| acc * z + a)
}

pub(crate) fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(i, a)| i as f64 * a)
        .collect()
}

/// Synthetic division: returns q with p(z) = (z - x0) q(z) + p(x0). The
/// divided difference (p(x) - p(x0)) / (x - x0) is then q(x), evaluated
/// without subtractive cancellation.
pub(crate) fn poly_deflate(c: &[f64], x0: f64) -> Vec<f64> {
    let n = c.len();
    if n <= 1 {
        return vec![];
    }
    let mut q = vec![0.0; n - 1];
    q[n - 2] = c[n - 1];
    for i in (0..n - 2).rev() {
        q[i] = c[i + 1] + x0 * q[i + 1];
    }
    q
}

impl MeromorphicDifferential {
    pub fn config(&self) -> &SurfaceConfig {
        &self.config
    }

    pub fn normalized_sheet(&self) -> Sheet {
        self.nu
    }

    pub fn divisor(&self) -> &[OvalPoint] {
        &self.divisor
    }

    pub fn divisor_x(&self) -> &[f64] {
        &self.xs
    }

    pub fn divisor_w(&self) -> &[f64] {
        &self.ws
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn leading_coefficient(&self) -> f64 {
        self.c_lead
    }

    /// 1/z expansion of the density on the given sheet; entry m multiplies
    /// z^-m. On the normalized sheet entries 0 and 1 vanish.
    pub fn density_tail(&self, sheet: Sheet) -> &[f64] {
        &self.tail[sheet.index() - 1]
    }

    fn a_part(&self, z: C64) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for c in self.config.cuts() {
            s -= 0.25 / (z - c[0]) + 0.25 / (z - c[1]);
        }
        for &x in &self.xs {
            s += 0.5 / (z - x);
        }
        s
    }

    /// A(z) with the divisor term of gap `skip` removed (1-based). Summed
    /// term by term so the value stays accurate arbitrarily close to the
    /// skipped pole.
    fn a_part_without(&self, z: C64, skip: usize) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for c in self.config.cuts() {
            s -= 0.25 / (z - c[0]) + 0.25 / (z - c[1]);
        }
        for (i, &x) in self.xs.iter().enumerate() {
            if i + 1 != skip {
                s += 0.5 / (z - x);
            }
        }
        s
    }

    fn b_poly(&self, z: C64) -> C64 {
        let n = self.config.n_cuts();
        let mut s = self.c_lead * z.powi(n as i32 - 1);
        for (i, g) in self.gamma.iter().enumerate() {
            s += *g * z.powi(i as i32);
        }
        s
    }

    fn b_part(&self, z: C64) -> C64 {
        let mut s = self.b_poly(z);
        for (x, w) in self.xs.iter().zip(&self.ws) {
            if *w != 0.0 {
                s += (0.5 * w) / (z - x);
            }
        }
        s
    }

    /// B(z) with the rational term of gap `skip` removed (1-based).
    fn b_part_without(&self, z: C64, skip: usize) -> C64 {
        let mut s = self.b_poly(z);
        for (i, (x, w)) in self.xs.iter().zip(&self.ws).enumerate() {
            if *w != 0.0 && i + 1 != skip {
                s += (0.5 * w) / (z - x);
            }
        }
        s
    }

    /// Density of the differential at z on a sheet: A(z) + s B(z)/w(z).
    /// Needs a side tag on cut interiors. Exact pole hits return an error;
    /// at the regular opposite lift of a divisor point the finite limit is
    /// produced analytically.
    pub fn eval_density(&self, z: C64, sheet: Sheet, side: Option<Side>) -> Result<C64> {
        if z.im == 0.0 {
            let x = z.re;
            if self.config.is_branch_point(x) {
                return Err(Error::AtPole { z });
            }
            if let Some(j) = self.xs.iter().position(|&xj| xj == x) {
                // Degenerate divisor points coincide with branch points and
                // were caught above, so the divisor here is interior.
                if self.divisor[j].sheet() == sheet {
                    return Err(Error::AtPole { z });
                }
                return Ok(C64::new(self.mirror_limit(j), 0.0));
            }
        }
        if z.norm() > 2.0 * self.config.r0() {
            let t = 1.0 / z;
            return Ok(PowerSeries::new(self.density_tail(sheet).to_vec()).eval_complex(t));
        }
        let w = branch_w(&self.config, z, sheet, side)?;
        Ok(self.a_part(z) + self.b_part(z) / w)
    }

    /// Finite value of the density at the opposite lift of divisor point j
    /// (0-based): the simple poles of A and B/w cancel there and leave
    /// W'(x)/(4 w^2) plus the regular parts.
    fn mirror_limit(&self, j: usize) -> f64 {
        let x = self.xs[j];
        let w_here = -self.ws[j];
        let z = C64::new(x, 0.0);
        let a_reg = self.a_part_without(z, j + 1).re;
        let b_reg = self.b_part_without(z, j + 1).re;
        let wprime = poly_eval(&poly_derivative(&self.w_poly), x);
        a_reg + b_reg / w_here + wprime / (4.0 * self.ws[j] * self.ws[j])
    }

    /// All poles with exact residues; the grand total is zero.
    pub fn pole_set(&self) -> Vec<(Pole, Residue)> {
        let mut out = Vec::new();
        for x in self.config.branch_points() {
            let merged = self
                .divisor
                .iter()
                .zip(&self.xs)
                .any(|(q, xq)| q.is_degenerate() && *xq == x);
            out.push((Pole::Branch { x }, Residue(if merged { 1 } else { -1 })));
        }
        for (i, q) in self.divisor.iter().enumerate() {
            if q.is_degenerate() {
                continue;
            }
            let sheet = q.sheet();
            out.push((
                Pole::Divisor { gap: q.gap, x: self.xs[i], sheet },
                Residue(2),
            ));
            out.push((
                Pole::Mirror { gap: q.gap, x: self.xs[i], sheet: sheet.other() },
                Residue(0),
            ));
        }
        out.push((Pole::Infinity { sheet: self.nu }, Residue(0)));
        out.push((Pole::Infinity { sheet: self.nu.other() }, Residue(2)));
        out
    }

    pub fn residue_at(&self, pole: &Pole) -> Option<Residue> {
        self.pole_set().into_iter().find(|(p, _)| p == pole).map(|(_, r)| r)
    }

    /// Period of the differential over a cycle by the chosen route.
    pub fn period(&self, cycle: Cycle, method: Method, tol: &Tolerance) -> Result<C64> {
        let genus = self.config.genus();
        let idx = match cycle {
            Cycle::A(j) => j,
            Cycle::B(k) => k,
        };
        if idx == 0 || idx > genus {
            return Err(Error::ContractViolation(format!(
                "cycle index {idx} outside 1..={genus}"
            )));
        }
        match (cycle, method) {
            (Cycle::A(j), Method::Collapsed) => Ok(C64::new(self.a_period_collapsed(j, tol)?, 0.0)),
            (Cycle::A(j), Method::Direct) => self.a_period_direct(j, tol),
            (Cycle::B(k), Method::Collapsed) => self.b_period_collapsed(k, tol),
            (Cycle::B(k), Method::Direct) => self.b_period_direct(k, tol),
        }
    }

    /// Oval period collapsed onto gap j: 2 PV int B(x)/w1(x) dx. The
    /// principal value around the on-cycle divisor pole is taken with exact
    /// polynomial subtraction, and the endpoint singularities are absorbed
    /// by the cosine substitution.
    fn a_period_collapsed(&self, j: usize, tol: &Tolerance) -> Result<f64> {
        let cfg = &self.config;
        let (lo, hi) = cfg.gap(j);
        let s_j = cfg.gap_sign(j);
        let xj = self.xs[j - 1];
        let wj = self.ws[j - 1];

        // Smooth part: everything in B except the pole inside this gap.
        let smooth = integrate_phi(
            |_phi: f64, x: f64| {
                let z = C64::new(x, 0.0);
                let g = gap_complement_poly(cfg, j, x);
                Ok(self.b_part_without(z, j) / g.sqrt())
            },
            (lo, hi),
            tol,
        )?;
        let mut total = 2.0 * s_j * smooth.re;

        if wj != 0.0 {
            // w_j / w1(x_j) is exactly the divisor sheet sign.
            let r_sign = self.divisor[j - 1].sheet().sign();
            // |w| at the divisor, from the same product form oval_coords
            // uses; the expanded polynomial would lose every significant
            // digit once the divisor sits close to a gap endpoint.
            let w_at_xj = wj.abs();
            let rho = 0.5 * (hi - lo);
            let deflated = poly_deflate(&self.w_poly, xj);
            let dd = integrate_phi(
                |phi: f64, x: f64| {
                    let g = gap_complement_poly(cfg, j, x);
                    // |w(x)| = rho sin(phi) sqrt(G(x)) exactly on the gap.
                    let w_abs = rho * phi.sin() * g.sqrt();
                    Ok(C64::new(
                        poly_eval(&deflated, x) / ((w_abs + w_at_xj) * g.sqrt()),
                        0.0,
                    ))
                },
                (lo, hi),
                tol,
            )?;
            let log_term = (self.edge_hi[j - 1] / self.edge_lo[j - 1]).ln();
            total += r_sign * (log_term - dd.re);
        }
        Ok(total)
    }

    /// Oval period over gap j on the original cycle: a semicircle from the
    /// middle of cut j to the middle of cut j+1 on the first sheet, closed
    /// by the mirror semicircle on the second sheet. Both half-plane
    /// orderings represent the cycle and give equal values; averaging them
    /// symmetrizes the quadrature error and checks that agreement.
    fn a_period_direct(&self, j: usize, tol: &Tolerance) -> Result<C64> {
        let cfg = &self.config;
        let (a_j, b_j) = cfg.cut(j);
        let (a_next, b_next) = cfg.cut(j + 1);
        let p = C64::new(0.5 * (a_j + b_j), 0.0);
        let q = C64::new(0.5 * (a_next + b_next), 0.0);
        let center = 0.5 * (p + q);
        let radius = 0.5 * (q - p).re;

        let upper_first: Path = vec![
            Segment::arc(center, radius, PI, 0.0, Sheet::One),
            Segment::arc(center, radius, 0.0, -PI, Sheet::Two),
        ];
        let lower_first: Path = vec![
            Segment::arc(center, radius, PI, 2.0 * PI, Sheet::One),
            Segment::arc(center, radius, 0.0, PI, Sheet::Two),
        ];
        let v1 = integrate_path(
            &upper_first,
            |seg, z| self.eval_density(z, seg.sheet, seg.side),
            tol,
        )?;
        let v2 = integrate_path(
            &lower_first,
            |seg, z| self.eval_density(z, seg.sheet, seg.side),
            tol,
        )?;
        Ok(0.5 * (v1 + v2))
    }

    /// Integral of B/w over the positive boundary of cut i, as a dphi
    /// integral of a smooth integrand. Purely imaginary.
    fn cut_edge_integral(&self, i: usize, tol: &Tolerance) -> Result<C64> {
        let cfg = &self.config;
        let (a, b) = cfg.cut(i);
        let rho = 0.5 * (b - a);
        let sign = if (cfg.n_cuts() - i) % 2 == 0 { 1.0 } else { -1.0 };
        let v = integrate_phi(
            |phi: f64, x: f64| {
                let h = cut_complement_poly(cfg, i, x);
                let mut s = self.b_poly(C64::new(x, 0.0)).re;
                // Divisor poles sit in gaps and can hug a cut endpoint, so
                // the distance is built from the half-angle identities plus
                // an endpoint-to-pole offset; both addends are nonnegative,
                // making the sum cancellation-free however close the pole.
                for (idx, (&xj, &wj)) in self.xs.iter().zip(&self.ws).enumerate() {
                    if wj == 0.0 {
                        continue;
                    }
                    // Gap idx+1 touches cut idx+1 on its left and cut idx+2
                    // on its right; for those two cuts the offset to the
                    // shared endpoint is taken in its exact half-angle form.
                    let dist = if idx + 1 >= i {
                        let off = if idx + 1 == i { self.edge_lo[idx] } else { xj - b };
                        -(2.0 * rho * (0.5 * phi).cos().powi(2) + off)
                    } else {
                        let off = if idx + 2 == i { self.edge_hi[idx] } else { a - xj };
                        2.0 * rho * (0.5 * phi).sin().powi(2) + off
                    };
                    s += (0.5 * wj) / dist;
                }
                Ok(C64::new(s / h.sqrt(), 0.0))
            },
            cfg.cut(i),
            tol,
        )?;
        Ok(C64::new(0.0, -sign * v.re))
    }

    /// Exact half-turn bookkeeping for the collapsed B(k) period: each
    /// enclosed branch point carries -1/4 from A, a divisor point merged
    /// onto an enclosed branch point upgrades it to +1/4, and an enclosed
    /// interior first-sheet divisor point adds a full residue.
    fn b_offset_count(&self, k: usize) -> i64 {
        let mut omega = -(k as i64);
        for i in 1..=k {
            if self.divisor[i - 1].theta == 0.0 {
                omega += 1;
            }
        }
        for i in 1..k {
            let t = self.divisor[i - 1].theta;
            if t == 0.5 {
                omega += 1;
            } else if t > 0.0 && t < 0.5 {
                omega += 2;
            }
        }
        omega
    }

    fn b_period_collapsed(&self, k: usize, tol: &Tolerance) -> Result<C64> {
        let per = tol.split(k);
        let mut total = C64::new(0.0, 0.0);
        for i in 1..=k {
            total -= 2.0 * self.cut_edge_integral(i, &per)?;
        }
        total += C64::new(0.0, PI * self.b_offset_count(k) as f64);
        Ok(total)
    }

    /// Stadium contour around cuts 1..=k on the first sheet, crossing the
    /// real axis left of everything and inside gap k.
    fn b_period_direct(&self, k: usize, tol: &Tolerance) -> Result<C64> {
        let cfg = &self.config;
        let (gap_lo, gap_hi) = cfg.gap(k);
        let q = &self.divisor[k - 1];
        let barrier = if q.theta > 0.0 && q.theta < 0.5 { self.xs[k - 1] } else { gap_hi };

        // Right crossing: keep clear of a regular-but-delicate opposite
        // lift sitting in this gap.
        let mut xi = gap_lo + 0.5 * (barrier - gap_lo);
        if q.theta > 0.5 {
            let xk = self.xs[k - 1];
            xi = [0.5, 0.25, 0.75]
                .iter()
                .map(|f| gap_lo + f * (barrier - gap_lo))
                .max_by(|a, b| (a - xk).abs().total_cmp(&(b - xk).abs()))
                .expect("candidate list is nonempty");
        }

        let delta = cfg.min_gap_width() / 4.0;
        // The right cap must clear the crossing gap's endpoints and, when
        // present, the on-axis pole or near-cancellation point at x_k.
        let mut h = delta.min(0.5 * (xi - gap_lo)).min(0.5 * (barrier - xi));
        if q.theta > 0.5 {
            h = h.min(0.5 * (xi - self.xs[k - 1]).abs());
        }
        let left = cfg.span().0 - delta;

        let path: Path = vec![
            Segment::line(C64::new(left, -h), C64::new(xi, -h), Sheet::One),
            Segment::arc(C64::new(xi, 0.0), h, -PI / 2.0, PI / 2.0, Sheet::One),
            Segment::line(C64::new(xi, h), C64::new(left, h), Sheet::One),
            Segment::arc(C64::new(left, 0.0), h, PI / 2.0, 3.0 * PI / 2.0, Sheet::One),
        ];
        integrate_path(&path, |seg, z| self.eval_density(z, seg.sheet, seg.side), tol)
    }

    /// Normalized B-cycle phases: period(B(k)) / (2 pi i), reduced mod 1.
    /// Collapsed B periods are purely imaginary by construction. The cut
    /// integrals are shared across k instead of recomputed per cycle.
    pub fn beta(&self, tol: &Tolerance) -> Result<Vec<f64>> {
        let genus = self.config.genus();
        let per = tol.split(genus.max(1));
        let mut cumulative = C64::new(0.0, 0.0);
        let mut out = Vec::with_capacity(genus);
        for k in 1..=genus {
            cumulative -= 2.0 * self.cut_edge_integral(k, &per)?;
            let p = cumulative + C64::new(0.0, PI * self.b_offset_count(k) as f64);
            debug_assert!(p.re == 0.0);
            out.push((p.im / (2.0 * PI)).rem_euclid(1.0));
        }
        Ok(out)
    }
}

/// Factory for differentials on one surface: caches the oval-period matrix
/// of the monomial basis, its factorization, and its conditioning.
pub struct PeriodSolver {
    config: SurfaceConfig,
    w_poly: Vec<f64>,
    k_matrix: DMatrix<f64>,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    cond: f64,
    tol: Tolerance,
}

const MAX_CONDITION: f64 = 1e12;

impl PeriodSolver {
    pub fn new(config: &SurfaceConfig, tol: &Tolerance) -> Result<Self> {
        let genus = config.genus();
        let w_poly = poly_from_roots(&config.branch_points());
        let mut k_matrix = DMatrix::zeros(genus, genus);
        for j in 1..=genus {
            let s_j = config.gap_sign(j);
            for m in 1..=genus {
                let v = integrate_phi(
                    |_phi: f64, x: f64| {
                        let g = gap_complement_poly(config, j, x);
                        Ok(C64::new(x.powi(m as i32 - 1) / g.sqrt(), 0.0))
                    },
                    config.gap(j),
                    tol,
                )?;
                k_matrix[(j - 1, m - 1)] = 2.0 * s_j * v.re;
            }
        }
        let (lu, cond) = if genus == 0 {
            (None, 1.0)
        } else {
            let sv = k_matrix.clone().svd(false, false).singular_values;
            let cond = sv.max() / sv.min();
            if !cond.is_finite() || cond > MAX_CONDITION {
                return Err(Error::IllConditioned {
                    what: "oval period matrix".to_string(),
                    cond,
                });
            }
            (Some(nalgebra::LU::new(k_matrix.clone())), cond)
        };
        Ok(PeriodSolver {
            config: config.clone(),
            w_poly,
            k_matrix,
            lu,
            cond,
            tol: *tol,
        })
    }

    pub fn condition_number(&self) -> f64 {
        self.cond
    }

    pub fn period_matrix(&self) -> &DMatrix<f64> {
        &self.k_matrix
    }

    /// Builds the differential with the given regular infinity and divisor,
    /// solving the free polynomial coefficients so all oval periods vanish.
    pub fn build(&self, nu: Sheet, divisor: &[OvalPoint]) -> Result<MeromorphicDifferential> {
        let cfg = &self.config;
        let genus = cfg.genus();
        if divisor.len() != genus {
            return Err(Error::InvalidConfig(format!(
                "divisor needs {genus} points, got {}",
                divisor.len()
            )));
        }
        let mut xs = Vec::with_capacity(genus);
        let mut ws = Vec::with_capacity(genus);
        let mut edge_lo = Vec::with_capacity(genus);
        let mut edge_hi = Vec::with_capacity(genus);
        for (i, q) in divisor.iter().enumerate() {
            if q.gap != i + 1 {
                return Err(Error::InvalidConfig(format!(
                    "divisor point {} must lie on gap {}, got gap {}",
                    i,
                    i + 1,
                    q.gap
                )));
            }
            let (x, w, _) = oval_coords(cfg, q)?;
            xs.push(x);
            ws.push(w);
            let (lo, hi) = cfg.gap(q.gap);
            let rho = 0.5 * (hi - lo);
            if q.theta == 0.0 {
                edge_lo.push(0.0);
                edge_hi.push(2.0 * rho);
            } else if q.theta == 0.5 {
                edge_lo.push(2.0 * rho);
                edge_hi.push(0.0);
            } else {
                let half = std::f64::consts::PI * q.theta;
                edge_lo.push(2.0 * rho * half.sin().powi(2));
                edge_hi.push(2.0 * rho * half.cos().powi(2));
            }
        }
        let c_lead = match nu {
            Sheet::One => 0.5,
            Sheet::Two => -0.5,
        };
        let mut omega = MeromorphicDifferential {
            config: cfg.clone(),
            nu,
            divisor: divisor.to_vec(),
            xs,
            ws,
            edge_lo,
            edge_hi,
            gamma: vec![0.0; genus],
            c_lead,
            w_poly: self.w_poly.clone(),
            tail: [vec![], vec![]],
        };
        if genus > 0 {
            let mut rhs = DVector::zeros(genus);
            for j in 1..=genus {
                rhs[j - 1] = -omega.a_period_collapsed(j, &self.tol)?;
            }
            let gamma = self
                .lu
                .as_ref()
                .expect("factorization exists for positive genus")
                .solve(&rhs)
                .ok_or_else(|| Error::IllConditioned {
                    what: "oval period matrix".to_string(),
                    cond: self.cond,
                })?;
            omega.gamma = gamma.iter().copied().collect();
        }
        omega.tail = density_tails(cfg, &omega.xs, &omega.ws, &omega.gamma, c_lead)?;
        let t = omega.density_tail(nu);
        if t[0].abs() > 1e-9 || t[1].abs() > 1e-9 {
            return Err(Error::ContractViolation(format!(
                "density fails to vanish to second order at the regular infinity: c0 = {}, c1 = {}",
                t[0], t[1]
            )));
        }
        Ok(omega)
    }
}

/// Convenience wrapper building a single differential.
pub fn build_differential(
    config: &SurfaceConfig,
    nu: Sheet,
    divisor: &[OvalPoint],
    tol: &Tolerance,
) -> Result<MeromorphicDifferential> {
    PeriodSolver::new(config, tol)?.build(nu, divisor)
}

/// 1/z expansions of the density on both sheets via power series
/// arithmetic in t = 1/z.
fn density_tails(
    cfg: &SurfaceConfig,
    xs: &[f64],
    ws: &[f64],
    gamma: &[f64],
    c_lead: f64,
) -> Result<[Vec<f64>; 2]> {
    let k = SERIES_ORDER;
    let n = cfg.n_cuts();
    // 1/sqrt(prod (1 - r t)) = t^N / w1(1/t).
    let mut q = PowerSeries::constant(1.0, 1);
    for r in cfg.branch_points() {
        q = q.mul_trunc(&PowerSeries::new(vec![1.0, -r]), k);
    }
    let s = q.sqrt(k)?.recip(k)?;

    // B(z)/w1(z) in powers of t.
    let mut b_over_w = PowerSeries::constant(0.0, k);
    for d in 0..n {
        let coeff = if d == n - 1 {
            c_lead
        } else if d < gamma.len() {
            gamma[d]
        } else {
            0.0
        };
        if coeff != 0.0 {
            b_over_w = b_over_w.add(&s.shift(n - d).scale(coeff).truncate(k));
        }
    }
    for (x, w) in xs.iter().zip(ws) {
        if *w != 0.0 {
            let geom = PowerSeries::new(vec![1.0, -x]).recip(k)?;
            let term = s.mul_trunc(&geom, k).shift(n + 1).scale(0.5 * w).truncate(k);
            b_over_w = b_over_w.add(&term);
        }
    }
    b_over_w = b_over_w.truncate(k);

    // A(z) in powers of t: exact power sums.
    let mut a_series = vec![0.0; k];
    for m in 1..k {
        let mut s_m = 0.0;
        for r in cfg.branch_points() {
            s_m -= 0.25 * r.powi(m as i32 - 1);
        }
        for x in xs {
            s_m += 0.5 * x.powi(m as i32 - 1);
        }
        a_series[m] = s_m;
    }

    let assemble = |sign: f64| -> Vec<f64> {
        (0..k)
            .map(|m| a_series[m] + sign * b_over_w.coeff(m))
            .collect()
    };
    Ok([assemble(1.0), assemble(-1.0)])
}
