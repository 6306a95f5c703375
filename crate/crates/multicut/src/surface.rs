//! The two-sheeted Riemann surface w^2 = W(z) attached to a multi-cut support.
//!
//! W(z) = prod_k (z - a_k)(z - b_k) with real branch points
//! a_1 < b_1 < ... < a_N < b_N. Sheet 1 carries the branch of sqrt(W) that
//! behaves like +z^N at infinity; sheet 2 is its negative. The sheets are
//! glued crosswise along the cuts [a_k, b_k], so crossing a cut from above on
//! one sheet continues below on the other. Between consecutive cuts the gap
//! (b_j, a_{j+1}) lifts to a closed oval: sheet 1 across the gap, sheet 2
//! back. Divisor points for the differentials live on these ovals.

use crate::{C64, Error, Result};
use serde::{Deserialize, Serialize};

/// Sheet of the surface. Sheet one is where w ~ +z^N at infinity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sheet {
    One,
    Two,
}

impl Sheet {
    /// Sign of w on this sheet relative to the sheet-one branch.
    pub fn sign(self) -> f64 {
        match self {
            Sheet::One => 1.0,
            Sheet::Two => -1.0,
        }
    }

    pub fn other(self) -> Sheet {
        match self {
            Sheet::One => Sheet::Two,
            Sheet::Two => Sheet::One,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Sheet::One => 1,
            Sheet::Two => 2,
        }
    }
}

/// Side from which a point on the real axis is approached.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Above,
    Below,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Above => Side::Below,
            Side::Below => Side::Above,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Side::Above => 1.0,
            Side::Below => -1.0,
        }
    }
}

/// A point on the surface: base coordinate, sheet, and an optional side tag
/// that disambiguates boundary values when z lies on a cut.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SheetPoint {
    pub z: C64,
    pub sheet: Sheet,
    pub side: Option<Side>,
}

impl SheetPoint {
    pub fn new(z: C64, sheet: Sheet) -> Self {
        SheetPoint { z, sheet, side: None }
    }

    pub fn with_side(z: C64, sheet: Sheet, side: Side) -> Self {
        SheetPoint { z, sheet, side: Some(side) }
    }
}

/// Validated multi-cut support. Cut k (1-based) is [a_k, b_k]; gap j is the
/// open interval (b_j, a_{j+1}) for j = 1..N-1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceConfig {
    cuts: Vec<[f64; 2]>,
}

impl SurfaceConfig {
    pub fn new(cuts: Vec<[f64; 2]>) -> Result<Self> {
        if cuts.is_empty() {
            return Err(Error::InvalidConfig("at least one cut is required".into()));
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, c) in cuts.iter().enumerate() {
            if !c[0].is_finite() || !c[1].is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "cut {} has non-finite endpoints [{}, {}]",
                    i + 1,
                    c[0],
                    c[1]
                )));
            }
            if prev >= c[0] {
                return Err(Error::InvalidConfig(format!(
                    "cut endpoints must be strictly increasing: cut {} starts at {} after {}",
                    i + 1,
                    c[0],
                    prev
                )));
            }
            if c[0] >= c[1] {
                return Err(Error::InvalidConfig(format!(
                    "cut {} is empty or reversed: [{}, {}]",
                    i + 1,
                    c[0],
                    c[1]
                )));
            }
            prev = c[1];
        }
        Ok(SurfaceConfig { cuts })
    }

    pub fn n_cuts(&self) -> usize {
        self.cuts.len()
    }

    pub fn genus(&self) -> usize {
        self.cuts.len() - 1
    }

    pub fn cuts(&self) -> &[[f64; 2]] {
        &self.cuts
    }

    /// Endpoints of cut k, 1-based.
    pub fn cut(&self, k: usize) -> (f64, f64) {
        let c = &self.cuts[k - 1];
        (c[0], c[1])
    }

    /// Endpoints of gap j = (b_j, a_{j+1}), 1-based, j in 1..=N-1.
    pub fn gap(&self, j: usize) -> (f64, f64) {
        (self.cuts[j - 1][1], self.cuts[j][0])
    }

    pub fn a(&self, k: usize) -> f64 {
        self.cuts[k - 1][0]
    }

    pub fn b(&self, k: usize) -> f64 {
        self.cuts[k - 1][1]
    }

    /// Leftmost and rightmost branch points.
    pub fn span(&self) -> (f64, f64) {
        (self.cuts[0][0], self.cuts[self.cuts.len() - 1][1])
    }

    pub fn min_gap_width(&self) -> f64 {
        (1..self.n_cuts())
            .map(|j| self.gap(j))
            .map(|(lo, hi)| hi - lo)
            .fold(f64::INFINITY, f64::min)
    }

    /// All 2N branch points in increasing order.
    pub fn branch_points(&self) -> Vec<f64> {
        self.cuts.iter().flat_map(|c| [c[0], c[1]]).collect()
    }

    /// Scale radius: twice the largest branch-point magnitude. The density of
    /// every differential built on this surface is analytic for |z| > R0/2 on
    /// each sheet, and far-field series are anchored at |z| >= 2*R0.
    pub fn r0(&self) -> f64 {
        2.0 * self
            .branch_points()
            .iter()
            .fold(0.0f64, |acc, p| acc.max(p.abs()))
    }

    pub fn w_squared(&self, z: C64) -> C64 {
        self.cuts
            .iter()
            .fold(C64::new(1.0, 0.0), |acc, c| acc * (z - c[0]) * (z - c[1]))
    }

    /// Sign of the sheet-one branch on gap j: (-1)^(N-j).
    pub fn gap_sign(&self, j: usize) -> f64 {
        if (self.n_cuts() - j) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// True if x lies strictly inside cut k for some k; returns that k.
    pub fn cut_containing(&self, x: f64) -> Option<usize> {
        (1..=self.n_cuts()).find(|&k| {
            let (a, b) = self.cut(k);
            a < x && x < b
        })
    }

    pub fn is_branch_point(&self, x: f64) -> bool {
        self.cuts.iter().any(|c| x == c[0] || x == c[1])
    }
}

/// Raw sheet-one branch by per-factor principal square roots. Analytic off
/// the cuts; for real z this lands on the limit from above.
fn w1_principal(config: &SurfaceConfig, z: C64) -> C64 {
    let mut w = C64::new(1.0, 0.0);
    for c in config.cuts() {
        w *= (z - c[0]).sqrt() * (z - c[1]).sqrt();
    }
    w
}

/// Value of w at z on the given sheet. For real z strictly inside a cut the
/// side tag is mandatory (the two one-sided limits differ by a sign); at a
/// branch point the value is 0 regardless of sheet or side.
pub fn branch_w(config: &SurfaceConfig, z: C64, sheet: Sheet, side: Option<Side>) -> Result<C64> {
    let w1 = if z.im == 0.0 {
        let x = z.re;
        if config.is_branch_point(x) {
            return Ok(C64::new(0.0, 0.0));
        }
        if config.cut_containing(x).is_some() {
            match side {
                Some(Side::Above) => w1_principal(config, C64::new(x, 0.0)),
                Some(Side::Below) => w1_principal(config, C64::new(x, 0.0)).conj(),
                None => {
                    return Err(Error::ContractViolation(format!(
                        "side tag required for z = {x} on a cut"
                    )))
                }
            }
        } else {
            w1_principal(config, C64::new(x, 0.0))
        }
    } else {
        w1_principal(config, z)
    };
    Ok(sheet.sign() * w1)
}

/// Point on the closed oval over gap j, parametrized by theta in [0,1).
/// theta = 0 sits at the branch point b_j, theta grows toward a_{j+1} across
/// sheet 1 (reaching it at theta = 1/2) and returns on sheet 2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OvalPoint {
    pub gap: usize,
    pub theta: f64,
}

const THETA_SNAP: f64 = 1e-9;

impl OvalPoint {
    /// Canonicalizes theta into [0,1), snapping values within 1e-9 of the
    /// branch-point parameters 0 and 1/2.
    pub fn new(gap: usize, theta: f64) -> Self {
        let mut t = theta.rem_euclid(1.0);
        if t >= 1.0 {
            t = 0.0;
        }
        if t < THETA_SNAP || t > 1.0 - THETA_SNAP {
            t = 0.0;
        } else if (t - 0.5).abs() < THETA_SNAP {
            t = 0.5;
        }
        OvalPoint { gap, theta: t }
    }

    pub fn sheet(&self) -> Sheet {
        if self.theta <= 0.5 {
            Sheet::One
        } else {
            Sheet::Two
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.theta == 0.0 || self.theta == 0.5
    }
}

/// Coordinates (x, w, sheet) of an oval point. The w value follows the
/// closed form w = s_j * rho * sin(2 pi theta) * sqrt(G_j(x)), which is
/// smooth in theta across the branch points and agrees with branch_w on both
/// sheet halves.
pub fn oval_coords(config: &SurfaceConfig, q: &OvalPoint) -> Result<(f64, f64, Sheet)> {
    let n = config.n_cuts();
    if q.gap == 0 || q.gap >= n {
        return Err(Error::ContractViolation(format!(
            "gap index {} out of range 1..={}",
            q.gap,
            n - 1
        )));
    }
    let (lo, hi) = config.gap(q.gap);
    // Degenerate parameters land exactly on a branch point with w exactly
    // zero; the trig formula would miss both by an ulp.
    if q.theta == 0.0 {
        return Ok((lo, 0.0, q.sheet()));
    }
    if q.theta == 0.5 {
        return Ok((hi, 0.0, q.sheet()));
    }
    let m = 0.5 * (lo + hi);
    let rho = 0.5 * (hi - lo);
    let ang = 2.0 * std::f64::consts::PI * q.theta;
    let x = m - rho * ang.cos();
    let g = gap_complement_poly(config, q.gap, x);
    debug_assert!(g >= 0.0, "gap complement polynomial must be nonnegative");
    let w = config.gap_sign(q.gap) * rho * ang.sin() * g.max(0.0).sqrt();
    Ok((x, w, q.sheet()))
}

/// G_j(x) = W(x) / ((x - b_j)(a_{j+1} - x)): the product of (x - r) over all
/// branch points r other than the two gap endpoints, negated. Positive on the
/// closed gap.
pub(crate) fn gap_complement_poly(config: &SurfaceConfig, j: usize, x: f64) -> f64 {
    let (lo, hi) = config.gap(j);
    let mut p = 1.0;
    for r in config.branch_points() {
        if r == lo || r == hi {
            continue;
        }
        p *= x - r;
    }
    -p
}

/// H_k(x) = |W(x)| / ((x - a_k)(b_k - x)): same construction on cut k.
/// Positive on the closed cut.
pub(crate) fn cut_complement_poly(config: &SurfaceConfig, k: usize, x: f64) -> f64 {
    let (a, b) = config.cut(k);
    let mut p = 1.0;
    for r in config.branch_points() {
        if r == a || r == b {
            continue;
        }
        p *= x - r;
    }
    p
}

/// The anti-holomorphic involution z -> conj(z) on the same sheet. Real oval
/// points are its fixed points; side tags flip.
pub fn involution(p: SheetPoint) -> SheetPoint {
    SheetPoint {
        z: p.z.conj(),
        sheet: p.sheet,
        side: p.side.map(Side::flip),
    }
}
