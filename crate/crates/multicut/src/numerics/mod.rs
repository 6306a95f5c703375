//! Adaptive complex quadrature on segmented contours, principal-value
//! integrals, and endpoint-desingularized integrals over cuts and gaps.
//!
//! The core rule is a 7-point Gauss / 15-point Kronrod pair with the classic
//! QUADPACK error rescaling. Refinement is globally adaptive: the panel with
//! the largest error estimate is bisected until the total estimate meets the
//! budget or the panel count runs out. Nodes are strictly interior to each
//! panel, so integrands may be singular at interval endpoints as long as the
//! singularity is integrable.

pub mod series;

use crate::surface::{Sheet, Side};
use crate::{C64, Error, Result};
use std::collections::BinaryHeap;

/// Absolute and relative tolerance pair for quadrature and downstream solves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-12, rel: 1e-12 }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel }
    }

    /// Same relative target with the absolute budget split by `n` parts.
    pub fn split(&self, n: usize) -> Tolerance {
        Tolerance { abs: self.abs / n.max(1) as f64, rel: self.rel }
    }

    pub fn met(&self, err: f64, value_norm: f64) -> bool {
        err <= self.abs.max(self.rel * value_norm)
    }
}

// 15-point Kronrod abscissae; even-indexed entries (1-based 2,4,6,8) are the
// embedded 7-point Gauss abscissae.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

const MAX_DEPTH: u32 = 60;
const MAX_PANELS: usize = 4096;

struct Panel {
    val: C64,
    err: f64,
    /// Roundoff floor 50 eps |f| dx for this panel: no refinement can push
    /// the error estimate below it.
    floor: f64,
    a: f64,
    b: f64,
    depth: u32,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// QUADPACK-style error rescaling: trusts the raw |K15 - G7| difference only
/// when it is small relative to the deviation scale, and floors the estimate
/// at the roundoff level of the absolute integral.
fn rescale_error(err: f64, resabs: f64, resasc: f64) -> f64 {
    let mut e = err;
    if resasc != 0.0 && e != 0.0 {
        let scale = (200.0 * e / resasc).powf(1.5);
        e = if scale < 1.0 { resasc * scale } else { resasc };
    }
    let eps = f64::EPSILON;
    if resabs > f64::MIN_POSITIVE / (50.0 * eps) {
        e = e.max(50.0 * eps * resabs);
    }
    e
}

fn gk15<F>(f: &F, a: f64, b: f64, depth: u32) -> Result<Panel>
where
    F: Fn(f64) -> Result<C64>,
{
    let center = 0.5 * (a + b);
    let hlgth = 0.5 * (b - a);
    let fc = f(center)?;
    let mut lo = [C64::new(0.0, 0.0); 7];
    let mut hi = [C64::new(0.0, 0.0); 7];
    for j in 0..7 {
        lo[j] = f(center - hlgth * XGK[j])?;
        hi[j] = f(center + hlgth * XGK[j])?;
    }
    let mut resk = WGK[7] * fc;
    let mut resabs = WGK[7] * fc.norm();
    let mut resg = WG[3] * fc;
    for j in 0..7 {
        resk += WGK[j] * (lo[j] + hi[j]);
        resabs += WGK[j] * (lo[j].norm() + hi[j].norm());
        if j % 2 == 1 {
            resg += WG[(j - 1) / 2] * (lo[j] + hi[j]);
        }
    }
    let reskh = resk * 0.5;
    let mut resasc = WGK[7] * (fc - reskh).norm();
    for j in 0..7 {
        resasc += WGK[j] * ((lo[j] - reskh).norm() + (hi[j] - reskh).norm());
    }
    let habs = hlgth.abs();
    let err = rescale_error(
        ((resk - resg) * hlgth).norm(),
        resabs * habs,
        resasc * habs,
    );
    let floor = if resabs * habs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        50.0 * f64::EPSILON * resabs * habs
    } else {
        0.0
    };
    Ok(Panel { val: resk * hlgth, err, floor, a, b, depth })
}

/// Globally adaptive integration of f over [a, b], returning the value, the
/// final error estimate, and the summed roundoff floor, without enforcing
/// the tolerance.
pub(crate) fn integrate_est<F>(f: &F, a: f64, b: f64, tol: &Tolerance) -> Result<(C64, f64, f64)>
where
    F: Fn(f64) -> Result<C64>,
{
    if a == b {
        return Ok((C64::new(0.0, 0.0), 0.0, 0.0));
    }
    let mut heap = BinaryHeap::new();
    heap.push(gk15(f, a, b, 0)?);
    let totals = |heap: &BinaryHeap<Panel>| {
        let mut total = C64::new(0.0, 0.0);
        let mut err = 0.0;
        let mut floor = 0.0;
        for p in heap.iter() {
            total += p.val;
            err += p.err;
            floor += p.floor;
        }
        (total, err, floor)
    };
    loop {
        let (total, total_err, total_floor) = totals(&heap);
        // Stop on target, on reaching the roundoff floor (refinement cannot
        // improve the estimate there), or on resource exhaustion.
        if tol.met(total_err, total.norm())
            || total_err <= 4.0 * total_floor
            || heap.len() >= MAX_PANELS
        {
            return Ok((total, total_err, total_floor));
        }
        let worst = heap.pop().expect("heap holds at least one panel");
        let width_floor = f64::EPSILON * (b - a).abs();
        if worst.depth >= MAX_DEPTH || (worst.b - worst.a).abs() <= width_floor {
            heap.push(worst);
            let (total, total_err, total_floor) = totals(&heap);
            return Ok((total, total_err, total_floor));
        }
        let mid = 0.5 * (worst.a + worst.b);
        heap.push(gk15(f, worst.a, mid, worst.depth + 1)?);
        heap.push(gk15(f, mid, worst.b, worst.depth + 1)?);
    }
}

/// A result counts as converged when the estimate meets the tolerance or
/// sits within a small factor of the machine-attainable floor; asking for
/// less than roundoff is not a failure of the integrand.
fn enforce(kind: &str, val: C64, err: f64, floor: f64, tol: &Tolerance) -> Result<C64> {
    if tol.met(err, val.norm()) || err <= 4.0 * floor {
        Ok(val)
    } else {
        Err(Error::QuadratureNonConvergence {
            what: kind.to_string(),
            err,
            tol: tol.abs.max(tol.rel * val.norm()),
        })
    }
}

/// Integrates a complex-valued function over a real interval to tolerance.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: &Tolerance) -> Result<C64>
where
    F: Fn(f64) -> Result<C64>,
{
    let (val, err, floor) = integrate_est(&f, a, b, tol)?;
    enforce("interval quadrature", val, err, floor, tol)
}

/// Geometry of one contour piece.
#[derive(Clone, Debug)]
pub enum SegmentGeom {
    Line { from: C64, to: C64 },
    /// Circular arc center + radius, traversed from angle phi0 to phi1.
    Arc { center: C64, radius: f64, phi0: f64, phi1: f64 },
}

/// Contour piece tagged with the sheet it runs on. The side tag documents
/// which boundary value applies if an endpoint touches a cut; interior
/// quadrature nodes never land on segment endpoints, so it is consulted only
/// when the integrand itself needs it for points with zero imaginary part.
#[derive(Clone, Debug)]
pub struct Segment {
    pub geom: SegmentGeom,
    pub sheet: Sheet,
    pub side: Option<Side>,
}

impl Segment {
    pub fn line(from: C64, to: C64, sheet: Sheet) -> Self {
        Segment { geom: SegmentGeom::Line { from, to }, sheet, side: None }
    }

    pub fn line_with_side(from: C64, to: C64, sheet: Sheet, side: Side) -> Self {
        Segment { geom: SegmentGeom::Line { from, to }, sheet, side: Some(side) }
    }

    pub fn arc(center: C64, radius: f64, phi0: f64, phi1: f64, sheet: Sheet) -> Self {
        Segment { geom: SegmentGeom::Arc { center, radius, phi0, phi1 }, sheet, side: None }
    }

    /// Point at parameter t in [0, 1].
    pub fn point(&self, t: f64) -> C64 {
        match &self.geom {
            SegmentGeom::Line { from, to } => from + (to - from) * t,
            SegmentGeom::Arc { center, radius, phi0, phi1 } => {
                let phi = phi0 + (phi1 - phi0) * t;
                center + C64::new(0.0, phi).exp() * *radius
            }
        }
    }

    /// d(point)/dt at parameter t.
    pub fn velocity(&self, t: f64) -> C64 {
        match &self.geom {
            SegmentGeom::Line { from, to } => to - from,
            SegmentGeom::Arc { center: _, radius, phi0, phi1 } => {
                let phi = phi0 + (phi1 - phi0) * t;
                C64::new(0.0, 1.0) * (phi1 - phi0) * *radius * C64::new(0.0, phi).exp()
            }
        }
    }
}

pub type Path = Vec<Segment>;

/// Integrates f(segment, z) dz along the path. The absolute budget is split
/// evenly across segments.
pub fn integrate_path<F>(path: &Path, f: F, tol: &Tolerance) -> Result<C64>
where
    F: Fn(&Segment, C64) -> Result<C64>,
{
    // Segments get absolute budgets only: segment values may cancel in the
    // total, so per-segment relative slack does not add up coherently.
    let per = Tolerance { abs: tol.abs / path.len().max(1) as f64, rel: 0.0 };
    let mut total = C64::new(0.0, 0.0);
    let mut total_err = 0.0;
    let mut total_floor = 0.0;
    for seg in path {
        let g = |t: f64| Ok(f(seg, seg.point(t))? * seg.velocity(t));
        let (v, e, fl) = integrate_est(&g, 0.0, 1.0, &per)?;
        total += v;
        total_err += e;
        total_floor += fl;
    }
    enforce("contour quadrature", total, total_err, total_floor, tol)
}

/// Cauchy principal value of g over (lo, hi) where g has a simple pole at x0
/// with residue r. The pole term is subtracted analytically and restored in
/// closed form, so the quadrature only ever sees the smooth remainder.
pub fn integrate_pv<G>(g: G, interval: (f64, f64), x0: f64, r: f64, tol: &Tolerance) -> Result<f64>
where
    G: Fn(f64) -> f64,
{
    let (lo, hi) = interval;
    if !(lo < x0 && x0 < hi) {
        return Err(Error::ContractViolation(format!(
            "principal value pole {x0} must lie inside ({lo}, {hi})"
        )));
    }
    // A bisection midpoint can land exactly on x0 where the subtracted
    // integrand is 0/0; evaluate a hair to the side instead.
    let nudge = (hi - lo) * 1e-13;
    let smooth = |x: f64| -> Result<C64> {
        let x = if x == x0 { x0 + nudge } else { x };
        Ok(C64::new(g(x) - r / (x - x0), 0.0))
    };
    let (v, e, fl) = integrate_est(&smooth, lo, hi, tol)?;
    let val = v.re + r * ((hi - x0) / (x0 - lo)).ln();
    enforce("principal value quadrature", C64::new(val, 0.0), e, fl, tol).map(|c| c.re)
}

fn phi_substitution(interval: (f64, f64)) -> (f64, f64) {
    let (lo, hi) = interval;
    (0.5 * (lo + hi), 0.5 * (hi - lo))
}

/// Integrates h over [lo, hi] with the substitution x = m - rho cos(phi),
/// which soaks up inverse square root singularities at both endpoints.
pub fn integrate_cut<H>(h: H, interval: (f64, f64), tol: &Tolerance) -> Result<C64>
where
    H: Fn(f64) -> Result<C64>,
{
    let (m, rho) = phi_substitution(interval);
    integrate(
        |phi: f64| Ok(h(m - rho * phi.cos())? * (rho * phi.sin())),
        0.0,
        std::f64::consts::PI,
        tol,
    )
}

/// Integral of g(phi, x(phi)) d(phi) over [0, pi] with x = m - rho cos(phi):
/// for integrands whose endpoint singularity has already been cancelled
/// analytically against the substitution Jacobian. The angle is passed
/// alongside x so integrands can form distances to the interval endpoints
/// through half-angle identities instead of cancellation-prone subtraction:
/// x - lo = 2 rho sin^2(phi/2) and hi - x = 2 rho cos^2(phi/2) hold exactly.
pub(crate) fn integrate_phi<G>(g: G, interval: (f64, f64), tol: &Tolerance) -> Result<C64>
where
    G: Fn(f64, f64) -> Result<C64>,
{
    let (m, rho) = phi_substitution(interval);
    integrate(|phi: f64| g(phi, m - rho * phi.cos()), 0.0, std::f64::consts::PI, tol)
}
