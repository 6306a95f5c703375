//! Problem description files and the records the command line tools emit.
//!
//! A problem file is TOML: cut endpoints, the phase vector alpha (one entry
//! per gap), the degree n, and optional tolerance overrides. Reports are
//! flat serializable structs so runs can be archived and diffed; every
//! numerical knob that influenced a run appears in its report.

use crate::numerics::Tolerance;
use crate::parametrix::{Convention, ParametrixMatrix, ResidualReport, SweepRecord};
use crate::period_map::InversionReport;
use crate::surface::Sheet;
use crate::surface::SurfaceConfig;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Numerical thresholds, all optional in the file.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Absolute quadrature tolerance per contour integral.
    pub quadrature_abs: f64,
    /// Relative quadrature tolerance per contour integral.
    pub quadrature_rel: f64,
    /// Residual bound for the divisor (period target) inversion.
    pub newton: f64,
    /// Bound the validation residuals are judged against.
    pub validation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            quadrature_abs: 1e-12,
            quadrature_rel: 1e-12,
            newton: 1e-10,
            validation: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn quadrature(&self) -> Tolerance {
        Tolerance::new(self.quadrature_abs, self.quadrature_rel)
    }

    fn checked(&self) -> Result<()> {
        for (name, v) in [
            ("quadrature_abs", self.quadrature_abs),
            ("quadrature_rel", self.quadrature_rel),
            ("newton", self.newton),
            ("validation", self.validation),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "tolerance {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One problem instance: the support, the gap phases, and the degree.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Cut endpoints [a_k, b_k], strictly increasing and disjoint.
    pub cuts: Vec<[f64; 2]>,
    /// Gap weights alpha_j, one per gap.
    pub alpha: Vec<f64>,
    /// Degree multiplying alpha in the jump phases.
    #[serde(default)]
    pub n: i64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl ProblemConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ProblemConfig = toml::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("problem file: {e}")))?;
        cfg.checked()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn checked(self) -> Result<Self> {
        let surface = SurfaceConfig::new(self.cuts.clone())?;
        if self.alpha.len() != surface.genus() {
            return Err(Error::InvalidConfig(format!(
                "alpha needs one entry per gap: got {}, need {}",
                self.alpha.len(),
                surface.genus()
            )));
        }
        self.tolerances.checked()?;
        Ok(self)
    }

    pub fn surface(&self) -> Result<SurfaceConfig> {
        SurfaceConfig::new(self.cuts.clone())
    }

    /// Runs the full construction this file describes.
    pub fn build(&self) -> Result<ParametrixMatrix> {
        let surface = self.surface()?;
        ParametrixMatrix::build(
            &surface,
            &self.alpha,
            self.n,
            &self.tolerances.quadrature(),
            self.tolerances.newton,
        )
    }
}

/// One divisor point, written with both its oval coordinate and its
/// projection data.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DivisorPoint {
    /// Gap the point lives over, 1-based.
    pub gap: usize,
    /// Position on the oval, in [0, 1).
    pub theta: f64,
    /// Projection to the plane.
    pub x: f64,
    /// Value of w at the point; zero exactly when it sits on a branch point.
    pub w: f64,
    /// Sheet of the lift, 1 or 2; degenerate points report 0.
    pub sheet: u8,
}

/// Solution data for one of the two row differentials.
#[derive(Clone, Debug, Serialize)]
pub struct RowSolution {
    pub divisor: Vec<DivisorPoint>,
    /// Normalized periods actually achieved, one per gap.
    pub beta: Vec<f64>,
    pub inversion: InversionReport,
}

fn row_solution(m: &ParametrixMatrix, nu: Sheet) -> RowSolution {
    let ev = m.evaluator(nu);
    let omega = ev.differential();
    let divisor = omega
        .divisor()
        .iter()
        .zip(omega.divisor_x())
        .zip(omega.divisor_w())
        .map(|((p, x), w)| DivisorPoint {
            gap: p.gap,
            theta: p.theta,
            x: *x,
            w: *w,
            sheet: if p.is_degenerate() {
                0
            } else {
                p.sheet().index() as u8
            },
        })
        .collect();
    RowSolution {
        divisor,
        beta: ev.beta().to_vec(),
        inversion: m.inversion_reports()[nu.index() - 1],
    }
}

/// Everything a finished construction is determined by.
#[derive(Clone, Debug, Serialize)]
pub struct BuildReport {
    pub cuts: Vec<[f64; 2]>,
    pub alpha: Vec<f64>,
    pub n: i64,
    /// Fractional parts of n alpha: the gap oscillation phases.
    pub jump_phases: Vec<f64>,
    pub convention: Convention,
    pub rows: [RowSolution; 2],
    pub timing_ms: u128,
}

impl BuildReport {
    pub fn new(m: &ParametrixMatrix, timing_ms: u128) -> Self {
        BuildReport {
            cuts: m.config().cuts().to_vec(),
            alpha: m.alpha().to_vec(),
            n: m.n(),
            jump_phases: m.jump_phases().to_vec(),
            convention: m.convention(),
            rows: [row_solution(m, Sheet::One), row_solution(m, Sheet::Two)],
            timing_ms,
        }
    }
}

/// Validation residuals judged against one threshold.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub residuals: ResidualReport,
    /// Bound applied to every jump residual and to the determinant.
    pub threshold: f64,
    pub passed: bool,
    pub timing_ms: u128,
}

impl ValidationReport {
    pub fn new(residuals: ResidualReport, threshold: f64, timing_ms: u128) -> Self {
        let passed = residuals.max_jump_residual() <= threshold
            && residuals.det_deviation <= threshold;
        ValidationReport {
            residuals,
            threshold,
            passed,
            timing_ms,
        }
    }
}

/// Wrapper adding provenance to a boundedness sweep record.
#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub cuts: Vec<[f64; 2]>,
    pub alpha: Vec<f64>,
    pub record: SweepRecord,
    pub timing_ms: u128,
}

/// Divisor data alone, for runs that only solve the period problem.
#[derive(Clone, Debug, Serialize)]
pub struct InvertReport {
    pub cuts: Vec<[f64; 2]>,
    pub alpha: Vec<f64>,
    pub n: i64,
    pub jump_phases: Vec<f64>,
    pub rows: [RowSolution; 2],
    pub timing_ms: u128,
}

impl InvertReport {
    pub fn new(m: &ParametrixMatrix, timing_ms: u128) -> Self {
        InvertReport {
            cuts: m.config().cuts().to_vec(),
            alpha: m.alpha().to_vec(),
            n: m.n(),
            jump_phases: m.jump_phases().to_vec(),
            rows: [row_solution(m, Sheet::One), row_solution(m, Sheet::Two)],
            timing_ms,
        }
    }
}
