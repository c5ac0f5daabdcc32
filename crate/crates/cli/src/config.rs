//! JSON analysis configuration. Field names are part of the interface;
//! unknown fields are rejected to catch typos.

use cycledeg::cycle::Section;
use cycledeg::degree::Region;
use cycledeg::system::SystemSpec;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub dimension: usize,
    pub period: PeriodSpec,
    pub psi: Vec<String>,
    pub phi: Vec<String>,
    pub seed: Vec<f64>,
    pub section: SectionConfig,
    pub region: RegionConfig,
    #[serde(default)]
    pub numerics: Numerics,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum PeriodSpec {
    Fixed(f64),
    Word(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionConfig {
    /// 1-based coordinate index.
    pub coord: usize,
    pub value: f64,
    pub direction: i8,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum RegionConfig {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_mult_tol")]
    pub mult_tol: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_panels")]
    pub panels: usize,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    #[serde(default = "default_halvings")]
    pub halvings: usize,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_mult_tol() -> f64 {
    1e-6
}
fn default_samples() -> usize {
    cycledeg::malkin::DEFAULT_SAMPLES
}
fn default_panels() -> usize {
    cycledeg::malkin::DEFAULT_PANELS
}
fn default_eps0() -> f64 {
    1e-2
}
fn default_halvings() -> usize {
    8
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            tol: default_tol(),
            mult_tol: default_mult_tol(),
            samples: default_samples(),
            panels: default_panels(),
            eps0: default_eps0(),
            halvings: default_halvings(),
        }
    }
}

impl AnalysisConfig {
    /// Range validation for every numeric field, with messages naming the
    /// offending field.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.dimension;
        if n == 0 {
            return Err("dimension must be at least 1".into());
        }
        match &self.period {
            PeriodSpec::Fixed(t) => {
                if !(t.is_finite() && *t > 0.0) {
                    return Err(format!("period must be positive and finite, got {t}"));
                }
            }
            PeriodSpec::Word(w) => {
                if w != "solve" {
                    return Err(format!("period must be a number or \"solve\", got \"{w}\""));
                }
            }
        }
        if self.psi.len() != n {
            return Err(format!("psi must have {n} components, got {}", self.psi.len()));
        }
        if self.phi.len() != n {
            return Err(format!("phi must have {n} components, got {}", self.phi.len()));
        }
        if self.seed.len() != n {
            return Err(format!("seed must have {n} components, got {}", self.seed.len()));
        }
        if self.section.coord < 1 || self.section.coord > n {
            return Err(format!(
                "section.coord must be in 1..={n}, got {}",
                self.section.coord
            ));
        }
        if !matches!(self.section.direction, -1..=1) {
            return Err(format!(
                "section.direction must be -1, 0 or 1, got {}",
                self.section.direction
            ));
        }
        match &self.region {
            RegionConfig::Ball { center, radius } => {
                if center.len() != n {
                    return Err(format!(
                        "region.center must have {n} components, got {}",
                        center.len()
                    ));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(format!("region.radius must be positive, got {radius}"));
                }
            }
            RegionConfig::Box { lo, hi } => {
                if lo.len() != n || hi.len() != n {
                    return Err(format!(
                        "region.lo and region.hi must have {n} components, got {} and {}",
                        lo.len(),
                        hi.len()
                    ));
                }
                if lo.iter().zip(hi).any(|(a, b)| a >= b || a.is_nan() || b.is_nan()) {
                    return Err("region.lo must be strictly below region.hi".into());
                }
            }
        }
        let nm = &self.numerics;
        if !(1e-13..=1e-3).contains(&nm.tol) {
            return Err(format!("numerics.tol must be in [1e-13, 1e-3], got {}", nm.tol));
        }
        if !(nm.mult_tol > 0.0 && nm.mult_tol < 1.0) {
            return Err(format!(
                "numerics.mult_tol must be in (0, 1), got {}",
                nm.mult_tol
            ));
        }
        if nm.samples < 16 {
            return Err(format!("numerics.samples must be >= 16, got {}", nm.samples));
        }
        if nm.panels < 1 {
            return Err("numerics.panels must be >= 1".into());
        }
        if !(nm.eps0 > 0.0 && nm.eps0 <= 1e-2) {
            return Err(format!("numerics.eps0 must be in (0, 1e-2], got {}", nm.eps0));
        }
        if !(4..=12).contains(&nm.halvings) {
            return Err(format!(
                "numerics.halvings must be in [4, 12], got {}",
                nm.halvings
            ));
        }
        Ok(())
    }

    /// Provisional system; for `"period": "solve"` the returned spec carries
    /// a placeholder period and the caller solves for the real one.
    pub fn system(&self) -> cycledeg::Result<SystemSpec> {
        let period = match &self.period {
            PeriodSpec::Fixed(t) => *t,
            PeriodSpec::Word(_) => 1.0,
        };
        let psi: Vec<&str> = self.psi.iter().map(String::as_str).collect();
        let phi: Vec<&str> = self.phi.iter().map(String::as_str).collect();
        SystemSpec::new(self.dimension, period, &psi, &phi)
    }

    pub fn solve_period(&self) -> bool {
        matches!(&self.period, PeriodSpec::Word(_))
    }

    pub fn section(&self) -> Section {
        Section {
            coord: self.section.coord,
            value: self.section.value,
            direction: self.section.direction,
        }
    }

    pub fn region(&self) -> Region {
        match &self.region {
            RegionConfig::Ball { center, radius } => Region::Ball {
                center: center.clone(),
                radius: *radius,
            },
            RegionConfig::Box { lo, hi } => Region::Box {
                lo: lo.clone(),
                hi: hi.clone(),
            },
        }
    }
}
