//! Run configuration, read from TOML with one level of sections.

use std::path::Path;

use faer::c64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evolution::EvolutionConfig;
use crate::geometry::Channel;
use crate::source::SourceTerm;
use crate::topography::Topography;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lambda: f64,
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub topography: Topography,
    #[serde(default)]
    pub source: SourceSpec,
    #[serde(default)]
    pub scattering: ScatteringSection,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub lap: LapSection,
    #[serde(default)]
    pub evolution: EvolutionSection,
    #[serde(default)]
    pub billiard: BilliardSection,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    #[default]
    Zero,
    /// `sin(mode x2) bump((x1 - center) / radius)`.
    ModeBump {
        #[serde(default = "one_u32")]
        mode: u32,
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        radius: f64,
        #[serde(default = "one")]
        amplitude_re: f64,
        #[serde(default)]
        amplitude_im: f64,
    },
    /// Product of bumps in `x1` and `x2`.
    Blob {
        x1: f64,
        r1: f64,
        x2: f64,
        r2: f64,
        #[serde(default = "one")]
        amplitude_re: f64,
        #[serde(default)]
        amplitude_im: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn one_u32() -> u32 {
    1
}

impl SourceSpec {
    pub fn build(&self) -> SourceTerm {
        match *self {
            SourceSpec::Zero => SourceTerm::zero(),
            SourceSpec::ModeBump {
                mode,
                center,
                radius,
                amplitude_re,
                amplitude_im,
            } => SourceTerm::mode_bump(mode, center, radius).scaled(c64::new(amplitude_re, amplitude_im)),
            SourceSpec::Blob {
                x1,
                r1,
                x2,
                r2,
                amplitude_re,
                amplitude_im,
            } => SourceTerm::blob(c64::new(amplitude_re, amplitude_im), x1, r1, x2, r2),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatteringSection {
    pub k_max: usize,
    /// Quadrature nodes for the pullback entries; `0` means `16 K`.
    pub n_quad: usize,
    /// Number of random inner-band forms for the unitarity report.
    pub samples: usize,
}

impl Default for ScatteringSection {
    fn default() -> Self {
        ScatteringSection {
            k_max: 128,
            n_quad: 0,
            samples: 20,
        }
    }
}

impl ScatteringSection {
    pub fn quadrature(&self) -> usize {
        if self.n_quad == 0 {
            16 * self.k_max
        } else {
            self.n_quad
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    /// Field window `|x1| <= half_width`; `0` means `R0 + 8`.
    pub half_width: f64,
    pub n1: usize,
    pub n2: usize,
    pub neumann_step: f64,
}

impl Default for SolveSection {
    fn default() -> Self {
        SolveSection {
            half_width: 0.0,
            n1: 1024,
            n2: 128,
            neumann_step: 2e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LapSection {
    pub eps: Vec<f64>,
    /// Truncation half-width; `0` means `R0 + 8`.
    pub half_width: f64,
    pub n1: usize,
    pub n2: usize,
    /// `chi = 1` on `|x1| <= R0 + chi_inner`, `0` beyond `R0 + chi_outer`.
    pub chi_inner: f64,
    pub chi_outer: f64,
}

impl Default for LapSection {
    fn default() -> Self {
        LapSection {
            eps: vec![0.2, 0.1, 0.05, 0.025],
            half_width: 0.0,
            n1: 1024,
            n2: 128,
            chi_inner: 2.0,
            chi_outer: 4.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionSection {
    pub t_final: f64,
    pub dt: f64,
    /// `0` means the group-speed bound.
    pub l_evo: f64,
    pub l_report: f64,
    pub chi_ramp: f64,
    pub cells_per_unit: f64,
    pub n2: usize,
    pub snapshot_stride: usize,
    /// Negative means `t_final / 2`.
    pub record_from: f64,
    pub forcing_off: Option<f64>,
    /// Directory of a previous `evolve` run for `extract`; empty means the
    /// output directory.
    pub trace_dir: String,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        EvolutionSection {
            t_final: 400.0,
            dt: 0.25,
            l_evo: 0.0,
            l_report: 10.0,
            chi_ramp: 2.0,
            cells_per_unit: 10.0,
            n2: 32,
            snapshot_stride: 2,
            record_from: -1.0,
            forcing_off: None,
            trace_dir: String::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BilliardSection {
    pub samples: usize,
}

impl Default for BilliardSection {
    fn default() -> Self {
        BilliardSection { samples: 512 }
    }
}

/// Thresholds used to grade the reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub unitarity: f64,
    pub transport: f64,
    pub outgoing: f64,
    pub neumann: f64,
    pub identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            unitarity: 1e-8,
            transport: 1e-8,
            outgoing: 1e-10,
            neumann: 1e-6,
            identity: 1e-10,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Checks everything that does not need the geometry.
    pub fn validate(&self) -> Result<()> {
        for &l in std::iter::once(&self.lambda).chain(&self.lambdas) {
            if !(l > 0.0 && l < 1.0) {
                return Err(Error::Config(format!("lambda = {l} outside (0, 1)")));
            }
        }
        self.topography.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.scattering.k_max == 0 {
            return Err(Error::Config("scattering.k_max must be positive".into()));
        }
        if self.scattering.quadrature() < 8 * self.scattering.k_max {
            return Err(Error::Config("scattering.n_quad must be at least 8 k_max".into()));
        }
        if self.lap.eps.windows(2).any(|w| w[1] >= w[0]) || self.lap.eps.iter().any(|e| *e <= 0.0) {
            return Err(Error::Config("lap.eps must be positive and strictly decreasing".into()));
        }
        if self.lap.chi_outer <= self.lap.chi_inner {
            return Err(Error::Config("lap.chi_outer must exceed lap.chi_inner".into()));
        }
        if self.solve.n1 < 4 || self.solve.n2 < 2 || self.solve.neumann_step <= 0.0 {
            return Err(Error::Config("degenerate solve grid".into()));
        }
        Ok(())
    }

    /// All frequencies to run, `lambda` first.
    pub fn frequencies(&self) -> Vec<f64> {
        let mut out = vec![self.lambda];
        out.extend(self.lambdas.iter().copied().filter(|l| *l != self.lambda));
        out
    }

    pub fn channel(&self, lambda: f64) -> Result<Channel> {
        Channel::new(self.topography.clone(), lambda)
    }

    pub fn source(&self) -> SourceTerm {
        self.source.build()
    }

    pub fn evolution_config(&self, lambda: f64) -> EvolutionConfig {
        let e = &self.evolution;
        let l_evo = if e.l_evo > 0.0 {
            e.l_evo
        } else {
            EvolutionConfig::required_half_width(e.l_report, e.t_final)
        };
        EvolutionConfig {
            lambda,
            t_final: e.t_final,
            dt: e.dt,
            l_evo,
            l_report: e.l_report,
            chi_ramp: e.chi_ramp,
            cells_per_unit: e.cells_per_unit,
            n2: e.n2,
            snapshot_stride: e.snapshot_stride,
            record_from: if e.record_from < 0.0 { e.t_final / 2.0 } else { e.record_from },
            forcing_off: e.forcing_off,
        }
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
