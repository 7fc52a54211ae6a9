use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::beam::{BeamConfig, BoundaryCondition, CrossSection, MaterialProperties};
use crate::contact::SubstrateConfig;
use crate::error::{Error, Result};
use crate::haptic::ScaleMap;
use crate::solver::{RayleighDamping, SolveOptions};

/// Upper bound on the mesh size a session accepts.
pub const MAX_ELEMENTS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    #[serde(alias = "Cantilever")]
    Cantilever,
    /// Clamped at both ends.
    #[serde(alias = "Microbridge")]
    Microbridge,
}

impl Structure {
    pub fn boundary(self) -> BoundaryCondition {
        match self {
            Structure::Cantilever => BoundaryCondition::ClampedFree,
            Structure::Microbridge => BoundaryCondition::ClampedClamped,
        }
    }
}

/// The flat, user-facing parameter set: the config file schema, also
/// carried in every snapshot.
///
/// | key | default |
/// |---|---|
/// | `structure` | `cantilever` |
/// | `length_m` | 300e-6 |
/// | `width_m` | 20e-6 |
/// | `thickness_m` | 2e-6 |
/// | `youngs_modulus_pa` | 169e9 |
/// | `density_kgm3` | 2330 |
/// | `n_elements` | 32 |
/// | `gap_m` | 2e-6 |
/// | `warn_fraction` | 0.1 |
/// | `length_scale` | 1e3 |
/// | `force_scale` | 1e6 |
/// | `device_force_max` | 3.3 |
/// | `dt_s` | 1e-3 |
/// | `modal_modes` | 8 (0 integrates every DOF) |
/// | `damping_alpha` | 0 |
/// | `damping_beta` | 0 |
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Parameters {
    pub structure: Structure,
    pub length_m: f64,
    pub width_m: f64,
    pub thickness_m: f64,
    pub youngs_modulus_pa: f64,
    pub density_kgm3: f64,
    pub n_elements: usize,
    pub gap_m: f64,
    pub warn_fraction: f64,
    pub length_scale: f64,
    pub force_scale: f64,
    pub device_force_max: f64,
    pub dt_s: f64,
    pub modal_modes: usize,
    pub damping_alpha: f64,
    pub damping_beta: f64,
}

impl Default for Parameters {
    fn default() -> Self {
        let beam = BeamConfig::reference_cantilever(32);
        let substrate = SubstrateConfig::default();
        let scale = ScaleMap::default();
        Self {
            structure: Structure::Cantilever,
            length_m: beam.length,
            width_m: beam.section.width,
            thickness_m: beam.section.thickness,
            youngs_modulus_pa: beam.material.youngs_modulus,
            density_kgm3: beam.material.density,
            n_elements: beam.n_elements,
            gap_m: substrate.initial_gap,
            warn_fraction: substrate.warn_fraction,
            length_scale: scale.length_scale,
            force_scale: scale.force_scale,
            device_force_max: scale.device_force_max,
            dt_s: 1e-3,
            modal_modes: 8,
            damping_alpha: 0.0,
            damping_beta: 0.0,
        }
    }
}

/// Validated session configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionConfig {
    pub structure: Structure,
    pub beam: BeamConfig,
    pub substrate: SubstrateConfig,
    pub scale: ScaleMap,
    /// `modal_truncation` holds the requested mode count; sessions clamp it
    /// to the free DOFs available.
    pub solve: SolveOptions,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self::from_parameters(&Parameters::default()).expect("defaults are valid")
    }
}

impl SessionConfig {
    pub fn from_parameters(p: &Parameters) -> Result<Self> {
        if p.n_elements > MAX_ELEMENTS {
            return Err(Error::config(
                "n_elements",
                format!("must not exceed {MAX_ELEMENTS} (got {})", p.n_elements),
            ));
        }
        if p.structure == Structure::Microbridge && p.n_elements < 2 {
            return Err(Error::config("n_elements", "a microbridge needs at least 2 elements"));
        }
        let beam = BeamConfig {
            length: p.length_m,
            material: MaterialProperties {
                youngs_modulus: p.youngs_modulus_pa,
                density: p.density_kgm3,
            },
            section: CrossSection {
                width: p.width_m,
                thickness: p.thickness_m,
            },
            n_elements: p.n_elements,
            boundary: p.structure.boundary(),
        };
        beam.validate()?;
        let substrate = SubstrateConfig {
            initial_gap: p.gap_m,
            warn_fraction: p.warn_fraction,
        };
        substrate.validate()?;
        let scale = ScaleMap {
            length_scale: p.length_scale,
            force_scale: p.force_scale,
            device_force_max: p.device_force_max,
        };
        scale.validate()?;
        let solve = SolveOptions {
            dt: p.dt_s,
            damping: RayleighDamping {
                alpha: p.damping_alpha,
                beta: p.damping_beta,
            },
            modal_truncation: (p.modal_modes > 0).then_some(p.modal_modes),
            ..SolveOptions::default()
        };
        solve.validate()?;
        Ok(Self {
            structure: p.structure,
            beam,
            substrate,
            scale,
            solve,
        })
    }

    pub fn parameters(&self) -> Parameters {
        Parameters {
            structure: self.structure,
            length_m: self.beam.length,
            width_m: self.beam.section.width,
            thickness_m: self.beam.section.thickness,
            youngs_modulus_pa: self.beam.material.youngs_modulus,
            density_kgm3: self.beam.material.density,
            n_elements: self.beam.n_elements,
            gap_m: self.substrate.initial_gap,
            warn_fraction: self.substrate.warn_fraction,
            length_scale: self.scale.length_scale,
            force_scale: self.scale.force_scale,
            device_force_max: self.scale.device_force_max,
            dt_s: self.solve.dt,
            modal_modes: self.solve.modal_truncation.unwrap_or(0),
            damping_alpha: self.solve.damping.alpha,
            damping_beta: self.solve.damping.beta,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.parameters()).expect("parameters serialize")
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a TOML config. Missing keys take their defaults.
pub fn parse_config(text: &str) -> Result<SessionConfig> {
    let params: Parameters = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map(|span| line_of(text, span.start)),
        message: e.message().to_string(),
    })?;
    SessionConfig::from_parameters(&params)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SessionConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}
