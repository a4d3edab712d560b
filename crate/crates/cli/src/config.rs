//! Resolved run configuration: defaults, then a TOML file, then flags.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use phasespace::flows::NamedHamiltonian;
use phasespace::metaplectic::KernelOptions;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum HamiltonianName {
    Free,
    Oscillator,
    Pendulum,
    Quartic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Kernel,
    Gaussian,
    NearbyOrbit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Largest kernel phase step between neighbouring samples, in radians.
    pub phase_limit: f64,
    pub quadrature: f64,
    pub edge: f64,
    pub support: f64,
    /// Accepted defect of an input symplectic matrix.
    pub symplectic: f64,
    /// Relative shortfall of a conjugate shadow counted as a violation.
    pub shadow: f64,
    pub john_gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let k = KernelOptions::default();
        Self {
            phase_limit: k.phase_limit,
            quadrature: k.quadrature_tol,
            edge: k.edge_tol,
            support: k.support_tol,
            symplectic: phasespace::symplectic::DEFAULT_SYMPLECTIC_TOL,
            shadow: 1e-9,
            john_gap: 1e-9,
        }
    }
}

impl Tolerances {
    pub fn kernel(&self) -> KernelOptions {
        KernelOptions {
            phase_limit: self.phase_limit,
            quadrature_tol: self.quadrature,
            edge_tol: self.edge,
            support_tol: self.support,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HamiltonianConfig {
    pub name: HamiltonianName,
    pub mass: f64,
    pub omega: f64,
    /// Quartic coupling in `g x^4`.
    pub g: f64,
    /// Pendulum strength in `-k cos x`.
    pub k: f64,
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        Self {
            name: HamiltonianName::Free,
            mass: 1.0,
            omega: 1.0,
            g: 0.1,
            k: 1.0,
        }
    }
}

impl HamiltonianConfig {
    pub fn named(&self) -> NamedHamiltonian {
        let m = self.mass;
        match self.name {
            HamiltonianName::Free => NamedHamiltonian::Free { m },
            HamiltonianName::Oscillator => NamedHamiltonian::Oscillator { m, omega: self.omega },
            HamiltonianName::Pendulum => NamedHamiltonian::Pendulum { m, k: self.k },
            HamiltonianName::Quartic => NamedHamiltonian::Quartic { m, g: self.g },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 2048,
            x_min: -20.0,
            x_max: 20.0,
        }
    }
}

/// Built-in Gaussian initial state.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacketConfig {
    pub x0: f64,
    pub p0: f64,
    /// Position spread.
    pub sigma: f64,
}

impl Default for PacketConfig {
    fn default() -> Self {
        Self {
            x0: 0.0,
            p0: 0.0,
            sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagateConfig {
    pub method: Method,
    pub t: f64,
    /// RK4 step of the nearby-orbit integrator.
    pub dt: f64,
    pub oracle: bool,
    /// Split-step size of the reference solver.
    pub oracle_dt: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub hamiltonian: HamiltonianConfig,
    pub grid: GridConfig,
    pub packet: PacketConfig,
}

impl Default for PropagateConfig {
    fn default() -> Self {
        Self {
            method: Method::Kernel,
            t: 1.0,
            dt: 1e-3,
            oracle: false,
            oracle_dt: 1e-4,
            input: None,
            hamiltonian: HamiltonianConfig::default(),
            grid: GridConfig::default(),
            packet: PacketConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SqueezeConfig {
    pub lambda: f64,
    pub n: usize,
    pub radius: f64,
    pub random: bool,
    pub trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

impl Default for SqueezeConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            n: 2,
            radius: 1.0,
            random: false,
            trials: 1000,
            input: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EhrenfestConfig {
    pub t: f64,
    /// Largest split-step size.
    pub dt: f64,
    /// Number of output rows after `t = 0`.
    pub samples: usize,
    pub hamiltonian: HamiltonianConfig,
    pub grid: GridConfig,
    pub packet: PacketConfig,
}

impl Default for EhrenfestConfig {
    fn default() -> Self {
        Self {
            t: 2.0 * std::f64::consts::PI,
            dt: 1e-3,
            samples: 64,
            hamiltonian: HamiltonianConfig {
                name: HamiltonianName::Oscillator,
                ..HamiltonianConfig::default()
            },
            grid: GridConfig {
                n: 1024,
                ..GridConfig::default()
            },
            packet: PacketConfig {
                x0: 1.0,
                ..PacketConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacityConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Ball radius, used with `dim` when no input file is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Semiaxes `(a_1..a_n, b_1..b_n)` of a centered ellipsoid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub semiaxes: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub hbar: f64,
    pub seed: u64,
    pub out: PathBuf,
    /// Unset means the command's natural format.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub tolerances: Tolerances,
    pub propagate: PropagateConfig,
    pub squeeze: SqueezeConfig,
    pub certify: InputConfig,
    pub ehrenfest: EhrenfestConfig,
    pub capacity: CapacityConfig,
    pub john: InputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            seed: 0,
            out: PathBuf::from("."),
            format: None,
            threads: None,
            tolerances: Tolerances::default(),
            propagate: PropagateConfig::default(),
            squeeze: SqueezeConfig::default(),
            certify: InputConfig::default(),
            ehrenfest: EhrenfestConfig::default(),
            capacity: CapacityConfig::default(),
            john: InputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Range checks shared by every command.
    pub fn validate_common(&self) -> Result<(), String> {
        positive("hbar", self.hbar)?;
        if self.threads == Some(0) {
            return Err("threads must be at least 1".into());
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.phase_limit", t.phase_limit),
            ("tolerances.quadrature", t.quadrature),
            ("tolerances.edge", t.edge),
            ("tolerances.support", t.support),
            ("tolerances.symplectic", t.symplectic),
            ("tolerances.shadow", t.shadow),
            ("tolerances.john_gap", t.john_gap),
        ] {
            positive(name, v)?;
        }
        Ok(())
    }
}

pub fn positive(name: &str, v: f64) -> Result<(), String> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be positive and finite, got {v}"))
    }
}

pub fn finite(name: &str, v: f64) -> Result<(), String> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be finite, got {v}"))
    }
}

impl HamiltonianConfig {
    pub fn validate(&self) -> Result<(), String> {
        positive("mass", self.mass)?;
        positive("omega", self.omega)?;
        finite("g", self.g)?;
        finite("k", self.k)
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n < phasespace::grid::MIN_GRID_POINTS || !self.n.is_power_of_two() {
            return Err(format!("grid size must be a power of two >= {}, got {}", phasespace::grid::MIN_GRID_POINTS, self.n));
        }
        finite("x_min", self.x_min)?;
        finite("x_max", self.x_max)?;
        if self.x_min >= self.x_max {
            return Err(format!("need x_min < x_max, got [{}, {}]", self.x_min, self.x_max));
        }
        Ok(())
    }
}

impl PacketConfig {
    pub fn validate(&self) -> Result<(), String> {
        finite("x0", self.x0)?;
        finite("p0", self.p0)?;
        positive("sigma", self.sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back.to_toml(), cfg.to_toml());
    }

    #[test]
    fn partial_files_keep_defaults() {
        let cfg: RunConfig = toml::from_str("hbar = 0.5\n[propagate.grid]\nn = 512\n").unwrap();
        assert_eq!(cfg.hbar, 0.5);
        assert_eq!(cfg.propagate.grid.n, 512);
        assert_eq!(cfg.propagate.grid.x_max, 20.0);
        assert_eq!(cfg.ehrenfest.grid.n, 1024);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("hbarr = 1.0").is_err());
        assert!(toml::from_str::<RunConfig>("[propagate]\nmethod = \"magic\"").is_err());
    }

    #[test]
    fn range_checks() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate_common().is_ok());
        cfg.hbar = -1.0;
        assert!(cfg.validate_common().is_err());
        assert!(GridConfig { n: 1000, ..GridConfig::default() }.validate().is_err());
        assert!(GridConfig { x_min: 1.0, x_max: 0.0, ..GridConfig::default() }.validate().is_err());
    }
}
