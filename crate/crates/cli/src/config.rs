//! Experiment configuration: TOML files with strict key checking, CLI
//! overrides, and a content hash stamped into every output file.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ergokit::hilbert::SystemState;
use ergokit::weight::{cat_state, gaussian_packet, uniform_window, EnergyGrid, WeightState};
use ergokit::C64;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n: usize,
    pub spacing: f64,
    pub origin: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 1024,
            spacing: 1.0 / 32.0,
            origin: None,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<EnergyGrid, String> {
        let origin = self
            .origin
            .unwrap_or_else(|| -(self.n as f64) * self.spacing / 2.0);
        EnergyGrid::new(self.n, self.spacing, origin).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// One of: "plus", "lopsided" (the (|0⟩+5|1⟩)/√26 reference state),
    /// "mixed" (maximally mixed), "excited", "ground", "bloch".
    pub state: String,
    /// Bloch components, used when state = "bloch".
    pub bloch: Option<[f64; 3]>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            state: "lopsided".into(),
            bloch: None,
        }
    }
}

impl SystemConfig {
    pub fn build(&self) -> Result<SystemState, String> {
        match self.state.as_str() {
            "plus" => Ok(SystemState::plus()),
            "lopsided" => Ok(ergokit::qubit_phase::lopsided_state()),
            "mixed" => Ok(SystemState::maximally_mixed(2)),
            "excited" => SystemState::pure(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0)])
                .map_err(|e| e.to_string()),
            "ground" => SystemState::pure(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)])
                .map_err(|e| e.to_string()),
            "bloch" => {
                let b = self
                    .bloch
                    .ok_or_else(|| "state = \"bloch\" requires the bloch field".to_string())?;
                SystemState::from_bloch(b[0], b[1], b[2]).map_err(|e| e.to_string())
            }
            other => Err(format!(
                "unknown system state {other:?}; expected plus|lopsided|mixed|excited|ground|bloch"
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightConfig {
    /// "gaussian" | "cat" | "uniform"
    pub kind: String,
    pub mu: f64,
    pub nu: f64,
    pub sigma: f64,
    pub half_width: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            kind: "gaussian".into(),
            mu: 0.0,
            nu: 0.0,
            sigma: std::f64::consts::FRAC_1_SQRT_2,
            half_width: 5.0,
        }
    }
}

impl WeightConfig {
    pub fn build(&self, grid: &EnergyGrid) -> Result<WeightState, String> {
        let wf = match self.kind.as_str() {
            "gaussian" => gaussian_packet(self.mu, self.nu, self.sigma, grid),
            "cat" => cat_state(self.mu, self.nu, grid),
            "uniform" => uniform_window(self.mu, self.half_width, grid),
            other => {
                return Err(format!(
                    "unknown weight kind {other:?}; expected gaussian|cat|uniform"
                ))
            }
        }
        .map_err(|e| e.to_string())?;
        Ok(WeightState::pure(wf))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// "identity" | "sigma_x" | "rotation_y" | "haar"
    pub unitary: String,
    /// Rotation angle for rotation_y.
    pub angle: f64,
    /// Haar samples for sampling commands.
    pub samples: usize,
    /// Iteration steps for reduce-variance.
    pub steps: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            unitary: "rotation_y".into(),
            angle: std::f64::consts::FRAC_PI_2,
            samples: 10_000,
            steps: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseSpaceConfig {
    pub sigma: f64,
    pub sigma_sweep: Vec<f64>,
    pub mu: f64,
    pub nu: f64,
    pub mu_sweep: Vec<f64>,
}

impl Default for PhaseSpaceConfig {
    fn default() -> Self {
        Self {
            sigma: std::f64::consts::FRAC_1_SQRT_2,
            sigma_sweep: vec![0.15, 0.25, 0.4, std::f64::consts::FRAC_1_SQRT_2, 1.0, 1.4],
            mu: 2.0,
            nu: 1.0,
            mu_sweep: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundPlotConfig {
    /// Bloch components of the system state for the bound curve.
    pub bloch: [f64; 3],
    /// Number of curve points across (0, R_C^max).
    pub points: usize,
    /// Fractions of R_C^max cross-checked against the evolution oracle.
    pub crosscheck_fractions: Vec<f64>,
}

impl Default for BoundPlotConfig {
    fn default() -> Self {
        Self {
            bloch: [1.0, 0.0, 0.0],
            points: 200,
            crosscheck_fractions: vec![0.2, 0.4, 0.6, 0.8, 0.9],
        }
    }
}

/// Full experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub grid: GridConfig,
    pub system: SystemConfig,
    pub weight: WeightConfig,
    pub protocol: ProtocolConfig,
    pub phase_space: PhaseSpaceConfig,
    pub bound_plot: BoundPlotConfig,
}

impl ExperimentConfig {
    pub fn load(path: Option<&std::path::Path>) -> Result<Self, String> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
                toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", p.display()))
            }
        }
    }

    /// Canonical serialized form, used for the hash and the echo file.
    pub fn canonical(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// First 16 hex characters of the SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical().as_bytes());
        hex::encode(hasher.finalize())[..16].to_string()
    }
}
