use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spinsat::integrator::{MAX_TOL, MIN_TOL};
use spinsat::{Options, PhysicalParams};

use crate::CliError;

pub const DEFAULT_TOL: f64 = spinsat::integrator::DEFAULT_TOL;
pub const DEFAULT_GRID: usize = 256;
pub const GRID_RANGE: (usize, usize) = (16, 4096);

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    relaxation: Relaxation,
    #[serde(default)]
    control: Control,
    #[serde(default)]
    numerics: Numerics,
    #[serde(default)]
    output: Output,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Relaxation {
    t1_ms: f64,
    t2_ms: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Control {
    omega_max_hz: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Numerics {
    tol: Option<f64>,
    grid_n: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Output {
    dir: Option<PathBuf>,
}

/// Values on the command line take precedence over the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub omega_max_hz: Option<f64>,
    pub tol: Option<f64>,
    pub grid_n: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

/// Effective run configuration after overrides.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub t1_ms: f64,
    pub t2_ms: f64,
    pub omega_max_hz: Option<f64>,
    pub tol: f64,
    pub grid_n: usize,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path, over: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, over)
    }

    pub fn parse(text: &str, over: &Overrides) -> Result<Self, CliError> {
        let file: FileConfig = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        let cfg = RunConfig {
            t1_ms: file.relaxation.t1_ms,
            t2_ms: file.relaxation.t2_ms,
            omega_max_hz: over.omega_max_hz.or(file.control.omega_max_hz),
            tol: over.tol.or(file.numerics.tol).unwrap_or(DEFAULT_TOL),
            grid_n: over.grid_n.or(file.numerics.grid_n).unwrap_or(DEFAULT_GRID),
            output_dir: over.output_dir.clone().or(file.output.dir).unwrap_or_else(|| PathBuf::from("out")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(MIN_TOL..=MAX_TOL).contains(&self.tol) {
            return Err(CliError::Config(format!("tol {} outside [{MIN_TOL:e}, {MAX_TOL:e}]", self.tol)));
        }
        if !(GRID_RANGE.0..=GRID_RANGE.1).contains(&self.grid_n) {
            return Err(CliError::Config(format!(
                "grid_n {} outside [{}, {}]",
                self.grid_n, GRID_RANGE.0, GRID_RANGE.1
            )));
        }
        // relaxation times are checked against any positive amplitude
        PhysicalParams::new(self.t1_ms * 1e-3, self.t2_ms * 1e-3, self.omega_max_hz.unwrap_or(1.0))
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn params(&self) -> Result<PhysicalParams, CliError> {
        let omega =
            self.omega_max_hz.ok_or_else(|| CliError::Config("missing [control] omega_max_hz (or --omega)".into()))?;
        PhysicalParams::new(self.t1_ms * 1e-3, self.t2_ms * 1e-3, omega).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn t1_s(&self) -> f64 {
        self.t1_ms * 1e-3
    }

    pub fn t2_s(&self) -> f64 {
        self.t2_ms * 1e-3
    }

    pub fn options(&self) -> Options {
        Options::with_tol(self.tol)
    }

    /// SHA-256 of the effective configuration rendered as TOML. The output
    /// directory is left out so relocated runs stay byte-identical.
    pub fn digest(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE: &str = "[relaxation]\nt1_ms = 740.0\nt2_ms = 60.0\n[control]\nomega_max_hz = 32.3\n";

    #[test]
    fn parses_and_applies_defaults() {
        let c = RunConfig::parse(REFERENCE, &Overrides::default()).unwrap();
        assert_eq!(c.omega_max_hz, Some(32.3));
        assert_eq!(c.tol, DEFAULT_TOL);
        assert_eq!(c.grid_n, DEFAULT_GRID);
        assert_eq!(c.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn flags_override_file() {
        let over = Overrides { omega_max_hz: Some(500.0), grid_n: Some(64), ..Overrides::default() };
        let c = RunConfig::parse(REFERENCE, &over).unwrap();
        assert_eq!((c.omega_max_hz, c.grid_n), (Some(500.0), 64));
        assert_ne!(c.digest(), RunConfig::parse(REFERENCE, &Overrides::default()).unwrap().digest());
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            "[relaxation]\nt2_ms = 60.0\n",
            "[relaxation]\nt1_ms = 740.0\nt2_ms = -1.0\n",
            "[relaxation]\nt1_ms = 740.0\nt2_ms = 60.0\nextra = 1\n",
            "[relaxation]\nt1_ms = 740.0\nt2_ms = 60.0\n[numerics]\ngrid_n = 8\n",
            "[relaxation]\nt1_ms = 740.0\nt2_ms = 60.0\n[numerics]\ntol = 0.5\n",
            "not toml",
        ];
        for text in bad {
            assert!(matches!(RunConfig::parse(text, &Overrides::default()), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn digest_is_stable() {
        let a = RunConfig::parse(REFERENCE, &Overrides::default()).unwrap();
        assert_eq!(a.digest(), a.clone().digest());
        assert_eq!(a.digest().len(), 64);
        let moved = Overrides { output_dir: Some("elsewhere".into()), ..Overrides::default() };
        assert_eq!(RunConfig::parse(REFERENCE, &moved).unwrap().digest(), a.digest());
    }
}
