//! Run configuration shared by the library and the CLI.
//!
//! The file format is TOML with the sections below; unknown keys are
//! rejected. CLI flags override file values field by field.
//!
//! ```toml
//! version = 1
//!
//! [kernel]
//! name = "sine"            # sine | airy | bessel | ginibre | finite-rank
//! # alpha = 1.0            # bessel order (>= 1)
//! # elements = ["0", "0.0"]  # finite-rank basis indices, root[.bits]
//! # element_level = 1
//!
//! [domain]
//! window = "-2..2"         # line kernels; integer bounds
//! # half_width = 2         # ginibre: square window [-w, w)^2
//!
//! [discretization]
//! level = 2
//! rank_max = 4
//! quad_order = 16
//!
//! [run]
//! seed = 7
//! samples = 1000
//! threads = 0              # 0 = available parallelism
//!
//! [output]
//! dir = "out"
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::ContinuousKernel;
use crate::partition::{BitPath, Root, TreeIndex, TreeSpace};
use crate::project::ProjectionConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub domain: DomainSection,
    #[serde(default)]
    pub discretization: DiscretizationSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_version() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elements: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub element_level: Option<u8>,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection {
            name: "sine".into(),
            alpha: None,
            elements: None,
            element_level: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_width: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSection {
    pub level: u8,
    pub rank_max: u8,
    pub quad_order: usize,
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        DiscretizationSection {
            level: 2,
            rank_max: 4,
            quad_order: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub samples: u64,
    pub threads: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 1,
            samples: 1000,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into() }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: 1,
            kernel: KernelSection::default(),
            domain: DomainSection::default(),
            discretization: DiscretizationSection::default(),
            run: RunSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != 1 {
            return Err(Error::Config(format!(
                "unsupported config version {}",
                self.version
            )));
        }
        if self.discretization.level < 1 {
            return Err(Error::Config("discretization.level must be >= 1".into()));
        }
        if self.discretization.rank_max < 1 {
            return Err(Error::Config("discretization.rank_max must be >= 1".into()));
        }
        if self.discretization.quad_order < 2 {
            return Err(Error::Config(
                "discretization.quad_order must be >= 2".into(),
            ));
        }
        if self.run.samples < 1 {
            return Err(Error::Config("run.samples must be >= 1".into()));
        }
        match self.kernel.name.as_str() {
            "sine" | "airy" | "bessel" | "ginibre" | "finite-rank" => {}
            other => return Err(Error::Config(format!("unknown kernel {other:?}"))),
        }
        Ok(())
    }

    /// Builds the domain window with the kernel's default when the config
    /// leaves it unset: [-8, 8) on the line, [0, 16) on the half-line,
    /// half width 4 for the Gaussian plane.
    pub fn build_space(&self) -> Result<TreeSpace> {
        match self.kernel.name.as_str() {
            "bessel" => {
                let (lo, hi) = match &self.domain.window {
                    Some(w) => parse_window(w)?,
                    None => (0, 16),
                };
                TreeSpace::half_line(lo, hi)
            }
            "ginibre" => {
                let w = self.domain.half_width.unwrap_or(4);
                TreeSpace::gaussian_square(w)
            }
            _ => {
                let (lo, hi) = match &self.domain.window {
                    Some(w) => parse_window(w)?,
                    None => (-8, 8),
                };
                TreeSpace::line(lo, hi)
            }
        }
    }

    pub fn build_kernel(&self, space: &TreeSpace) -> Result<ContinuousKernel> {
        match self.kernel.name.as_str() {
            "sine" => Ok(ContinuousKernel::Sine),
            "airy" => Ok(ContinuousKernel::Airy),
            "bessel" => ContinuousKernel::bessel(self.kernel.alpha.unwrap_or(1.0)),
            "ginibre" => Ok(ContinuousKernel::Ginibre),
            "finite-rank" => {
                let level = self
                    .kernel
                    .element_level
                    .unwrap_or(self.discretization.level);
                let elements = self
                    .kernel
                    .elements
                    .as_ref()
                    .ok_or_else(|| Error::Config("finite-rank needs kernel.elements".into()))?
                    .iter()
                    .map(|s| parse_index(s, level))
                    .collect::<Result<Vec<_>>>()?;
                ContinuousKernel::finite_rank(space, &elements, level)
            }
            other => Err(Error::Config(format!("unknown kernel {other:?}"))),
        }
    }

    pub fn projection_config(&self) -> ProjectionConfig {
        ProjectionConfig {
            quad_order: self.discretization.quad_order,
            ..ProjectionConfig::new(self.discretization.level, self.discretization.rank_max)
        }
    }

    /// The config as embedded in artifacts: execution-only knobs that do
    /// not affect content (thread count) are normalized so reruns under
    /// different parallelism stay byte-identical.
    pub fn content_echo(&self) -> RunConfig {
        let mut echo = self.clone();
        echo.run.threads = 0;
        echo
    }
}

/// Parses "a..b" with integer bounds.
pub fn parse_window(text: &str) -> Result<(i64, i64)> {
    let parts: Vec<&str> = text.split("..").collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!(
            "window {text:?} is not of the form a..b"
        )));
    }
    let lo = parts[0]
        .trim()
        .parse::<i64>()
        .map_err(|_| Error::Config(format!("window bound {:?} is not an integer", parts[0])))?;
    let hi = parts[1]
        .trim()
        .parse::<i64>()
        .map_err(|_| Error::Config(format!("window bound {:?} is not an integer", parts[1])))?;
    Ok((lo, hi))
}

/// Parses a tree index written as `root` or `root.bits` (`a;b` roots in
/// two dimensions), interpreted at the given level.
pub fn parse_index(text: &str, level: u8) -> Result<TreeIndex> {
    let (root_text, bits_text) = match text.split_once('.') {
        Some((r, b)) => (r, b),
        None => (text, ""),
    };
    let root = if let Some((a, b)) = root_text.split_once(';') {
        Root::Two(
            a.trim().parse::<i64>().map_err(|_| bad_index(text))?,
            b.trim().parse::<i64>().map_err(|_| bad_index(text))?,
        )
    } else {
        Root::One(
            root_text
                .trim()
                .parse::<i64>()
                .map_err(|_| bad_index(text))?,
        )
    };
    let path = BitPath::parse(bits_text.trim())?;
    TreeIndex::new(root, path, level)
}

fn bad_index(text: &str) -> Error {
    Error::Config(format!("bad index {text:?}; expected root[.bits]"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_validates() {
        let cfg = RunConfig::from_toml(
            r#"
            version = 1
            [kernel]
            name = "bessel"
            alpha = 1.5
            [domain]
            window = "0..4"
            [discretization]
            level = 3
            rank_max = 6
            quad_order = 16
            [run]
            seed = 9
            samples = 100
            threads = 2
            [output]
            dir = "artifacts"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.kernel.alpha, Some(1.5));
        let sp = cfg.build_space().unwrap();
        assert_eq!(sp.window().unit_cell_count(), 4);
        let k = cfg.build_kernel(&sp).unwrap();
        assert_eq!(k.name(), "bessel(alpha=1.5)");
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml("[kernel]\nname = \"sine\"\nbogus = 3").is_err());
        assert!(
            RunConfig::from_toml("[discretization]\nlevel = 0\nrank_max = 2\nquad_order = 16")
                .is_err()
        );
        assert!(RunConfig::from_toml("[kernel]\nname = \"unknown\"").is_err());
        assert!(RunConfig::from_toml("[run]\nseed = 1\nsamples = 0\nthreads = 0").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.kernel.name = "ginibre".into();
        cfg.domain.half_width = Some(2);
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn finite_rank_kernel_from_config() {
        let cfg = RunConfig::from_toml(
            r#"
            [kernel]
            name = "finite-rank"
            elements = ["0", "0.0"]
            element_level = 1
            [domain]
            window = "0..1"
            [discretization]
            level = 1
            rank_max = 3
            quad_order = 16
            "#,
        )
        .unwrap();
        let sp = cfg.build_space().unwrap();
        let k = cfg.build_kernel(&sp).unwrap();
        assert_eq!(k.name(), "finite-rank(n=2)");
    }

    #[test]
    fn window_parsing() {
        assert_eq!(parse_window("-2..2").unwrap(), (-2, 2));
        assert_eq!(parse_window(" 0 .. 4 ").unwrap(), (0, 4));
        assert!(parse_window("2").is_err());
        assert!(parse_window("a..b").is_err());
    }
}
