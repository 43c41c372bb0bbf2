//! Run configuration: a TOML document with sections `[source]`,
//! `[distortion]`, `[system]`, `[solver]`, `[discrete]`, `[sweep]`, `[sim]`
//! and `[verify]`. Unknown keys are rejected.

use std::path::Path;

use serde::Deserialize;

use seqcode::discrete_rd::DiscreteOptions;
use seqcode::gauss_opt::OptOptions;
use seqcode::mc_sim::Backend;
use seqcode::{DistortionTuple, SourceSpec, SystemKind};

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub source: Option<SourceSection>,
    pub distortion: Option<DistortionSection>,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub solver: OptOptions,
    #[serde(default)]
    pub discrete: DiscreteOptions,
    pub sweep: Option<SweepSection>,
    pub sim: Option<SimSection>,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    GaussMarkov,
    Autoregressive,
    BinaryMarkov,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub kind: Family,
    pub frames: Option<usize>,
    /// Shorthand for unit variances and a common neighbour correlation.
    pub rho: Option<f64>,
    pub variances: Option<Vec<f64>>,
    pub correlations: Option<Vec<f64>>,
    pub coefficients: Option<Vec<f64>>,
    pub innovation_variance: Option<f64>,
    pub crossovers: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionSection {
    pub values: Option<Vec<f64>>,
    /// Same distortion on every frame.
    pub uniform: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(default)]
    pub kinds: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    #[default]
    Ray,
    BinaryScan,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub mode: SweepMode,
    /// Ray mode: grid points are `t * direction`.
    pub direction: Option<Vec<f64>>,
    #[serde(default)]
    pub t: Vec<f64>,
    /// Binary scan: `points` values per axis on `[lo, hi]`.
    #[serde(default)]
    pub lo: f64,
    #[serde(default = "default_hi")]
    pub hi: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_hi() -> f64 {
    0.1
}

fn default_points() -> usize {
    5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimScheme {
    #[default]
    Dpcm,
    JcTestChannel,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default)]
    pub scheme: SimScheme,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    pub blocklength: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
}

fn default_backend() -> Backend {
    Backend::IdealTestChannel
}

fn default_replications() -> usize {
    1
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default)]
    pub checks: Vec<String>,
    /// Replaces the reference C–C sum-rate of the closed-form check.
    pub cc_reference_bits: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))
    }

    pub fn source(&self) -> Result<&SourceSection, CliError> {
        self.source.as_ref().ok_or_else(|| CliError::Config("missing section [source]".into()))
    }

    pub fn spec(&self) -> Result<SourceSpec, CliError> {
        let s = self.source()?;
        let bad = |e: seqcode::Error| CliError::Config(format!("[source]: {e}"));
        let need = |key: &str| CliError::Config(format!("[source]: missing key `{key}` for kind {:?}", s.kind));
        match s.kind {
            Family::GaussMarkov => match (&s.variances, &s.correlations, s.rho) {
                (Some(v), Some(c), None) => SourceSpec::gauss_markov(v.clone(), c.clone()).map_err(bad),
                (None, None, Some(rho)) => {
                    SourceSpec::uniform_gauss_markov(s.frames.ok_or_else(|| need("frames"))?, rho).map_err(bad)
                }
                (_, _, Some(_)) => Err(CliError::Config(
                    "[source]: key `rho` cannot be combined with `variances`/`correlations`".into(),
                )),
                (None, _, None) => Err(need("variances")),
                (_, None, None) => Err(need("correlations")),
            },
            Family::Autoregressive => SourceSpec::autoregressive(
                s.frames.ok_or_else(|| need("frames"))?,
                s.coefficients.clone().ok_or_else(|| need("coefficients"))?,
                s.innovation_variance.ok_or_else(|| need("innovation_variance"))?,
            )
            .map_err(bad),
            Family::BinaryMarkov => {
                SourceSpec::binary_markov(s.crossovers.clone().ok_or_else(|| need("crossovers"))?).map_err(bad)
            }
        }
    }

    pub fn distortion(&self, frames: usize) -> Result<DistortionTuple, CliError> {
        let d = self.distortion.as_ref().ok_or_else(|| CliError::Config("missing section [distortion]".into()))?;
        let bad = |e: seqcode::Error| CliError::Config(format!("[distortion]: {e}"));
        let tuple = match (&d.values, d.uniform) {
            (Some(v), None) => DistortionTuple::new(v.clone()).map_err(bad)?,
            (None, Some(u)) => DistortionTuple::uniform(frames, u).map_err(bad)?,
            _ => return Err(CliError::Config("[distortion]: give exactly one of `values` or `uniform`".into())),
        };
        if tuple.len() != frames {
            return Err(CliError::Config(format!(
                "[distortion]: key `values` has {} entries but the source has {frames} frames",
                tuple.len()
            )));
        }
        Ok(tuple)
    }

    pub fn kinds(&self, flag: Option<&str>) -> Result<Vec<SystemKind>, CliError> {
        let parse = |s: &str| {
            s.trim().parse::<SystemKind>().map_err(|e| CliError::Config(format!("[system] kinds: {e}")))
        };
        match flag {
            Some(list) => list.split(',').filter(|s| !s.trim().is_empty()).map(parse).collect(),
            None if self.system.kinds.is_empty() => Ok(vec![SystemKind::JC]),
            None => self.system.kinds.iter().map(|s| parse(s)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let c = Config::parse(
            r#"
            # example
            [source]
            kind = "gauss_markov"
            frames = 3
            rho = 0.9
            [distortion]
            uniform = 0.05
            [system]
            kinds = ["CC", "cnc1", "JC"]
            [solver]
            starts = 3
            [sim]
            blocklength = 1000
            backend = "uniform_scalar_quantizer"
            "#,
        )
        .unwrap();
        let spec = c.spec().unwrap();
        assert_eq!(spec.frames(), 3);
        assert_eq!(c.distortion(3).unwrap().values(), &[0.05; 3]);
        assert_eq!(c.kinds(None).unwrap(), vec![SystemKind::CC, SystemKind::CNC(1), SystemKind::JC]);
        assert_eq!(c.kinds(Some("jc,ncnc1_1")).unwrap(), vec![SystemKind::JC, SystemKind::NCNC(1, 1)]);
        assert_eq!(c.solver.starts, 3);
        assert_eq!(c.sim.unwrap().backend, Backend::UniformScalarQuantizer);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = Config::parse("[source]\nkind = \"gauss_markov\"\nrhoo = 0.9\n").unwrap_err();
        assert!(err.to_string().contains("rhoo"), "{err}");
        let err = Config::parse("[solver]\nstart = 2\n").unwrap_err();
        assert!(err.to_string().contains("start"), "{err}");
    }

    #[test]
    fn missing_keys_are_named() {
        let c = Config::parse("[source]\nkind = \"autoregressive\"\nframes = 4\n").unwrap();
        assert!(c.spec().unwrap_err().to_string().contains("coefficients"));
        let c = Config::parse("[source]\nkind = \"binary_markov\"\ncrossovers = [0.1, 0.1]\n[distortion]\nvalues = [0.1]\n")
            .unwrap();
        assert!(c.distortion(3).unwrap_err().to_string().contains("values"));
    }
}
