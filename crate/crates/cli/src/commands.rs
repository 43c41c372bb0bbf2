use seqcode::closed_forms::{cc_sum_rate_gm, cnc_sum_rate_gm, jc_rate_gm};
use seqcode::discrete_rd::{self, DiscreteProblem};
use seqcode::gauss_opt::{min_sum_rate, OptProblem};
use seqcode::mc_sim::{self, SimConfig};
use seqcode::model::{build_covariance, in_region_cc, in_region_jc};
use seqcode::{DistortionTuple, SourceKind, SourceSpec, SystemKind};

use crate::config::{Config, SimScheme, SweepMode};
use crate::{CliError, Format, Output};

pub const RATES_SCHEMA: &str = "# schema: seqcode.rates v1";
pub const SWEEP_SCHEMA: &str = "# schema: seqcode.sweep v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    Numerical,
}

impl Method {
    fn as_str(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::Numerical => "numerical",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RateRow {
    pub kind: SystemKind,
    pub rate: f64,
    pub method: Method,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Regions {
    cc: Option<bool>,
    jc: Option<bool>,
}

fn flag(v: Option<bool>) -> String {
    v.map(|b| b.to_string()).unwrap_or_else(|| "na".into())
}

/// Region memberships that apply to `spec`.
fn regions(spec: &SourceSpec, d: &DistortionTuple) -> Result<Regions, CliError> {
    if !spec.is_gaussian() {
        return Ok(Regions { cc: None, jc: None });
    }
    let sigma = build_covariance(spec)?;
    let cc = match spec.first_order() {
        Some(_) => Some(in_region_cc(spec, d)?),
        None => None,
    };
    Ok(Regions { cc, jc: Some(in_region_jc(&sigma, d)?) })
}

/// Closed form where it is valid, numerical solver otherwise.
pub fn rate(cfg: &Config, spec: &SourceSpec, d: &DistortionTuple, kind: SystemKind, verbose: u8) -> Result<RateRow, CliError> {
    kind.validate(spec.frames())?;
    if let SourceKind::BinaryMarkov { crossovers } = spec.kind() {
        let pmf = discrete_rd::binary_markov_pmf(crossovers)?;
        let mut p = DiscreteProblem::hamming(pmf, d.clone())?;
        if kind != SystemKind::JC {
            p = p.for_system(kind)?;
        }
        p.options = cfg.discrete.clone();
        let r = discrete_rd::min_rate_discrete(&p)?;
        return Ok(RateRow { kind, rate: r.rate, method: Method::Numerical, converged: r.converged });
    }
    let sigma = build_covariance(spec)?;
    let closed = match kind {
        SystemKind::JC if in_region_jc(&sigma, d)? => Some(jc_rate_gm(&sigma, d)?),
        SystemKind::CC if spec.first_order().is_some() && in_region_cc(spec, d)? => Some(cc_sum_rate_gm(spec, d)?),
        SystemKind::CNC(k) => cnc_sum_rate_gm(spec, d, k).ok(),
        _ => None,
    };
    if let Some(rate) = closed {
        return Ok(RateRow { kind, rate, method: Method::ClosedForm, converged: true });
    }
    if verbose > 0 {
        eprintln!("{kind}: no closed form at D = {:?}, solving numerically", d.values());
    }
    let p = OptProblem::for_system(spec, d, kind)?.with_options(cfg.solver.clone());
    let r = min_sum_rate(&p)?;
    Ok(RateRow { kind, rate: r.rate, method: Method::Numerical, converged: r.converged })
}

/// Rows of cells rendered as CSV or as a space-aligned table.
fn render(schema: &str, header: &[String], rows: &[Vec<String>], format: Format) -> String {
    match format {
        Format::Csv => {
            let mut out = format!("{schema}\n{}\n", header.join(","));
            for r in rows {
                out.push_str(&r.join(","));
                out.push('\n');
            }
            out
        }
        Format::Text => {
            let widths: Vec<usize> = (0..header.len())
                .map(|c| rows.iter().map(|r| r[c].chars().count()).chain([header[c].chars().count()]).max().unwrap_or(0))
                .collect();
            let line = |cells: &[String]| {
                let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
                padded.join("  ").trim_end().to_string() + "\n"
            };
            let mut out = line(header);
            for r in rows {
                out.push_str(&line(r));
            }
            out
        }
    }
}

pub fn cmd_rates(cfg: &Config, kinds: Option<&str>, format: Format, out: &mut Output, verbose: u8) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let d = cfg.distortion(spec.frames())?;
    let kinds = cfg.kinds(kinds)?;
    let reg = regions(&spec, &d)?;
    let digits = if format == Format::Text { 4 } else { 9 };
    let mut rows = Vec::new();
    for kind in kinds {
        let r = rate(cfg, &spec, &d, kind, verbose)?;
        rows.push(vec![
            kind.to_string(),
            format!("{:.digits$}", r.rate),
            r.method.as_str().into(),
            r.converged.to_string(),
            flag(reg.cc),
            flag(reg.jc),
        ]);
    }
    let header: Vec<String> =
        ["kind", "rate_bits", "method", "converged", "in_region_cc", "in_region_jc"].map(String::from).into();
    out.write(&render(RATES_SCHEMA, &header, &rows, format))
}

pub fn cmd_sweep(cfg: &Config, kinds: Option<&str>, format: Format, out: &mut Output, verbose: u8) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let sweep = cfg.sweep.as_ref().ok_or_else(|| CliError::Config("missing section [sweep]".into()))?;
    if sweep.mode == SweepMode::BinaryScan {
        let p = match spec.kind() {
            SourceKind::BinaryMarkov { crossovers } if crossovers.len() == 2 => crossovers.clone(),
            _ => {
                return Err(CliError::Config(
                    "[sweep] mode = \"binary_scan\" needs a three-frame binary_markov source".into(),
                ))
            }
        };
        let grid = if sweep.points == 0 {
            Vec::new()
        } else {
            discrete_rd::uniform_grid(3, sweep.lo, sweep.hi, sweep.points)?
        };
        if verbose > 0 {
            eprintln!("scanning {} grid points", grid.len());
        }
        let rows = discrete_rd::equivalence_scan(p[0], p[1], &grid)?;
        return out.write(&discrete_rd::scan_csv(&rows));
    }

    let t = spec.frames();
    let direction = sweep.direction.clone().unwrap_or_else(|| vec![1.0; t]);
    if direction.len() != t {
        return Err(CliError::Config(format!(
            "[sweep]: key `direction` has {} entries but the source has {t} frames",
            direction.len()
        )));
    }
    let kinds = cfg.kinds(kinds)?;
    let others: Vec<SystemKind> = kinds.iter().copied().filter(|k| *k != SystemKind::JC).collect();
    let mut header: Vec<String> = (1..=t).map(|j| format!("D{j}")).collect();
    header.extend(kinds.iter().map(|k| format!("R_{k}_bits")));
    header.extend(kinds.iter().map(|k| format!("method_{k}")));
    header.extend(others.iter().map(|k| format!("gap_{k}_bits")));
    header.extend(["in_region_cc".to_string(), "in_region_jc".to_string()]);

    let mut rows = Vec::new();
    for &s in &sweep.t {
        let d = DistortionTuple::new(direction.iter().map(|v| v * s).collect())
            .map_err(|e| CliError::Config(format!("[sweep]: {e}")))?;
        let reg = regions(&spec, &d)?;
        let results: Vec<RateRow> =
            kinds.iter().map(|k| rate(cfg, &spec, &d, *k, verbose)).collect::<Result<_, _>>()?;
        let jc = match results.iter().find(|r| r.kind == SystemKind::JC) {
            Some(r) => r.rate,
            None if others.is_empty() => 0.0,
            None => rate(cfg, &spec, &d, SystemKind::JC, verbose)?.rate,
        };
        let mut row: Vec<String> = d.values().iter().map(|v| format!("{v}")).collect();
        row.extend(results.iter().map(|r| format!("{:.9}", r.rate)));
        row.extend(results.iter().map(|r| r.method.as_str().to_string()));
        row.extend(results.iter().filter(|r| r.kind != SystemKind::JC).map(|r| format!("{:.9}", r.rate - jc)));
        row.extend([flag(reg.cc), flag(reg.jc)]);
        rows.push(row);
    }
    out.write(&render(SWEEP_SCHEMA, &header, &rows, format))
}

pub fn cmd_simulate(cfg: &Config, seed: Option<u64>, format: Format, out: &mut Output) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let d = cfg.distortion(spec.frames())?;
    let sim = cfg.sim.as_ref().ok_or_else(|| CliError::Config("missing section [sim]".into()))?;
    if !spec.is_gaussian() {
        return Err(CliError::Config("[sim] needs a Gaussian source".into()));
    }
    let seed = seed.unwrap_or(sim.seed);
    let report = match sim.scheme {
        SimScheme::Dpcm => mc_sim::simulate_dpcm(
            &SimConfig::new(spec, d, sim.blocklength, seed)
                .with_backend(sim.backend)
                .with_replications(sim.replications),
        )?,
        SimScheme::JcTestChannel => mc_sim::simulate_jc_testchannel_replicated(
            &build_covariance(&spec)?,
            &d,
            sim.blocklength,
            seed,
            sim.replications,
        )?,
    };
    match format {
        Format::Csv => out.write(&report.to_csv()),
        Format::Text => out.write(&(report.to_json() + "\n")),
    }
}
