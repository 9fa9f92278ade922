use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clockspin::cavity::{cavity_map, cooperativity, strong_coupling, strong_coupling_boundary, write_kappa_csv};
use clockspin::fitlab::{fit_cavity_width, fit_lineshape, FitResult, Trace};
use clockspin::hamiltonian::{find_anticrossings, sweep, HamiltonianBuilder, LevelDiagram, PairSelector};
use clockspin::spectro::{
    dipolar_bias_samples, energy_broadening_bound, enumerate_transitions, histogram, homogeneous_width,
    normalize_map, DriveMatrix, Transition, TransmissionMap, TransmissionModel,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{Format, RunConfig};
use crate::error::CliError;

/// Collects output files under one directory.
pub struct Output {
    dir: PathBuf,
    format: Format,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: &Path, format: Format) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
            written: Vec::new(),
        })
    }

    pub fn format(&self) -> Format {
        self.format
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn into_written(self) -> Vec<PathBuf> {
        self.written
    }

    fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        self.write_with(name, |w| Ok(w.write_all(body.as_bytes())?))
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(clockspin::Error::from)?;
            Ok(writeln!(w)?)
        })
    }

    /// `stem.csv` plus `stem_header.json`, or a single `stem.json`.
    pub fn map(&mut self, stem: &str, map: &TransmissionMap) -> Result<(), CliError> {
        match self.format {
            Format::Csv => {
                self.write_with(&format!("{stem}.csv"), |w| Ok(map.write_csv(w)?))?;
                self.write_with(&format!("{stem}_header.json"), |w| {
                    map.write_header_json(&mut *w)?;
                    Ok(writeln!(w)?)
                })
            }
            Format::Json => {
                let n = map.freqs_ghz.len();
                let rows = |f: fn(&clockspin::Complex64) -> f64| -> Vec<Vec<f64>> {
                    map.values().chunks(n).map(|r| r.iter().map(f).collect()).collect()
                };
                let mut header = Vec::new();
                map.write_header_json(&mut header)?;
                let header: serde_json::Value =
                    serde_json::from_slice(&header).map_err(clockspin::Error::from)?;
                self.json(
                    &format!("{stem}.json"),
                    &json!({
                        "header": header,
                        "field_T": map.fields_t,
                        "freq_GHz": map.freqs_ghz,
                        "re_t": rows(|z| z.re),
                        "im_t": rows(|z| z.im),
                    }),
                )
            }
        }
    }
}

fn diagram(cfg: &RunConfig) -> Result<LevelDiagram, CliError> {
    Ok(sweep(&cfg.system, cfg.field.direction(), &cfg.field.grid()?)?)
}

pub fn levels(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let d = diagram(cfg)?;
    match out.format() {
        Format::Csv => out.write_with("levels.csv", |w| Ok(d.write_csv(w)?)),
        Format::Json => out.json(
            "levels.json",
            &json!({
                "field_T": d.magnitudes,
                "energies_GHz": d.points.iter().map(|p| &p.energies).collect::<Vec<_>>(),
                "jz_expect": d.points.iter().map(|p| &p.jz_expect).collect::<Vec<_>>(),
                "iz_expect": d.points.iter().map(|p| &p.iz_expect).collect::<Vec<_>>(),
            }),
        ),
    }
}

pub fn clock(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let d = diagram(cfg)?;
    let found = find_anticrossings(&d, &PairSelector::LowestPairPerNuclearLabel, &cfg.clock)?;
    out.json("clock.json", &found)
}

pub fn map(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let model = TransmissionModel::new(&cfg.system, cfg.coupling, cfg.broadening_model(true)?, cfg.spectro)?;
    let raw = model.simulate_map(
        cfg.field.direction(),
        &cfg.field.grid()?,
        &cfg.frequency.grid()?,
        Some(cfg.normalization.reference_field_t),
    )?;
    let normalized = normalize_map(&raw, cfg.normalization.delta_field_t, cfg.normalization.reference_field_t)?;
    out.map("map_raw", &raw)?;
    out.map("map", &normalized)
}

pub fn cavity(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let d = diagram(cfg)?;
    let broadening = cfg.broadening_model(false)?;
    let sim = cavity_map(&cfg.cavity, &d, &broadening, &cfg.spectro, &cfg.cavity_window.grid()?)?;
    out.map("cavity_map", &sim.map)?;
    match out.format() {
        Format::Csv => out.write_with("kappa.csv", |w| Ok(write_kappa_csv(&sim.kappa_curve, w)?))?,
        Format::Json => out.json("kappa.json", &sim.kappa_curve)?,
    }
    let c = &cfg.cavity;
    let gamma = homogeneous_width(&broadening, c.omega_r_ghz)?;
    let xs: Vec<f64> = (1..=100).map(|k| k as f64 * 0.01).collect();
    let peak = sim
        .kappa_curve
        .iter()
        .max_by(|a, b| a.kappa_eff_ghz.total_cmp(&b.kappa_eff_ghz))
        .copied();
    out.json(
        "cavity_summary.json",
        &json!({
            "omega_r_GHz": c.omega_r_ghz,
            "kappa_GHz": c.kappa_ghz,
            "quality_factor": c.quality(),
            "G_N_GHz": c.g_n(),
            "gamma_at_omega_r_GHz": gamma,
            "cooperativity": cooperativity(c, gamma),
            "strong_coupling": strong_coupling(c, gamma),
            "strong_coupling_boundary_x": strong_coupling_boundary(c, &xs, |_| gamma),
            "max_kappa_eff": peak,
        }),
    )
}

pub fn dipolar(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let dcfg = &cfg.broadening.dipolar;
    let seed = if dcfg.is_random() { cfg.require_seed()? } else { cfg.seed.unwrap_or(0) };
    let dist = dcfg.distribution(seed);
    let samples = dipolar_bias_samples(&dist, dist.histogram_samples)?;
    let hist = histogram(&samples, dcfg.histogram_bins)?;
    match out.format() {
        Format::Csv => out.write_with("dipolar_hist.csv", |w| {
            writeln!(w, "bias_T,count,density_per_T")?;
            for ((c, n), p) in hist.bin_centers.iter().zip(&hist.counts).zip(hist.density()) {
                writeln!(w, "{c},{n},{p}")?;
            }
            Ok(())
        })?,
        Format::Json => out.json("dipolar_hist.json", &hist)?,
    }
    let m_j = cfg.system.ground_projection()?.round();
    out.json(
        "dipolar_summary.json",
        &json!({
            "mode": dist.mode,
            "seed": seed,
            "samples": samples.len(),
            "mean_T": hist.mean,
            "std_T": hist.std_dev,
            "ground_m_J": m_j,
            "broadening_bound_GHz": energy_broadening_bound(cfg.system.g_j, m_j, hist.std_dev),
            "broadening_bound_nominal_GHz": energy_broadening_bound(cfg.system.g_j, m_j, dist.sigma_t),
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FitModel {
    /// t − 1 of one absorption line versus frequency (GHz).
    Lineshape,
    /// Cavity width κ̃ (GHz) versus field (T).
    CavityWidth,
}

#[derive(Debug, Clone)]
pub struct FitArgs {
    pub trace: PathBuf,
    pub model: FitModel,
    pub delta_p: Option<f64>,
    pub field_t: Option<f64>,
    pub m_i: Option<f64>,
}

struct TransitionLookup {
    builder: HamiltonianBuilder,
    drive: DriveMatrix,
    cfg: RunConfig,
}

impl TransitionLookup {
    fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let builder = HamiltonianBuilder::new(&cfg.system)?;
        let drive = DriveMatrix::new(&builder, cfg.spectro.drive);
        Ok(Self {
            builder,
            drive,
            cfg: cfg.clone(),
        })
    }

    fn at(&self, field_t: f64) -> Result<Vec<Transition>, CliError> {
        let eig = self.builder.solve_cartesian(self.cfg.field.direction().at(field_t))?;
        let s = &self.cfg.spectro;
        Ok(enumerate_transitions(&eig, &self.drive, s.temperature_k, s.max_freq_ghz, s)?)
    }

    /// Best-populated transition carrying nuclear label `m_i`.
    fn branch(&self, field_t: f64, m_i: f64) -> Result<Option<Transition>, CliError> {
        Ok(self
            .at(field_t)?
            .into_iter()
            .filter(|t| (t.nuclear_label - m_i).abs() < 0.25)
            .max_by(|a, b| a.delta_p.total_cmp(&b.delta_p)))
    }
}

fn argext(v: &[f64], max: bool) -> usize {
    let mut k = 0;
    for i in 1..v.len() {
        if (max && v[i] > v[k]) || (!max && v[i] < v[k]) {
            k = i;
        }
    }
    k
}

pub fn fit(cfg: &RunConfig, args: &FitArgs, out: &mut Output) -> Result<FitResult, CliError> {
    let file = File::open(&args.trace)
        .map_err(|e| CliError::Config(format!("cannot read trace {}: {e}", args.trace.display())))?;
    let trace = Trace::read_csv(std::io::BufReader::new(file))?;
    let result = match args.model {
        FitModel::Lineshape => {
            let delta_p = match (args.delta_p, args.field_t) {
                (Some(dp), _) => dp,
                (None, Some(h)) => {
                    // thermal ΔP of the transition closest to the observed dip
                    let dip = trace.x[argext(&trace.y, false)];
                    TransitionLookup::new(cfg)?
                        .at(h)?
                        .into_iter()
                        .min_by(|a, b| (a.omega12 - dip).abs().total_cmp(&(b.omega12 - dip).abs()))
                        .ok_or_else(|| CliError::Config(format!("no allowed transition at {h} T")))?
                        .delta_p
                }
                (None, None) => {
                    return Err(CliError::Config(
                        "lineshape fits need --delta-p or --field-t to fix the population difference".into(),
                    ))
                }
            };
            fit_lineshape(&trace, delta_p, None)?
        }
        FitModel::CavityWidth => {
            let omega_r = cfg.cavity.omega_r_ghz;
            let lookup = TransitionLookup::new(cfg)?;
            let m_i = match args.m_i {
                Some(m) => m,
                None => {
                    let h = trace.x[argext(&trace.y, true)];
                    let ts = lookup.at(h)?;
                    let dp_max = ts.iter().map(|t| t.delta_p).fold(0.0, f64::max);
                    ts.iter()
                        .filter(|t| t.delta_p >= 0.1 * dp_max)
                        .min_by(|a, b| (a.omega12 - omega_r).abs().total_cmp(&(b.omega12 - omega_r).abs()))
                        .ok_or_else(|| CliError::Config(format!("no populated transition at {h} T")))?
                        .nuclear_label
                }
            };
            let missing = std::cell::Cell::new(None);
            let omega12 = |h: f64| match lookup.branch(h, m_i) {
                Ok(Some(t)) => t.omega12,
                _ => {
                    if missing.get().is_none() {
                        missing.set(Some(h));
                    }
                    f64::NAN
                }
            };
            let r = fit_cavity_width(&trace, omega_r, &omega12, None);
            if let Some(h) = missing.get() {
                return Err(CliError::Config(format!("no m_I = {m_i} transition at {h} T")));
            }
            let mut r = r?;
            r.fixed.push(clockspin::fitlab::FitParameter {
                name: "m_I".into(),
                unit: "1".into(),
                value: m_i,
                std_error: 0.0,
            });
            r
        }
    };
    out.json("fit.json", &result)?;
    Ok(result)
}
