//! Run configuration files, figure presets and result files.
//!
//! A configuration is TOML with the sections `[physics]`, `[walk]`, `[se]`,
//! `[ensemble]` and `[output]`. Unknown keys are rejected. Layers are merged
//! key by key in the order defaults, preset, file, command line, and the
//! source of every value is kept.
//!
//! Physics may be given either as targets (`k` or `k1`/`k2`, `p_se`, `ratio`)
//! or explicitly (`omega`, `delta1`, `delta2`). The explicit form wins.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::metrics;
use crate::engine::{
    run_ensemble, run_ensemble_with_threads, CoinSpec, EnsembleResult, EventTiming, RunConfig, Simulation,
    DEFAULT_SUBSTEPS, DEFAULT_TRAJECTORIES,
};
use crate::params::{invert_for_biased_targets, invert_for_targets, DerivedParams, PhysicsParams, RESONANT_TAU};
use crate::se::CollapseMode;
use crate::walk::{LadderSpacing, MomentumDistribution};
use crate::{Error, Result};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "KICKWALK_OUT";
/// Output root used when neither the command line, the file nor the
/// environment name one.
pub const DEFAULT_OUTPUT_ROOT: &str = "results";

pub const DEFAULT_K: f64 = 1.45;
pub const DEFAULT_STEPS: usize = 15;
pub const DEFAULT_TAU_P: f64 = 380e-9;
pub const DEFAULT_TAU_SE: f64 = 26e-9;

pub const DISTRIBUTION_FILE: &str = "distribution.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

pub const DISTRIBUTION_HEADER: &str = "step,n,p1,p2,p_total";
pub const METRICS_HEADER: &str =
    "step,mean,variance,window,central_mass,outer_mass,peak_contrast,gaussian_l1,peak_count";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_se: Option<f64>,
    /// γ₁:γ₂ split.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kick_period: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_center: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coin_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coin_chi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing: Option<LadderSpacing>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamical_phase: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collapse: Option<CollapseMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<EventTiming>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finite_pulse_kinetics: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_fwhm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// One configuration layer as written in a file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub physics: PhysicsSection,
    #[serde(default)]
    pub walk: WalkSection,
    #[serde(default)]
    pub se: SeSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Run record written into manifests; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<toml::Table>,
}

/// Where a configuration value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Default,
    Preset,
    File,
    Cli,
}

/// Command-line overrides.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trajectories: Option<usize>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Overrides {
    fn layer(&self) -> ConfigFile {
        let mut c = ConfigFile::default();
        c.ensemble.seed = self.seed;
        c.ensemble.trajectories = self.trajectories;
        c.ensemble.threads = self.threads;
        c.output.dir = self.out.clone();
        c
    }
}

/// A fully resolved run.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedConfig {
    pub run: RunConfig,
    pub threads: Option<usize>,
    /// Directory name of the run below the output root.
    pub label: String,
    pub output_root: PathBuf,
    /// Preset the run was expanded from.
    pub preset: Option<String>,
    /// Source of every key, as `section.key`. Missing keys are defaults.
    pub provenance: BTreeMap<String, Source>,
    pub warnings: Vec<String>,
}

impl ResolvedConfig {
    pub fn source_of(&self, key: &str) -> Source {
        self.provenance.get(key).copied().unwrap_or(Source::Default)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_root.join(&self.label)
    }
}

fn config_error(path: impl Into<PathBuf>, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

/// Parses one layer. Type errors and unknown keys carry line context.
pub fn parse_layer(text: &str, origin: &Path) -> Result<ConfigFile> {
    toml::from_str(text).map_err(|e| config_error(origin, e.to_string()))
}

pub fn read_layer(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
    parse_layer(&text, path)
}

fn as_table(layer: &ConfigFile) -> toml::Table {
    let mut layer = layer.clone();
    layer.manifest = None;
    toml::Table::try_from(layer).expect("config layers serialize to tables")
}

/// Merges layers key by key; later layers win.
fn merge(layers: &[(Source, &ConfigFile)], origin: &Path) -> Result<(ConfigFile, BTreeMap<String, Source>)> {
    let mut merged = toml::Table::new();
    let mut provenance = BTreeMap::new();
    for (source, layer) in layers {
        for (section, value) in as_table(layer) {
            let toml::Value::Table(entries) = value else { continue };
            let dst = merged
                .entry(section.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .expect("sections are tables");
            for (key, v) in entries {
                provenance.insert(format!("{section}.{key}"), *source);
                dst.insert(key, v);
            }
        }
    }
    let file: ConfigFile = merged.try_into().map_err(|e: toml::de::Error| config_error(origin, e.to_string()))?;
    Ok((file, provenance))
}

fn resolve_physics(p: &PhysicsSection, origin: &Path, warnings: &mut Vec<String>) -> Result<PhysicsParams> {
    let tau_p = p.tau_p.unwrap_or(DEFAULT_TAU_P);
    let tau_se = p.tau_se.unwrap_or(DEFAULT_TAU_SE);
    let explicit = p.omega.is_some() || p.delta1.is_some() || p.delta2.is_some();
    let mut params = if explicit {
        let (Some(omega), Some(delta1)) = (p.omega, p.delta1) else {
            return Err(config_error(origin, "explicit physics needs both omega and delta1"));
        };
        if p.k.is_some() || p.k1.is_some() || p.k2.is_some() || p.p_se.is_some() {
            warnings.push("explicit omega/delta given; k and p_se targets are ignored".into());
        }
        PhysicsParams {
            omega,
            delta1,
            delta2: p.delta2.unwrap_or(delta1),
            tau_p,
            tau: RESONANT_TAU,
            tau_se,
            kick_period: None,
            branching: p.ratio,
        }
    } else {
        let p_se = p.p_se.unwrap_or(0.0);
        match (p.k, p.k1, p.k2) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(config_error(origin, "give either k or k1/k2, not both"));
            }
            (_, Some(k1), Some(k2)) => invert_for_biased_targets([k1, k2], p_se, tau_p, tau_se, p.ratio)?,
            (_, Some(_), None) | (_, None, Some(_)) => {
                return Err(config_error(origin, "k1 and k2 must be given together"));
            }
            (k, None, None) => {
                invert_for_targets(k.unwrap_or(DEFAULT_K), p_se, tau_p, tau_se, p.ratio.unwrap_or([1.0, 1.0]))?
            }
        }
    };
    params.tau = p.tau.unwrap_or(RESONANT_TAU);
    params.kick_period = p.kick_period;
    Ok(params)
}

fn resolve(
    file: &ConfigFile,
    provenance: BTreeMap<String, Source>,
    origin: &Path,
    label: String,
    preset: Option<String>,
) -> Result<ResolvedConfig> {
    let mut warnings = Vec::new();
    let physics = resolve_physics(&file.physics, origin, &mut warnings)?;
    let w = &file.walk;
    let coin_default = CoinSpec::default();
    let mut run = RunConfig::new(physics, w.steps.unwrap_or(DEFAULT_STEPS));
    run.n_max = w.n_max;
    run.beta_center = w.beta_center.unwrap_or(0.0);
    run.coin = CoinSpec {
        alpha: w.coin_alpha.unwrap_or(coin_default.alpha),
        chi: w.coin_chi.unwrap_or(coin_default.chi),
    };
    run.spacing = w.spacing.unwrap_or_default();
    run.apply_dynamical_phase = w.dynamical_phase.unwrap_or(false);
    run.collapse = file.se.collapse.unwrap_or_default();
    run.timing = file.se.timing.unwrap_or_default();
    run.substeps = file.se.substeps.unwrap_or(DEFAULT_SUBSTEPS);
    run.finite_pulse_kinetics = file.se.finite_pulse_kinetics.unwrap_or(false);
    run.trajectories = file.ensemble.trajectories.unwrap_or(DEFAULT_TRAJECTORIES);
    run.beta_fwhm = file.ensemble.beta_fwhm.unwrap_or(0.0);
    run.seed = file.ensemble.seed.unwrap_or(0);
    run.validate().map_err(|e| config_error(origin, e.to_string()))?;
    if file.ensemble.threads == Some(0) {
        return Err(config_error(origin, "threads must be at least 1"));
    }
    let output_root = file
        .output
        .dir
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT));
    Ok(ResolvedConfig {
        run,
        threads: file.ensemble.threads,
        label,
        output_root,
        preset,
        provenance,
        warnings,
    })
}

/// Reads and resolves a single configuration file.
pub fn parse_config(path: &Path) -> Result<ResolvedConfig> {
    let mut plans = plan(None, Some(path), &Overrides::default())?;
    Ok(plans.remove(0))
}

const FIG3: [(&str, usize, f64); 4] = [("fig3a", 15, 0.037), ("fig3b", 15, 0.11), ("fig3c", 50, 0.037), ("fig3d", 50, 0.11)];
const FIG4_RATIOS: [(&str, [f64; 2]); 3] = [("50_50", [50.0, 50.0]), ("70_30", [70.0, 30.0]), ("99_1", [99.0, 1.0])];
const FIG4_P: [(&str, f64); 2] = [("p0.037", 0.037), ("p0.11", 0.11)];
const FIG5: [(&str, f64, f64); 4] = [("fig5a", 0.037, 0.025), ("fig5b", 0.037, 0.01), ("fig5c", 0.02, 0.01), ("fig5d", 0.02, 0.02)];

/// Names accepted by `--preset`.
pub fn preset_names() -> Vec<String> {
    let mut names = vec!["fig3".to_string(), "fig4".to_string(), "fig5".to_string(), "custom".to_string()];
    names.extend(FIG3.iter().map(|f| f.0.to_string()));
    names.extend(FIG4_P.iter().flat_map(|(p, _)| FIG4_RATIOS.iter().map(move |(r, _)| format!("fig4_{r}_{p}"))));
    names.extend(FIG5.iter().map(|f| f.0.to_string()));
    names
}

fn figure_layer(steps: usize, p_se: f64, ratio: Option<[f64; 2]>, beta_fwhm: f64) -> ConfigFile {
    let mut c = ConfigFile::default();
    c.physics.k = Some(DEFAULT_K);
    c.physics.p_se = Some(p_se);
    c.physics.ratio = ratio;
    c.walk.steps = Some(steps);
    c.ensemble.trajectories = Some(DEFAULT_TRAJECTORIES);
    c.ensemble.beta_fwhm = Some(beta_fwhm);
    c
}

/// Expands a preset into named layers. `custom` expands to one empty layer.
pub fn preset_layers(name: &str) -> Result<Vec<(String, ConfigFile)>> {
    let fig3 = |f: &(&str, usize, f64)| (f.0.to_string(), figure_layer(f.1, f.2, None, 0.0));
    let fig5 = |f: &(&str, f64, f64)| (f.0.to_string(), figure_layer(15, f.1, None, f.2));
    let fig4 = || {
        FIG4_P.iter().flat_map(|&(pn, p)| {
            FIG4_RATIOS.iter().map(move |&(rn, r)| (format!("fig4_{rn}_{pn}"), figure_layer(15, p, Some(r), 0.0)))
        })
    };
    let layers: Vec<(String, ConfigFile)> = match name {
        "custom" => vec![("custom".into(), ConfigFile::default())],
        "fig3" => FIG3.iter().map(fig3).collect(),
        "fig4" => fig4().collect(),
        "fig5" => FIG5.iter().map(fig5).collect(),
        _ => FIG3
            .iter()
            .filter(|f| f.0 == name)
            .map(fig3)
            .chain(FIG5.iter().filter(|f| f.0 == name).map(fig5))
            .chain(fig4().filter(|(n, _)| n == name))
            .collect(),
    };
    if layers.is_empty() {
        return Err(config_error(
            format!("<preset {name}>"),
            format!("unknown preset; expected one of {}", preset_names().join(", ")),
        ));
    }
    Ok(layers)
}

/// Builds the list of runs for a preset, a file and command-line overrides.
pub fn plan(preset: Option<&str>, file: Option<&Path>, overrides: &Overrides) -> Result<Vec<ResolvedConfig>> {
    let origin = file.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(format!("<preset {}>", preset.unwrap_or("custom"))));
    let file_layer = match file {
        Some(p) => read_layer(p)?,
        None => ConfigFile::default(),
    };
    let cli = overrides.layer();
    let members = preset_layers(preset.unwrap_or("custom"))?;
    let is_sweep = members.len() > 1;
    let user_label = file_layer.output.label.clone();
    members
        .into_iter()
        .map(|(name, layer)| {
            let (merged, provenance) =
                merge(&[(Source::Preset, &layer), (Source::File, &file_layer), (Source::Cli, &cli)], &origin)?;
            let label = match (&user_label, is_sweep) {
                (Some(l), true) => format!("{l}/{name}"),
                (Some(l), false) => l.clone(),
                (None, _) => preset.map(|_| name.clone()).unwrap_or_else(|| "run".into()),
            };
            resolve(&merged, provenance, &origin, label, preset.map(str::to_string))
        })
        .collect()
}

/// Everything needed to repeat a run, written as `manifest.toml`. The file
/// is itself a valid configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub physics: PhysicsSection,
    pub walk: WalkSection,
    pub se: SeSection,
    pub ensemble: EnsembleSection,
    pub output: OutputSection,
    pub manifest: ManifestRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<String>>,
    pub elapsed_seconds: f64,
    pub total_events: usize,
    pub mean_events_per_kick: f64,
    pub derived: DerivedParams,
    pub provenance: BTreeMap<String, Source>,
}

impl RunManifest {
    pub fn new(resolved: &ResolvedConfig, result: &EnsembleResult) -> Self {
        let run = &resolved.run;
        let p = &run.physics;
        RunManifest {
            physics: PhysicsSection {
                omega: Some(p.omega),
                delta1: Some(p.delta1),
                delta2: Some(p.delta2),
                tau_p: Some(p.tau_p),
                tau_se: Some(p.tau_se),
                tau: Some(p.tau),
                kick_period: p.kick_period,
                ratio: p.branching,
                ..Default::default()
            },
            walk: WalkSection {
                steps: Some(run.steps),
                n_max: Some(result.metadata.n_max),
                beta_center: Some(run.beta_center),
                coin_alpha: Some(run.coin.alpha),
                coin_chi: Some(run.coin.chi),
                spacing: Some(run.spacing),
                dynamical_phase: Some(run.apply_dynamical_phase),
            },
            se: SeSection {
                collapse: Some(run.collapse),
                timing: Some(run.timing),
                substeps: Some(run.substeps),
                finite_pulse_kinetics: Some(run.finite_pulse_kinetics),
            },
            ensemble: EnsembleSection {
                trajectories: Some(run.trajectories),
                beta_fwhm: Some(run.beta_fwhm),
                seed: Some(run.seed),
                threads: None,
            },
            output: OutputSection { dir: None, label: Some(resolved.label.clone()) },
            manifest: ManifestRecord {
                version: result.metadata.version.clone(),
                preset: resolved.preset.clone(),
                sweep: None,
                elapsed_seconds: result.elapsed.as_secs_f64(),
                total_events: result.total_events(),
                mean_events_per_kick: result.mean_events_per_kick(),
                derived: result.metadata.derived.clone(),
                provenance: resolved.provenance.clone(),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io { path: path.into(), source })
}

pub fn format_distribution_csv(distributions: &[MomentumDistribution]) -> String {
    let mut out = String::from(DISTRIBUTION_HEADER);
    out.push('\n');
    for d in distributions {
        for (i, n) in d.n_values().enumerate() {
            let _ = writeln!(out, "{},{},{:.16e},{:.16e},{:.16e}", d.step, n, d.p1[i], d.p2[i], d.p_total[i]);
        }
    }
    out
}

pub fn format_metrics_csv(distributions: &[MomentumDistribution], k: f64) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for d in distributions {
        let m = metrics(d, k);
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            m.step,
            m.mean,
            m.variance,
            m.window,
            m.central_mass,
            m.outer_mass,
            m.peak_contrast,
            m.gaussian_l1,
            m.peaks.len()
        );
    }
    out
}

/// Paths produced by [`write_results`].
#[derive(Clone, Debug, PartialEq)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub distribution: PathBuf,
    pub metrics: PathBuf,
    pub manifest: PathBuf,
}

impl OutputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        OutputPaths {
            dir: dir.to_path_buf(),
            distribution: dir.join(DISTRIBUTION_FILE),
            metrics: dir.join(METRICS_FILE),
            manifest: dir.join(MANIFEST_FILE),
        }
    }
}

pub fn write_results(result: &EnsembleResult, manifest: &RunManifest, dir: &Path) -> Result<OutputPaths> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.into(), source })?;
    let paths = OutputPaths::in_dir(dir);
    let k = result.metadata.derived.effective_kicks();
    write_file(&paths.distribution, &format_distribution_csv(&result.distributions))?;
    write_file(&paths.metrics, &format_metrics_csv(&result.distributions, k[0].abs().max(k[1].abs())))?;
    write_file(&paths.manifest, &manifest.to_toml())?;
    Ok(paths)
}

/// Reads a `distribution.csv` back into per-step distributions.
pub fn read_distribution_csv(path: &Path) -> Result<Vec<MomentumDistribution>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
    let bad = |line: usize, msg: &str| config_error(path, format!("line {line}: {msg}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == DISTRIBUTION_HEADER => {}
        _ => return Err(bad(1, "missing header")),
    }
    let mut out: Vec<MomentumDistribution> = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(bad(i + 1, "expected 5 columns"));
        }
        let step: usize = cols[0].parse().map_err(|_| bad(i + 1, "bad step"))?;
        let n: i64 = cols[1].parse().map_err(|_| bad(i + 1, "bad n"))?;
        let mut v = [0.0; 3];
        for (dst, src) in v.iter_mut().zip(&cols[2..]) {
            *dst = src.parse().map_err(|_| bad(i + 1, "bad probability"))?;
        }
        let fresh = out.last().is_none_or(|d| d.step != step);
        if fresh {
            out.push(MomentumDistribution { step, n_min: n, p1: vec![], p2: vec![], p_total: vec![] });
        }
        let d = out.last_mut().expect("pushed above");
        if n != d.n_min + d.len() as i64 {
            return Err(bad(i + 1, "momentum classes not contiguous"));
        }
        d.p1.push(v[0]);
        d.p2.push(v[1]);
        d.p_total.push(v[2]);
    }
    Ok(out)
}

/// Outcome of one run of a sweep.
#[derive(Debug)]
pub struct RunOutcome {
    pub label: String,
    pub result: Result<(EnsembleResult, OutputPaths)>,
}

/// Runs one resolved configuration and writes its files.
pub fn execute(resolved: &ResolvedConfig, sweep: Option<Vec<String>>) -> Result<(EnsembleResult, OutputPaths)> {
    for w in &resolved.warnings {
        log::warn!("{}: {w}", resolved.label);
    }
    let sim = Simulation::new(resolved.run.clone())?;
    log::info!(
        "{}: {} trajectories, {} steps, n_max {}",
        resolved.label,
        resolved.run.trajectories,
        resolved.run.steps,
        sim.n_max()
    );
    let result = match resolved.threads {
        Some(t) => run_ensemble_with_threads(&sim, t, None)?,
        None => run_ensemble(&sim, None)?,
    };
    let mut manifest = RunManifest::new(resolved, &result);
    manifest.manifest.sweep = sweep;
    let paths = write_results(&result, &manifest, &resolved.output_dir())?;
    Ok((result, paths))
}

/// Runs every configuration in order. A failing run does not stop the rest.
pub fn sweep(runs: &[ResolvedConfig]) -> Vec<RunOutcome> {
    let labels: Vec<String> = runs.iter().map(|r| r.label.clone()).collect();
    let members = (runs.len() > 1).then_some(labels);
    runs.iter()
        .map(|r| RunOutcome { label: r.label.clone(), result: execute(r, members.clone()) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::derive;

    fn layer(text: &str) -> Result<ConfigFile> {
        parse_layer(text, Path::new("test.toml"))
    }

    fn resolve_text(text: &str) -> Result<ResolvedConfig> {
        let f = layer(text)?;
        let (merged, prov) = merge(&[(Source::File, &f)], Path::new("test.toml"))?;
        resolve(&merged, prov, Path::new("test.toml"), "run".into(), None)
    }

    #[test]
    fn empty_file_gives_defaults() {
        let r = resolve_text("").unwrap();
        assert_eq!(r.run.steps, DEFAULT_STEPS);
        assert_eq!(r.run.trajectories, DEFAULT_TRAJECTORIES);
        let d = derive(&r.run.physics).unwrap();
        assert!((d.k1 - DEFAULT_K).abs() < 1e-12);
        assert_eq!(d.p_se, 0.0);
        assert!(r.provenance.is_empty());
        assert_eq!(r.source_of("walk.steps"), Source::Default);
    }

    #[test]
    fn misspelled_key_rejected() {
        let err = layer("[walk]\nstepz = 3\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("stepz"), "{err}");
    }

    #[test]
    fn unknown_section_rejected() {
        assert!(layer("[laser]\nomega = 1.0\n").is_err());
    }

    #[test]
    fn type_error_names_line() {
        let err = layer("[physics]\nk = 1.45\n[walk]\nsteps = \"fifteen\"\n").unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
    }

    #[test]
    fn explicit_physics_wins_with_warning() {
        let r = resolve_text("[physics]\np_se = 0.11\nomega = 3e8\ndelta1 = 3e9\n").unwrap();
        assert_eq!(r.run.physics.omega, 3e8);
        assert_eq!(r.run.physics.delta2, 3e9);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn conflicting_kicks_rejected() {
        assert!(resolve_text("[physics]\nk = 1.0\nk1 = 1.0\nk2 = 1.2\n").is_err());
        assert!(resolve_text("[physics]\nk1 = 1.0\n").is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let err = resolve_text("[ensemble]\ntrajectories = 0\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = resolve_text("[physics]\np_se = 1.5\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn fig3a_preset() {
        let runs = plan(Some("fig3a"), None, &Overrides::default()).unwrap();
        assert_eq!(runs.len(), 1);
        let r = &runs[0];
        let d = derive(&r.run.physics).unwrap();
        assert!((d.k1 - 1.45).abs() < 1e-12 && (d.k2 - 1.45).abs() < 1e-12);
        assert!((d.p_se - 0.037).abs() < 1e-12);
        assert_eq!(r.run.steps, 15);
        assert_eq!(r.run.beta_fwhm, 0.0);
        assert_eq!(r.run.trajectories, 1000);
        assert_eq!(r.source_of("physics.p_se"), Source::Preset);
        assert_eq!(r.label, "fig3a");
    }

    #[test]
    fn sweep_sizes() {
        let o = Overrides::default();
        assert_eq!(plan(Some("fig3"), None, &o).unwrap().len(), 4);
        assert_eq!(plan(Some("fig4"), None, &o).unwrap().len(), 6);
        assert_eq!(plan(Some("fig5"), None, &o).unwrap().len(), 4);
        assert_eq!(plan(Some("custom"), None, &o).unwrap().len(), 1);
        assert!(plan(Some("fig9"), None, &o).is_err());
        for name in preset_names() {
            assert!(preset_layers(&name).is_ok(), "{name}");
        }
    }

    #[test]
    fn fig4_ratios() {
        let runs = plan(Some("fig4"), None, &Overrides::default()).unwrap();
        let r = runs.iter().find(|r| r.label == "fig4_99_1_p0.037").unwrap();
        let d = derive(&r.run.physics).unwrap();
        assert!((d.gamma1 / d.gamma2 - 99.0).abs() < 1e-12 * 99.0);
        assert!((d.p_se - 0.037).abs() < 1e-12);
    }

    #[test]
    fn fig5_widths() {
        let runs = plan(Some("fig5"), None, &Overrides::default()).unwrap();
        let got: Vec<(f64, f64)> =
            runs.iter().map(|r| (derive(&r.run.physics).unwrap().p_se, r.run.beta_fwhm)).collect();
        let want = [(0.037, 0.025), (0.037, 0.01), (0.02, 0.01), (0.02, 0.02)];
        for (g, w) in got.iter().zip(&want) {
            assert!((g.0 - w.0).abs() < 1e-12 && g.1 == w.1);
        }
    }

    #[test]
    fn cli_beats_file_beats_preset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "[walk]\nsteps = 3\n[ensemble]\nseed = 5\ntrajectories = 2\n").unwrap();
        let o = Overrides { seed: Some(9), ..Default::default() };
        let r = &plan(Some("fig3a"), Some(&path), &o).unwrap()[0];
        assert_eq!(r.run.steps, 3);
        assert_eq!(r.run.seed, 9);
        assert_eq!(r.run.trajectories, 2);
        assert_eq!(r.source_of("walk.steps"), Source::File);
        assert_eq!(r.source_of("ensemble.seed"), Source::Cli);
        assert_eq!(r.source_of("physics.k"), Source::Preset);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = MomentumDistribution {
            step: 2,
            n_min: -1,
            p1: vec![0.1, 1.0 / 3.0, 2e-300],
            p2: vec![0.0, std::f64::consts::PI / 10.0, 5e-17],
            p_total: vec![0.1, 1.0 / 3.0 + std::f64::consts::PI / 10.0, 2e-300 + 5e-17],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(DISTRIBUTION_FILE);
        fs::write(&path, format_distribution_csv(std::slice::from_ref(&d))).unwrap();
        assert_eq!(read_distribution_csv(&path).unwrap(), vec![d]);
    }

    #[test]
    fn manifest_reparses_to_same_run() {
        let dir = tempfile::tempdir().unwrap();
        let o = Overrides { trajectories: Some(4), out: Some(dir.path().into()), seed: Some(3), threads: None };
        let r = &plan(Some("fig3b"), None, &o).unwrap()[0];
        let (result, paths) = execute(r, None).unwrap();
        let again = parse_config(&paths.manifest).unwrap();
        let mut expected = r.run.clone();
        expected.n_max = Some(result.metadata.n_max);
        assert_eq!(again.run, expected);
    }
}
