//! End-to-end run: saliency, density, sites, tiles, panels, output.
//!
//! Saliency maps enter the density step in their 16-bit quantized form, the
//! same values a `saliency` or `fixmap` export stores. Resuming a run from
//! exported intermediates therefore reproduces the output exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compose::{compose_panels, PanelLayout, PanelSource};
use crate::density::{normalize_density, sample_sites, SiteSet};
use crate::digest::{gray_map_digest, image_digest, sha256_hex};
use crate::error::Error;
use crate::human::{default_sigma, fixations_to_map, parse_fixation_log, Stimulus};
use crate::machine::{input_gradient_saliency, load_saliency_map, sobel_saliency, GradientMode, ToyClassifier};
use crate::raster::{encode_png, load_image, GrayMap, Image};
use crate::tessellation::{render_tiles, tile_colors, voronoi_assign, LabelGrid, RenderOptions};

pub const DEFAULT_SITES: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Config,
    Load,
    MachineSaliency,
    HumanSaliency,
    Normalize,
    Sample,
    Assign,
    Color,
    Render,
    Compose,
    Save,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::MachineSaliency => "machine-saliency",
            Stage::HumanSaliency => "human-saliency",
            Stage::Normalize => "normalize",
            Stage::Sample => "sample",
            Stage::Assign => "assign",
            Stage::Color => "color",
            Stage::Render => "render",
            Stage::Compose => "compose",
            Stage::Save => "save",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T> AtStage<T> for Result<T, Error> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|source| PipelineError { stage, source })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MachineMethod {
    #[default]
    InputGrad,
    Sobel,
    File,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MachineSpec {
    pub method: MachineMethod,
    pub mode: GradientMode,
    pub model_seed: u64,
    pub saliency_file: Option<PathBuf>,
}

/// Fixation CSV plus kernel width, or a precomputed map. A map file wins when
/// both are given.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HumanSpec {
    pub fixations: Option<PathBuf>,
    /// Defaults to `max(width, height) / 30`.
    pub sigma: Option<f64>,
    pub saliency_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub machine: MachineSpec,
    pub human: HumanSpec,
    pub sites: usize,
    pub seed: u64,
    pub floor: f64,
    pub render: RenderOptions,
    pub layout: PanelLayout,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            output: PathBuf::new(),
            machine: MachineSpec::default(),
            human: HumanSpec::default(),
            sites: DEFAULT_SITES,
            seed: 0,
            floor: 0.0,
            render: RenderOptions::default(),
            layout: PanelLayout::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: e.line() as u64,
            reason: e.to_string(),
        })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks that do not need the input image.
    pub fn validate(&self) -> Result<(), Error> {
        let invalid = |m: String| Err(Error::Invalid(m));
        if self.input.as_os_str().is_empty() {
            return invalid("no input image given".into());
        }
        if self.output.as_os_str().is_empty() {
            return invalid("no output path given".into());
        }
        if self.sites == 0 {
            return invalid("sites must be at least 1".into());
        }
        if !(self.floor >= 0.0 && self.floor.is_finite()) {
            return invalid(format!("floor must be finite and >= 0, got {}", self.floor));
        }
        if self.layout.panels.is_empty() {
            return invalid("layout needs at least one panel".into());
        }
        if let Some(s) = self.human.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return invalid(format!("sigma must be positive, got {s}"));
            }
        }
        if self.layout.panels.contains(&PanelSource::Machine)
            && self.machine.method == MachineMethod::File
            && self.machine.saliency_file.is_none()
        {
            return invalid("machine method `file` needs a saliency file".into());
        }
        if self.layout.panels.contains(&PanelSource::Human)
            && self.human.fixations.is_none()
            && self.human.saliency_file.is_none()
        {
            return invalid("human panel needs a fixation CSV or a saliency file".into());
        }
        Ok(())
    }
}

pub fn machine_saliency(spec: &MachineSpec, image: &Image) -> Result<GrayMap, Error> {
    match spec.method {
        MachineMethod::InputGrad => input_gradient_saliency(&ToyClassifier::new(spec.model_seed), image, spec.mode),
        MachineMethod::Sobel => sobel_saliency(image),
        MachineMethod::File => {
            let path = spec
                .saliency_file
                .as_ref()
                .ok_or_else(|| Error::Invalid("machine method `file` needs a saliency file".into()))?;
            load_saliency_map(path, image.dims())
        }
    }
}

pub fn human_saliency(spec: &HumanSpec, image: &Image, stimulus_id: &str) -> Result<GrayMap, Error> {
    if let Some(path) = &spec.saliency_file {
        return load_saliency_map(path, image.dims());
    }
    let path = spec
        .fixations
        .as_ref()
        .ok_or_else(|| Error::Invalid("no fixation CSV or saliency file for the human panel".into()))?;
    let stimulus = Stimulus::new(stimulus_id, image.width(), image.height())?;
    let set = parse_fixation_log(path, stimulus)?;
    let sigma = spec
        .sigma
        .unwrap_or_else(|| default_sigma(image.width(), image.height()));
    fixations_to_map(&set, sigma)
}

/// Digests and timings of one tessellated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRecord {
    pub source: String,
    pub digests: BTreeMap<String, String>,
    pub timings_ms: BTreeMap<String, f64>,
}

pub struct Mosaic {
    pub sites: SiteSet,
    pub labels: LabelGrid,
    pub image: Image,
}

/// Density, sampling, assignment, coloring, and rendering for one saliency map.
pub fn tessellate(
    image: &Image,
    saliency: &GrayMap,
    sites: usize,
    seed: u64,
    floor: f64,
    render: &RenderOptions,
    record: &mut PanelRecord,
) -> Result<Mosaic, PipelineError> {
    let mut timed = |name: &str, t: Instant| {
        record.timings_ms.insert(name.into(), t.elapsed().as_secs_f64() * 1e3);
    };
    if saliency.dims() != image.dims() {
        return Err(Error::DimensionMismatch {
            expected: image.dims(),
            actual: saliency.dims(),
        })
        .at(Stage::Normalize);
    }
    let t = Instant::now();
    let density = normalize_density(saliency, floor).at(Stage::Normalize)?;
    timed("normalize", t);
    let t = Instant::now();
    let site_set = sample_sites(&density, sites, seed);
    timed("sample", t);
    let mosaic = tessellate_sites(image, site_set, render, record)?;
    record.digests.insert("density".into(), density.digest());
    Ok(mosaic)
}

/// Assignment, coloring, and rendering for an existing site set.
pub fn tessellate_sites(
    image: &Image,
    sites: SiteSet,
    render: &RenderOptions,
    record: &mut PanelRecord,
) -> Result<Mosaic, PipelineError> {
    render.validate(image.width(), image.height()).at(Stage::Render)?;
    let t = Instant::now();
    let labels = voronoi_assign(&sites, image.width(), image.height()).at(Stage::Assign)?;
    record
        .timings_ms
        .insert("assign".into(), t.elapsed().as_secs_f64() * 1e3);
    let t = Instant::now();
    let palette = tile_colors(image, &labels, sites.len(), render.unassigned_color).at(Stage::Color)?;
    record
        .timings_ms
        .insert("color".into(), t.elapsed().as_secs_f64() * 1e3);
    let t = Instant::now();
    let rendered = render_tiles(&labels, &palette, render).at(Stage::Render)?;
    record
        .timings_ms
        .insert("render".into(), t.elapsed().as_secs_f64() * 1e3);
    record.digests.insert("sites".into(), sites.digest());
    record.digests.insert("labels".into(), labels.digest());
    record.digests.insert("panel".into(), image_digest(&rendered));
    Ok(Mosaic {
        sites,
        labels,
        image: rendered,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: PipelineConfig,
    pub seeds: BTreeMap<String, u64>,
    pub input_digest: String,
    pub panels: Vec<PanelRecord>,
    pub output_digest: String,
    pub output_size: (usize, usize),
    pub timings_ms: BTreeMap<String, f64>,
}

impl Manifest {
    /// Everything except timings, which vary between runs.
    pub fn digests(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        out.insert("input".to_string(), self.input_digest.clone());
        out.insert("output".to_string(), self.output_digest.clone());
        for (i, p) in self.panels.iter().enumerate() {
            for (k, v) in &p.digests {
                out.insert(format!("panel{i}.{}.{k}", p.source), v.clone());
            }
        }
        out
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Output of [`render_pipeline`]: the composed image, encoded, plus its manifest.
pub struct RunResult {
    pub image: Image,
    pub png: Vec<u8>,
    pub manifest: Manifest,
}

fn stimulus_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Runs every stage in memory without touching the output path.
pub fn render_pipeline(config: &PipelineConfig) -> Result<RunResult, PipelineError> {
    let started = Instant::now();
    config.validate().at(Stage::Config)?;
    let input = load_image(&config.input).at(Stage::Load)?;
    config
        .render
        .validate(input.width(), input.height())
        .at(Stage::Config)?;
    let id = stimulus_id(&config.input);

    let panels: Vec<(Image, Option<PanelRecord>)> = config
        .layout
        .panels
        .par_iter()
        .map(|source| -> Result<_, PipelineError> {
            let t = Instant::now();
            let (stage, saliency) = match source {
                PanelSource::Original => return Ok((input.clone(), None)),
                PanelSource::File(path) => return Ok((load_image(path).at(Stage::Compose)?, None)),
                PanelSource::Machine => (Stage::MachineSaliency, machine_saliency(&config.machine, &input)),
                PanelSource::Human => (Stage::HumanSaliency, human_saliency(&config.human, &input, &id)),
            };
            let saliency = saliency.at(stage)?.quantized_u16();
            let mut record = PanelRecord {
                source: source.to_string(),
                digests: BTreeMap::new(),
                timings_ms: BTreeMap::new(),
            };
            record
                .timings_ms
                .insert("saliency".into(), t.elapsed().as_secs_f64() * 1e3);
            record.digests.insert("saliency".into(), gray_map_digest(&saliency));
            let mosaic = tessellate(
                &input,
                &saliency,
                config.sites,
                config.seed,
                config.floor,
                &config.render,
                &mut record,
            )?;
            Ok((mosaic.image, Some(record)))
        })
        .collect::<Result<_, _>>()?;

    let (images, records): (Vec<Image>, Vec<Option<PanelRecord>>) = panels.into_iter().unzip();
    let t = Instant::now();
    let composed = compose_panels(&images, &config.layout).at(Stage::Compose)?;
    let png = encode_png(&composed);
    let compose_ms = t.elapsed().as_secs_f64() * 1e3;

    let mut seeds = BTreeMap::new();
    seeds.insert("sample".to_string(), config.seed);
    if config.layout.panels.contains(&PanelSource::Machine) && config.machine.method == MachineMethod::InputGrad {
        seeds.insert("model".to_string(), config.machine.model_seed);
    }
    let mut timings_ms = BTreeMap::new();
    timings_ms.insert("compose".to_string(), compose_ms);
    timings_ms.insert("total".to_string(), started.elapsed().as_secs_f64() * 1e3);
    let manifest = Manifest {
        config: config.clone(),
        seeds,
        input_digest: image_digest(&input),
        panels: records.into_iter().flatten().collect(),
        output_digest: sha256_hex(&png),
        output_size: composed.dims(),
        timings_ms,
    };
    Ok(RunResult {
        image: composed,
        png,
        manifest,
    })
}

/// Writes `bytes` to a sibling temp file; [`commit`] renames it into place.
fn stage_write(path: &Path, bytes: &[u8]) -> Result<PathBuf, Error> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    Ok(tmp)
}

fn commit(tmp: &Path, path: &Path) -> Result<(), Error> {
    fs::rename(tmp, path).map_err(|e| Error::io(path, e))
}

/// Runs the pipeline and writes the output PNG plus `<out>.manifest.json`.
/// Nothing is written unless every stage succeeds.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let result = render_pipeline(config)?;
    let out = &config.output;
    let manifest_out = manifest_path(out);
    let json = serde_json::to_string_pretty(&result.manifest).expect("manifest serializes");
    let img_tmp = stage_write(out, &result.png).at(Stage::Save)?;
    let manifest_tmp = match stage_write(&manifest_out, json.as_bytes()) {
        Ok(p) => p,
        Err(e) => {
            let _ = fs::remove_file(&img_tmp);
            return Err(e).at(Stage::Save);
        }
    };
    commit(&img_tmp, out).at(Stage::Save)?;
    commit(&manifest_tmp, &manifest_out).at(Stage::Save)?;
    Ok(result.manifest)
}
