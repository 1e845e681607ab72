//! `diptych`: attention-driven Voronoi mosaics from the command line.
//!
//! Exit codes: 0 success, 1 validation error, 2 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use diptych_core::compose::{compose_panels, PanelLayout, PanelSource};
use diptych_core::density::{normalize_density, SiteSet};
use diptych_core::human::{default_sigma, fixations_to_map, parse_fixation_log, Stimulus};
use diptych_core::machine::GradientMode;
use diptych_core::pipeline::{
    self, machine_saliency, run_pipeline, MachineMethod, PanelRecord, PipelineConfig, PipelineError, Stage,
};
use diptych_core::raster::{load_gray_map, load_image, save_gray_map, save_image};
use diptych_core::{density, hex_color, Error};

#[derive(Parser, Debug)]
#[command(
    name = "diptych",
    version,
    about = "Voronoi mosaics driven by machine and human attention"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Machine saliency map of an image, written as 16-bit grayscale PNG.
    Saliency(SaliencyArgs),
    /// Human saliency map from a fixation CSV, written as 16-bit grayscale PNG.
    Fixmap(FixmapArgs),
    /// Draw sites from a saliency map, written as `i,x,y` CSV.
    Sample(SampleArgs),
    /// Render the Voronoi mosaic of an image for a site CSV.
    Tessellate(TessellateArgs),
    /// Place existing images side by side.
    Compose(ComposeArgs),
    /// Full pipeline: saliency, sampling, tessellation, composition.
    Run(RunArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    InputGrad,
    Sobel,
    File,
}

impl From<MethodArg> for MachineMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::InputGrad => MachineMethod::InputGrad,
            MethodArg::Sobel => MachineMethod::Sobel,
            MethodArg::File => MachineMethod::File,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Max,
    Sum,
}

impl From<ModeArg> for GradientMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Max => GradientMode::Max,
            ModeArg::Sum => GradientMode::Sum,
        }
    }
}

#[derive(Args, Debug)]
struct SaliencyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "input-grad")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "max")]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
    #[arg(long)]
    saliency_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FixmapArgs {
    #[arg(long)]
    fixations: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Stimulus image supplying the map size. Without it, `<fixations>.json`
    /// must hold `{ "stimulus_id", "width", "height" }`.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Saliency map (grayscale PNG).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = pipeline::DEFAULT_SITES)]
    sites: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    floor: f64,
}

#[derive(Args, Debug)]
struct TessellateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Site CSV with header `i,x,y`.
    #[arg(long)]
    sites_file: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    border: usize,
    #[arg(long, default_value = "FFFFFF")]
    border_color: String,
    /// Also dump the label grid as a 16-bit grayscale PNG.
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ComposeArgs {
    /// Comma-separated image paths, left to right.
    #[arg(long)]
    panels: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    gutter: usize,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    model_seed: Option<u64>,
    #[arg(long)]
    saliency_file: Option<PathBuf>,
    #[arg(long)]
    fixations: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    sites: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    floor: Option<f64>,
    #[arg(long)]
    border: Option<usize>,
    #[arg(long)]
    border_color: Option<String>,
    #[arg(long)]
    gutter: Option<usize>,
    /// Comma-separated: original, machine, human, or an image path.
    #[arg(long)]
    panels: Option<String>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Debug)]
struct Failure {
    stage: Option<Stage>,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure { stage: None, error }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure {
            stage: Some(e.stage),
            error: e.source,
        }
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, Failure>;
}

impl<T> AtStage<T> for Result<T, Error> {
    fn at(self, stage: Stage) -> Result<T, Failure> {
        self.map_err(|error| Failure {
            stage: Some(stage),
            error,
        })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match f.stage {
                Some(stage) => eprintln!("error: {stage} stage: {}", f.error),
                None => eprintln!("error: {}", f.error),
            }
            ExitCode::from(if f.error.is_io() { 2 } else { 1 })
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Saliency(a) => saliency(a),
        Command::Fixmap(a) => fixmap(a),
        Command::Sample(a) => sample(a),
        Command::Tessellate(a) => tessellate(a),
        Command::Compose(a) => compose(a),
        Command::Run(a) => run(a),
    }
}

fn saliency(a: SaliencyArgs) -> Result<(), Failure> {
    let image = load_image(&a.input).at(Stage::Load)?;
    let spec = pipeline::MachineSpec {
        method: a.method.into(),
        mode: a.mode.into(),
        model_seed: a.model_seed,
        saliency_file: a.saliency_file,
    };
    let map = machine_saliency(&spec, &image).at(Stage::MachineSaliency)?;
    save_gray_map(&map, &a.out).at(Stage::Save)
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn fixmap(a: FixmapArgs) -> Result<(), Failure> {
    let stimulus = match &a.input {
        Some(path) => {
            let image = load_image(path).at(Stage::Load)?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Stimulus::new(id, image.width(), image.height()).at(Stage::Load)?
        }
        None => Stimulus::from_sidecar(sidecar_path(&a.fixations)).at(Stage::HumanSaliency)?,
    };
    let sigma = a
        .sigma
        .unwrap_or_else(|| default_sigma(stimulus.width, stimulus.height));
    let set = parse_fixation_log(&a.fixations, stimulus).at(Stage::HumanSaliency)?;
    let map = fixations_to_map(&set, sigma).at(Stage::HumanSaliency)?;
    save_gray_map(&map, &a.out).at(Stage::Save)
}

fn sample(a: SampleArgs) -> Result<(), Failure> {
    let map = load_gray_map(&a.input).at(Stage::Load)?;
    let dens = normalize_density(&map, a.floor).at(Stage::Normalize)?;
    let sites = density::sample_sites(&dens, a.sites, a.seed);
    sites.save_csv(&a.out).at(Stage::Save)
}

fn tessellate(a: TessellateArgs) -> Result<(), Failure> {
    let image = load_image(&a.input).at(Stage::Load)?;
    let sites = SiteSet::load_csv(&a.sites_file).at(Stage::Load)?;
    let render = diptych_core::tessellation::RenderOptions {
        border_px: a.border,
        border_color: hex_color::parse(&a.border_color).at(Stage::Config)?,
        ..Default::default()
    };
    let mut record = PanelRecord {
        source: "sites".into(),
        digests: Default::default(),
        timings_ms: Default::default(),
    };
    let mosaic = pipeline::tessellate_sites(&image, sites, &render, &mut record)?;
    if let Some(path) = &a.labels_out {
        mosaic.labels.save_png(path).at(Stage::Save)?;
    }
    save_image(&mosaic.image, &a.out).at(Stage::Save)
}

fn compose(a: ComposeArgs) -> Result<(), Failure> {
    let paths: Vec<&str> = a.panels.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let images = paths
        .iter()
        .map(load_image)
        .collect::<Result<Vec<_>, _>>()
        .at(Stage::Load)?;
    let layout = PanelLayout {
        panels: paths.iter().map(|p| PanelSource::File(p.into())).collect(),
        gutter_px: a.gutter,
        ..Default::default()
    };
    let out = compose_panels(&images, &layout).at(Stage::Compose)?;
    save_image(&out, &a.out).at(Stage::Save)
}

fn effective_config(a: &RunArgs) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => PipelineConfig::from_json_file(path).at(Stage::Config)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = &a.input {
        cfg.input = v.clone();
    }
    if let Some(v) = &a.out {
        cfg.output = v.clone();
    }
    if let Some(v) = a.method {
        cfg.machine.method = v.into();
    }
    if let Some(v) = a.mode {
        cfg.machine.mode = v.into();
    }
    if let Some(v) = a.model_seed {
        cfg.machine.model_seed = v;
    }
    if let Some(v) = &a.saliency_file {
        cfg.machine.saliency_file = Some(v.clone());
    }
    if let Some(v) = &a.fixations {
        cfg.human.fixations = Some(v.clone());
    }
    if let Some(v) = a.sigma {
        cfg.human.sigma = Some(v);
    }
    if let Some(v) = a.sites {
        cfg.sites = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.floor {
        cfg.floor = v;
    }
    if let Some(v) = a.border {
        cfg.render.border_px = v;
    }
    if let Some(v) = &a.border_color {
        cfg.render.border_color = hex_color::parse(v).at(Stage::Config)?;
    }
    if let Some(v) = a.gutter {
        cfg.layout.gutter_px = v;
    }
    if let Some(v) = &a.panels {
        cfg.layout.panels = PanelSource::parse_list(v);
    }
    Ok(cfg)
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let cfg = effective_config(&a)?;
    if a.print_config {
        println!("{}", cfg.to_json_pretty());
        return Ok(());
    }
    let manifest = run_pipeline(&cfg)?;
    println!(
        "{} ({}x{}, output sha256 {})",
        cfg.output.display(),
        manifest.output_size.0,
        manifest.output_size.1,
        manifest.output_digest
    );
    Ok(())
}
