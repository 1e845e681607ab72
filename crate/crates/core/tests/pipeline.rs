use std::fs;
use std::path::{Path, PathBuf};

use diptych_core::compose::{PanelLayout, PanelSource};
use diptych_core::density::{normalize_density, sample_sites, SiteSet};
use diptych_core::pipeline::{
    self, render_pipeline, run_pipeline, HumanSpec, MachineMethod, MachineSpec, PanelRecord, PipelineConfig, Stage,
};
use diptych_core::raster::{load_gray_map, load_image, save_gray_map, save_image, Image};
use diptych_core::tessellation::{render_tiles, tile_colors, LabelGrid, RenderOptions};

fn test_image(w: usize, h: usize) -> Image {
    Image::from_fn(w, h, |x, y| {
        if (x as isize - w as isize / 3).pow(2) + (y as isize - h as isize / 2).pow(2) < (w as isize / 5).pow(2) {
            [220, 40, 40]
        } else {
            [(x * 255 / w) as u8, (y * 255 / h) as u8, 128]
        }
    })
    .unwrap()
}

fn setup(dir: &Path) -> (PathBuf, PathBuf) {
    let input = dir.join("img.png");
    save_image(&test_image(64, 64), &input).unwrap();
    let fix = dir.join("fix.csv");
    fs::write(&fix, "x,y,t_ms,weight\n40.5,20.5,0,1\n").unwrap();
    (input, fix)
}

fn config(input: &Path, fix: &Path, out: PathBuf, panels: Vec<PanelSource>) -> PipelineConfig {
    PipelineConfig {
        input: input.into(),
        output: out,
        machine: MachineSpec {
            method: MachineMethod::Sobel,
            ..Default::default()
        },
        human: HumanSpec {
            fixations: Some(fix.into()),
            ..Default::default()
        },
        sites: 200,
        seed: 3,
        layout: PanelLayout {
            panels,
            gutter_px: 4,
            background: [0, 0, 0],
        },
        ..Default::default()
    }
}

#[test]
fn sobel_and_fixation_run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (input, fix) = setup(dir.path());
    let panels = vec![PanelSource::Machine, PanelSource::Human];
    let a = run_pipeline(&config(&input, &fix, dir.path().join("a.png"), panels.clone())).unwrap();
    let b = run_pipeline(&config(&input, &fix, dir.path().join("b.png"), panels)).unwrap();
    assert_eq!(
        fs::read(dir.path().join("a.png")).unwrap(),
        fs::read(dir.path().join("b.png")).unwrap()
    );
    assert_eq!(a.digests(), b.digests());
    assert!(dir.path().join("a.png.manifest.json").exists());
    assert_eq!(a.output_size, (64 * 2 + 4, 64));
}

#[test]
fn triptych_width() {
    let dir = tempfile::tempdir().unwrap();
    let (input, fix) = setup(dir.path());
    let cfg = config(
        &input,
        &fix,
        dir.path().join("t.png"),
        vec![PanelSource::Original, PanelSource::Machine, PanelSource::Human],
    );
    let result = render_pipeline(&cfg).unwrap();
    assert_eq!(result.image.dims(), (3 * 64 + 2 * 4, 64));
    // the original panel is copied verbatim
    assert_eq!(result.image.get(10, 10), test_image(64, 64).get(10, 10));
    assert_eq!(result.image.get(65, 10), [0, 0, 0]);
}

#[test]
fn missing_fixations_names_stage_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let (input, _) = setup(dir.path());
    let out = dir.path().join("never.png");
    let cfg = config(
        &input,
        &dir.path().join("missing.csv"),
        out.clone(),
        vec![PanelSource::Machine, PanelSource::Human],
    );
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.stage, Stage::HumanSaliency);
    assert!(err.to_string().contains("human-saliency"));
    assert!(!out.exists());
    assert!(!dir.path().join("never.png.manifest.json").exists());
}

#[test]
fn file_panels_must_share_height() {
    let dir = tempfile::tempdir().unwrap();
    let (input, fix) = setup(dir.path());
    let short = dir.path().join("short.png");
    save_image(&Image::filled(10, 20, [1, 1, 1]).unwrap(), &short).unwrap();
    let cfg = config(
        &input,
        &fix,
        dir.path().join("o.png"),
        vec![PanelSource::Original, PanelSource::File(short)],
    );
    assert_eq!(render_pipeline(&cfg).err().unwrap().stage, Stage::Compose);
}

#[test]
fn input_gradient_machine_panel() {
    let dir = tempfile::tempdir().unwrap();
    let (input, fix) = setup(dir.path());
    let mut cfg = config(&input, &fix, dir.path().join("g.png"), vec![PanelSource::Machine]);
    cfg.machine.method = MachineMethod::InputGrad;
    cfg.machine.model_seed = 99;
    let m = run_pipeline(&cfg).unwrap();
    assert_eq!(m.seeds.get("model"), Some(&99));
    assert_eq!(m.panels.len(), 1);
    assert_eq!(m.panels[0].source, "machine");
}

/// Exports every intermediate to disk, re-imports it, and finishes the run
/// from the reloaded copies.
#[test]
fn resuming_from_exported_intermediates_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (input, fix) = setup(dir.path());
    for panel in [PanelSource::Machine, PanelSource::Human] {
        let cfg = config(&input, &fix, dir.path().join("full.png"), vec![panel.clone()]);
        let direct = render_pipeline(&cfg).unwrap();

        let image = load_image(&input).unwrap();
        let map = match panel {
            PanelSource::Machine => pipeline::machine_saliency(&cfg.machine, &image).unwrap(),
            _ => pipeline::human_saliency(&cfg.human, &image, "img").unwrap(),
        };
        let map_path = dir.path().join("map.png");
        save_gray_map(&map, &map_path).unwrap();
        let density = normalize_density(&load_gray_map(&map_path).unwrap(), cfg.floor).unwrap();
        let sites_path = dir.path().join("sites.csv");
        sample_sites(&density, cfg.sites, cfg.seed)
            .save_csv(&sites_path)
            .unwrap();

        let mut record = PanelRecord {
            source: "resume".into(),
            digests: Default::default(),
            timings_ms: Default::default(),
        };
        let sites = SiteSet::load_csv(&sites_path).unwrap();
        let n = sites.len();
        let mosaic = pipeline::tessellate_sites(&image, sites, &cfg.render, &mut record).unwrap();
        let labels_path = dir.path().join("labels.png");
        mosaic.labels.save_png(&labels_path).unwrap();
        let labels = LabelGrid::load_png(&labels_path).unwrap();
        let palette = tile_colors(&image, &labels, n, cfg.render.unassigned_color).unwrap();
        let resumed = render_tiles(&labels, &palette, &RenderOptions::default()).unwrap();

        assert_eq!(resumed, direct.image, "{panel}");
        assert_eq!(record.digests["panel"], direct.manifest.panels[0].digests["panel"]);
    }
}

#[test]
fn floor_lifts_empty_regions() {
    let dir = tempfile::tempdir().unwrap();
    let (input, fix) = setup(dir.path());
    let mut cfg = config(&input, &fix, dir.path().join("f.png"), vec![PanelSource::Human]);
    cfg.human.sigma = Some(1.0);
    let tight = render_pipeline(&cfg).unwrap();
    cfg.floor = 0.5;
    let lifted = render_pipeline(&cfg).unwrap();
    assert_ne!(tight.manifest.digests(), lifted.manifest.digests());
}
