//! Human attention maps from fixation logs.
//!
//! Fixations arrive as CSV with the exact header `x,y,t_ms,weight`. Stimulus
//! dimensions travel separately, either from the stimulus image itself or from
//! a JSON sidecar `{ "stimulus_id": ..., "width": ..., "height": ... }`.
//!
//! CAT2000 fixation locations can be brought in by writing one row per fixation
//! (1-based MATLAB coordinates minus 0.5 give pixel-center coordinates here),
//! with `t_ms` 0 and `weight` 1.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::GrayMap;

pub const CSV_HEADER: [&str; 4] = ["x", "y", "t_ms", "weight"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixation {
    pub x: f64,
    pub y: f64,
    /// Carried through but not used by the density estimate.
    pub t_ms: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stimulus {
    pub stimulus_id: String,
    pub width: usize,
    pub height: usize,
}

impl Stimulus {
    pub fn new(stimulus_id: impl Into<String>, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension);
        }
        Ok(Self {
            stimulus_id: stimulus_id.into(),
            width,
            height,
        })
    }

    pub fn from_sidecar(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Stimulus = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: e.line() as u64,
            reason: e.to_string(),
        })?;
        Stimulus::new(s.stimulus_id, s.width, s.height)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixationSet {
    pub stimulus: Stimulus,
    pub fixations: Vec<Fixation>,
}

/// Reads a fixation CSV in file order.
pub fn parse_fixation_log(path: impl AsRef<Path>, stimulus: Stimulus) -> Result<FixationSet> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_fixation_reader(file, path, stimulus)
}

fn parse_fixation_reader(reader: impl std::io::Read, path: &Path, stimulus: Stimulus) -> Result<FixationSet> {
    let parse_err = |line: u64, reason: String| Error::Parse {
        path: path.into(),
        line,
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(parse_err(
            1,
            format!(
                "header must be exactly `{}`, found `{}`",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut fixations = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut fields = [0.0; 4];
        for (slot, (name, raw)) in fields.iter_mut().zip(CSV_HEADER.iter().zip(record.iter())) {
            *slot = raw
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("field `{name}` is not a finite number: `{raw}`")))?;
        }
        let [x, y, t_ms, weight] = fields;
        if weight < 0.0 {
            return Err(parse_err(line, format!("negative weight {weight}")));
        }
        if t_ms < 0.0 {
            return Err(parse_err(line, format!("negative t_ms {t_ms}")));
        }
        fixations.push(Fixation { x, y, t_ms, weight });
    }
    Ok(FixationSet { stimulus, fixations })
}

pub fn write_fixation_log(set: &FixationSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("x,y,t_ms,weight\n");
    for f in &set.fixations {
        out.push_str(&format!("{},{},{},{}\n", f.x, f.y, f.t_ms, f.weight));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One-visual-degree proxy: `max(width, height) / 30` pixels.
pub fn default_sigma(width: usize, height: usize) -> f64 {
    width.max(height) as f64 / 30.0
}

/// Weighted Gaussian kernel sum evaluated at pixel centers.
///
/// Fixation coordinates are clamped into `[0, width] × [0, height]`. Fixations
/// are accumulated in set order. The result is not normalized.
pub fn fixations_to_map(set: &FixationSet, sigma: f64) -> Result<GrayMap> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Invalid(format!("sigma must be positive, got {sigma}")));
    }
    if !set.fixations.iter().any(|f| f.weight > 0.0) {
        return Err(Error::Invalid(
            "fixation set has no fixation with positive weight".into(),
        ));
    }
    let Stimulus { width, height, .. } = set.stimulus;
    let points: Vec<(f64, f64, f64)> = set
        .fixations
        .iter()
        .map(|f| (f.x.clamp(0.0, width as f64), f.y.clamp(0.0, height as f64), f.weight))
        .collect();
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let mut values = Vec::with_capacity(width * height);
    for py in 0..height {
        let cy = py as f64 + 0.5;
        for px in 0..width {
            let cx = px as f64 + 0.5;
            let mut acc = 0.0;
            for &(x, y, w) in &points {
                let d2 = (cx - x) * (cx - x) + (cy - y) * (cy - y);
                acc += w * (-d2 * inv_two_var).exp();
            }
            values.push(acc);
        }
    }
    GrayMap::new(width, height, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(w: usize, h: usize, fixations: Vec<Fixation>) -> FixationSet {
        FixationSet {
            stimulus: Stimulus::new("test", w, h).unwrap(),
            fixations,
        }
    }

    fn fix(x: f64, y: f64, weight: f64) -> Fixation {
        Fixation {
            x,
            y,
            t_ms: 0.0,
            weight,
        }
    }

    fn parse_str(text: &str) -> Result<FixationSet> {
        parse_fixation_reader(
            text.as_bytes(),
            Path::new("mem.csv"),
            Stimulus::new("s", 32, 32).unwrap(),
        )
    }

    #[test]
    fn parses_single_row() {
        let s = parse_str("x,y,t_ms,weight\n10.5,20.0,100,1.0\n").unwrap();
        assert_eq!(
            s.fixations,
            vec![Fixation {
                x: 10.5,
                y: 20.0,
                t_ms: 100.0,
                weight: 1.0
            }]
        );
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_str("x,y,t_ms,weight\n").unwrap().fixations.is_empty());
    }

    #[test]
    fn negative_weight_names_line() {
        let err = parse_str("x,y,t_ms,weight\n1,2,3,4\n5,6,7,-1\n").unwrap_err();
        match err {
            Error::Parse { line, ref reason, .. } => {
                assert_eq!(line, 3);
                assert!(reason.contains("negative weight"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains(":3:"));
    }

    #[test]
    fn bad_header_and_fields() {
        assert!(matches!(parse_str("x,y,t,weight\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_str("y,x,t_ms,weight\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_str("x,y,t_ms,weight\n1,abc,3,4\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_str("x,y,t_ms,weight\n1,2,3\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_str("x,y,t_ms,weight\n1,2,-3,4\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn csv_round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let s = set(32, 32, vec![fix(1.25, 2.5, 3.0), fix(0.1, 30.0, 0.0)]);
        write_fixation_log(&s, &path).unwrap();
        assert_eq!(parse_fixation_log(&path, s.stimulus.clone()).unwrap(), s);
    }

    #[test]
    fn sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        fs::write(&path, r#"{ "stimulus_id": "cat", "width": 40, "height": 30 }"#).unwrap();
        assert_eq!(
            Stimulus::from_sidecar(&path).unwrap(),
            Stimulus::new("cat", 40, 30).unwrap()
        );
        fs::write(&path, r#"{ "stimulus_id": "cat", "width": 0, "height": 30 }"#).unwrap();
        assert!(Stimulus::from_sidecar(&path).is_err());
    }

    #[test]
    fn single_fixation_peak() {
        let map = fixations_to_map(&set(32, 32, vec![fix(10.5, 10.5, 1.0)]), 2.0).unwrap();
        let peak = map.get(10, 10);
        for (i, &v) in map.values().iter().enumerate() {
            if i != 10 * 32 + 10 {
                assert!(v < peak);
            }
        }
        assert_eq!(peak, 1.0);
    }

    #[test]
    fn mirror_symmetry() {
        let map = fixations_to_map(&set(20, 12, vec![fix(4.0, 5.0, 1.0), fix(16.0, 5.0, 1.0)]), 3.0).unwrap();
        for y in 0..12 {
            for x in 0..20 {
                assert_eq!(map.get(x, y), map.get(19 - x, y));
            }
        }
    }

    #[test]
    fn blob_mass_ratio() {
        let sigma = 2.0;
        let (a, b) = ((12.0, 16.0), (40.0, 16.0));
        let map = fixations_to_map(&set(56, 32, vec![fix(a.0, a.1, 2.0), fix(b.0, b.1, 1.0)]), sigma).unwrap();
        let mass_near = |(fx, fy): (f64, f64)| -> f64 {
            let mut m = 0.0;
            for y in 0..32 {
                for x in 0..56 {
                    let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                    if ((cx - fx).powi(2) + (cy - fy).powi(2)).sqrt() <= 3.0 * sigma {
                        m += map.get(x, y);
                    }
                }
            }
            m
        };
        let ratio = mass_near(a) / mass_near(b);
        assert!((ratio - 2.0).abs() < 0.02, "ratio {ratio}");
    }

    #[test]
    fn clamps_outside_points() {
        let inside = fixations_to_map(&set(8, 8, vec![fix(8.0, 0.0, 1.0)]), 1.5).unwrap();
        let outside = fixations_to_map(&set(8, 8, vec![fix(12.0, -3.0, 1.0)]), 1.5).unwrap();
        assert_eq!(inside, outside);
    }

    #[test]
    fn invalid_inputs() {
        assert!(fixations_to_map(&set(8, 8, vec![]), 1.0).is_err());
        assert!(fixations_to_map(&set(8, 8, vec![fix(1.0, 1.0, 0.0)]), 1.0).is_err());
        assert!(fixations_to_map(&set(8, 8, vec![fix(1.0, 1.0, 1.0)]), 0.0).is_err());
        assert!(fixations_to_map(&set(8, 8, vec![fix(1.0, 1.0, 1.0)]), -2.0).is_err());
    }

    #[test]
    fn default_sigma_matches_rule() {
        assert_eq!(default_sigma(600, 300), 20.0);
        assert_eq!(default_sigma(30, 90), 3.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn fixations(w: usize, h: usize) -> impl Strategy<Value = Vec<Fixation>> {
            prop::collection::vec(
                (-2.0..w as f64 + 2.0, -2.0..h as f64 + 2.0, 0.01f64..10.0).prop_map(|(x, y, w)| fix(x, y, w)),
                1..6,
            )
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            // sigma wide enough that the farthest pixel stays above f64 underflow
            #[test]
            fn strictly_positive(fs in fixations(24, 16), sigma in 2.0f64..8.0) {
                let map = fixations_to_map(&set(24, 16, fs), sigma).unwrap();
                prop_assert!(map.values().iter().all(|&v| v > 0.0));
            }

            #[test]
            fn linear_in_weights(fs in fixations(16, 16), sigma in 0.5f64..6.0) {
                let base = fixations_to_map(&set(16, 16, fs.clone()), sigma).unwrap();
                let doubled: Vec<Fixation> = fs.iter().map(|f| fix(f.x, f.y, 2.0 * f.weight)).collect();
                let twice = fixations_to_map(&set(16, 16, doubled), sigma).unwrap();
                for (a, b) in base.values().iter().zip(twice.values()) {
                    prop_assert_eq!(2.0 * a, *b);
                }
            }

            #[test]
            fn canonical_order_rebuild_is_bit_identical(fs in fixations(16, 16), sigma in 0.5f64..6.0, rot in 0usize..6) {
                let canonical = |mut v: Vec<Fixation>| {
                    v.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.weight.total_cmp(&b.weight)));
                    v
                };
                let mut permuted = fs.clone();
                permuted.rotate_left(rot % fs.len());
                let a = fixations_to_map(&set(16, 16, canonical(fs)), sigma).unwrap();
                let b = fixations_to_map(&set(16, 16, canonical(permuted)), sigma).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
