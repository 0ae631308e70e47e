//! Triplet dataset files.

use std::path::Path;

use homfocal_core::geometry::{PointTriplet, Vec2};
use homfocal_core::synth::{generate_scene, SynthConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fewest correspondences a record may hold.
pub const MIN_CORRESPONDENCES: usize = 4;

/// Fewest matches a record needs to be evaluated.
pub const MIN_MATCHES: usize = 10;

/// One image triplet with raw (uncentered) pixel correspondences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub camera_ids: [String; 3],
    /// `[width, height]` of each image.
    pub image_sizes: [[f64; 2]; 3],
    pub f_gt: [Option<f64>; 3],
    /// `[x1, y1, x2, y2, x3, y3]` per match.
    pub points: Vec<[f64; 6]>,
}

impl TripletRecord {
    fn validate(&self, index: usize) -> Result<()> {
        let invalid = |reason: &str| Err(Error::InvalidRecord { index, reason: reason.into() });
        if self.image_sizes.iter().flatten().any(|v| !(v.is_finite() && *v > 0.0)) {
            return invalid("image sizes must be positive");
        }
        if self.f_gt.iter().flatten().any(|f| !(f.is_finite() && *f > 0.0)) {
            return invalid("ground-truth focals must be positive");
        }
        if self.points.len() < MIN_CORRESPONDENCES {
            return invalid(&format!("{} correspondences, need at least {MIN_CORRESPONDENCES}", self.points.len()));
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return invalid("non-finite pixel coordinate");
        }
        Ok(())
    }

    /// Correspondences shifted so that each image center is the origin.
    pub fn centered_triplets(&self) -> Vec<PointTriplet> {
        let c = self.image_sizes.map(|[w, h]| Vec2::new(0.5 * w, 0.5 * h));
        self.points
            .iter()
            .map(|p| {
                PointTriplet::new(
                    Vec2::new(p[0], p[1]) - c[0],
                    Vec2::new(p[2], p[3]) - c[1],
                    Vec2::new(p[4], p[5]) - c[2],
                )
            })
            .collect()
    }

    /// Ground-truth focals when all three are known.
    pub fn ground_truth(&self) -> Option<[f64; 3]> {
        Some([self.f_gt[0]?, self.f_gt[1]?, self.f_gt[2]?])
    }

    /// Width of the reference image.
    pub fn reference_size(&self) -> (f64, f64) {
        (self.image_sizes[0][0], self.image_sizes[0][1])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TripletDataset {
    pub records: Vec<TripletRecord>,
}

impl TripletDataset {
    /// Parses and validates a dataset; `origin` names the source in errors.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let ds: TripletDataset = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        for (i, r) in ds.records.iter().enumerate() {
            r.validate(i)?;
        }
        Ok(ds)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("dataset serializes");
        s.push('\n');
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Synthetic scenes `0..n` of `cfg` as raw-pixel records.
    pub fn from_scenes(cfg: &SynthConfig, n: usize) -> Result<Self> {
        let (w, h) = cfg.image_size;
        let records = (0..n)
            .map(|i| {
                let scene = generate_scene(cfg, i as u64)?;
                let points = scene
                    .triplets
                    .iter()
                    .map(|t| [t.x1.x + 0.5 * w, t.x1.y + 0.5 * h, t.x2.x + 0.5 * w, t.x2.y + 0.5 * h, t.x3.x + 0.5 * w, t.x3.y + 0.5 * h])
                    .collect();
                Ok(TripletRecord {
                    camera_ids: core::array::from_fn(|j| format!("s{i}c{j}")),
                    image_sizes: [[w, h]; 3],
                    f_gt: scene.truth.f.map(Some),
                    points,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(n: usize) -> TripletRecord {
        TripletRecord {
            camera_ids: ["a".into(), "b".into(), "c".into()],
            image_sizes: [[640.0, 480.0], [800.0, 600.0], [640.0, 480.0]],
            f_gt: [Some(500.0), None, Some(700.0)],
            points: (0..n).map(|i| [i as f64, 1.0, 2.0, 3.0, 4.0, 5.0]).collect(),
        }
    }

    #[test]
    fn centering_uses_each_image_size() {
        let t = record(4).centered_triplets();
        assert_eq!(t[0].x1, Vec2::new(-320.0, -239.0));
        assert_eq!(t[0].x2, Vec2::new(-398.0, -297.0));
        assert_eq!(t[0].x3, Vec2::new(-316.0, -235.0));
    }

    #[test]
    fn missing_focal_has_no_ground_truth() {
        assert_eq!(record(4).ground_truth(), None);
    }

    #[test]
    fn null_focal_round_trips() {
        let ds = TripletDataset { records: vec![record(5)] };
        let back = TripletDataset::from_json(&ds.to_json(), Path::new("x")).unwrap();
        assert_eq!(back, ds);
        assert!(ds.to_json().contains("null"));
    }

    #[test]
    fn rejects_invalid_records() {
        let few = TripletDataset { records: vec![record(5), record(3)] };
        match TripletDataset::from_json(&few.to_json(), Path::new("x")) {
            Err(Error::InvalidRecord { index: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        let mut bad = record(5);
        bad.image_sizes[2][0] = 0.0;
        let ds = TripletDataset { records: vec![bad] };
        assert!(matches!(TripletDataset::from_json(&ds.to_json(), Path::new("x")), Err(Error::InvalidRecord { index: 0, .. })));
    }

    #[test]
    fn parse_errors_carry_location() {
        let text = "{\n  \"records\": [\n    {\"camera_ids\": 3}\n  ]\n}";
        match TripletDataset::from_json(text, Path::new("data.json")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
