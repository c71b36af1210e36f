//! Piecewise-constant terrain profiles.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifact;
use crate::error::{Error, Result};

/// Depth used for gaps; anything that drops in is lost.
pub const GAP_DEPTH: f64 = -1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    Gap { start: f64, width: f64 },
    Plateau { start: f64, height: f64, length: f64 },
    Block { start: f64, height: f64, length: f64 },
}

impl Segment {
    /// `[start, end)` and the surface height over it.
    pub fn span(&self) -> (f64, f64, f64) {
        match *self {
            Segment::Gap { start, width } => (start, start + width, GAP_DEPTH),
            Segment::Plateau { start, height, length } | Segment::Block { start, height, length } => {
                (start, start + length, height)
            }
        }
    }
}

/// Flat ground at height 0 with optional segments; `segment` is the TOML
/// array-of-tables key.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    #[serde(default, rename = "segment")]
    pub segments: Vec<Segment>,
}

/// Penetration of a point into the terrain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactGeometry {
    pub depth: f64,
    /// Unit outward normal `[nx, nz]`.
    pub normal: [f64; 2],
}

impl Terrain {
    pub fn flat() -> Self {
        Self::default()
    }

    pub fn new(mut segments: Vec<Segment>) -> Result<Self> {
        segments.sort_by(|a, b| a.span().0.total_cmp(&b.span().0));
        let t = Self { segments };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.segments {
            let (a, b, h) = s.span();
            if !(a.is_finite() && b.is_finite() && h.is_finite()) || b <= a {
                return Err(Error::invalid(format!("terrain segment {s:?} has an empty or invalid span")));
            }
        }
        for w in self.segments.windows(2) {
            if w[1].span().0 < w[0].span().1 {
                return Err(Error::invalid("terrain segments overlap or are not sorted by start"));
            }
        }
        Ok(())
    }

    /// Surface height under `x`.
    pub fn height(&self, x: f64) -> f64 {
        self.segments
            .iter()
            .map(Segment::span)
            .find(|&(a, b, _)| x >= a && x < b)
            .map_or(0.0, |(_, _, h)| h)
    }

    /// Minimum-penetration contact for a point at `(x, z)`. Raised edges push
    /// sideways when the point is closer to the edge than to the top face.
    pub fn contact(&self, x: f64, z: f64) -> Option<ContactGeometry> {
        let h = self.height(x);
        if z >= h {
            return None;
        }
        let depth_v = h - z;
        let (a, b) = self
            .segments
            .iter()
            .map(Segment::span)
            .find(|&(a, b, _)| x >= a && x < b)
            .map_or_else(
                || self.ground_span(x),
                |(a, b, _)| (a, b),
            );
        let mut best = ContactGeometry {
            depth: depth_v,
            normal: [0.0, 1.0],
        };
        if a.is_finite() && self.height(a - 1e-9) <= z && x - a < best.depth {
            best = ContactGeometry {
                depth: x - a,
                normal: [-1.0, 0.0],
            };
        }
        if b.is_finite() && self.height(b) <= z && b - x < best.depth {
            best = ContactGeometry {
                depth: b - x,
                normal: [1.0, 0.0],
            };
        }
        Some(best)
    }

    /// Extent of the plain ground stretch containing `x`.
    fn ground_span(&self, x: f64) -> (f64, f64) {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for s in &self.segments {
            let (a, b, _) = s.span();
            if b <= x {
                lo = lo.max(b);
            }
            if a > x {
                hi = hi.min(a);
            }
        }
        (lo, hi)
    }

    /// Lowest height of non-gap surface; falling below it means a gap fall.
    pub fn ground_level(&self) -> f64 {
        self.segments
            .iter()
            .filter(|s| !matches!(s, Segment::Gap { .. }))
            .map(|s| s.span().2)
            .fold(0.0, f64::min)
    }

    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        let t: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Terrain::new(t.segments)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("terrain is serialisable")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&artifact::read_text(path)?, path)
    }

    /// Named presets matching the planning experiments.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "flat" => Ok(Self::flat()),
            "gap" => Terrain::new(vec![Segment::Gap { start: 0.9, width: 0.45 }]),
            "plateau" => Terrain::new(vec![Segment::Plateau { start: 0.9, height: 0.2, length: 3.0 }]),
            "gap_block" => Terrain::new(vec![
                Segment::Gap { start: 0.6, width: 0.45 },
                Segment::Block { start: 1.6, height: 0.4, length: 3.0 },
            ]),
            other => Err(Error::invalid(format!(
                "unknown terrain preset `{other}` (flat|gap|plateau|gap_block)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heights() {
        let t = Terrain::preset("gap_block").unwrap();
        assert_eq!(t.height(0.0), 0.0);
        assert_eq!(t.height(0.8), GAP_DEPTH);
        assert_eq!(t.height(1.05), 0.0);
        assert_eq!(t.height(2.0), 0.4);
        assert_eq!(t.ground_level(), 0.0);
    }

    #[test]
    fn flat_contact_is_vertical() {
        let t = Terrain::flat();
        assert!(t.contact(0.3, 0.01).is_none());
        let c = t.contact(0.3, -0.002).unwrap();
        assert_eq!(c.normal, [0.0, 1.0]);
        assert!((c.depth - 0.002).abs() < 1e-15);
    }

    #[test]
    fn block_side_pushes_back() {
        let t = Terrain::new(vec![Segment::Block { start: 1.0, height: 0.4, length: 1.0 }]).unwrap();
        let side = t.contact(1.01, 0.1).unwrap();
        assert_eq!(side.normal, [-1.0, 0.0]);
        assert!((side.depth - 0.01).abs() < 1e-12);
        let top = t.contact(1.5, 0.395).unwrap();
        assert_eq!(top.normal, [0.0, 1.0]);
    }

    #[test]
    fn gap_rim_pushes_into_gap() {
        let t = Terrain::preset("gap").unwrap();
        // Foot below ground level just past the far rim of the gap.
        let c = t.contact(1.36, -0.3).unwrap();
        assert_eq!(c.normal, [-1.0, 0.0]);
        assert!(t.contact(1.0, -0.5).is_none());
    }

    #[test]
    fn overlapping_segments_rejected() {
        let r = Terrain::new(vec![
            Segment::Gap { start: 0.0, width: 1.0 },
            Segment::Block { start: 0.5, height: 0.2, length: 1.0 },
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn toml_round_trip() {
        let t = Terrain::preset("gap_block").unwrap();
        let back = Terrain::from_toml_str(&t.to_toml_string(), Path::new("t.toml")).unwrap();
        assert_eq!(back, t);
    }
}
