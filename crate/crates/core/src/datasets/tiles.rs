use super::Dataset;
use crate::error::{Error, Result};

/// Unhashed tile coder over a scalar interval: `tilings` offset grids of
/// `memory / tilings` tiles each, one active tile per tiling.
#[derive(Debug, Clone, PartialEq)]
pub struct TileCoder {
    pub lo: f64,
    pub hi: f64,
    pub memory: usize,
    pub tilings: usize,
}

impl Default for TileCoder {
    fn default() -> Self {
        Self {
            lo: -2.0,
            hi: 2.0,
            memory: 128,
            tilings: 4,
        }
    }
}

impl TileCoder {
    pub fn tiles_per_tiling(&self) -> usize {
        self.memory / self.tilings
    }

    /// Tile width such that every offset tiling still covers `[lo, hi]`:
    /// `tiles · w = (hi − lo) + w · (tilings − 1) / tilings`, shrunk slightly.
    fn tile_width(&self) -> f64 {
        let tiles = self.tiles_per_tiling() as f64;
        let shift = (self.tilings as f64 - 1.0) / self.tilings as f64;
        (self.hi - self.lo) / (tiles - shift - 0.25)
    }

    /// Indices of the active slots, one per tiling.
    pub fn active(&self, x: f64) -> Result<Vec<usize>> {
        if !(self.lo..=self.hi).contains(&x) {
            return Err(Error::OutOfDomain {
                value: x,
                lo: self.lo,
                hi: self.hi,
            });
        }
        let per = self.tiles_per_tiling();
        let w = self.tile_width();
        Ok((0..self.tilings)
            .map(|k| {
                let offset = w * k as f64 / self.tilings as f64;
                let idx = ((x - self.lo + offset) / w).floor() as usize;
                k * per + idx.min(per - 1)
            })
            .collect())
    }

    pub fn encode(&self, x: f64) -> Result<Vec<f64>> {
        let mut code = vec![0.0; self.memory];
        for slot in self.active(x)? {
            code[slot] = 1.0;
        }
        Ok(code)
    }

    /// Replaces the single feature of `data` by its binary code.
    pub fn encode_dataset(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != 1 {
            return Err(Error::Dimension {
                expected: 1,
                got: data.dim(),
            });
        }
        let mut features = Vec::with_capacity(data.len() * self.memory);
        for (x, _) in data.rows() {
            features.extend(self.encode(x[0].clamp(self.lo, self.hi))?);
        }
        let names = (0..self.memory).map(|i| format!("tile{i}")).collect();
        Dataset::new(format!("{}_tiled", data.name), names, features, data.targets().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_active_tiles() {
        let c = TileCoder::default();
        for k in 0..=400 {
            let x = -2.0 + 0.01 * k as f64;
            let code = c.encode(x).unwrap();
            assert_eq!(code.len(), 128);
            assert_eq!(code.iter().filter(|&&b| b == 1.0).count(), 4, "x = {x}");
            let active = c.active(x).unwrap();
            for (k, slot) in active.iter().enumerate() {
                assert_eq!(slot / 32, k);
            }
        }
    }

    #[test]
    fn nearby_points_share_tiles_and_ends_differ() {
        let c = TileCoder::default();
        assert_eq!(c.encode(0.3).unwrap(), c.encode(0.3 + 1e-9).unwrap());
        assert_ne!(c.encode(-2.0).unwrap(), c.encode(2.0).unwrap());
        // every tiling resolves the ends of the interval to different tiles
        let a = c.active(-2.0).unwrap();
        let b = c.active(2.0).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p != q));
    }

    #[test]
    fn last_tile_not_clamped_in_range() {
        let c = TileCoder::default();
        let w = c.tile_width();
        for k in 0..4 {
            let idx = ((4.0 + w * k as f64 / 4.0) / w).floor() as usize;
            assert!(idx < 32);
        }
    }

    #[test]
    fn out_of_domain() {
        assert!(TileCoder::default().encode(2.5).is_err());
        assert!(TileCoder::default().encode(f64::NAN).is_err());
    }
}
