use super::{Splat2D, TILE_SIZE};

/// Per-tile splat lists in compressed-row form. Each list keeps the global
/// front-to-back order of `splats`.
pub(crate) struct TileBins {
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub offsets: Vec<usize>,
    pub entries: Vec<u32>,
}

impl TileBins {
    pub fn build(splats: &[Splat2D], width: usize, height: usize) -> Self {
        let tiles_x = width.div_ceil(TILE_SIZE);
        let tiles_y = height.div_ceil(TILE_SIZE);
        let rects: Vec<Option<[usize; 4]>> = splats
            .iter()
            .map(|s| {
                s.pixel_rect(width, height).map(|[x0, x1, y0, y1]| {
                    [x0 / TILE_SIZE, x1 / TILE_SIZE, y0 / TILE_SIZE, y1 / TILE_SIZE]
                })
            })
            .collect();
        let mut counts = vec![0usize; tiles_x * tiles_y + 1];
        for [tx0, tx1, ty0, ty1] in rects.iter().flatten() {
            for ty in *ty0..=*ty1 {
                for tx in *tx0..=*tx1 {
                    counts[ty * tiles_x + tx + 1] += 1;
                }
            }
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let offsets = counts;
        let mut cursor = offsets.clone();
        let mut entries = vec![0u32; offsets[tiles_x * tiles_y]];
        for (i, rect) in rects.iter().enumerate() {
            let Some([tx0, tx1, ty0, ty1]) = rect else { continue };
            for ty in *ty0..=*ty1 {
                for tx in *tx0..=*tx1 {
                    let t = ty * tiles_x + tx;
                    entries[cursor[t]] = i as u32;
                    cursor[t] += 1;
                }
            }
        }
        Self { tiles_x, tiles_y, offsets, entries }
    }

    pub fn tile(&self, t: usize) -> &[u32] {
        &self.entries[self.offsets[t]..self.offsets[t + 1]]
    }

    pub fn count(&self) -> usize {
        self.tiles_x * self.tiles_y
    }

    /// Pixel bounds `[x0, x1) × [y0, y1)` of tile `t`.
    pub fn pixel_bounds(&self, t: usize, width: usize, height: usize) -> [usize; 4] {
        let tx = t % self.tiles_x;
        let ty = t / self.tiles_x;
        [
            tx * TILE_SIZE,
            ((tx + 1) * TILE_SIZE).min(width),
            ty * TILE_SIZE,
            ((ty + 1) * TILE_SIZE).min(height),
        ]
    }
}
