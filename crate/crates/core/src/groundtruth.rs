use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::renderer::RasterImage;

pub const DEFAULT_THRESHOLD: u8 = 128;
/// Components with fewer pixels than this are treated as rasterization specks.
pub const MIN_COMPONENT_PIXELS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GroundTruthError {
    #[error("expected a single-channel image, got {0} channels")]
    NotSingleChannel(u8),
}

/// Axis-aligned pixel box, top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        BBox { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    /// Overlap with another box, if any.
    pub fn intersection(&self, o: &BBox) -> Option<BBox> {
        let x0 = self.x.max(o.x);
        let y0 = self.y.max(o.y);
        let x1 = self.right().min(o.right());
        let y1 = self.bottom().min(o.bottom());
        (x1 > x0 && y1 > y0).then(|| BBox::new(x0, y0, x1 - x0, y1 - y0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub class_id: u32,
    pub bbox: BBox,
    pub image_id: String,
}

/// Row-major boolean image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = v;
    }
}

/// Target pixels are those strictly darker than `threshold`.
pub fn binarize(image: &RasterImage, threshold: u8) -> Result<Mask, GroundTruthError> {
    if image.channels != 1 {
        return Err(GroundTruthError::NotSingleChannel(image.channels));
    }
    Ok(Mask {
        width: image.width,
        height: image.height,
        bits: image.data.iter().map(|&v| v < threshold).collect(),
    })
}

/// One 8-connected component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    /// `(x, y)` in raster order.
    pub pixels: Vec<(u32, u32)>,
}

impl Component {
    pub fn bbox(&self) -> BBox {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for &(x, y) in &self.pixels {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        BBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1)
    }
}

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        let up = parent[parent[i as usize] as usize];
        parent[i as usize] = up;
        i = up;
    }
    i
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // Keep the smaller (earlier) label as root.
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Two-pass union-find labeling. Label 0 is background; components are
/// numbered from 1 in raster order of their first pixel.
pub fn label(mask: &Mask) -> (Vec<u32>, usize) {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut labels = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0];
    for y in 0..h {
        for x in 0..w {
            if !mask.bits[y * w + x] {
                continue;
            }
            let mut current = 0u32;
            // Already-visited 8-neighbours: W, NW, N, NE.
            let neighbours = [
                (x > 0).then(|| y * w + x - 1),
                (x > 0 && y > 0).then(|| (y - 1) * w + x - 1),
                (y > 0).then(|| (y - 1) * w + x),
                (x + 1 < w && y > 0).then(|| (y - 1) * w + x + 1),
            ];
            for n in neighbours.into_iter().flatten() {
                let l = labels[n];
                if l == 0 {
                    continue;
                }
                if current == 0 {
                    current = l;
                } else {
                    union(&mut parent, current, l);
                }
            }
            if current == 0 {
                current = parent.len() as u32;
                parent.push(current);
            }
            labels[y * w + x] = current;
        }
    }

    let mut final_label = vec![0u32; parent.len()];
    let mut count = 0;
    for l in labels.iter_mut() {
        if *l == 0 {
            continue;
        }
        let root = find(&mut parent, *l) as usize;
        if final_label[root] == 0 {
            count += 1;
            final_label[root] = count as u32;
        }
        *l = final_label[root];
    }
    (labels, count)
}

pub fn connected_components(mask: &Mask) -> Vec<Component> {
    let (labels, count) = label(mask);
    let mut comps = vec![Component { pixels: Vec::new() }; count];
    let w = mask.width as usize;
    for (i, &l) in labels.iter().enumerate() {
        if l != 0 {
            comps[l as usize - 1].pixels.push(((i % w) as u32, (i / w) as u32));
        }
    }
    comps
}

/// Tight boxes around the black regions of a ground-truth render, sorted
/// top-to-bottom then left-to-right.
pub fn extract_boxes(image: &RasterImage, class_id: u32, image_id: &str) -> Result<Vec<Annotation>, GroundTruthError> {
    extract_boxes_with_threshold(image, class_id, image_id, DEFAULT_THRESHOLD)
}

pub fn extract_boxes_with_threshold(
    image: &RasterImage,
    class_id: u32,
    image_id: &str,
    threshold: u8,
) -> Result<Vec<Annotation>, GroundTruthError> {
    let mask = binarize(image, threshold)?;
    let (labels, count) = label(&mask);
    let w = mask.width as usize;
    // (min_x, min_y, max_x, max_y, pixel count)
    let mut stats = vec![(u32::MAX, u32::MAX, 0u32, 0u32, 0usize); count];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (x, y) = ((i % w) as u32, (i / w) as u32);
        let s = &mut stats[l as usize - 1];
        s.0 = s.0.min(x);
        s.1 = s.1.min(y);
        s.2 = s.2.max(x);
        s.3 = s.3.max(y);
        s.4 += 1;
    }
    let mut boxes: Vec<BBox> = stats
        .into_iter()
        .filter(|s| s.4 >= MIN_COMPONENT_PIXELS)
        .map(|(x0, y0, x1, y1, _)| BBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
        .collect();
    boxes.sort_by_key(|b| (b.y, b.x, b.h, b.w));
    Ok(boxes
        .into_iter()
        .map(|bbox| Annotation {
            class_id,
            bbox,
            image_id: image_id.into(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    /// Breadth-first flood fill, independent of the union-find labeler.
    fn flood_fill_components(mask: &Mask) -> Vec<Vec<(u32, u32)>> {
        let (w, h) = (mask.width as i64, mask.height as i64);
        let mut seen = vec![false; mask.bits.len()];
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let i = (y * w + x) as usize;
                if !mask.bits[i] || seen[i] {
                    continue;
                }
                seen[i] = true;
                let mut comp = Vec::new();
                let mut queue = VecDeque::from([(x, y)]);
                while let Some((cx, cy)) = queue.pop_front() {
                    comp.push((cx as u32, cy as u32));
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            let (nx, ny) = (cx + dx, cy + dy);
                            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                                continue;
                            }
                            let j = (ny * w + nx) as usize;
                            if mask.bits[j] && !seen[j] {
                                seen[j] = true;
                                queue.push_back((nx, ny));
                            }
                        }
                    }
                }
                comp.sort_by_key(|&(x, y)| (y, x));
                out.push(comp);
            }
        }
        out
    }

    fn gt_image(w: u32, h: u32, blacks: &[(u32, u32, u32, u32)]) -> RasterImage {
        let mut img = RasterImage::filled(w, h, 1, 0.3, 255);
        for &(x, y, bw, bh) in blacks {
            for yy in y..y + bh {
                for xx in x..x + bw {
                    img.pixel_mut(xx, yy)[0] = 0;
                }
            }
        }
        img
    }

    #[test]
    fn binarize_edges() {
        let white = RasterImage::filled(4, 4, 1, 1.0, 255);
        assert!(binarize(&white, 128).unwrap().bits.iter().all(|b| !b));
        let black = RasterImage::filled(4, 4, 1, 1.0, 0);
        assert!(binarize(&black, 128).unwrap().bits.iter().all(|&b| b));
        let mid = RasterImage::filled(1, 1, 1, 1.0, 128);
        assert!(!binarize(&mid, DEFAULT_THRESHOLD).unwrap().bits[0]);
        let rgb = RasterImage::filled(1, 1, 3, 1.0, 0);
        assert_eq!(binarize(&rgb, 128), Err(GroundTruthError::NotSingleChannel(3)));
    }

    #[test]
    fn disjoint_blocks() {
        let img = gt_image(20, 20, &[(1, 1, 5, 5), (10, 10, 5, 5)]);
        let comps = connected_components(&binarize(&img, 128).unwrap());
        assert_eq!(comps.len(), 2);
        assert!(comps.iter().all(|c| c.pixels.len() == 25));
    }

    #[test]
    fn diagonal_touch_merges() {
        let img = gt_image(20, 20, &[(0, 0, 5, 5), (5, 5, 5, 5)]);
        let mask = binarize(&img, 128).unwrap();
        assert_eq!(flood_fill_components(&mask).len(), 1);
        let comps = connected_components(&mask);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].pixels.len(), 50);
    }

    #[test]
    fn empty_mask() {
        assert!(connected_components(&Mask::new(8, 8)).is_empty());
    }

    #[test]
    fn labels_follow_first_pixel_order() {
        // A "U" whose right arm starts on row 0 before the second blob does.
        let img = gt_image(12, 6, &[(0, 2, 1, 4), (0, 5, 4, 1), (3, 0, 1, 6), (8, 1, 2, 2)]);
        let comps = connected_components(&binarize(&img, 128).unwrap());
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].pixels[0], (3, 0));
        assert_eq!(comps[1].pixels[0], (8, 1));
    }

    #[test]
    fn exact_block_box() {
        let img = gt_image(200, 200, &[(100, 100, 10, 10)]);
        let anns = extract_boxes(&img, 3, "img").unwrap();
        assert_eq!(anns.len(), 1);
        assert_eq!(anns[0].bbox, BBox::new(100, 100, 10, 10));
        assert_eq!(anns[0].class_id, 3);
    }

    #[test]
    fn l_shape_box_matches_min_max_oracle() {
        // Rows 5..=20, cols 7..=30 as an L: vertical bar plus bottom bar.
        let img = gt_image(40, 30, &[(7, 5, 3, 16), (7, 18, 24, 3)]);
        let mask = binarize(&img, 128).unwrap();
        let comp = &flood_fill_components(&mask)[0];
        let min_x = comp.iter().map(|p| p.0).min().unwrap();
        let max_x = comp.iter().map(|p| p.0).max().unwrap();
        let min_y = comp.iter().map(|p| p.1).min().unwrap();
        let max_y = comp.iter().map(|p| p.1).max().unwrap();
        let oracle = BBox::new(min_x, min_y, max_x - min_x + 1, max_y - min_y + 1);
        assert_eq!(oracle, BBox::new(7, 5, 24, 16));
        assert_eq!(extract_boxes(&img, 1, "l").unwrap()[0].bbox, oracle);
    }

    #[test]
    fn specks_are_dropped_and_order_is_y_then_x() {
        let img = gt_image(50, 50, &[(30, 2, 4, 4), (2, 2, 4, 4), (10, 20, 1, 3), (5, 40, 6, 2)]);
        let anns = extract_boxes(&img, 1, "s").unwrap();
        let boxes: Vec<BBox> = anns.iter().map(|a| a.bbox).collect();
        assert_eq!(
            boxes,
            [BBox::new(2, 2, 4, 4), BBox::new(30, 2, 4, 4), BBox::new(5, 40, 6, 2)]
        );
    }

    proptest::proptest! {
        #[test]
        fn labeling_matches_flood_fill(
            w in 1u32..24, h in 1u32..24, seed: u64, density in 0.1f64..0.7
        ) {
            let mut mask = Mask::new(w, h);
            let mut s = seed;
            for b in mask.bits.iter_mut() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                *b = ((s >> 33) as f64 / (1u64 << 31) as f64) < density;
            }
            let ours: Vec<Vec<(u32, u32)>> = connected_components(&mask)
                .into_iter()
                .map(|c| c.pixels)
                .collect();
            proptest::prop_assert_eq!(ours, flood_fill_components(&mask));
        }

        #[test]
        fn boxes_are_tight(w in 4u32..30, h in 4u32..30, seed: u64) {
            let mut img = RasterImage::filled(w, h, 1, 1.0, 255);
            let mut s = seed;
            for v in img.data.iter_mut() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                if (s >> 60) < 5 { *v = 0; }
            }
            let mask = binarize(&img, 128).unwrap();
            for comp in connected_components(&mask) {
                let b = comp.bbox();
                proptest::prop_assert!(comp.pixels.iter().all(|&(x, y)|
                    x >= b.x && x < b.right() && y >= b.y && y < b.bottom()));
                proptest::prop_assert!(comp.pixels.iter().any(|p| p.0 == b.x));
                proptest::prop_assert!(comp.pixels.iter().any(|p| p.0 == b.right() - 1));
                proptest::prop_assert!(comp.pixels.iter().any(|p| p.1 == b.y));
                proptest::prop_assert!(comp.pixels.iter().any(|p| p.1 == b.bottom() - 1));
            }
        }
    }
}
