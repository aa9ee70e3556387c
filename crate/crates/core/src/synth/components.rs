//! Connected-component labelling of n-dimensional binary masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::next_coords;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    /// Neighbours share a face: `2d` of them.
    Face,
    /// Neighbours share at least a corner: `3^d - 1` of them.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    /// Row-major linear indices, ascending.
    pub pixels: Vec<usize>,
    pub area: usize,
    /// Mean pixel-index coordinate.
    pub centroid: Vec<f64>,
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        let mut root = i;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while i != root {
            let next = self.parent[i];
            self.parent[i] = root;
            i = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// Neighbour offsets that precede the centre pixel in row-major order, so
/// each adjacent pair is visited once.
fn backward_offsets(dim: usize, connectivity: Connectivity) -> Vec<Vec<isize>> {
    let mut out = Vec::new();
    let span = vec![3usize; dim];
    let mut digits = vec![0usize; dim];
    loop {
        let offset: Vec<isize> = digits.iter().map(|&d| d as isize - 1).collect();
        let nonzero = offset.iter().filter(|&&o| o != 0).count();
        let backward = offset.iter().find(|&&o| o != 0) == Some(&-1);
        let allowed = match connectivity {
            Connectivity::Face => nonzero == 1,
            Connectivity::Full => nonzero >= 1,
        };
        if backward && allowed {
            out.push(offset);
        }
        if !next_coords(&mut digits, &span) {
            break;
        }
    }
    out
}

/// Labels the true pixels of `mask` (row-major over `shape`). Components
/// are ordered by their first pixel.
pub fn connected_components(
    mask: &[bool],
    shape: &[usize],
    connectivity: Connectivity,
) -> Result<Vec<Component>> {
    let len: usize = shape.iter().product();
    if shape.is_empty() || mask.len() != len {
        return Err(Error::domain(format!(
            "mask of {} pixels does not match shape {shape:?}",
            mask.len()
        )));
    }
    let d = shape.len();
    let strides = crate::image::strides_of(shape);
    let offsets = backward_offsets(d, connectivity);
    let mut uf = UnionFind::new(len);

    let mut coords = vec![0usize; d];
    for (i, &on) in mask.iter().enumerate() {
        if on {
            'offsets: for off in &offsets {
                let mut j = i as isize;
                for a in 0..d {
                    let c = coords[a] as isize + off[a];
                    if c < 0 || c >= shape[a] as isize {
                        continue 'offsets;
                    }
                    j += off[a] * strides[a] as isize;
                }
                if mask[j as usize] {
                    uf.union(i, j as usize);
                }
            }
        }
        next_coords(&mut coords, shape);
    }

    let mut slot_of_root = std::collections::HashMap::new();
    let mut components: Vec<Component> = Vec::new();
    let mut coords = vec![0usize; d];
    for (i, &on) in mask.iter().enumerate() {
        if on {
            let root = uf.find(i);
            let slot = *slot_of_root.entry(root).or_insert_with(|| {
                components.push(Component {
                    pixels: Vec::new(),
                    area: 0,
                    centroid: vec![0.0; d],
                });
                components.len() - 1
            });
            let comp = &mut components[slot];
            comp.pixels.push(i);
            comp.area += 1;
            for (c, &x) in comp.centroid.iter_mut().zip(&coords) {
                *c += x as f64;
            }
        }
        next_coords(&mut coords, shape);
    }
    for comp in &mut components {
        let area = comp.area as f64;
        comp.centroid.iter_mut().for_each(|c| *c /= area);
    }
    Ok(components)
}

/// Drops components strictly smaller than `min_area_px`.
pub fn area_filter(components: Vec<Component>, min_area_px: usize) -> Vec<Component> {
    components
        .into_iter()
        .filter(|c| c.area >= min_area_px)
        .collect()
}
