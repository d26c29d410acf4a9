//! Dense sliding-window sampling and reassembly of patch predictions.

use std::collections::HashSet;

use ndarray::{s, Array3, Array4};

use super::{check_fits, extract_patch, Patch, PatchLocation};
use crate::error::{Error, Result};
use crate::image::Subject;

/// Sorted origins along one axis: stride `patch - overlap` from 0, with the
/// last one clamped so the patch ends at the volume edge.
fn axis_origins(n: usize, patch: usize, overlap: usize) -> Vec<usize> {
    let stride = patch - overlap;
    let last = n - patch;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

fn check_overlap(patch: [usize; 3], overlap: [usize; 3]) -> Result<()> {
    if (0..3).any(|a| overlap[a] >= patch[a]) {
        return Err(Error::InvalidParameter(format!(
            "overlap {overlap:?} must be smaller than the patch {patch:?}"
        )));
    }
    Ok(())
}

/// Every grid location, in x-major order.
pub fn grid_locations(shape: [usize; 3], patch: [usize; 3], overlap: [usize; 3]) -> Result<Vec<PatchLocation>> {
    check_fits(shape, patch)?;
    check_overlap(patch, overlap)?;
    let o = [0, 1, 2].map(|a| axis_origins(shape[a], patch[a], overlap[a]));
    let mut out = Vec::with_capacity(o[0].len() * o[1].len() * o[2].len());
    for &x in &o[0] {
        for &y in &o[1] {
            for &z in &o[2] {
                out.push(PatchLocation {
                    origin: [x, y, z],
                    size: patch,
                });
            }
        }
    }
    Ok(out)
}

/// Iterates the grid patches of one subject.
pub struct GridSampler<'a> {
    subject: &'a Subject,
    locations: std::vec::IntoIter<PatchLocation>,
}

impl<'a> GridSampler<'a> {
    pub fn new(subject: &'a Subject, patch: [usize; 3], overlap: [usize; 3]) -> Result<Self> {
        let locations = grid_locations(subject.spatial_shape()?, patch, overlap)?;
        Ok(GridSampler {
            subject,
            locations: locations.into_iter(),
        })
    }
}

impl Iterator for GridSampler<'_> {
    type Item = Result<Patch>;

    fn next(&mut self) -> Option<Self::Item> {
        let location = self.locations.next()?;
        Some(extract_patch(self.subject, &location).map(|subject| Patch {
            subject,
            location,
            subject_index: 0,
        }))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.locations.size_hint()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AggregationMode {
    /// Each patch writes only its central core; every voxel is written once.
    #[default]
    Crop,
    /// Overlapping predictions are averaged.
    Average,
}

/// Rebuilds a volume from per-patch predictions on a grid.
pub struct Aggregator {
    shape: [usize; 3],
    patch: [usize; 3],
    mode: AggregationMode,
    origins: [Vec<usize>; 3],
    /// Per axis, the `[start, end)` core written by each origin in crop mode.
    cores: [Vec<(usize, usize)>; 3],
    sum: Option<Array4<f64>>,
    counts: Array3<u32>,
    received: HashSet<[usize; 3]>,
}

impl Aggregator {
    pub fn new(shape: [usize; 3], patch: [usize; 3], overlap: [usize; 3], mode: AggregationMode) -> Result<Self> {
        check_fits(shape, patch)?;
        check_overlap(patch, overlap)?;
        if mode == AggregationMode::Crop && overlap.iter().any(|o| o % 2 == 1) {
            return Err(Error::OddOverlap(overlap));
        }
        let origins = [0, 1, 2].map(|a| axis_origins(shape[a], patch[a], overlap[a]));
        let cores = [0, 1, 2].map(|a| {
            let o = &origins[a];
            (0..o.len())
                .map(|m| {
                    // Neighbouring patches split their shared region at its midpoint.
                    let start = if m == 0 { 0 } else { (o[m] + o[m - 1] + patch[a]) / 2 };
                    let end = if m + 1 == o.len() {
                        shape[a]
                    } else {
                        (o[m + 1] + o[m] + patch[a]) / 2
                    };
                    (start, end)
                })
                .collect()
        });
        Ok(Aggregator {
            shape,
            patch,
            mode,
            origins,
            cores,
            sum: None,
            counts: Array3::zeros((shape[0], shape[1], shape[2])),
            received: HashSet::new(),
        })
    }

    /// Number of grid locations still missing.
    pub fn missing(&self) -> usize {
        self.origins.iter().map(Vec::len).product::<usize>() - self.received.len()
    }

    pub fn add(&mut self, prediction: &Array4<f32>, location: &PatchLocation) -> Result<()> {
        let sh = prediction.shape();
        if location.size != self.patch || [sh[1], sh[2], sh[3]] != self.patch {
            return Err(Error::UnknownLocation(location.origin));
        }
        let mut index = [0usize; 3];
        for a in 0..3 {
            index[a] = self.origins[a]
                .binary_search(&location.origin[a])
                .map_err(|_| Error::UnknownLocation(location.origin))?;
        }
        let (shape, channels) = (self.shape, sh[0]);
        let sum = self
            .sum
            .get_or_insert_with(|| Array4::zeros((channels, shape[0], shape[1], shape[2])));
        if sum.shape()[0] != channels {
            return Err(Error::InvalidParameter("predictions disagree on channel count".into()));
        }
        let o = location.origin;
        let ranges: [(usize, usize); 3] = match self.mode {
            AggregationMode::Crop => [0, 1, 2].map(|a| self.cores[a][index[a]]),
            AggregationMode::Average => [0, 1, 2].map(|a| (o[a], o[a] + self.patch[a])),
        };
        let src = prediction.slice(s![
            ..,
            ranges[0].0 - o[0]..ranges[0].1 - o[0],
            ranges[1].0 - o[1]..ranges[1].1 - o[1],
            ranges[2].0 - o[2]..ranges[2].1 - o[2]
        ]);
        let mut dst = sum.slice_mut(s![
            ..,
            ranges[0].0..ranges[0].1,
            ranges[1].0..ranges[1].1,
            ranges[2].0..ranges[2].1
        ]);
        dst.zip_mut_with(&src, |d, &v| *d += v as f64);
        self.counts
            .slice_mut(s![ranges[0].0..ranges[0].1, ranges[1].0..ranges[1].1, ranges[2].0..ranges[2].1])
            .mapv_inplace(|c| c + 1);
        self.received.insert(o);
        Ok(())
    }

    /// Write count per voxel so far.
    pub fn counts(&self) -> &Array3<u32> {
        &self.counts
    }

    pub fn finalize(self) -> Result<Array4<f32>> {
        let missing = self.missing();
        if missing > 0 {
            return Err(Error::IncompleteCoverage { missing });
        }
        let sum = self.sum.expect("at least one patch was added");
        let mut out = Array4::<f32>::zeros(sum.raw_dim());
        for ((c, i, j, k), v) in out.indexed_iter_mut() {
            let n = self.counts[[i, j, k]];
            *v = if n == 1 {
                sum[[c, i, j, k]] as f32
            } else {
                (sum[[c, i, j, k]] / n as f64) as f32
            };
        }
        Ok(out)
    }
}
