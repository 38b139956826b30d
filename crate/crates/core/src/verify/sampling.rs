//! Deterministic sample generation over boxed state and input domains.
//!
//! All strategies draw from a counter-seeded ChaCha stream, so a plan with
//! the same seed reproduces the same points bit for bit on every platform.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::VerifyError;

/// Axis-aligned box given by per-dimension bounds. A zero-dimensional box
/// is valid and produces empty coordinate blocks.
#[derive(Debug, Clone, Serialize)]
pub struct BoxRegion {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<BoxRegion, VerifyError> {
        if lo.len() != hi.len() {
            return Err(VerifyError::Plan(format!(
                "box bounds have mismatched lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (&a, &b)) in lo.iter().zip(&hi).enumerate() {
            if !a.is_finite() || !b.is_finite() || a > b {
                return Err(VerifyError::Plan(format!(
                    "box axis {i} has invalid bounds [{a}, {b}]"
                )));
            }
        }
        Ok(BoxRegion { lo, hi })
    }

    /// The cube `[-radius, radius]^dim`.
    pub fn centered(radius: f64, dim: usize) -> Result<BoxRegion, VerifyError> {
        BoxRegion::new(vec![-radius; dim], vec![radius; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&a, &b))| v >= a && v <= b)
    }

    /// Concatenate two boxes into one over the combined coordinates.
    pub fn concat(&self, other: &BoxRegion) -> BoxRegion {
        let mut lo = self.lo.clone();
        lo.extend_from_slice(&other.lo);
        let mut hi = self.hi.clone();
        hi.extend_from_slice(&other.hi);
        BoxRegion { lo, hi }
    }

    /// Uniform sample written into `out`.
    pub fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.lo[i] + (self.hi[i] - self.lo[i]) * rng.gen::<f64>();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Tensor grid with `floor(samples^(1/d))` points per axis, endpoints
    /// included; emits at most `samples` points.
    UniformGrid,
    /// Latin hypercube: every axis is stratified into `samples` slices and
    /// each slice is hit exactly once.
    LatinHypercube,
    /// Uniform samples, except every second point has one random coordinate
    /// snapped to a box face.
    BoundaryBiased,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::UniformGrid => "uniform-grid",
            Strategy::LatinHypercube => "latin-hypercube",
            Strategy::BoundaryBiased => "boundary-biased",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = VerifyError;

    fn from_str(s: &str) -> Result<Strategy, VerifyError> {
        match s {
            "uniform-grid" => Ok(Strategy::UniformGrid),
            "latin-hypercube" => Ok(Strategy::LatinHypercube),
            "boundary-biased" => Ok(Strategy::BoundaryBiased),
            other => Err(VerifyError::Plan(format!(
                "unknown sampling strategy {other:?}; expected uniform-grid, \
                 latin-hypercube, or boundary-biased"
            ))),
        }
    }
}

/// How to sample the pointwise checks: state boxes for both subsystems, an
/// input cube of radius `u_max`, a sample budget, a strategy, and a seed.
#[derive(Debug, Clone, Serialize)]
pub struct SamplingPlan {
    pub x1_box: BoxRegion,
    pub x2_box: BoxRegion,
    pub u_dim: usize,
    pub u_max: f64,
    pub samples: usize,
    pub strategy: Strategy,
    pub seed: u64,
}

/// Flat buffer of sample points, each of width `dim`.
#[derive(Debug, Clone)]
pub struct PointSet {
    dim: usize,
    data: Vec<f64>,
}

impl PointSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }
}

impl SamplingPlan {
    pub fn combined_box(&self) -> Result<BoxRegion, VerifyError> {
        if !(self.u_max >= 0.0) || !self.u_max.is_finite() {
            return Err(VerifyError::Plan(format!(
                "input bound must be finite and nonnegative, got {}",
                self.u_max
            )));
        }
        let u_box = BoxRegion::centered(self.u_max, self.u_dim)?;
        Ok(self.x1_box.concat(&self.x2_box).concat(&u_box))
    }

    /// Generate the sample points for this plan.
    pub fn points(&self) -> Result<PointSet, VerifyError> {
        if self.samples == 0 {
            return Err(VerifyError::Plan("sample budget must be positive".into()));
        }
        let region = self.combined_box()?;
        let dim = region.dim();
        if dim == 0 {
            return Err(VerifyError::Plan("sampling domain has no coordinates".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let data = match self.strategy {
            Strategy::UniformGrid => grid_points(&region, self.samples),
            Strategy::LatinHypercube => latin_hypercube(&region, self.samples, &mut rng),
            Strategy::BoundaryBiased => boundary_biased(&region, self.samples, &mut rng),
        };
        Ok(PointSet { dim, data })
    }
}

fn grid_points(region: &BoxRegion, samples: usize) -> Vec<f64> {
    let d = region.dim();
    let per_axis = ((samples as f64).powf(1.0 / d as f64).floor() as usize).max(2);
    let mut data = Vec::with_capacity(per_axis.pow(d as u32) * d);
    let mut index = vec![0usize; d];
    loop {
        for axis in 0..d {
            let t = index[axis] as f64 / (per_axis - 1) as f64;
            data.push(region.lo[axis] + t * (region.hi[axis] - region.lo[axis]));
        }
        // odometer increment
        let mut axis = d;
        loop {
            if axis == 0 {
                return data;
            }
            axis -= 1;
            index[axis] += 1;
            if index[axis] < per_axis {
                break;
            }
            index[axis] = 0;
        }
    }
}

fn latin_hypercube(region: &BoxRegion, samples: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = region.dim();
    let mut slices: Vec<Vec<usize>> = Vec::with_capacity(d);
    for _ in 0..d {
        let mut perm: Vec<usize> = (0..samples).collect();
        // Fisher-Yates
        for i in (1..samples).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        slices.push(perm);
    }
    let mut data = Vec::with_capacity(samples * d);
    for i in 0..samples {
        for axis in 0..d {
            let t = (slices[axis][i] as f64 + rng.gen::<f64>()) / samples as f64;
            data.push(region.lo[axis] + t * (region.hi[axis] - region.lo[axis]));
        }
    }
    data
}

fn boundary_biased(region: &BoxRegion, samples: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = region.dim();
    let mut data = Vec::with_capacity(samples * d);
    let mut point = vec![0.0; d];
    for i in 0..samples {
        region.sample_into(rng, &mut point);
        if i % 2 == 1 {
            let axis = rng.gen_range(0..d);
            point[axis] = if rng.gen::<bool>() {
                region.hi[axis]
            } else {
                region.lo[axis]
            };
        }
        data.extend_from_slice(&point);
    }
    data
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(strategy: Strategy) -> SamplingPlan {
        SamplingPlan {
            x1_box: BoxRegion::new(vec![-5.0], vec![5.0]).unwrap(),
            x2_box: BoxRegion::new(vec![-5.0], vec![5.0]).unwrap(),
            u_dim: 2,
            u_max: 1.0,
            samples: 200,
            strategy,
            seed: 7,
        }
    }

    #[test]
    fn boxes_validate_bounds() {
        assert!(BoxRegion::new(vec![0.0], vec![-1.0]).is_err());
        assert!(BoxRegion::new(vec![0.0], vec![1.0, 2.0]).is_err());
        assert!(BoxRegion::new(vec![f64::NAN], vec![1.0]).is_err());
        let b = BoxRegion::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert!(b.contains(&[0.0, 1.0]));
        assert!(!b.contains(&[0.0, 3.0]));
    }

    #[test]
    fn latin_hypercube_hits_every_slice_once() {
        let pts = plan(Strategy::LatinHypercube).points().unwrap();
        assert_eq!(pts.len(), 200);
        assert_eq!(pts.dim(), 4);
        // Axis 0 spans [-5, 5]; count occupied slices.
        let mut seen = vec![false; 200];
        for p in pts.iter() {
            let t = (p[0] + 5.0) / 10.0;
            let slice = ((t * 200.0) as usize).min(199);
            assert!(!seen[slice], "slice {slice} hit twice");
            seen[slice] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn grid_emits_full_tensor_grid_within_budget() {
        let pts = plan(Strategy::UniformGrid).points().unwrap();
        // floor(200^(1/4)) = 3 points per axis.
        assert_eq!(pts.len(), 81);
        let corner = pts.point(0);
        assert_eq!(corner, &[-5.0, -5.0, -1.0, -1.0]);
        let last = pts.point(80);
        assert_eq!(last, &[5.0, 5.0, 1.0, 1.0]);
    }

    #[test]
    fn boundary_bias_snaps_alternate_points() {
        let pts = plan(Strategy::BoundaryBiased).points().unwrap();
        let mut snapped = 0;
        for p in pts.iter() {
            let on_face = p[0].abs() == 5.0
                || p[1].abs() == 5.0
                || p[2].abs() == 1.0
                || p[3].abs() == 1.0;
            if on_face {
                snapped += 1;
            }
        }
        assert!(snapped >= 100, "only {snapped} points touched a face");
    }

    #[test]
    fn same_seed_reproduces_points_exactly() {
        let a = plan(Strategy::LatinHypercube).points().unwrap();
        let b = plan(Strategy::LatinHypercube).points().unwrap();
        for (x, y) in a.raw().iter().zip(b.raw()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let mut different = plan(Strategy::LatinHypercube);
        different.seed = 8;
        let c = different.points().unwrap();
        assert!(a.raw().iter().zip(c.raw()).any(|(x, y)| x != y));
    }
}
