//! Probabilistic occupancy fields: maps from workspace points to the
//! probability of being free.
//!
//! Two backends are provided. [`AnalyticField`] evaluates a synthetic scene
//! whose occupancy decays linearly away from each obstacle surface.
//! [`RasterField`] stores per-cell probabilities, e.g. the fused output of a
//! segmentation ensemble lifted to 3D.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Obstacle, Shape, Uncertainty, Vec3};

#[derive(Debug, Error)]
pub enum OccupancyError {
    #[error("raster dims must be positive, got {0:?}")]
    InvalidDims([usize; 3]),
    #[error("cell size must be positive and finite, got {0}")]
    InvalidCellSize(f64),
    #[error("expected {expected} cell values, got {got}")]
    ValueCount { expected: usize, got: usize },
    #[error("cell value {value} at index {index} is outside [0, 1]")]
    ValueRange { index: usize, value: f32 },
    #[error("raster grids differ: {0}")]
    DimMismatch(String),
    #[error("prediction stack is empty")]
    EmptyStack,
    #[error("obstacle {0} carries no d_stop; the analytic field needs linear-decay obstacles")]
    MissingDStop(usize),
    #[error("malformed raster file: {0}")]
    Format(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        (0..3).all(|i| x[i] >= self.min[i] && x[i] <= self.max[i])
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn volume(&self) -> f64 {
        self.extent().iter().product()
    }
}

/// Result of a field query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub p_free: f64,
    /// The point was outside the field's extent and got the backend default.
    pub outside: bool,
}

pub trait OccupancyField: Send + Sync {
    fn bounds(&self) -> Aabb;

    fn sample(&self, x: &Vec3) -> FieldSample;

    fn p_free(&self, x: &Vec3) -> f64 {
        self.sample(x).p_free
    }
}

impl<T: OccupancyField + ?Sized> OccupancyField for std::sync::Arc<T> {
    fn bounds(&self) -> Aabb {
        (**self).bounds()
    }
    fn sample(&self, x: &Vec3) -> FieldSample {
        (**self).sample(x)
    }
    fn p_free(&self, x: &Vec3) -> f64 {
        (**self).p_free(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct DecayObstacle {
    shape: Shape,
    d_stop: f64,
}

impl DecayObstacle {
    fn p_occ(&self, x: &Vec3) -> f64 {
        let d = self.shape.signed_distance(x);
        if d <= 0.0 {
            1.0
        } else if d >= self.d_stop {
            0.0
        } else {
            1.0 - d / self.d_stop
        }
    }
}

/// Synthetic scene field. Per obstacle the occupancy probability is 1 inside
/// and `max(0, 1 - d / d_stop)` outside; obstacles combine as independent
/// events, so `p_free = prod_i (1 - p_occ_i)`. Points outside the workspace
/// are free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticField {
    obstacles: Vec<DecayObstacle>,
    bounds: Aabb,
}

impl AnalyticField {
    pub fn new(obstacles: &[Obstacle], bounds: Aabb) -> Result<Self, OccupancyError> {
        let obstacles = obstacles
            .iter()
            .enumerate()
            .map(|(i, o)| match o.uncertainty {
                Uncertainty::DStop(d_stop) => Ok(DecayObstacle {
                    shape: o.shape,
                    d_stop,
                }),
                Uncertainty::Sigma(_) => Err(OccupancyError::MissingDStop(i)),
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { obstacles, bounds })
    }

    pub fn len(&self) -> usize {
        self.obstacles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }

    /// Rasterizes the field at cell centers over its bounds. Each obstacle only
    /// touches cells inside its influence box.
    pub fn rasterize(&self, cell_size: f64) -> Result<RasterField, OccupancyError> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(OccupancyError::InvalidCellSize(cell_size));
        }
        let ext = self.bounds.extent();
        let dims = [0, 1, 2].map(|i| ((ext[i] / cell_size).ceil() as usize).max(1));
        let origin = self.bounds.min;
        let mut values = vec![1.0f64; dims[0] * dims[1] * dims[2]];
        let slab = dims[0] * dims[1];
        for o in &self.obstacles {
            let (lo, hi) = o.shape.aabb(o.d_stop);
            let range = |i: usize| {
                let a = ((lo[i] - origin[i]) / cell_size - 0.5).floor().max(0.0) as usize;
                let b = ((hi[i] - origin[i]) / cell_size - 0.5).ceil().max(0.0) as usize;
                (a.min(dims[i]), (b + 1).min(dims[i]))
            };
            let (rx, ry, rz) = (range(0), range(1), range(2));
            values[rz.0 * slab..rz.1 * slab]
                .par_chunks_mut(slab)
                .enumerate()
                .for_each(|(dk, plane)| {
                    let k = rz.0 + dk;
                    for j in ry.0..ry.1 {
                        for i in rx.0..rx.1 {
                            let c = origin
                                + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5)
                                    * cell_size;
                            plane[j * dims[0] + i] *= 1.0 - o.p_occ(&c);
                        }
                    }
                });
        }
        RasterField::new(
            origin,
            cell_size,
            dims,
            values.into_iter().map(|v| v as f32).collect(),
        )
    }
}

impl OccupancyField for AnalyticField {
    fn bounds(&self) -> Aabb {
        self.bounds
    }

    fn sample(&self, x: &Vec3) -> FieldSample {
        if !self.bounds.contains(x) {
            return FieldSample {
                p_free: 1.0,
                outside: true,
            };
        }
        let mut p_free = 1.0;
        for o in &self.obstacles {
            p_free *= 1.0 - o.p_occ(x);
            if p_free == 0.0 {
                break;
            }
        }
        FieldSample {
            p_free,
            outside: false,
        }
    }
}

pub fn analytic_query(field: &AnalyticField, x: &Vec3) -> FieldSample {
    field.sample(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Nearest,
    #[default]
    Trilinear,
}

/// Dense per-cell free-space probabilities. Cell `(i, j, k)` covers
/// `origin + [i, i+1) * cell_size` (likewise for y, z) and its value is
/// attributed to the cell center. Storage is x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterField {
    origin: Vec3,
    cell_size: f64,
    dims: [usize; 3],
    values: Vec<f32>,
    pub mode: Interpolation,
    /// Returned outside the raster extent; occupied unless configured.
    pub outside_value: f64,
}

impl RasterField {
    pub fn new(
        origin: Vec3,
        cell_size: f64,
        dims: [usize; 3],
        values: Vec<f32>,
    ) -> Result<Self, OccupancyError> {
        if dims.iter().any(|&d| d == 0) {
            return Err(OccupancyError::InvalidDims(dims));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(OccupancyError::InvalidCellSize(cell_size));
        }
        let expected = dims.iter().product();
        if values.len() != expected {
            return Err(OccupancyError::ValueCount {
                expected,
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(OccupancyError::ValueRange { index, value });
        }
        Ok(Self {
            origin,
            cell_size,
            dims,
            values,
            mode: Interpolation::Trilinear,
            outside_value: 0.0,
        })
    }

    pub fn constant(origin: Vec3, cell_size: f64, dims: [usize; 3], value: f32) -> Result<Self, OccupancyError> {
        Self::new(origin, cell_size, dims, vec![value; dims.iter().product()])
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(
        origin: Vec3,
        cell_size: f64,
        dims: [usize; 3],
        f: impl Fn(&Vec3) -> f64 + Sync,
    ) -> Result<Self, OccupancyError> {
        let n = dims.iter().product::<usize>();
        let values = (0..n)
            .into_par_iter()
            .map(|idx| {
                let i = idx % dims[0];
                let j = (idx / dims[0]) % dims[1];
                let k = idx / (dims[0] * dims[1]);
                let c = origin + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * cell_size;
                f(&c).clamp(0.0, 1.0) as f32
            })
            .collect();
        Self::new(origin, cell_size, dims, values)
    }

    /// Lifts a 2D raster (x-fastest, `dims2[0] * dims2[1]` values) to 3D by
    /// assigning each column's value to every layer whose center lies at most
    /// `obstacle_height` above `origin.z`; higher layers are free.
    pub fn extrude_2d(
        values2d: &[f32],
        dims2: [usize; 2],
        origin: Vec3,
        cell_size: f64,
        nz: usize,
        obstacle_height: f64,
    ) -> Result<Self, OccupancyError> {
        if values2d.len() != dims2[0] * dims2[1] {
            return Err(OccupancyError::ValueCount {
                expected: dims2[0] * dims2[1],
                got: values2d.len(),
            });
        }
        let mut values = Vec::with_capacity(values2d.len() * nz);
        for k in 0..nz {
            let zc = (k as f64 + 0.5) * cell_size;
            if zc <= obstacle_height {
                values.extend_from_slice(values2d);
            } else {
                values.extend(std::iter::repeat(1.0f32).take(values2d.len()));
            }
        }
        Self::new(origin, cell_size, [dims2[0], dims2[1], nz], values)
    }

    /// Grows occupied regions by `length` along `toward` (e.g. toward the
    /// camera, to absorb depth error): each cell takes the minimum free
    /// probability found within `length` behind it.
    pub fn dilate_along(&self, toward: Vec3, length: f64) -> Self {
        let dir = toward.try_normalize(1e-12).unwrap_or_else(Vec3::zeros);
        let steps = (2.0 * length / self.cell_size).ceil().max(0.0) as usize;
        let mut out = self.clone();
        out.values = (0..self.values.len())
            .into_par_iter()
            .map(|idx| {
                let c = self.cell_center(idx);
                let mut v = self.values[idx];
                for s in 1..=steps {
                    let t = length * s as f64 / steps as f64;
                    let q = c - dir * t;
                    if let Some(n) = self.nearest_index(&q) {
                        v = v.min(self.values[n]);
                    }
                }
                v
            })
            .collect();
        out
    }

    pub fn with_mode(mut self, mode: Interpolation) -> Self {
        self.mode = mode;
        self
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    fn same_grid(&self, other: &RasterField) -> bool {
        self.dims == other.dims && self.origin == other.origin && self.cell_size == other.cell_size
    }

    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    fn cell_center(&self, idx: usize) -> Vec3 {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        self.origin + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.cell_size
    }

    fn nearest_index(&self, x: &Vec3) -> Option<usize> {
        let mut ijk = [0usize; 3];
        for a in 0..3 {
            let u = (x[a] - self.origin[a]) / self.cell_size;
            if !(u >= 0.0 && u <= self.dims[a] as f64) {
                return None;
            }
            ijk[a] = (u as usize).min(self.dims[a] - 1);
        }
        Some(self.index(ijk[0], ijk[1], ijk[2]))
    }

    fn trilinear(&self, x: &Vec3) -> Option<f64> {
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let u = (x[a] - self.origin[a]) / self.cell_size;
            if !(u >= 0.0 && u <= self.dims[a] as f64) {
                return None;
            }
            if self.dims[a] == 1 {
                continue;
            }
            let c = (u - 0.5).clamp(0.0, (self.dims[a] - 1) as f64);
            let i0 = (c.floor() as usize).min(self.dims[a] - 2);
            base[a] = i0;
            frac[a] = c - i0 as f64;
        }
        let step = |a: usize| usize::from(self.dims[a] > 1);
        let mut acc = 0.0;
        for dk in 0..=step(2) {
            let wz = if dk == 0 { 1.0 - frac[2] } else { frac[2] };
            for dj in 0..=step(1) {
                let wy = if dj == 0 { 1.0 - frac[1] } else { frac[1] };
                for di in 0..=step(0) {
                    let wx = if di == 0 { 1.0 - frac[0] } else { frac[0] };
                    let v = self.values[self.index(base[0] + di, base[1] + dj, base[2] + dk)];
                    acc += wx * wy * wz * v as f64;
                }
            }
        }
        Some(acc)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(RASTER_MAGIC)?;
        w.write_all(&RASTER_VERSION.to_le_bytes())?;
        w.write_all(&ENCODING_F32_LE.to_le_bytes())?;
        for d in self.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for c in self.origin.iter() {
            w.write_all(&c.to_le_bytes())?;
        }
        w.write_all(&self.cell_size.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, OccupancyError> {
        let mut header = [0u8; RASTER_HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|_| OccupancyError::Format("truncated header".into()))?;
        if &header[..8] != RASTER_MAGIC {
            return Err(OccupancyError::Format("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
        if u32_at(8) != RASTER_VERSION {
            return Err(OccupancyError::Format(format!("unsupported version {}", u32_at(8))));
        }
        if u32_at(12) != ENCODING_F32_LE {
            return Err(OccupancyError::Format(format!("unsupported encoding {}", u32_at(12))));
        }
        let dims = [u64_at(16) as usize, u64_at(24) as usize, u64_at(32) as usize];
        let origin = Vec3::new(f64_at(40), f64_at(48), f64_at(56));
        let cell_size = f64_at(64);
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| OccupancyError::Format("dims overflow".into()))?;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != n * 4 {
            return Err(OccupancyError::ValueCount {
                expected: n,
                got: body.len() / 4,
            });
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(origin, cell_size, dims, values)
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# occupancy raster v{RASTER_VERSION}")?;
        writeln!(w, "dims {} {} {}", self.dims[0], self.dims[1], self.dims[2])?;
        writeln!(w, "origin {} {} {}", self.origin.x, self.origin.y, self.origin.z)?;
        writeln!(w, "cell_size {}", self.cell_size)?;
        writeln!(w, "values")?;
        for row in self.values.chunks(self.dims[0]) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text(text: &str) -> Result<Self, OccupancyError> {
        let mut dims = None;
        let mut origin = None;
        let mut cell_size = None;
        let mut values = Vec::new();
        let mut in_values = false;
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |msg: String| OccupancyError::Parse { line, msg };
            if in_values {
                for tok in content.split_whitespace() {
                    values.push(tok.parse::<f32>().map_err(|e| err(format!("{tok}: {e}")))?);
                }
                continue;
            }
            let mut toks = content.split_whitespace();
            let key = toks.next().unwrap();
            let rest: Vec<&str> = toks.collect();
            match key {
                "dims" => {
                    let d: Vec<usize> = rest
                        .iter()
                        .map(|t| t.parse().map_err(|e| err(format!("dims: {e}"))))
                        .collect::<Result<_, _>>()?;
                    if d.len() != 3 {
                        return Err(err("dims needs three integers".into()));
                    }
                    dims = Some([d[0], d[1], d[2]]);
                }
                "origin" => {
                    let o: Vec<f64> = rest
                        .iter()
                        .map(|t| t.parse().map_err(|e| err(format!("origin: {e}"))))
                        .collect::<Result<_, _>>()?;
                    if o.len() != 3 {
                        return Err(err("origin needs three numbers".into()));
                    }
                    origin = Some(Vec3::new(o[0], o[1], o[2]));
                }
                "cell_size" => {
                    let v = rest
                        .first()
                        .ok_or_else(|| err("cell_size needs a value".into()))?;
                    cell_size = Some(v.parse::<f64>().map_err(|e| err(format!("cell_size: {e}")))?);
                }
                "values" => in_values = true,
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        let missing = |k: &str| OccupancyError::Format(format!("missing `{k}`"));
        Self::new(
            origin.ok_or_else(|| missing("origin"))?,
            cell_size.ok_or_else(|| missing("cell_size"))?,
            dims.ok_or_else(|| missing("dims"))?,
            values,
        )
    }

    /// Reads either encoding, detected from the leading bytes.
    pub fn load(path: &Path) -> Result<Self, OccupancyError> {
        let bytes = fs::read(path)?;
        if bytes.starts_with(RASTER_MAGIC) {
            Self::read_binary(&bytes[..])
        } else {
            let text = String::from_utf8(bytes)
                .map_err(|_| OccupancyError::Format("neither binary raster nor UTF-8 text".into()))?;
            Self::read_text(&text)
        }
    }
}

/// Binary layout, all little-endian:
///
/// | offset | type     | field                       |
/// |--------|----------|-----------------------------|
/// | 0      | [u8; 8]  | magic `OCCRAST\0`           |
/// | 8      | u32      | version (1)                 |
/// | 12     | u32      | encoding (0 = f32 LE)       |
/// | 16     | u64 x 3  | nx, ny, nz                  |
/// | 40     | f64 x 3  | origin (min corner) [m]     |
/// | 64     | f64      | cell size [m]               |
/// | 72     | f32 x N  | p_free per cell, x fastest  |
pub const RASTER_MAGIC: &[u8; 8] = b"OCCRAST\0";
pub const RASTER_VERSION: u32 = 1;
pub const ENCODING_F32_LE: u32 = 0;
pub const RASTER_HEADER_LEN: usize = 72;

impl OccupancyField for RasterField {
    fn bounds(&self) -> Aabb {
        let ext = Vec3::new(
            self.dims[0] as f64,
            self.dims[1] as f64,
            self.dims[2] as f64,
        ) * self.cell_size;
        Aabb::new(self.origin, self.origin + ext)
    }

    fn sample(&self, x: &Vec3) -> FieldSample {
        let v = match self.mode {
            Interpolation::Nearest => self.nearest_index(x).map(|i| self.values[i] as f64),
            Interpolation::Trilinear => self.trilinear(x),
        };
        match v {
            Some(p_free) => FieldSample {
                p_free,
                outside: false,
            },
            None => FieldSample {
                p_free: self.outside_value,
                outside: true,
            },
        }
    }
}

pub fn raster_query(field: &RasterField, x: &Vec3, mode: Interpolation) -> FieldSample {
    if field.mode == mode {
        field.sample(x)
    } else {
        let mut f = field.clone();
        f.mode = mode;
        f.sample(x)
    }
}

/// Per-cell predictions of `M` ensemble members on a shared grid.
#[derive(Debug, Clone)]
pub struct PredictionStack {
    members: Vec<RasterField>,
}

impl PredictionStack {
    pub fn new(members: Vec<RasterField>) -> Result<Self, OccupancyError> {
        let first = members.first().ok_or(OccupancyError::EmptyStack)?;
        if let Some((m, _)) = members
            .iter()
            .enumerate()
            .find(|(_, r)| !first.same_grid(r))
        {
            return Err(OccupancyError::DimMismatch(format!(
                "member {m} has dims {:?}, member 0 has {:?}",
                members[m].dims, first.dims
            )));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[RasterField] {
        &self.members
    }
}

/// Uniformly weighted mixture of the members: the per-cell mean.
pub fn ensemble_fuse(stack: &PredictionStack) -> RasterField {
    let first = &stack.members[0];
    let m = stack.members.len() as f64;
    let values = (0..first.values.len())
        .map(|i| {
            let s: f64 = stack.members.iter().map(|r| r.values[i] as f64).sum();
            (s / m).clamp(0.0, 1.0) as f32
        })
        .collect();
    RasterField {
        values,
        ..first.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit_bounds() -> Aabb {
        Aabb::new(Vec3::repeat(-2.0), Vec3::repeat(2.0))
    }

    fn one_sphere(d_stop: f64) -> AnalyticField {
        let o = Obstacle::new(
            Shape::sphere(Vec3::zeros(), 0.2).unwrap(),
            Uncertainty::DStop(d_stop),
        )
        .unwrap();
        AnalyticField::new(&[o], unit_bounds()).unwrap()
    }

    #[test]
    fn analytic_examples() {
        let f = one_sphere(0.1);
        assert_abs_diff_eq!(f.p_free(&Vec3::new(0.25, 0.0, 0.0)), 0.5, epsilon = 1e-12);
        assert_eq!(f.p_free(&Vec3::new(0.1, 0.0, 0.0)), 0.0);
        assert_eq!(f.p_free(&Vec3::new(0.5, 0.0, 0.0)), 1.0);
        let s = f.sample(&Vec3::new(5.0, 0.0, 0.0));
        assert!(s.outside);
        assert_eq!(s.p_free, 1.0);
    }

    #[test]
    fn analytic_rejects_gaussian_obstacles() {
        let o = Obstacle::new(
            Shape::sphere(Vec3::zeros(), 0.2).unwrap(),
            Uncertainty::Sigma(0.1),
        )
        .unwrap();
        assert!(matches!(
            AnalyticField::new(&[o], unit_bounds()),
            Err(OccupancyError::MissingDStop(0))
        ));
    }

    #[test]
    fn overlapping_obstacles_multiply_survival() {
        let a = Obstacle::new(Shape::sphere(Vec3::new(-0.3, 0.0, 0.0), 0.2).unwrap(), Uncertainty::DStop(0.2)).unwrap();
        let b = Obstacle::new(Shape::sphere(Vec3::new(0.3, 0.0, 0.0), 0.2).unwrap(), Uncertainty::DStop(0.2)).unwrap();
        let f = AnalyticField::new(&[a, b], unit_bounds()).unwrap();
        // 0.1 from each surface: each survival 0.5
        assert_abs_diff_eq!(f.p_free(&Vec3::zeros()), 0.25, epsilon = 1e-12);
        let g = AnalyticField::new(&[b, a], unit_bounds()).unwrap();
        assert_eq!(f.p_free(&Vec3::new(0.01, 0.05, 0.0)), g.p_free(&Vec3::new(0.01, 0.05, 0.0)));
    }

    #[test]
    fn threshold_surface_sits_at_095_dstop() {
        let f = one_sphere(0.1);
        let delta = 0.05;
        for k in 0..200 {
            let d = k as f64 * 1e-3;
            let x = Vec3::new(0.2 + d, 0.0, 0.0);
            let safe = f.p_free(&x) >= 1.0 - delta;
            if d < 0.095 - 1e-9 {
                assert!(!safe, "d={d}");
            } else if d > 0.095 + 1e-9 {
                assert!(safe, "d={d}");
            }
        }
    }

    #[test]
    fn raster_examples() {
        let r = RasterField::new(Vec3::zeros(), 1.0, [2, 1, 1], vec![0.0, 1.0]).unwrap();
        assert_eq!(raster_query(&r, &Vec3::new(0.5, 0.5, 0.5), Interpolation::Nearest).p_free, 0.0);
        assert_eq!(raster_query(&r, &Vec3::new(1.5, 0.5, 0.5), Interpolation::Trilinear).p_free, 1.0);
        assert_abs_diff_eq!(
            raster_query(&r, &Vec3::new(1.0, 0.5, 0.5), Interpolation::Trilinear).p_free,
            0.5,
            epsilon = 1e-12
        );
        let out = r.sample(&Vec3::new(3.0, 0.5, 0.5));
        assert!(out.outside);
        assert_eq!(out.p_free, 0.0);

        let c = RasterField::constant(Vec3::new(-1.0, -1.0, -1.0), 0.1, [20, 20, 20], 0.7).unwrap();
        for x in [Vec3::zeros(), Vec3::new(0.93, -0.41, 0.05), Vec3::new(-1.0, -1.0, -1.0)] {
            for mode in [Interpolation::Nearest, Interpolation::Trilinear] {
                assert_abs_diff_eq!(raster_query(&c, &x, mode).p_free, 0.7, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn raster_validation() {
        assert!(RasterField::new(Vec3::zeros(), 1.0, [0, 1, 1], vec![]).is_err());
        assert!(RasterField::new(Vec3::zeros(), 0.0, [1, 1, 1], vec![0.5]).is_err());
        assert!(RasterField::new(Vec3::zeros(), 1.0, [1, 1, 1], vec![1.5]).is_err());
        assert!(RasterField::new(Vec3::zeros(), 1.0, [2, 1, 1], vec![0.5]).is_err());
    }

    #[test]
    fn rasterized_field_matches_cell_centers() {
        let f = one_sphere(0.1);
        let r = f.rasterize(0.05).unwrap().with_mode(Interpolation::Nearest);
        let direct = RasterField::from_fn(r.origin(), 0.05, r.dims(), |x| f.p_free(x)).unwrap();
        for (a, b) in r.values().iter().zip(direct.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn extrusion_and_dilation() {
        let r = RasterField::extrude_2d(&[1.0, 0.0, 1.0], [3, 1], Vec3::zeros(), 1.0, 3, 1.5).unwrap();
        assert_eq!(r.dims(), [3, 1, 3]);
        assert_eq!(r.values()[1], 0.0);
        assert_eq!(r.values()[4], 0.0);
        // third layer center at 2.5 > 1.5
        assert_eq!(r.values()[7], 1.0);

        let d = r.dilate_along(Vec3::new(1.0, 0.0, 0.0), 1.0);
        // the obstacle column grows by one cell toward +x
        assert_eq!(&d.values()[0..3], &[1.0, 0.0, 0.0]);
        assert_eq!(&d.values()[6..9], &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn fusion_examples() {
        let grid = |v: f32| RasterField::constant(Vec3::zeros(), 1.0, [1, 1, 1], v).unwrap();
        let fused = ensemble_fuse(&PredictionStack::new(vec![grid(0.2), grid(0.8)]).unwrap());
        assert_abs_diff_eq!(fused.values()[0], 0.5, epsilon = 1e-7);
        let single = grid(0.3);
        assert_eq!(ensemble_fuse(&PredictionStack::new(vec![single.clone()]).unwrap()), single);
        let five = [0.0, 0.25, 0.5, 0.75, 1.0].map(grid).to_vec();
        assert_abs_diff_eq!(
            ensemble_fuse(&PredictionStack::new(five).unwrap()).values()[0],
            0.5,
            epsilon = 1e-7
        );
        let other = RasterField::constant(Vec3::zeros(), 1.0, [2, 1, 1], 0.5).unwrap();
        assert!(matches!(
            PredictionStack::new(vec![grid(0.1), other]),
            Err(OccupancyError::DimMismatch(_))
        ));
        assert!(matches!(PredictionStack::new(vec![]), Err(OccupancyError::EmptyStack)));
    }

    #[test]
    fn file_roundtrips() {
        let f = one_sphere(0.1);
        let r = f.rasterize(0.2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("r.bin");
        r.write_binary(fs::File::create(&bin).unwrap()).unwrap();
        assert_eq!(fs::metadata(&bin).unwrap().len() as usize, RASTER_HEADER_LEN + 4 * r.values().len());
        assert_eq!(RasterField::load(&bin).unwrap(), r);
        let txt = dir.path().join("r.txt");
        r.write_text(fs::File::create(&txt).unwrap()).unwrap();
        assert_eq!(RasterField::load(&txt).unwrap(), r);
    }

    #[test]
    fn text_parse_errors_carry_line() {
        let bad = "dims 1 1 1\norigin 0 0 0\ncell_size abc\nvalues\n0.5\n";
        match RasterField::read_text(bad) {
            Err(OccupancyError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(RasterField::read_text("dims 1 1 1\nvalues\n0.5").is_err());
        assert!(RasterField::read_binary(&b"NOTARASTER"[..]).is_err());
    }

    proptest! {
        #[test]
        fn analytic_monotone_along_rays(theta in 0.0..std::f64::consts::PI, psi in 0.0..6.28f64, d_stop in 0.01..0.5f64) {
            let f = one_sphere(d_stop);
            let dir = Vec3::new(theta.sin() * psi.cos(), theta.sin() * psi.sin(), theta.cos());
            let mut prev = 0.0;
            for k in 0..100 {
                let p = f.p_free(&(dir * (0.2 + k as f64 * 0.01)));
                prop_assert!(p >= prev);
                prop_assert!((0.0..=1.0).contains(&p));
                prev = p;
            }
        }

        #[test]
        fn threshold_equivalence(d_stop in 0.01..0.5f64, delta in 0.01..0.99f64, d in 0.0..1.0f64) {
            let f = one_sphere(d_stop);
            let safe = f.p_free(&Vec3::new(0.2 + d, 0.0, 0.0)) >= 1.0 - delta;
            let by_distance = d >= (1.0 - delta) * d_stop;
            if (d - (1.0 - delta) * d_stop).abs() > 1e-9 {
                prop_assert_eq!(safe, by_distance);
            }
        }

        #[test]
        fn fusion_is_bounded(vals in proptest::collection::vec(proptest::collection::vec(0.0f32..=1.0, 8), 1..6)) {
            let members: Vec<_> = vals
                .iter()
                .map(|v| RasterField::new(Vec3::zeros(), 1.0, [2, 2, 2], v.clone()).unwrap())
                .collect();
            let fused = ensemble_fuse(&PredictionStack::new(members).unwrap());
            for i in 0..8 {
                let lo = vals.iter().map(|v| v[i]).fold(f32::INFINITY, f32::min);
                let hi = vals.iter().map(|v| v[i]).fold(f32::NEG_INFINITY, f32::max);
                prop_assert!(fused.values()[i] >= lo - 1e-6 && fused.values()[i] <= hi + 1e-6);
            }
        }

        #[test]
        fn trilinear_is_lipschitz(vals in proptest::collection::vec(0.0f32..=1.0, 27),
                                  x in 0.0..0.6f64, y in 0.0..0.6f64, z in 0.0..0.6f64,
                                  e in proptest::collection::vec(-0.01..0.01f64, 3)) {
            let h = 0.2;
            let r = RasterField::new(Vec3::zeros(), h, [3, 3, 3], vals).unwrap();
            let a = Vec3::new(x, y, z);
            let b = (a + Vec3::new(e[0], e[1], e[2])).map(|c| c.clamp(0.0, 0.6));
            let pa = r.p_free(&a);
            let pb = r.p_free(&b);
            prop_assert!((0.0..=1.0).contains(&pa));
            prop_assert!((pa - pb).abs() <= 3f64.sqrt() * (a - b).norm() / h + 1e-9);
        }
    }
}
