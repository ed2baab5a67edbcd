//! Procedural heightfield with a level flat patch and a value-noise rough patch.
//!
//! Heights live on a uniform X-Z lattice. The rough patch carries multi-octave
//! value noise scaled by `amplitude * roughness_scale`; outside it the noise is
//! faded out with a smoothstep mask so the corridor between patches stays
//! traversable. The flat patch (plus a guard band around it) is exactly the
//! base elevation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Terrain class of a designated area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Terrain {
    Flat,
    Rough,
}

impl Terrain {
    pub fn as_str(self) -> &'static str {
        match self {
            Terrain::Flat => "flat",
            Terrain::Rough => "rough",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Terrain::Flat => 0,
            Terrain::Rough => 1,
        }
    }
}

impl std::str::FromStr for Terrain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(Terrain::Flat),
            "rough" => Ok(Terrain::Rough),
            other => Err(Error::Config(format!("unknown terrain `{other}`"))),
        }
    }
}

impl std::fmt::Display for Terrain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ground-truth location class of a planar point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AreaLabel {
    Flat,
    Rough,
    Neither,
}

impl AreaLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            AreaLabel::Flat => "flat",
            AreaLabel::Rough => "rough",
            AreaLabel::Neither => "neither",
        }
    }

    pub fn terrain(self) -> Option<Terrain> {
        match self {
            AreaLabel::Flat => Some(Terrain::Flat),
            AreaLabel::Rough => Some(Terrain::Rough),
            AreaLabel::Neither => None,
        }
    }
}

impl std::str::FromStr for AreaLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(AreaLabel::Flat),
            "rough" => Ok(AreaLabel::Rough),
            "neither" => Ok(AreaLabel::Neither),
            other => Err(Error::Input(format!("unknown area label `{other}`"))),
        }
    }
}

/// Axis-aligned rectangle on the horizontal X-Z plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaRect {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub label: Terrain,
}

impl AreaRect {
    pub fn new(x_min: f64, x_max: f64, z_min: f64, z_max: f64, label: Terrain) -> Result<Self> {
        let rect = Self { x_min, x_max, z_min, z_max, label };
        rect.validate()?;
        Ok(rect)
    }

    /// The level patch: corners (0.5, 0.5), (0.5, -1.0), (-2.5, -1.0), (-2.5, 0.5).
    pub fn default_flat() -> Self {
        Self { x_min: -2.5, x_max: 0.5, z_min: -1.0, z_max: 0.5, label: Terrain::Flat }
    }

    /// The rough patch: corners (-7.5, 5.0), (-7.5, 1.5), (-9.0, 1.5), (-9.0, 5.0).
    pub fn default_rough() -> Self {
        Self { x_min: -9.0, x_max: -7.5, z_min: 1.5, z_max: 5.0, label: Terrain::Rough }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.z_min, self.z_max].iter().all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.z_min >= self.z_max {
            return Err(Error::Config(format!("degenerate {} rectangle {:?}", self.label, self)));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        x >= self.x_min && x <= self.x_max && z >= self.z_min && z <= self.z_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn depth(&self) -> f64 {
        self.z_max - self.z_min
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.z_min + self.z_max))
    }

    /// Closed rectangles sharing any point count as overlapping.
    pub fn overlaps(&self, other: &AreaRect) -> bool {
        self.x_min <= other.x_max && other.x_min <= self.x_max && self.z_min <= other.z_max && other.z_min <= self.z_max
    }

    /// Euclidean distance from a point to the rectangle (0 inside).
    pub fn distance(&self, x: f64, z: f64) -> f64 {
        let dx = (self.x_min - x).max(0.0).max(x - self.x_max);
        let dz = (self.z_min - z).max(0.0).max(z - self.z_max);
        dx.hypot(dz)
    }

    /// Shrinks the rectangle by `margin` on every side.
    pub fn shrink(&self, margin: f64) -> Result<Self> {
        AreaRect::new(self.x_min + margin, self.x_max - margin, self.z_min + margin, self.z_max - margin, self.label)
    }
}

/// Ground-truth label lookup used only by evaluation code.
pub fn area_of(flat: &AreaRect, rough: &AreaRect, x: f64, z: f64) -> AreaLabel {
    if flat.contains(x, z) {
        AreaLabel::Flat
    } else if rough.contains(x, z) {
        AreaLabel::Rough
    } else {
        AreaLabel::Neither
    }
}

/// Every knob that determines a generated field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerrainSpec {
    pub flat: AreaRect,
    pub rough: AreaRect,
    /// Fraction of the full rough amplitude that is kept, in [0, 1].
    pub roughness_scale: f64,
    /// Full-scale noise amplitude in meters.
    pub amplitude: f64,
    pub seed: u64,
    pub cell_size: f64,
    pub octaves: u32,
    pub persistence: f64,
    /// Wavelength of the coarsest noise octave in meters.
    pub base_wavelength: f64,
    /// Width of the fade-out band around the rough patch.
    pub blend_margin: f64,
    /// Band around the flat patch that is held at base elevation.
    pub flat_guard: f64,
    /// Padding between the patches' bounding box and the lattice edge.
    pub extent_margin: f64,
    pub base_elevation: f64,
}

impl Default for TerrainSpec {
    fn default() -> Self {
        Self {
            flat: AreaRect::default_flat(),
            rough: AreaRect::default_rough(),
            roughness_scale: 0.8,
            amplitude: 0.10,
            seed: 0,
            cell_size: 0.02,
            octaves: 4,
            persistence: 0.5,
            base_wavelength: 0.5,
            blend_margin: 0.5,
            flat_guard: 0.25,
            extent_margin: 1.0,
            base_elevation: 0.0,
        }
    }
}

impl TerrainSpec {
    pub fn validate(&self) -> Result<()> {
        self.flat.validate()?;
        self.rough.validate()?;
        if self.flat.label != Terrain::Flat || self.rough.label != Terrain::Rough {
            return Err(Error::Config("rectangle labels must be flat and rough".into()));
        }
        if self.flat.overlaps(&self.rough) {
            return Err(Error::Config("flat and rough rectangles overlap".into()));
        }
        if !(0.0..=1.0).contains(&self.roughness_scale) {
            return Err(Error::Config(format!("roughness_scale must lie in [0, 1], got {}", self.roughness_scale)));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Config(format!("amplitude must be positive, got {}", self.amplitude)));
        }
        let positive = [self.cell_size, self.base_wavelength, self.persistence];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.octaves == 0 {
            return Err(Error::Config("cell_size, base_wavelength, persistence and octaves must be positive".into()));
        }
        let nonneg = [self.blend_margin, self.flat_guard, self.extent_margin];
        if nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || !self.base_elevation.is_finite() {
            return Err(Error::Config("margins must be non-negative and finite".into()));
        }
        Ok(())
    }
}

/// Sampled terrain surface. Immutable once generated.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightfield {
    spec: TerrainSpec,
    origin_x: f64,
    origin_z: f64,
    nx: usize,
    nz: usize,
    /// Row-major: index `j * nx + i` holds node `(origin_x + i*cell, origin_z + j*cell)`.
    heights: Vec<f64>,
}

/// Generates a field with default lattice and noise settings.
pub fn generate(
    flat: AreaRect,
    rough: AreaRect,
    roughness_scale: f64,
    amplitude: f64,
    seed: u64,
) -> Result<Heightfield> {
    Heightfield::generate(&TerrainSpec { flat, rough, roughness_scale, amplitude, seed, ..TerrainSpec::default() })
}

impl Heightfield {
    pub fn generate(spec: &TerrainSpec) -> Result<Self> {
        spec.validate()?;
        let cell = spec.cell_size;
        let x_lo = spec.flat.x_min.min(spec.rough.x_min) - spec.extent_margin;
        let x_hi = spec.flat.x_max.max(spec.rough.x_max) + spec.extent_margin;
        let z_lo = spec.flat.z_min.min(spec.rough.z_min) - spec.extent_margin;
        let z_hi = spec.flat.z_max.max(spec.rough.z_max) + spec.extent_margin;
        let origin_x = (x_lo / cell).floor() * cell;
        let origin_z = (z_lo / cell).floor() * cell;
        let nx = ((x_hi - origin_x) / cell).ceil() as usize + 1;
        let nz = ((z_hi - origin_z) / cell).ceil() as usize + 1;

        let noise = ValueNoise::new(spec.seed, spec.octaves, spec.persistence, spec.base_wavelength);
        let scale = spec.amplitude * spec.roughness_scale;
        let mut heights = Vec::with_capacity(nx * nz);
        for j in 0..nz {
            let z = origin_z + j as f64 * cell;
            for i in 0..nx {
                let x = origin_x + i as f64 * cell;
                let mask = roughness_mask(spec, x, z);
                let h = if mask == 0.0 || scale == 0.0 {
                    spec.base_elevation
                } else {
                    spec.base_elevation + scale * mask * noise.sample(x, z)
                };
                heights.push(h);
            }
        }
        Ok(Self { spec: spec.clone(), origin_x, origin_z, nx, nz, heights })
    }

    pub fn spec(&self) -> &TerrainSpec {
        &self.spec
    }

    pub fn flat_rect(&self) -> &AreaRect {
        &self.spec.flat
    }

    pub fn rough_rect(&self) -> &AreaRect {
        &self.spec.rough
    }

    pub fn rect(&self, terrain: Terrain) -> &AreaRect {
        match terrain {
            Terrain::Flat => &self.spec.flat,
            Terrain::Rough => &self.spec.rough,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.nz)
    }

    pub fn cell_size(&self) -> f64 {
        self.spec.cell_size
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn node_position(&self, i: usize, j: usize) -> (f64, f64) {
        (self.origin_x + i as f64 * self.spec.cell_size, self.origin_z + j as f64 * self.spec.cell_size)
    }

    pub fn node_height(&self, i: usize, j: usize) -> f64 {
        self.heights[j * self.nx + i]
    }

    /// Planar extent `(x_min, x_max, z_min, z_max)` covered by the lattice.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let (x_max, z_max) = self.node_position(self.nx - 1, self.nz - 1);
        (self.origin_x, x_max, self.origin_z, z_max)
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        let (x0, x1, z0, z1) = self.extent();
        x >= x0 && x <= x1 && z >= z0 && z <= z1
    }

    pub fn area_of(&self, x: f64, z: f64) -> AreaLabel {
        area_of(&self.spec.flat, &self.spec.rough, x, z)
    }

    /// Bilinear interpolation of the four surrounding lattice samples.
    pub fn height_at(&self, x: f64, z: f64) -> Result<f64> {
        if !x.is_finite() || !z.is_finite() || !self.contains(x, z) {
            return Err(Error::OutOfExtent { x, z });
        }
        let (i, tx) = lattice_coord((x - self.origin_x) / self.spec.cell_size, self.nx);
        let (j, tz) = lattice_coord((z - self.origin_z) / self.spec.cell_size, self.nz);
        let h00 = self.node_height(i, j);
        let h10 = self.node_height(i + 1, j);
        let h01 = self.node_height(i, j + 1);
        let h11 = self.node_height(i + 1, j + 1);
        Ok(lerp(lerp(h00, h10, tx), lerp(h01, h11, tx), tz))
    }

    /// Central-difference gradient `(dh/dx, dh/dz)` of the interpolated surface.
    pub fn slope_at(&self, x: f64, z: f64) -> Result<(f64, f64)> {
        let e = 0.5 * self.spec.cell_size;
        let dx = (self.height_at(x + e, z)? - self.height_at(x - e, z)?) / (2.0 * e);
        let dz = (self.height_at(x, z + e)? - self.height_at(x, z - e)?) / (2.0 * e);
        Ok((dx, dz))
    }

    /// Heights of the lattice nodes that fall inside `rect`.
    pub fn heights_in(&self, rect: &AreaRect) -> Vec<f64> {
        let mut out = Vec::new();
        for j in 0..self.nz {
            for i in 0..self.nx {
                let (x, z) = self.node_position(i, j);
                if rect.contains(x, z) {
                    out.push(self.node_height(i, j));
                }
            }
        }
        out
    }

    #[cfg(test)]
    pub(crate) fn set_heights_for_test(&mut self, heights: Vec<f64>) {
        assert_eq!(heights.len(), self.heights.len());
        self.heights = heights;
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = FieldHeader {
            nx: self.nx,
            nz: self.nz,
            origin_x: self.origin_x,
            origin_z: self.origin_z,
            cell_size: self.spec.cell_size,
            seed: self.spec.seed,
            roughness_scale: self.spec.roughness_scale,
            spec: self.spec.clone(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(FIELD_MAGIC)?;
        w.write_all(&FIELD_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for h in &self.heights {
            w.write_all(&h.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::Format { path: path.to_path_buf(), reason: reason.to_string() };
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != FIELD_MAGIC {
            return Err(bad("not a heightfield file"));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        if u32::from_le_bytes(word) != FIELD_VERSION {
            return Err(bad("unsupported heightfield version"));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let header: FieldHeader = serde_json::from_slice(&header)?;
        header.spec.validate()?;
        let mut heights = Vec::with_capacity(header.nx * header.nz);
        let mut buf = [0u8; 8];
        for _ in 0..header.nx * header.nz {
            r.read_exact(&mut buf).map_err(|_| bad("truncated height body"))?;
            heights.push(f64::from_le_bytes(buf));
        }
        if r.read(&mut buf)? != 0 {
            return Err(bad("trailing bytes after height body"));
        }
        if heights.iter().any(|h| !h.is_finite()) {
            return Err(bad("non-finite height"));
        }
        Ok(Self {
            spec: header.spec,
            origin_x: header.origin_x,
            origin_z: header.origin_z,
            nx: header.nx,
            nz: header.nz,
            heights,
        })
    }
}

const FIELD_MAGIC: &[u8; 8] = b"TPHFIELD";
const FIELD_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct FieldHeader {
    nx: usize,
    nz: usize,
    origin_x: f64,
    origin_z: f64,
    cell_size: f64,
    seed: u64,
    roughness_scale: f64,
    spec: TerrainSpec,
}

/// Splits a fractional lattice coordinate into a cell index and in-cell offset.
/// Coordinates within 1e-9 of a node snap onto it so node queries are exact.
fn lattice_coord(f: f64, n: usize) -> (usize, f64) {
    let snapped = if (f - f.round()).abs() < 1e-9 { f.round() } else { f };
    let snapped = snapped.clamp(0.0, (n - 1) as f64);
    let i = (snapped.floor() as usize).min(n - 2);
    (i, snapped - i as f64)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else if t == 1.0 {
        b
    } else {
        a + (b - a) * t
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Weight in [0, 1] applied to the noise at `(x, z)`.
fn roughness_mask(spec: &TerrainSpec, x: f64, z: f64) -> f64 {
    let d_flat = spec.flat.distance(x, z);
    if d_flat <= spec.flat_guard {
        return 0.0;
    }
    let d_rough = spec.rough.distance(x, z);
    let rough = if d_rough == 0.0 {
        1.0
    } else if spec.blend_margin == 0.0 || d_rough >= spec.blend_margin {
        return 0.0;
    } else {
        1.0 - smoothstep(d_rough / spec.blend_margin)
    };
    let guard = if spec.flat_guard > 0.0 { smoothstep((d_flat - spec.flat_guard) / spec.flat_guard) } else { 1.0 };
    rough * guard
}

/// Seeded multi-octave value noise normalized to [-1, 1].
struct ValueNoise {
    seed: u64,
    octaves: u32,
    persistence: f64,
    base_frequency: f64,
    norm: f64,
}

impl ValueNoise {
    fn new(seed: u64, octaves: u32, persistence: f64, base_wavelength: f64) -> Self {
        let norm = (0..octaves).map(|o| persistence.powi(o as i32)).sum();
        Self { seed, octaves, persistence, base_frequency: 1.0 / base_wavelength, norm }
    }

    fn sample(&self, x: f64, z: f64) -> f64 {
        let mut total = 0.0;
        let mut amp = 1.0;
        let mut freq = self.base_frequency;
        for o in 0..self.octaves {
            total += amp * self.octave(o, x * freq, z * freq);
            amp *= self.persistence;
            freq *= 2.0;
        }
        total / self.norm
    }

    fn octave(&self, octave: u32, x: f64, z: f64) -> f64 {
        let (xf, zf) = (x.floor(), z.floor());
        let (ix, iz) = (xf as i64, zf as i64);
        let (tx, tz) = (smoothstep(x - xf), smoothstep(z - zf));
        let v00 = self.lattice(octave, ix, iz);
        let v10 = self.lattice(octave, ix + 1, iz);
        let v01 = self.lattice(octave, ix, iz + 1);
        let v11 = self.lattice(octave, ix + 1, iz + 1);
        let a = v00 + (v10 - v00) * tx;
        let b = v01 + (v11 - v01) * tx;
        a + (b - a) * tz
    }

    /// Hashed lattice value in [-1, 1].
    fn lattice(&self, octave: u32, ix: i64, iz: i64) -> f64 {
        let mut h = self.seed ^ 0x9E37_79B9_7F4A_7C15;
        h = splitmix(h ^ u64::from(octave));
        h = splitmix(h ^ ix as u64);
        h = splitmix(h ^ (iz as u64).rotate_left(32));
        (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> TerrainSpec {
        TerrainSpec {
            flat: AreaRect::new(0.0, 1.0, 0.0, 1.0, Terrain::Flat).unwrap(),
            rough: AreaRect::new(3.0, 4.0, 0.0, 1.0, Terrain::Rough).unwrap(),
            extent_margin: 0.5,
            cell_size: 0.05,
            ..TerrainSpec::default()
        }
    }

    #[test]
    fn zero_roughness_is_a_plane() {
        let field = Heightfield::generate(&TerrainSpec { roughness_scale: 0.0, ..small_spec() }).unwrap();
        assert!(field.heights().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn scaled_rough_heights_bounded_by_scaled_amplitude() {
        let spec = TerrainSpec { roughness_scale: 0.8, amplitude: 0.05, ..TerrainSpec::default() };
        let field = Heightfield::generate(&spec).unwrap();
        let rough = field.heights_in(&spec.rough);
        assert!(!rough.is_empty());
        let worst = rough.iter().map(|h| h.abs()).fold(0.0, f64::max);
        assert!(worst <= 0.04 + 1e-15, "max |h| = {worst}");
        assert!(worst > 0.005, "noise unexpectedly weak: {worst}");
    }

    #[test]
    fn same_seed_same_grid() {
        let a = Heightfield::generate(&small_spec()).unwrap();
        let b = Heightfield::generate(&small_spec()).unwrap();
        assert_eq!(a.heights(), b.heights());
        let c = Heightfield::generate(&TerrainSpec { seed: 1, ..small_spec() }).unwrap();
        assert_ne!(a.heights(), c.heights());
    }

    #[test]
    fn overlapping_rects_rejected() {
        let spec = TerrainSpec { rough: AreaRect::new(0.5, 2.0, 0.5, 2.0, Terrain::Rough).unwrap(), ..small_spec() };
        assert!(matches!(Heightfield::generate(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_scale_and_amplitude_rejected() {
        for spec in [
            TerrainSpec { roughness_scale: 1.5, ..small_spec() },
            TerrainSpec { roughness_scale: -0.1, ..small_spec() },
            TerrainSpec { amplitude: 0.0, ..small_spec() },
        ] {
            assert!(matches!(Heightfield::generate(&spec), Err(Error::Config(_))));
        }
    }

    #[test]
    fn node_queries_are_exact() {
        let field = Heightfield::generate(&small_spec()).unwrap();
        let (nx, nz) = field.dims();
        for j in 0..nz {
            for i in 0..nx {
                let (x, z) = field.node_position(i, j);
                assert_eq!(field.height_at(x, z).unwrap(), field.node_height(i, j), "node ({i},{j})");
            }
        }
    }

    #[test]
    fn bilinear_cell_midpoint() {
        let mut field = Heightfield::generate(&TerrainSpec { roughness_scale: 0.0, ..small_spec() }).unwrap();
        let nx = field.nx;
        field.heights[nx + 1] = 0.4;
        let (x0, z0) = field.node_position(0, 0);
        let c = field.cell_size();
        let h = field.height_at(x0 + 0.5 * c, z0 + 0.5 * c).unwrap();
        assert!((h - 0.1).abs() < 1e-15, "{h}");
    }

    #[test]
    fn flat_rect_is_level_and_rough_rect_is_not() {
        let spec = TerrainSpec { base_elevation: 0.37, ..TerrainSpec::default() };
        let field = Heightfield::generate(&spec).unwrap();
        assert!(field.heights_in(&spec.flat).iter().all(|&h| h == 0.37));
        for k in 0..200 {
            let x = spec.flat.x_min + spec.flat.width() * (k as f64 * 0.618_033_9).fract();
            let z = spec.flat.z_min + spec.flat.depth() * (k as f64 * 0.414_213_5).fract();
            assert_eq!(field.height_at(x, z).unwrap(), 0.37);
        }
        let rough = field.heights_in(&spec.rough);
        let mean = rough.iter().sum::<f64>() / rough.len() as f64;
        let var = rough.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / rough.len() as f64;
        assert!(var > 0.0);
    }

    #[test]
    fn out_of_extent_query_errors() {
        let field = Heightfield::generate(&small_spec()).unwrap();
        let (x0, _, z0, _) = field.extent();
        assert!(matches!(field.height_at(x0 - 0.01, z0), Err(Error::OutOfExtent { .. })));
        assert!(matches!(field.height_at(f64::NAN, z0), Err(Error::OutOfExtent { .. })));
    }

    #[test]
    fn area_labels() {
        let flat = AreaRect::default_flat();
        let rough = AreaRect::default_rough();
        assert_eq!(area_of(&flat, &rough, 0.0, 0.0), AreaLabel::Flat);
        assert_eq!(area_of(&flat, &rough, -8.0, 3.0), AreaLabel::Rough);
        assert_eq!(area_of(&flat, &rough, -5.0, 1.0), AreaLabel::Neither);
    }

    #[test]
    fn default_rect_sizes() {
        let flat = AreaRect::default_flat();
        let rough = AreaRect::default_rough();
        assert_eq!((flat.width(), flat.depth()), (3.0, 1.5));
        assert_eq!((rough.width(), rough.depth()), (1.5, 3.5));
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.bin");
        let field = Heightfield::generate(&small_spec()).unwrap();
        field.save(&path).unwrap();
        assert_eq!(Heightfield::load(&path).unwrap(), field);
        std::fs::write(&path, b"garbage!").unwrap();
        assert!(Heightfield::load(&path).is_err());
    }
}
