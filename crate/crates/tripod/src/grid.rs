//! 2D computational grid, spinor field storage, spectral transforms, and
//! basic observables.
//!
//! The domain is periodic, [−lx/2, lx/2) × [−lz/2, lz/2), sampled on
//! power-of-two grids so the propagator's transforms stay cheap. Momentum
//! space uses the standard discrete-transform frequency set.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::model::Spinor4;
use crate::{Error, Result, Vec2};

/// Grid geometry. `lx`, `lz` are full extents in units of 1/κ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub nz: usize,
    pub lx: f64,
    pub lz: f64,
}

impl GridSpec {
    pub fn new(nx: usize, nz: usize, lx: f64, lz: f64) -> Result<Self> {
        for (name, n) in [("nx", nx), ("nz", nz)] {
            if n < 64 || !n.is_power_of_two() {
                return Err(Error::Grid(format!(
                    "{name} = {n} must be a power of two >= 64"
                )));
            }
        }
        if !(lx > 0.0 && lz > 0.0) {
            return Err(Error::Grid(format!("extents must be positive, got {lx} x {lz}")));
        }
        Ok(GridSpec { nx, nz, lx, lz })
    }

    /// Square grid over [−half, half)².
    pub fn square(n: usize, half_extent: f64) -> Result<Self> {
        Self::new(n, n, 2.0 * half_extent, 2.0 * half_extent)
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dz(&self) -> f64 {
        self.lz / self.nz as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dz()
    }

    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, i: usize) -> f64 {
        -0.5 * self.lx + i as f64 * self.dx()
    }

    pub fn z(&self, j: usize) -> f64 {
        -0.5 * self.lz + j as f64 * self.dz()
    }

    /// Discrete-transform momentum along x for index `i`.
    pub fn kx(&self, i: usize) -> f64 {
        let n = self.nx as isize;
        let i = i as isize;
        let m = if i < n / 2 { i } else { i - n };
        2.0 * std::f64::consts::PI * m as f64 / self.lx
    }

    pub fn kz(&self, j: usize) -> f64 {
        let n = self.nz as isize;
        let j = j as isize;
        let m = if j < n / 2 { j } else { j - n };
        2.0 * std::f64::consts::PI * m as f64 / self.lz
    }

    pub fn idx(&self, ix: usize, iz: usize) -> usize {
        ix * self.nz + iz
    }
}

/// Complex scalar field on a grid (dark amplitudes, envelopes).
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: GridSpec,
    pub data: Vec<C64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), grid.len());
        ScalarField { grid, data }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
}

/// Four-component complex field; component-major, then x-major rows.
#[derive(Debug, Clone)]
pub struct SpinorField {
    grid: GridSpec,
    data: Vec<C64>,
}

impl SpinorField {
    pub fn zeros(grid: GridSpec) -> Self {
        let n = grid.len();
        SpinorField {
            grid,
            data: vec![C64::new(0.0, 0.0); 4 * n],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn comp(&self, c: usize) -> &[C64] {
        let n = self.grid.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [C64] {
        let n = self.grid.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Mutable view of all four components at once.
    pub fn comps_mut(&mut self) -> [&mut [C64]; 4] {
        let n = self.grid.len();
        let (a, rest) = self.data.split_at_mut(n);
        let (b, rest) = rest.split_at_mut(n);
        let (c, d) = rest.split_at_mut(n);
        [a, b, c, d]
    }

    pub fn raw(&self) -> &[C64] {
        &self.data
    }

    pub fn raw_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn spinor_at(&self, ix: usize, iz: usize) -> Spinor4 {
        let n = self.grid.len();
        let i = self.grid.idx(ix, iz);
        Spinor4([
            self.data[i],
            self.data[n + i],
            self.data[2 * n + i],
            self.data[3 * n + i],
        ])
    }

    pub fn set_spinor(&mut self, ix: usize, iz: usize, s: Spinor4) {
        let n = self.grid.len();
        let i = self.grid.idx(ix, iz);
        self.data[i] = s.0[0];
        self.data[n + i] = s.0[1];
        self.data[2 * n + i] = s.0[2];
        self.data[3 * n + i] = s.0[3];
    }

    /// ‖ψ‖² = Σ over grid and components of |ψ|² dx dz.
    pub fn norm_sq(&self) -> f64 {
        let sum: f64 = self.data.iter().map(|c| c.norm_sqr()).sum();
        sum * self.grid.cell_area()
    }

    pub fn scale(&mut self, f: f64) {
        for c in self.data.iter_mut() {
            *c *= f;
        }
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sq();
        if n <= 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        self.scale(1.0 / n.sqrt());
        Ok(())
    }

    /// Total density Σₙ |ψₙ|² per grid point.
    pub fn density(&self) -> Vec<f64> {
        let n = self.grid.len();
        let mut rho = vec![0.0; n];
        for c in 0..4 {
            let comp = self.comp(c);
            for (r, v) in rho.iter_mut().zip(comp.iter()) {
                *r += v.norm_sqr();
            }
        }
        rho
    }

    /// ⟨φ|ψ⟩ = Σ φ* ψ dА over grid and components.
    pub fn inner(&self, other: &SpinorField) -> C64 {
        assert_eq!(self.grid, other.grid);
        let s: C64 = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        s * self.grid.cell_area()
    }
}

/// Below this many elements the per-task overhead of the thread pool beats
/// the work; stay serial.
pub(crate) const PAR_MIN: usize = 1 << 15;

/// Cached FFT plans for one grid shape, shared by propagator and observables.
pub struct SpectralTransform {
    nx: usize,
    nz: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    fwd_z: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    inv_z: Arc<dyn Fft<f64>>,
}

impl SpectralTransform {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        SpectralTransform {
            nx: grid.nx,
            nz: grid.nz,
            fwd_x: planner.plan_fft_forward(grid.nx),
            fwd_z: planner.plan_fft_forward(grid.nz),
            inv_x: planner.plan_fft_inverse(grid.nx),
            inv_z: planner.plan_fft_inverse(grid.nz),
        }
    }

    fn pass_rows(fft: &Arc<dyn Fft<f64>>, data: &mut [C64], row_len: usize) {
        if data.len() < PAR_MIN {
            let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            for row in data.chunks_exact_mut(row_len) {
                fft.process_with_scratch(row, &mut scratch);
            }
            return;
        }
        data.par_chunks_mut(row_len).for_each_init(
            || vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            |scratch, row| fft.process_with_scratch(row, scratch),
        );
    }

    fn transpose(src: &[C64], dst: &mut [C64], rows: usize, cols: usize) {
        // src is rows x cols, dst becomes cols x rows
        if dst.len() < PAR_MIN {
            for (j, out) in dst.chunks_exact_mut(rows).enumerate() {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = src[i * cols + j];
                }
            }
            return;
        }
        dst.par_chunks_mut(rows).enumerate().for_each(|(j, out)| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = src[i * cols + j];
            }
        });
    }

    /// In-place unnormalized forward transform of one component
    /// (x-major layout in, x-major spectral layout out).
    pub fn forward(&self, data: &mut [C64], scratch: &mut Vec<C64>) {
        assert_eq!(data.len(), self.nx * self.nz);
        scratch.resize(data.len(), C64::new(0.0, 0.0));
        Self::pass_rows(&self.fwd_z, data, self.nz);
        Self::transpose(data, scratch, self.nx, self.nz);
        Self::pass_rows(&self.fwd_x, scratch, self.nx);
        Self::transpose(scratch, data, self.nz, self.nx);
    }

    /// In-place inverse transform including the 1/(nx nz) normalization.
    pub fn inverse(&self, data: &mut [C64], scratch: &mut Vec<C64>) {
        assert_eq!(data.len(), self.nx * self.nz);
        scratch.resize(data.len(), C64::new(0.0, 0.0));
        Self::pass_rows(&self.inv_z, data, self.nz);
        Self::transpose(data, scratch, self.nx, self.nz);
        Self::pass_rows(&self.inv_x, scratch, self.nx);
        Self::transpose(scratch, data, self.nz, self.nx);
        let scale = 1.0 / (self.nx * self.nz) as f64;
        if data.len() < PAR_MIN {
            for c in data.iter_mut() {
                *c *= scale;
            }
        } else {
            data.par_iter_mut().for_each(|c| *c *= scale);
        }
    }
}

/// Basic per-field observables. Momentum and kinetic energy come from the
/// spectral representation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Observables {
    pub norm: f64,
    pub center_of_mass: Vec2,
    pub momentum_mean: Vec2,
    pub kinetic_energy: f64,
}

pub fn observables(field: &SpinorField, mass: f64) -> Result<Observables> {
    let grid = field.grid().clone();
    let norm_sq = field.norm_sq();
    if norm_sq <= 0.0 || !norm_sq.is_finite() {
        return Err(Error::ZeroNorm);
    }

    let rho = field.density();
    let mut com = Vec2::ZERO;
    for ix in 0..grid.nx {
        let x = grid.x(ix);
        for iz in 0..grid.nz {
            let w = rho[grid.idx(ix, iz)];
            com += Vec2::new(x * w, grid.z(iz) * w);
        }
    }
    let com = com * (grid.cell_area() / norm_sq);

    let transform = SpectralTransform::new(&grid);
    let mut scratch = Vec::new();
    let mut spec_weight = 0.0;
    let mut p_mean = Vec2::ZERO;
    let mut kinetic = 0.0;
    for c in 0..4 {
        let mut comp = field.comp(c).to_vec();
        transform.forward(&mut comp, &mut scratch);
        for ix in 0..grid.nx {
            let kx = grid.kx(ix);
            for iz in 0..grid.nz {
                let kz = grid.kz(iz);
                let w = comp[grid.idx(ix, iz)].norm_sqr();
                spec_weight += w;
                p_mean += Vec2::new(kx * w, kz * w);
                kinetic += w * (kx * kx + kz * kz);
            }
        }
    }
    Ok(Observables {
        norm: norm_sq.sqrt(),
        center_of_mass: com,
        momentum_mean: p_mean * (1.0 / spec_weight),
        kinetic_energy: kinetic / (2.0 * mass * spec_weight),
    })
}

fn check_packet_bounds(grid: &GridSpec, center: Vec2, sigma: f64) -> Result<()> {
    let dx = grid.dx().max(grid.dz());
    if sigma < 3.0 * dx {
        return Err(Error::Packet(format!(
            "sigma = {sigma} under-resolved: requires sigma >= 3 dx = {}",
            3.0 * dx
        )));
    }
    let margins = [
        center.x - (-0.5 * grid.lx),
        0.5 * grid.lx - center.x,
        center.z - (-0.5 * grid.lz),
        0.5 * grid.lz - center.z,
    ];
    let min_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_margin < 5.0 * sigma {
        return Err(Error::Packet(format!(
            "center ({}, {}) is {min_margin:.2} from the boundary; needs >= 5 sigma = {}",
            center.x,
            center.z,
            5.0 * sigma
        )));
    }
    Ok(())
}

/// Normalized Gaussian packet with a constant internal spinor:
/// ψₙ(r) = internalₙ · exp(−|r−c|²/4σ²) · exp(i k₀·r).
pub fn gaussian_packet(
    grid: &GridSpec,
    center: Vec2,
    sigma: f64,
    k0: Vec2,
    internal: &Spinor4,
) -> Result<SpinorField> {
    check_packet_bounds(grid, center, sigma)?;
    let env = gaussian_envelope(grid, center, C64::new(sigma, 0.0), sigma, k0);
    let mut field = SpinorField::zeros(grid.clone());
    for c in 0..4 {
        let amp = internal.0[c];
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        for (out, e) in field.comp_mut(c).iter_mut().zip(env.iter()) {
            *out = amp * e;
        }
    }
    field.normalize()?;
    Ok(field)
}

/// Gaussian envelope with complex width parameter `s`:
/// exp(−|r−c|²/(4 σ s)) exp(i k₀·r). With s = σ the packet is the t = 0
/// minimum-uncertainty state; s = σ + iħt/(2mσ) is the freely dispersed one.
pub fn gaussian_envelope(
    grid: &GridSpec,
    center: Vec2,
    s: C64,
    sigma: f64,
    k0: Vec2,
) -> Vec<C64> {
    let inv_4ss = (C64::new(4.0 * sigma, 0.0) * s).inv();
    let mut env = vec![C64::new(0.0, 0.0); grid.len()];
    for ix in 0..grid.nx {
        let x = grid.x(ix);
        for iz in 0..grid.nz {
            let z = grid.z(iz);
            let r2 = (x - center.x).powi(2) + (z - center.z).powi(2);
            let ph = k0.x * x + k0.z * z;
            env[grid.idx(ix, iz)] =
                (-inv_4ss * r2 + C64::new(0.0, ph)).exp();
        }
    }
    env
}

/// Complex width parameter of a freely dispersed Gaussian after time `t`.
pub fn dispersed_width(sigma: f64, t: f64, mass: f64) -> C64 {
    C64::new(sigma, t / (2.0 * mass * sigma))
}

/// Snapshot sidecar. `displacement` is the beam displacement at save time.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SnapshotMeta {
    pub nx: usize,
    pub nz: usize,
    pub lx: f64,
    pub lz: f64,
    pub time: f64,
    pub displacement: Vec2,
    pub units: String,
    /// Present on checkpoints written for resume.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resume: Option<ResumeMeta>,
}

/// Extra checkpoint metadata the propagator refuses to mismatch on.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResumeMeta {
    pub step: u64,
    pub dt: f64,
    pub config_digest: String,
}

/// Write `<base>.bin` (little-endian f64 re/im pairs, component-major then
/// x-major rows) and `<base>.json`.
pub fn write_snapshot(field: &SpinorField, base: &Path, meta: &SnapshotMeta) -> Result<()> {
    let grid = field.grid();
    if meta.nx != grid.nx || meta.nz != grid.nz {
        return Err(Error::Invalid("snapshot meta does not match field grid".into()));
    }
    let mut w = BufWriter::new(std::fs::File::create(base.with_extension("bin"))?);
    for c in field.raw() {
        w.write_all(&c.re.to_le_bytes())?;
        w.write_all(&c.im.to_le_bytes())?;
    }
    w.flush()?;
    let json = serde_json::to_string_pretty(meta)?;
    std::fs::write(base.with_extension("json"), json)?;
    Ok(())
}

pub fn read_snapshot(base: &Path) -> Result<(SpinorField, SnapshotMeta)> {
    let meta: SnapshotMeta = serde_json::from_str(&std::fs::read_to_string(
        base.with_extension("json"),
    )?)?;
    let grid = GridSpec::new(meta.nx, meta.nz, meta.lx, meta.lz)?;
    let mut field = SpinorField::zeros(grid);
    let mut r = BufReader::new(std::fs::File::open(base.with_extension("bin"))?);
    let mut buf = [0u8; 16];
    for c in field.raw_mut() {
        r.read_exact(&mut buf).map_err(|_| {
            Error::ResumeMismatch("snapshot binary shorter than sidecar grid".into())
        })?;
        let re = f64::from_le_bytes(buf[0..8].try_into().unwrap());
        let im = f64::from_le_bytes(buf[8..16].try_into().unwrap());
        *c = C64::new(re, im);
    }
    if r.read(&mut buf[..1])? != 0 {
        return Err(Error::ResumeMismatch(
            "snapshot binary longer than sidecar grid".into(),
        ));
    }
    Ok((field, meta))
}

/// Density export: CSV with header `x,z,rho`.
pub fn write_density_csv(field: &SpinorField, path: &Path) -> Result<()> {
    let grid = field.grid();
    let rho = field.density();
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "x,z,rho")?;
    for ix in 0..grid.nx {
        let x = grid.x(ix);
        for iz in 0..grid.nz {
            writeln!(w, "{},{},{}", x, grid.z(iz), rho[grid.idx(ix, iz)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Largest density inside an n-cell band along the domain boundary, relative
/// to the global maximum. Scenario summaries report this as a wrap-around
/// warning metric.
pub fn boundary_band_density(field: &SpinorField, band: usize) -> f64 {
    let grid = field.grid();
    let rho = field.density();
    let global = rho.iter().cloned().fold(0.0, f64::max);
    if global <= 0.0 {
        return 0.0;
    }
    let mut band_max: f64 = 0.0;
    for ix in 0..grid.nx {
        for iz in 0..grid.nz {
            if ix < band || ix >= grid.nx - band || iz < band || iz >= grid.nz - band {
                band_max = band_max.max(rho[grid.idx(ix, iz)]);
            }
        }
    }
    band_max / global
}
