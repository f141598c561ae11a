//! Split-operator time evolution of the full four-component Schrödinger
//! equation −ħ²∇²/2m + H_RWA(r, d(t)) + V_s|3⟩⟨3| with moving beams.
//!
//! Strang splitting: half kinetic step (diagonal in spectral space), full
//! potential step evaluated at d(t + dt/2), half kinetic step. Adjacent
//! half-kinetic factors between observations are merged, so the steady-state
//! cost is 8 spectral transforms per step plus O(N) multiplies.
//!
//! The potential step exploits two structural facts: the RWA coupling is a
//! rank-2 rotation inside span{|0⟩, |χ̃⟩} at the uniform frequency Ω₀, and
//! beam displacement changes the coupling only through one global phase per
//! beam. The base Rabi fields are therefore cached once per grid and the
//! inner loop is multiply-only.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::path::Path;

use crate::grid::{GridSpec, ResumeMeta, SnapshotMeta, SpectralTransform, SpinorField};
use crate::model::{internal_hamiltonian, PhysicalParams};
use crate::paths::BeamPath;
use crate::{Error, Result, Vec2};

/// Grid spacing must resolve the shortest beam wavelength; this is the
/// spec'd bound dx ≤ 0.35/κ.
pub const MAX_DX_KAPPA: f64 = 0.35;
/// Potential-step phase bound: dt ≤ 0.5/Ω₀.
pub const MAX_DT_OMEGA: f64 = 0.5;

/// Callback invoked at the configured cadence with (step, time, field).
pub type Observer<'a> = dyn FnMut(u64, f64, &SpinorField) -> Result<()> + 'a;

/// Precomputed machinery for one (grid, params, dt) combination.
pub struct Propagator {
    grid: GridSpec,
    params: PhysicalParams,
    dt: f64,
    transform: SpectralTransform,
    kin_half: Vec<C64>,
    kin_full: Vec<C64>,
    /// Ωₙ(r, 0)/Ω₀ for the three beams.
    base_rabi: [Vec<C64>; 3],
}

impl Propagator {
    pub fn new(grid: GridSpec, params: PhysicalParams, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Precondition(format!("dt = {dt} must be positive")));
        }
        if params.omega0 > 0.0 && dt > MAX_DT_OMEGA / params.omega0 {
            return Err(Error::Precondition(format!(
                "dt = {dt} exceeds the potential-step bound {MAX_DT_OMEGA}/omega0 = {}",
                MAX_DT_OMEGA / params.omega0
            )));
        }
        if params.omega0 > 0.0 {
            let dx_bound = MAX_DX_KAPPA / params.kappa;
            if grid.dx() > dx_bound || grid.dz() > dx_bound {
                return Err(Error::Precondition(format!(
                    "grid spacing ({}, {}) does not resolve the beams; needs <= {dx_bound}",
                    grid.dx(),
                    grid.dz()
                )));
            }
        }

        let n = grid.len();
        let mut kin_half = vec![C64::new(0.0, 0.0); n];
        let mut kin_full = vec![C64::new(0.0, 0.0); n];
        for ix in 0..grid.nx {
            let kx = grid.kx(ix);
            for iz in 0..grid.nz {
                let kz = grid.kz(iz);
                let k2 = kx * kx + kz * kz;
                let half = C64::from_polar(1.0, -k2 * dt / (4.0 * params.mass));
                let idx = grid.idx(ix, iz);
                kin_half[idx] = half;
                kin_full[idx] = half * half;
            }
        }

        let zero = C64::new(0.0, 0.0);
        let mut base_rabi = [vec![zero; n], vec![zero; n], vec![zero; n]];
        if params.omega0 > 0.0 {
            for ix in 0..grid.nx {
                let x = grid.x(ix);
                for iz in 0..grid.nz {
                    let r = Vec2::new(x, grid.z(iz));
                    let (o1, o2, o3) = crate::model::rabi_vector(r, Vec2::ZERO, &params);
                    let idx = grid.idx(ix, iz);
                    base_rabi[0][idx] = o1 / params.omega0;
                    base_rabi[1][idx] = o2 / params.omega0;
                    base_rabi[2][idx] = o3 / params.omega0;
                }
            }
        }

        let transform = SpectralTransform::new(&grid);
        Ok(Propagator { grid, params, dt, transform, kin_half, kin_full, base_rabi })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    fn kinetic(&self, field: &mut SpinorField, table: &[C64]) {
        let mut scratch = Vec::new();
        let small = self.grid.len() < crate::grid::PAR_MIN;
        for c in 0..4 {
            let comp = field.comp_mut(c);
            self.transform.forward(comp, &mut scratch);
            if small {
                for (v, p) in comp.iter_mut().zip(table.iter()) {
                    *v *= p;
                }
            } else {
                comp.par_iter_mut()
                    .zip(table.par_iter())
                    .for_each(|(v, p)| *v *= p);
            }
            self.transform.inverse(comp, &mut scratch);
        }
    }

    /// Exact potential substep over dt at beam displacement `d`:
    /// exp(−i V_s dt/2 P₃) · exp(−i H_RWA dt) · exp(−i V_s dt/2 P₃).
    fn potential(&self, field: &mut SpinorField, d: Vec2) {
        let p = &self.params;
        let vs_half = C64::from_polar(1.0, -p.v_s * self.dt / 2.0);
        if p.omega0 <= 0.0 {
            let vs_full = vs_half * vs_half;
            field.comp_mut(3).par_iter_mut().for_each(|v| *v *= vs_full);
            return;
        }
        let g1 = C64::from_polar(1.0, p.k_r * d.x);
        let g2 = C64::from_polar(1.0, -p.k_r * d.x);
        let g3 = C64::from_polar(1.0, -p.k_r * d.z);
        let (sin_t, cos_t) = (p.omega0 * self.dt).sin_cos();
        let i = C64::new(0.0, 1.0);
        let nz = self.grid.nz;
        let [c0, c1, c2, c3] = field.comps_mut();
        let b1 = &self.base_rabi[0];
        let b2 = &self.base_rabi[1];
        let b3 = &self.base_rabi[2];
        let min_rows = (crate::grid::PAR_MIN / nz).max(1);
        c0.par_chunks_mut(nz)
            .zip(c1.par_chunks_mut(nz))
            .zip(c2.par_chunks_mut(nz))
            .zip(c3.par_chunks_mut(nz))
            .zip(b1.par_chunks(nz).zip(b2.par_chunks(nz)).zip(b3.par_chunks(nz)))
            .with_min_len(min_rows)
            .for_each(|((((r0, r1), r2), r3), ((w1, w2), w3))| {
                for k in 0..r0.len() {
                    let f1 = g1 * w1[k];
                    let f2 = g2 * w2[k];
                    let f3 = g3 * w3[k];
                    let s3 = r3[k] * vs_half;
                    let b = f1 * r1[k] + f2 * r2[k] + f3 * s3;
                    let a = r0[k];
                    let g = b * (cos_t - 1.0) - i * a * sin_t;
                    r0[k] = a * cos_t - i * b * sin_t;
                    r1[k] += g * f1.conj();
                    r2[k] += g * f2.conj();
                    r3[k] = (s3 + g * f3.conj()) * vs_half;
                }
            });
    }

    /// Evolve from `t_start` over `n_steps` of size dt. The observer fires
    /// at `t_start`, every `cadence` steps, and at the final step. Beams
    /// follow `path`; past its end they stay at the final displacement.
    pub fn evolve(
        &self,
        field: &mut SpinorField,
        path: &BeamPath,
        t_start: f64,
        n_steps: u64,
        cadence: u64,
        observer: &mut Observer,
    ) -> Result<()> {
        if field.grid() != &self.grid {
            return Err(Error::Precondition("field grid does not match propagator".into()));
        }
        let norm0 = field.norm_sq();
        if !norm0.is_finite() || (norm0 - 1.0).abs() > 1e-6 {
            return Err(Error::Precondition(format!(
                "field must be normalized before evolution (norm² = {norm0})"
            )));
        }
        let cadence = if cadence == 0 { n_steps.max(1) } else { cadence };
        observer(0, t_start, field)?;
        let mut step = 0u64;
        while step < n_steps {
            let block = cadence.min(n_steps - step);
            self.kinetic(field, &self.kin_half);
            for j in 0..block {
                let t_mid = t_start + (step + j) as f64 * self.dt + self.dt / 2.0;
                self.potential(field, path.displacement_clamped(t_mid));
                if j + 1 < block {
                    self.kinetic(field, &self.kin_full);
                }
            }
            self.kinetic(field, &self.kin_half);
            step += block;
            let norm = field.norm_sq();
            if !norm.is_finite() {
                return Err(Error::Numerics(format!(
                    "non-finite field norm at step {step}"
                )));
            }
            observer(step, t_start + step as f64 * self.dt, field)?;
        }
        Ok(())
    }

    /// Convenience wrapper: evolve to `t_end` with no intermediate
    /// observations. `t_end − t_start` must be an integer number of steps.
    pub fn evolve_to(
        &self,
        field: &mut SpinorField,
        path: &BeamPath,
        t_start: f64,
        t_end: f64,
    ) -> Result<()> {
        let n = steps_between(t_start, t_end, self.dt)?;
        self.evolve(field, path, t_start, n, n.max(1), &mut |_, _, _| Ok(()))
    }
}

/// Number of dt steps between two times; errors unless the interval is an
/// integer multiple of dt (to 1e-9 relative).
pub fn steps_between(t_start: f64, t_end: f64, dt: f64) -> Result<u64> {
    let span = t_end - t_start;
    if span < 0.0 {
        return Err(Error::Precondition("t_end before t_start".into()));
    }
    let n = (span / dt).round();
    if (span - n * dt).abs() > 1e-9 * dt.max(span) {
        return Err(Error::Precondition(format!(
            "interval {span} is not an integer number of dt = {dt} steps"
        )));
    }
    Ok(n as u64)
}

/// Total energy ⟨ψ|H|ψ⟩/⟨ψ|ψ⟩ at beam displacement `d`: spectral kinetic
/// part plus the pointwise RWA coupling and V_s expectation.
pub fn total_energy(field: &SpinorField, d: Vec2, p: &PhysicalParams) -> Result<f64> {
    let grid = field.grid();
    let norm_sq = field.norm_sq();
    if norm_sq <= 0.0 || !norm_sq.is_finite() {
        return Err(Error::ZeroNorm);
    }
    let transform = SpectralTransform::new(grid);
    let mut scratch = Vec::new();
    let mut kin = 0.0;
    let mut spec_weight = 0.0;
    for c in 0..4 {
        let mut comp = field.comp(c).to_vec();
        transform.forward(&mut comp, &mut scratch);
        for ix in 0..grid.nx {
            let kx = grid.kx(ix);
            for iz in 0..grid.nz {
                let kz = grid.kz(iz);
                let w = comp[grid.idx(ix, iz)].norm_sqr();
                spec_weight += w;
                kin += w * (kx * kx + kz * kz);
            }
        }
    }
    let kin = kin / (2.0 * p.mass * spec_weight);

    let mut pot = 0.0;
    for ix in 0..grid.nx {
        let x = grid.x(ix);
        for iz in 0..grid.nz {
            let r = Vec2::new(x, grid.z(iz));
            let s = field.spinor_at(ix, iz);
            let h = internal_hamiltonian(r, d, p);
            let coupling = h[0][1] * s.0[1] + h[0][2] * s.0[2] + h[0][3] * s.0[3];
            pot += 2.0 * (s.0[0].conj() * coupling).re + p.v_s * s.0[3].norm_sqr();
        }
    }
    let pot = pot * grid.cell_area() / norm_sq;
    Ok(kin + pot)
}

/// Write a checkpoint the propagator can later resume from.
pub fn save_checkpoint(
    field: &SpinorField,
    base: &Path,
    time: f64,
    step: u64,
    dt: f64,
    displacement: Vec2,
    config_digest: &str,
) -> Result<()> {
    let grid = field.grid();
    let meta = SnapshotMeta {
        nx: grid.nx,
        nz: grid.nz,
        lx: grid.lx,
        lz: grid.lz,
        time,
        displacement,
        units: "natural".into(),
        resume: Some(ResumeMeta { step, dt, config_digest: config_digest.into() }),
    };
    crate::grid::write_snapshot(field, base, &meta)
}

/// Load a checkpoint and verify it matches the run it is resumed into.
/// Refuses on grid, dt, or config-digest mismatch.
pub fn load_checkpoint(
    base: &Path,
    grid: &GridSpec,
    dt: f64,
    config_digest: &str,
) -> Result<(SpinorField, f64, u64)> {
    let (field, meta) = crate::grid::read_snapshot(base)?;
    let resume = meta
        .resume
        .as_ref()
        .ok_or_else(|| Error::ResumeMismatch("snapshot has no resume metadata".into()))?;
    if field.grid() != grid {
        return Err(Error::ResumeMismatch(format!(
            "grid {}x{} over {}x{} does not match the run",
            meta.nx, meta.nz, meta.lx, meta.lz
        )));
    }
    if (resume.dt - dt).abs() > 0.0 {
        return Err(Error::ResumeMismatch(format!(
            "checkpoint dt = {} differs from run dt = {dt}",
            resume.dt
        )));
    }
    if resume.config_digest != config_digest {
        return Err(Error::ResumeMismatch("config digest differs".into()));
    }
    Ok((field, meta.time, resume.step))
}

/// FNV-1a digest of a canonical config string, hex-encoded. Cheap and
/// deterministic; used only to refuse resuming under a changed config.
pub fn config_digest(text: &str) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gaussian_packet, observables};
    use crate::model::{embed_dark, internal_step, Spinor4};
    use crate::oracle::DarkState2;
    use crate::paths;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> PhysicalParams {
        PhysicalParams::natural(100.0)
    }

    fn dark_packet(
        grid: &GridSpec,
        center: Vec2,
        sigma: f64,
        k0: Vec2,
        c: DarkState2,
        d: Vec2,
        p: &PhysicalParams,
    ) -> SpinorField {
        let env = crate::grid::gaussian_envelope(grid, center, C64::new(sigma, 0.0), sigma, k0);
        let c1: Vec<C64> = env.iter().map(|e| e * c.0[0]).collect();
        let c2: Vec<C64> = env.iter().map(|e| e * c.0[1]).collect();
        let mut f = embed_dark(grid, d, p, &c1, &c2).unwrap();
        f.normalize().unwrap();
        f
    }

    #[test]
    fn preconditions_are_enforced() {
        let p = params();
        let g = GridSpec::square(128, 16.0).unwrap();
        assert!(Propagator::new(g.clone(), p, 1e-3).is_ok());
        // dt too large for omega0
        assert!(matches!(
            Propagator::new(g.clone(), p, 6e-3),
            Err(Error::Precondition(_))
        ));
        // grid too coarse for k_r
        let coarse = GridSpec::square(64, 16.0).unwrap();
        assert!(matches!(
            Propagator::new(coarse, p, 1e-3),
            Err(Error::Precondition(_))
        ));
        // unnormalized field is rejected
        let prop = Propagator::new(g.clone(), p, 1e-3).unwrap();
        let mut f = gaussian_packet(&g, Vec2::ZERO, 1.0, Vec2::ZERO, &Spinor4::basis(1)).unwrap();
        f.scale(2.0);
        let path = paths::BeamPath::rest();
        assert!(matches!(
            prop.evolve(&mut f, &path, 0.0, 10, 0, &mut |_, _, _| Ok(())),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn potential_substep_matches_internal_step() {
        let p = params();
        let g = GridSpec::square(64, 8.0).unwrap();
        let dt = 1e-3;
        // dx = 0.25 resolves the beams; construct directly to keep the test grid tiny
        let prop = Propagator {
            grid: g.clone(),
            params: p,
            dt,
            transform: SpectralTransform::new(&g),
            kin_half: vec![C64::new(1.0, 0.0); g.len()],
            kin_full: vec![C64::new(1.0, 0.0); g.len()],
            base_rabi: {
                let mut base = [
                    vec![C64::new(0.0, 0.0); g.len()],
                    vec![C64::new(0.0, 0.0); g.len()],
                    vec![C64::new(0.0, 0.0); g.len()],
                ];
                for ix in 0..g.nx {
                    for iz in 0..g.nz {
                        let r = Vec2::new(g.x(ix), g.z(iz));
                        let (o1, o2, o3) = crate::model::rabi_vector(r, Vec2::ZERO, &p);
                        let idx = g.idx(ix, iz);
                        base[0][idx] = o1 / p.omega0;
                        base[1][idx] = o2 / p.omega0;
                        base[2][idx] = o3 / p.omega0;
                    }
                }
                base
            },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut field = SpinorField::zeros(g.clone());
        for c in field.raw_mut() {
            *c = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let reference = field.clone();
        let d = Vec2::new(3.7, -1.2);
        prop.potential(&mut field, d);
        for ix in (0..g.nx).step_by(7) {
            for iz in (0..g.nz).step_by(5) {
                let r = Vec2::new(g.x(ix), g.z(iz));
                let want = internal_step(&reference.spinor_at(ix, iz), r, d, dt, &p);
                let got = field.spinor_at(ix, iz);
                let diff: f64 = got
                    .0
                    .iter()
                    .zip(want.0.iter())
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                assert!(diff < 1e-12, "pointwise mismatch {diff:.2e} at ({ix}, {iz})");
            }
        }
    }

    #[test]
    fn free_gaussian_dispersion() {
        // Ω₀ = 0: width follows σ(t) = σ√(1 + (ħt/2mσ²)²) to 0.1%
        let p = PhysicalParams::from_parts(1.0, std::f64::consts::SQRT_2 + 1.0, 0.0, 0.0);
        let g = GridSpec::square(128, 16.0).unwrap();
        let sigma = 1.5;
        let mut f = gaussian_packet(&g, Vec2::ZERO, sigma, Vec2::ZERO, &Spinor4::basis(1)).unwrap();
        let dt = 0.01;
        let t_end = 2.0;
        let prop = Propagator::new(g.clone(), p, dt).unwrap();
        prop.evolve_to(&mut f, &paths::BeamPath::rest(), 0.0, t_end).unwrap();
        let rho = f.density();
        let mut var = 0.0;
        let mut mass = 0.0;
        for ix in 0..g.nx {
            let x = g.x(ix);
            for iz in 0..g.nz {
                let w = rho[g.idx(ix, iz)];
                var += w * x * x;
                mass += w;
            }
        }
        let sigma_t = (var / mass).sqrt();
        let want = sigma * (1.0 + (t_end / (2.0 * sigma * sigma)).powi(2)).sqrt();
        assert!(
            (sigma_t - want).abs() / want < 1e-3,
            "width {sigma_t} vs analytic {want}"
        );
    }

    #[test]
    fn static_beams_conserve_energy_and_com() {
        // The split evolution's energy wobble scales as dt²; at dt = 1.25e-4
        // it sits below the 1e-8 relative target.
        let p = params();
        let g = GridSpec::square(128, 16.0).unwrap();
        // dark spinor (1, i)/√2 has zero mean momentum: the packet stays put
        let c = DarkState2::new(
            C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            C64::new(0.0, std::f64::consts::FRAC_1_SQRT_2),
        );
        let mut f = dark_packet(&g, Vec2::ZERO, 1.5, Vec2::ZERO, c, Vec2::ZERO, &p);
        let e0 = total_energy(&f, Vec2::ZERO, &p).unwrap();
        let prop = Propagator::new(g.clone(), p, 5e-5).unwrap();
        prop.evolve_to(&mut f, &paths::BeamPath::rest(), 0.0, 0.5).unwrap();
        let e1 = total_energy(&f, Vec2::ZERO, &p).unwrap();
        assert!(
            ((e1 - e0) / e0).abs() < 1e-8,
            "energy drifted from {e0} to {e1} (rel {:.2e})",
            ((e1 - e0) / e0).abs()
        );
        let obs = observables(&f, p.mass).unwrap();
        assert!(obs.center_of_mass.norm() < 2e-3, "COM moved to {:?}", obs.center_of_mass);
        let drift = (f.norm_sq() - 1.0).abs();
        assert!(drift < 1e-10, "norm drift {drift:.2e} over 10k steps");
    }

    #[test]
    fn checkpoint_resume_reproduces_run() {
        let p = params();
        let g = GridSpec::square(128, 16.0).unwrap();
        let path = paths::line_x(2.0, 1.0);
        let dt = 1e-3;
        let digest = config_digest("test-config");
        let prop = Propagator::new(g.clone(), p, dt).unwrap();

        let c = DarkState2::from_re(1.0, 0.0);
        let f0 = dark_packet(&g, Vec2::ZERO, 1.5, Vec2::ZERO, c, Vec2::ZERO, &p);

        // uninterrupted, observing at the midpoint so the kinetic grouping
        // matches the interrupted run
        let mut full = f0.clone();
        prop.evolve(&mut full, &path, 0.0, 400, 200, &mut |_, _, _| Ok(())).unwrap();

        // interrupted at step 200
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("ckpt");
        let mut first = f0.clone();
        prop.evolve(&mut first, &path, 0.0, 200, 200, &mut |_, _, _| Ok(())).unwrap();
        save_checkpoint(&first, &base, 0.2, 200, dt, path.displacement_clamped(0.2), &digest)
            .unwrap();

        let (mut resumed, t0, step0) = load_checkpoint(&base, &g, dt, &digest).unwrap();
        assert_eq!(step0, 200);
        prop.evolve(&mut resumed, &path, t0, 200, 200, &mut |_, _, _| Ok(())).unwrap();

        let diff: f64 = resumed
            .raw()
            .iter()
            .zip(full.raw().iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-12, "resumed run differs by {diff:.2e}");

        // refusals
        assert!(load_checkpoint(&base, &g, 2e-3, &digest).is_err());
        assert!(load_checkpoint(&base, &g, dt, "other").is_err());
        let g2 = GridSpec::square(256, 16.0).unwrap();
        assert!(load_checkpoint(&base, &g2, dt, &digest).is_err());
    }

    #[test]
    fn steps_between_requires_divisibility() {
        assert_eq!(steps_between(0.0, 1.0, 1e-3).unwrap(), 1000);
        assert!(steps_between(0.0, 1.0005, 1e-3).is_err());
        assert!(steps_between(1.0, 0.0, 1e-3).is_err());
    }
}
