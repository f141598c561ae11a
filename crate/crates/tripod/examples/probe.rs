// Scratch probe for choosing scenario constants. Not part of the artifact.
use num_complex::Complex64 as C64;
use tripod::analysis::{compare_to_oracle, detect_subpackets, synthesize_oracle_field};
use tripod::grid::{boundary_band_density, GridSpec};
use tripod::model::{dark_gaussian_packet, dark_projection, PhysicalParams};
use tripod::oracle::{predict_lattice, DarkState2};
use tripod::paths;
use tripod::propagator::Propagator;
use tripod::Vec2;

fn count_study(name: &str, grid: &GridSpec, set: &tripod::oracle::BranchSet, sigma: f64, t: f64, p: &PhysicalParams) {
    let field = synthesize_oracle_field(grid, set, sigma, t, Vec2::ZERO, p).unwrap();
    let rho = field.density();
    print!("{name}: groups={} counts:", set.position_groups(1e-6).len());
    for th in [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85] {
        let c = detect_subpackets(&rho, grid, th).unwrap();
        print!(" {th}:{}", c.len());
    }
    println!();
}

fn main() {
    let p = PhysicalParams::natural(100.0);
    let s0 = DarkState2::from_re(1.0, 0.0);

    // --- synthetic studies ---
    let g512 = GridSpec::square(512, 48.0).unwrap();

    // full square, a = 40 vs quadrature-phase side
    let sq40 = predict_lattice(&paths::square_cw(40.0, 5.0, 2.5), &s0).unwrap();
    count_study("square a=40      t=48", &g512, &sq40, 5.0, 48.0, &p);
    let aq = std::f64::consts::FRAC_PI_4 + 12.0 * std::f64::consts::PI;
    let sqq = predict_lattice(&paths::square_cw(aq, aq / 8.0, aq / 16.0), &s0).unwrap();
    count_study(&format!("square a={aq:.3} t=48"), &g512, &sqq, 5.0, 48.0, &p);

    // square to C (two sides), a=40
    let toc = predict_lattice(
        &paths::PathBuilder::new()
            .line(Vec2::new(1.0, 0.0), 5.0, 8.0)
            .line(Vec2::new(0.0, -1.0), 5.0, 8.0)
            .build(),
        &s0,
    )
    .unwrap();
    let g512b = GridSpec::square(512, 40.0).unwrap();
    count_study("square-to-C a=40 t=16", &g512b, &toc, 5.0, 16.0, &p);

    // line at t=8
    let line = predict_lattice(&paths::line_x(5.0, 8.0), &s0).unwrap();
    count_study("line a=40        t=8 ", &g512b, &line, 5.0, 8.0, &p);

    // triangle a=40 and quadrature variants
    for a in [40.0, aq, 39.27, 41.0] {
        let tri = predict_lattice(&paths::triangle_cw(a, 5.0), &s0).unwrap();
        count_study(&format!("triangle a={a:.3} t=24"), &g512b, &tri, 5.0, 24.0, &p);
    }

    // --- one real PDE line run at acceptance scale ---
    let t0 = std::time::Instant::now();
    let grid = GridSpec::square(512, 40.0).unwrap();
    let path = paths::line_x(5.0, 8.0);
    let mut f = dark_gaussian_packet(
        &grid, Vec2::ZERO, 5.0, Vec2::ZERO,
        C64::new(1.0, 0.0), C64::new(0.0, 0.0), Vec2::ZERO, &p,
    )
    .unwrap();
    let prop = Propagator::new(grid.clone(), p, 1e-3).unwrap();
    prop.evolve_to(&mut f, &path, 0.0, 8.0).unwrap();
    println!("line PDE run: {:.1} s", t0.elapsed().as_secs_f64());

    let d_end = path.displacement_clamped(8.0);
    let (_, _, bright) = dark_projection(&f, d_end, &p).unwrap();
    println!("bright population: {bright:.3e}");
    println!("boundary density: {:.3e}", boundary_band_density(&f, 5));
    let rho = f.density();
    for th in [0.05, 0.3, 0.5, 0.65, 0.7, 0.75] {
        let clusters = detect_subpackets(&rho, &grid, th).unwrap();
        print!("th={th}: {} clusters:", clusters.len());
        for c in &clusters {
            print!(" ({:.2},{:.2},w={:.3})", c.centroid.x, c.centroid.z, c.weight);
        }
        println!();
    }
    let pred = predict_lattice(&path, &s0).unwrap();
    let cmp = compare_to_oracle(&f, &pred, 5.0, 8.0, d_end, &p, 0.7).unwrap();
    println!("oracle comparison: {cmp:?}");
    let cmp_nochirp = compare_to_oracle(&f, &pred, 5.0, 0.0, d_end, &p, 0.7).unwrap();
    println!("fidelity without chirp template: {:.4}", cmp_nochirp.internal_fidelity);
}
