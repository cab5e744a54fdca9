//! Exit criteria. Each test prints one PASS/FAIL line to stderr, bypassing
//! the harness capture, and fails when its criterion fails.

use std::f64::consts::{E, PI};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qcap::run::{calibrate, execute, Invocation};
use qcap_core::boundary_probe::estimate_cluster_set;
use qcap_core::capacity::{ring_capacity_exact, solve_capacity, SolverOptions};
use qcap_core::distortion_check::{verify_capacity_inequality, DEFAULT_TAU};
use qcap_core::exponents::{dual_exponent, dual_exponents, ExponentPair};
use qcap_core::geometry::{
    make_ring_condenser, rasterize, Condenser, GridDomain, Point, RegionSpec,
};
use qcap_core::mappings::MappingSpec;
use qcap_core::modulus::check_hesse_shlyk;
use qcap_core::penergy::{p_energy, p_energy_gradient, EnergyParams, ScalarField};

fn verdict(criterion: u32, title: &str, pass: bool, detail: &str) {
    let line = format!(
        "acceptance {criterion}: {} | {title} | {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(pass, "{}", line.trim_end());
}

fn cube(n: usize, half: f64, cells: usize) -> Arc<GridDomain> {
    Arc::new(GridDomain::cube(n, -half, half, cells).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn c1_planar_ring_p2() {
    let exact = 2.0 * PI;
    assert!(rel(ring_capacity_exact(2, 2.0, 1.0, E).unwrap(), exact) < 1e-14);
    let start = Instant::now();
    let c = make_ring_condenser([0.0; 3], 1.0, E, cube(2, 3.0, 256)).unwrap();
    let r = solve_capacity(&c, 2.0, &SolverOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let err = rel(r.value, exact);
    verdict(
        1,
        "ring n=2 p=2 (1,e) on 256^2 within 3% of 2pi, < 60 s",
        r.converged && err < 0.03 && secs < 60.0,
        &format!(
            "value {:.6} vs {:.6}, rel err {:.2e}, {secs:.1} s",
            r.value, exact, err
        ),
    );
}

#[test]
fn c2_spatial_ring_p2() {
    let exact = 8.0 * PI;
    let (a, b) = (1.0, 2.0);
    let cross = 4.0 * PI * a * b / (b - a);
    let oracle = ring_capacity_exact(3, 2.0, a, b).unwrap();
    let start = Instant::now();
    let c = make_ring_condenser([0.0; 3], a, b, cube(3, 2.5, 64)).unwrap();
    let r = solve_capacity(&c, 2.0, &SolverOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let err = rel(r.value, exact);
    verdict(
        2,
        "ring n=3 p=2 (1,2) on 64^3 within 5% of 8pi, < 300 s",
        rel(oracle, exact) < 1e-14
            && rel(cross, exact) < 1e-14
            && r.converged
            && err < 0.05
            && secs < 300.0,
        &format!(
            "value {:.5} vs {:.5}, rel err {:.2e}, {secs:.1} s",
            r.value, exact, err
        ),
    );
}

#[test]
fn c3_planar_ring_p15() {
    let exact = ring_capacity_exact(2, 1.5, 1.0, 2.0).unwrap();
    let c = make_ring_condenser([0.0; 3], 1.0, 2.0, cube(2, 2.5, 256)).unwrap();
    let r = solve_capacity(&c, 1.5, &SolverOptions::default()).unwrap();
    let err = rel(r.value, exact);
    verdict(
        3,
        "ring n=2 p=1.5 (1,2) within 5% of closed form",
        r.converged && err < 0.05,
        &format!("value {:.6} vs {:.6}, rel err {:.2e}", r.value, exact, err),
    );
}

#[test]
fn c4_radial_square_equality() {
    let analytic = (2.0 * PI / 2f64.ln()).sqrt();
    let image = make_ring_condenser([0.0; 3], 1.0, 4.0, cube(2, 5.0, 256)).unwrap();
    let m = MappingSpec::RadialPower {
        alpha: 2.0,
        center: [0.0; 3],
    };
    let r = verify_capacity_inequality(
        &m,
        &image,
        2.0,
        2.0,
        cube(2, 2.5, 256),
        &SolverOptions::default(),
        DEFAULT_TAU,
    )
    .unwrap();
    let rhs = r.rhs_k * r.rhs_cap;
    let (el, er) = (rel(r.lhs, analytic), rel(rhs, analytic));
    verdict(
        4,
        "x|x| on ring (1,4): both sides within 3% of 3.0108, slack >= -budget",
        r.converged && el < 0.03 && er < 0.03 && r.pass,
        &format!(
            "lhs {:.5} (err {el:.2e}), rhs {:.5} (err {er:.2e}), slack {:.2e}, budget {:.2e}",
            r.lhs, rhs, r.slack, r.discretization_budget
        ),
    );
}

#[test]
fn c5_scaling_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_exact = 0.0f64;
    for _ in 0..50 {
        let n = rng.gen_range(2..=3usize);
        let p = rng.gen_range(1.05..6.0);
        let lambda = rng.gen_range(0.1..10.0);
        let (r1, r2) = (1.0, rng.gen_range(1.2..4.0));
        let base = ring_capacity_exact(n, p, r1, r2).unwrap();
        let scaled = ring_capacity_exact(n, p, lambda * r1, lambda * r2).unwrap();
        worst_exact = worst_exact.max(rel(scaled, lambda.powf(n as f64 - p) * base));
    }

    let opts = SolverOptions::default();
    let (tau, _) = calibrate(
        &[
            qcap::config::RingCase {
                n: 2,
                p: 2.0,
                r1: 1.0,
                r2: E,
            },
            qcap::config::RingCase {
                n: 2,
                p: 1.5,
                r1: 1.0,
                r2: 2.0,
            },
            qcap::config::RingCase {
                n: 2,
                p: 3.0,
                r1: 1.0,
                r2: 2.0,
            },
        ],
        &[64, 128],
        &opts,
    )
    .unwrap();
    // the scaled ring sits on a grid with a different cell count, so the
    // two discretizations are not similar copies of each other
    let mut worst_solver = 0.0f64;
    for (p, lambda) in [(1.5, 0.5), (2.0, 2.0), (3.0, 0.7), (2.5, 1.6)] {
        let solve = |scale: f64, cells: usize| {
            let c = make_ring_condenser([0.0; 3], scale, 2.0 * scale, cube(2, 2.3 * scale, cells))
                .unwrap();
            solve_capacity(&c, p, &opts).unwrap().value
        };
        let base = solve(1.0, 128);
        let scaled = solve(lambda, 96);
        worst_solver = worst_solver.max(rel(scaled, lambda.powf(2.0 - p) * base));
    }
    verdict(
        5,
        "scaling law: closed form to 1e-12 (50 draws), solver within 2 tau_disc",
        worst_exact < 1e-12 && worst_solver <= 2.0 * tau,
        &format!("closed form worst {worst_exact:.1e}, solver worst {worst_solver:.2e}, tau_disc {tau:.2e}"),
    );
}

#[test]
fn c6_modulus_sandwich() {
    let c = make_ring_condenser([0.0; 3], 1.0, E, cube(2, 3.0, 256)).unwrap();
    let opts = SolverOptions::default();
    let half = check_hesse_shlyk(&c, 2.0, 360, &opts).unwrap();
    let full = check_hesse_shlyk(&c, 2.0, 720, &opts).unwrap();
    let ok = full.admissible_ok
        && full.modulus > 0.0
        && full.modulus <= 1.05 * full.capacity
        && half.modulus <= full.modulus;
    verdict(
        6,
        "modulus of 720 radial curves in (0, 1.05 cap], non-decreasing in count",
        ok,
        &format!(
            "modulus {:.5} (360 curves: {:.5}), capacity {:.5}, ratio {:.4}",
            full.modulus, half.modulus, full.capacity, full.ratio
        ),
    );
}

#[test]
fn c7_dual_exponents() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = [0.0f64; 2];
    let mut undefined = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=3usize);
        let lo = n as f64 - 1.0;
        let p = lo + (20.0 - lo) * rng.gen_range(f64::EPSILON..1.0);
        let once = dual_exponent(n, p).unwrap();
        match dual_exponent(n, once) {
            Ok(twice) => worst[n - 2] = worst[n - 2].max(rel(twice, p)),
            Err(_) => undefined += 1,
        }
    }
    // window: n < p < (n-1)^2/(n-2) = 4 forces p' > n-1 = 2
    let mut window_ok = true;
    let mut k = 3001;
    while k < 4000 {
        let p = k as f64 * 1e-3;
        let d = dual_exponents(&ExponentPair::new(3, p, p).unwrap()).unwrap();
        window_ok &= d.above_threshold && d.p > 2.0;
        k += 1;
    }
    let edge = dual_exponents(&ExponentPair::new(3, 4.0, 4.0).unwrap()).unwrap();
    window_ok &= !edge.above_threshold;
    let involution = worst[0] < 1e-12 && worst[1] < 1e-12 && undefined == 0;
    verdict(
        7,
        "dual exponents: involution to 1e-12 (n=2,3), window sweep for n=3",
        involution && window_ok,
        &format!(
            "involution worst rel err n=2 {:.1e}, n=3 {:.1e} ({undefined} second duals undefined); window sweep {}",
            worst[0],
            worst[1],
            if window_ok { "ok" } else { "violated" }
        ),
    );
}

#[test]
fn c8_cluster_sets() {
    let image = GridDomain::cube(2, -5.0, 5.0, 128).unwrap();
    let radial_image = image
        .masked(&RegionSpec::annulus([0.0; 3], 1.0, 4.0))
        .unwrap();
    let id_image = image
        .masked(&RegionSpec::annulus([0.0; 3], 1.0, 2.0))
        .unwrap();
    let h = image.h();
    let on_circle = |r: f64, k: usize, count: usize| -> Point {
        let t = 2.0 * PI * (k as f64 + 0.25) / count as f64;
        [r * t.cos(), r * t.sin(), 0.0]
    };
    let cases: Vec<(&str, MappingSpec, &GridDomain, Vec<Point>)> = vec![
        (
            "identity",
            MappingSpec::Identity,
            &id_image,
            (0..12)
                .map(|k| on_circle(2.0, k, 12))
                .chain((0..6).map(|k| on_circle(1.0, k, 6)))
                .collect(),
        ),
        (
            "radial",
            // inverse of x|x| is x/sqrt|x|
            MappingSpec::RadialPower {
                alpha: 0.5,
                center: [0.0; 3],
            },
            &radial_image,
            (0..12)
                .map(|k| on_circle(4.0, k, 12))
                .chain((0..6).map(|k| on_circle(1.0, k, 6)))
                .collect(),
        ),
    ];
    let mut worst = 0.0f64;
    let mut points = 0;
    let mut singletons = true;
    for (_, m, grid, bs) in &cases {
        for b in bs {
            let est = estimate_cluster_set(m, b, 8, 24, grid).unwrap();
            worst = worst.max(est.diameter);
            singletons &= est.points.len() == 1 && est.diameter < 3.0 * h;
            points += 1;
        }
    }
    verdict(
        8,
        "cluster sets of identity and x|x| are singletons (diam < 3h) at >= 16 points each",
        singletons && cases.iter().all(|c| c.3.len() >= 16),
        &format!(
            "{points} boundary points, worst diameter {worst:.2e}, 3h = {:.3}",
            3.0 * h
        ),
    );
}

fn gradient_agreement() -> f64 {
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (n, cells) in [(2, 8), (3, 4)] {
        let g = cube(n, 1.0, cells);
        for p in [1.5, 2.0, 3.0, 4.5] {
            let params = EnergyParams::new(p, 1e-3).unwrap();
            let u = ScalarField::new(
                (0..g.inside_count())
                    .map(|_| rng.gen_range(-0.5..1.5))
                    .collect(),
                g.clone(),
            )
            .unwrap();
            let grad = p_energy_gradient(&u, &params).unwrap();
            for i in 0..u.values.len() {
                let mut up = u.clone();
                up.values[i] += 1e-6;
                let mut dn = u.clone();
                dn.values[i] -= 1e-6;
                let fd = (p_energy(&up, &params) - p_energy(&dn, &params)) / 2e-6;
                worst = worst.max((fd - grad.values[i]).abs() / grad.values[i].abs().max(1e-3));
            }
        }
    }
    worst
}

fn run_cap(config: &Path, out: &Path) -> Vec<u8> {
    let inv = Invocation {
        command: qcap::config::Command::Cap,
        config: config.to_path_buf(),
        out: out.to_path_buf(),
        seed: None,
        threads: None,
    };
    assert_eq!(execute(&inv).0, 0);
    std::fs::read(out.join("cap.json")).unwrap()
}

#[test]
fn c9_property_suites() {
    let mut parts = Vec::new();

    let fd = gradient_agreement();
    parts.push(("gradient", fd < 1e-5, format!("fd rel err {fd:.1e}")));

    let g = cube(2, 2.0, 40);
    let ring = make_ring_condenser([0.0; 3], 0.5, 1.5, g.clone()).unwrap();
    let opts = SolverOptions::default();
    let bare = Condenser::new(ring.e.clone(), ring.f.clone(), g.clone()).unwrap();
    let big_e = rasterize(&RegionSpec::closed_ball([0.0; 3], 0.7), &g);
    let big_f = rasterize(&RegionSpec::ball([0.1, 0.0, 0.0], 1.3).complement(), &g);
    let mut mono = true;
    let mut sym = 0.0f64;
    for p in [1.5, 2.0, 3.0] {
        let base = solve_capacity(&bare, p, &opts).unwrap().value;
        for c in [
            Condenser::new(big_e.clone(), ring.f.clone(), g.clone()).unwrap(),
            Condenser::new(ring.e.clone(), big_f.clone(), g.clone()).unwrap(),
        ] {
            mono &= solve_capacity(&c, p, &opts).unwrap().value >= base - 1e-6;
        }
        let a = solve_capacity(&ring, p, &opts).unwrap().value;
        let b = solve_capacity(&ring.swapped(), p, &opts).unwrap().value;
        sym = sym.max(rel(b, a));
    }
    parts.push(("plate monotonicity", mono, String::new()));
    parts.push(("swap symmetry", sym <= 1e-10, format!("rel diff {sym:.1e}")));

    // enlarging the domain with the plates fixed must not raise the value
    let small = Arc::new(g.masked(&RegionSpec::ball([0.0; 3], 1.9)).unwrap());
    let e = rasterize(&RegionSpec::closed_ball([-0.8, 0.0, 0.0], 0.3), &small);
    let f = rasterize(&RegionSpec::closed_ball([0.8, 0.0, 0.0], 0.3), &small);
    let mut anti = true;
    let mut anti_detail = String::new();
    for p in [1.5, 2.0, 3.0] {
        let vb = solve_capacity(
            &Condenser::new(e.clone(), f.clone(), g.clone()).unwrap(),
            p,
            &opts,
        )
        .unwrap()
        .value;
        let vs = solve_capacity(
            &Condenser::new(e.clone(), f.clone(), small.clone()).unwrap(),
            p,
            &opts,
        )
        .unwrap()
        .value;
        if vb > vs + 1e-6 {
            anti = false;
            if !anti_detail.is_empty() {
                anti_detail.push_str(", ");
            }
            anti_detail.push_str(&format!("p={p}: enlarged {vb:.4} > original {vs:.4}"));
        }
    }
    parts.push(("domain anti-monotonicity", anti, anti_detail));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut raster = true;
    for _ in 0..200 {
        let n = rng.gen_range(2..=3usize);
        let grid = GridDomain::cube(n, -1.0, 1.0, if n == 2 { 32 } else { 12 }).unwrap();
        let c = [
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        ];
        let r = rng.gen_range(0.05..0.8);
        let inner = rasterize(&RegionSpec::ball(c, r), &grid);
        let outer = rasterize(&RegionSpec::ball(c, r + rng.gen_range(0.0..0.5)), &grid);
        raster &= inner.is_subset(&outer);
    }
    parts.push(("rasterization monotonicity", raster, String::new()));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cap.json");
    std::fs::write(
        &cfg,
        r#"{"p": 1.7, "grid": {"lo": -2, "hi": 2, "cells": 40}, "ring": {"r1": 0.5, "r2": 1.5}}"#,
    )
    .unwrap();
    let a = run_cap(&cfg, &dir.path().join("a"));
    let b = run_cap(&cfg, &dir.path().join("b"));
    parts.push(("report reproducibility", a == b, String::new()));

    let pass = parts.iter().all(|(_, ok, _)| *ok);
    let detail = parts
        .iter()
        .map(|(name, ok, d)| {
            let mark = if *ok { "ok" } else { "FAILED" };
            if d.is_empty() {
                format!("{name} {mark}")
            } else {
                format!("{name} {mark} ({d})")
            }
        })
        .collect::<Vec<_>>()
        .join("; ");
    verdict(9, "property suites", pass, &detail);
}
