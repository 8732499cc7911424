use ofl_core::nlfh::*;
use ofl_core::potential::PotentialSpec;
use proptest::prelude::*;

fn generic_points() -> Vec<(f64, f64)> {
    vec![(0.0, 0.5), (0.3, 0.8), (0.5, 1.2), (0.1, 0.4), (0.2, 0.7)]
}

fn mat_close(a: &Mat2, b: &Mat2, tol: f64) -> bool {
    a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn closed_form_values() {
    let s = PotentialSpec::harmonic();
    let p = thermo_map(0.0, 0.5, &s, 0.0).unwrap();
    assert!((p.tau - 0.0).abs() < 1e-10 && (p.b - 1.0).abs() < 1e-10);
    // 2e - v² = 2 here.
    let p = thermo_map(1.0, 1.5, &s, 0.0).unwrap();
    assert!((p.tau - 0.5).abs() < 1e-10 && (p.b - 0.5).abs() < 1e-10);
}

#[test]
fn small_beta_matches_closed_form() {
    for spec in [PotentialSpec::toda(), PotentialSpec::fpu_alpha(0.1), PotentialSpec::harmonic()] {
        for (v, e) in generic_points() {
            let p = thermo_map(v, e, &spec, 1e-4).unwrap();
            let c = thermo_map_closed_form(v, e).unwrap();
            assert!((p.tau - c.tau).abs() < 1e-3 && (p.b - c.b).abs() < 1e-3, "{}: {p:?} vs {c:?}", spec.name());
        }
    }
}

#[test]
fn harmonic_root_find_is_exact_for_any_beta() {
    let s = PotentialSpec::harmonic();
    for (v, e) in generic_points() {
        let p = thermo_map(v, e, &s, 0.3).unwrap();
        let c = thermo_map_closed_form(v, e).unwrap();
        assert!((p.tau - c.tau).abs() < 1e-10 && (p.b - c.b).abs() < 1e-10);
    }
}

#[test]
fn moments_reproduce_targets() {
    use ofl_core::gibbs::{GibbsMeasure, GibbsParams};
    let s = PotentialSpec::toda();
    for (v, e) in generic_points() {
        let p = thermo_map(v, e, &s, 0.5).unwrap();
        let m = GibbsMeasure::new(GibbsParams::new(0.5, p.b, p.tau), &s).unwrap();
        assert!((m.mean_eta() - v).abs() < 1e-8);
        assert!((m.mean_zeta() - e).abs() < 1e-8);
        assert!((m.mean_xi() - p.pressure()).abs() < 1e-8);
    }
}

/// Plain central differences of `P = τ/b` through the public root finder.
fn fd_oracle(spec: &PotentialSpec, beta: f64, v: f64, e: f64) -> ([f64; 2], Mat2) {
    let p = |v: f64, e: f64| thermo_map(v, e, spec, beta).unwrap().pressure();
    let h = 1e-3;
    let gv = (p(v + h, e) - p(v - h, e)) / (2.0 * h);
    let ge = (p(v, e + h) - p(v, e - h)) / (2.0 * h);
    let p0 = p(v, e);
    let hvv = (p(v + h, e) - 2.0 * p0 + p(v - h, e)) / (h * h);
    let hee = (p(v, e + h) - 2.0 * p0 + p(v, e - h)) / (h * h);
    let hve = (p(v + h, e + h) - p(v + h, e - h) - p(v - h, e + h) + p(v - h, e - h)) / (4.0 * h * h);
    ([gv, ge], [[hvv, hve], [hve, hee]])
}

#[test]
fn jet_matches_finite_difference_oracle() {
    for spec in [PotentialSpec::toda(), PotentialSpec::fpu_alpha(0.1)] {
        for (v, e) in generic_points() {
            let pt = thermo_map(v, e, &spec, 0.5).unwrap();
            let jet = pressure_jet(&pt, &spec, 0.5).unwrap();
            let (g, h) = fd_oracle(&spec, 0.5, v, e);
            assert!((jet.grad[0] - g[0]).abs() < 1e-5 && (jet.grad[1] - g[1]).abs() < 1e-5, "{:?} vs {:?}", jet.grad, g);
            assert!(mat_close(&jet.hess, &h, 1e-3), "{:?} vs {:?}", jet.hess, h);
        }
    }
}

#[test]
fn toda_pressure_is_affine_in_energy() {
    // V' = 1 - e^{-x} gives E[ξ] shifted by a constant multiple of e.
    let s = PotentialSpec::toda();
    let pt = thermo_map(0.2, 0.7, &s, 0.5).unwrap();
    let jet = pressure_jet(&pt, &s, 0.5).unwrap();
    assert!((jet.grad[0] - 1.0).abs() < 1e-10);
    assert!((jet.grad[1] + 0.5).abs() < 1e-10);
}

#[test]
fn beta_zero_report() {
    let s = PotentialSpec::harmonic();
    let pt = thermo_map(0.0, 0.5, &s, 0.0).unwrap();
    let r = mode_coupling(&pt, &s, 0.0, 1.0).unwrap();
    assert!(mat_close(&r.j, &[[2.0, 0.0], [0.0, 0.0]], 1e-10));
    assert!((r.v_plus - 2.0).abs() < 1e-10 && r.v_minus.abs() < 1e-10);
    assert!(mat_close(&r.modes, &[[1.0, 0.0], [0.0, -1.0]], 1e-10));
    assert!(mat_close(&r.g1, &[[0.0; 2]; 2], 1e-10));
    assert!(mat_close(&r.g2, &[[-1.0, 0.0], [0.0, 0.0]], 1e-10));
    let c = r.class_pair.unwrap();
    assert_eq!((c.mode1, c.mode2), (UniversalityClass::Diff, UniversalityClass::Levy32));
}

#[test]
fn diagonalisation_and_g2_structure() {
    for spec in [PotentialSpec::toda(), PotentialSpec::fpu_alpha(0.1)] {
        for (v, e) in generic_points() {
            let pt = thermo_map(v, e, &spec, 0.5).unwrap();
            let r = coupling_matrices(&pt, &spec, 0.5, 1.0).unwrap();
            let id = mat_mul(&r.r, &r.rinv);
            assert!(mat_close(&id, &[[1.0, 0.0], [0.0, 1.0]], 1e-10));
            let d = mat_mul(&mat_mul(&r.r, &r.j), &r.rinv);
            assert!(d[0][1].abs() < 1e-8 && d[1][0].abs() < 1e-8);
            assert!((d[0][0] - r.v_plus).abs() < 1e-8 && (d[1][1] - r.v_minus).abs() < 1e-8);
            let g = r.g2[0][0].abs();
            assert!(r.g2[0][0] < 0.0);
            assert!(r.g2[1][1].abs() < 1e-6 * g && r.g2[0][1].abs() < 1e-6 * g && r.g2[1][0].abs() < 1e-6 * g);
        }
    }
}

#[test]
fn anharmonic_potentials_give_kpz_and_five_thirds() {
    for spec in [PotentialSpec::toda(), PotentialSpec::fpu_alpha(0.1)] {
        let pt = thermo_map(0.3, 0.8, &spec, 0.5).unwrap();
        let c = mode_coupling(&pt, &spec, 0.5, 1.0).unwrap().class_pair.unwrap();
        assert_eq!((c.mode1, c.mode2), (UniversalityClass::Kpz, UniversalityClass::Levy53));
    }
    let s = PotentialSpec::harmonic();
    let pt = thermo_map(0.3, 0.8, &s, 0.5).unwrap();
    let c = mode_coupling(&pt, &s, 0.5, 1.0).unwrap().class_pair.unwrap();
    assert_eq!((c.mode1, c.mode2), (UniversalityClass::Diff, UniversalityClass::Levy32));
}

#[test]
fn sound_mode_tracks_cubic_coefficient() {
    // Mode-1 coefficients ∝ (1, c₃β) up to O(β²).
    for (spec, c3) in [(PotentialSpec::toda(), -1.0), (PotentialSpec::fpu_alpha(0.1), 0.6)] {
        for beta in [1e-2, 1e-3] {
            let pt = thermo_map(0.1, 0.6, &spec, beta).unwrap();
            let r = coupling_matrices(&pt, &spec, beta, 1.0).unwrap();
            let ratio = r.modes[0][1] / r.modes[0][0];
            assert!((ratio - c3 * beta).abs() < 5.0 * beta * beta, "{}: {ratio} vs {}", spec.name(), c3 * beta);
        }
    }
}

#[test]
fn small_coupling_is_reported_ambiguous() {
    let s = PotentialSpec::fpu_alpha(0.1);
    let pt = thermo_map(0.0, 0.5, &s, 0.01).unwrap();
    assert!(matches!(mode_coupling(&pt, &s, 0.01, 1.0), Err(ofl_core::OflError::ClassificationAmbiguous { .. })));
}

#[test]
fn golden_classification_table() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/classification.csv")).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bit = |i: usize| f[i] == "1";
        let c = classify_pattern(bit(0), bit(1), bit(2), bit(3));
        assert_eq!(c.mode1.name(), f[4], "{line}");
        assert_eq!(c.mode2.name(), f[5], "{line}");
        assert_eq!(format!("{:?}", c.table), f[6], "{line}");
        rows += 1;
    }
    assert_eq!(rows, 16);
}

fn swap_pair(c: Classification) -> (UniversalityClass, UniversalityClass) {
    (c.mode2, c.mode1)
}

proptest! {
    #[test]
    fn relabelling_modes_swaps_classes(a: bool, b: bool, c: bool, d: bool) {
        // Swapping modes maps (G¹₁₁, G¹₂₂, G²₁₁, G²₂₂) to (G²₂₂, G²₁₁, G¹₂₂, G¹₁₁).
        let x = classify_pattern(a, b, c, d);
        let y = classify_pattern(d, c, b, a);
        prop_assert_eq!(swap_pair(x), (y.mode1, y.mode2));
    }

    #[test]
    fn classification_is_scale_invariant(
        g in proptest::array::uniform4(-2.0f64..2.0),
        off in -1.0f64..1.0,
        scale in 1e-3f64..1e3,
    ) {
        let g1 = [[g[0], off], [off, g[1]]];
        let g2 = [[g[2], 0.0], [0.0, g[3]]];
        let s = |m: &Mat2| [[m[0][0] * scale, m[0][1] * scale], [m[1][0] * scale, m[1][1] * scale]];
        match (classify(&g1, &g2), classify(&s(&g1), &s(&g2))) {
            (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
            (Err(_), Err(_)) => {}
            (x, y) => prop_assert!(false, "{:?} vs {:?}", x, y),
        }
    }
}
