use navsim_core::reslice::SliceKind;
use navsim_core::volume::{window_to_gray, HuWindow};
use navsim_demo::{direction, friedman, mann_whitney, parse_sample, registration_trial, Scene};

#[test]
fn needle_slices_show_the_cyst() {
    let scene = Scene::new().unwrap();
    let pose = scene.pose(90.0, 20.0, 30.0).unwrap();
    for kind in [
        SliceKind::PseudoTransverse,
        SliceKind::PseudoSagittal,
        SliceKind::Adjustable,
    ] {
        let img = scene.render(kind, &pose, 45.0, 120.0).unwrap();
        assert_eq!((img.width_px, img.height_px), (120, 120));
        // the cyst centre lies on the needle axis, so every pseudo plane cuts it fully
        assert!((img.overlay.target_radius_px.unwrap() - 11.0).abs() < 1e-9, "{kind:?}");
        let [c, r] = img.overlay.target_px.unwrap();
        let centre = img.pixels[r.round() as usize * img.width_px + c.round() as usize];
        assert_eq!(centre, window_to_gray(0.0, HuWindow::default()), "{kind:?}");
        assert!((img.overlay.distance_mm.unwrap() - 30.0).abs() < 1e-9);
    }
}

#[test]
fn direction_is_unit() {
    for (az, el) in [(0.0, 0.0), (37.0, -80.0), (200.0, 45.0)] {
        assert!((direction(az, el).norm() - 1.0).abs() < 1e-12);
    }
    assert!(direction(90.0, 0.0).distance(navsim_core::geom::Vec3::EY) < 1e-12);
}

#[test]
fn registration_noise_scales_errors() {
    let exact = registration_trial(6, 0.0, 1).unwrap();
    assert!(exact.fre_rms < 1e-9 && exact.tre_mm < 1e-9 && exact.rotation_error_deg < 1e-6);
    let noisy: Vec<_> = (0..40).map(|s| registration_trial(8, 1.0, s).unwrap()).collect();
    let mean_fre = noisy.iter().map(|t| t.fre_rms).sum::<f64>() / 40.0;
    // expected rms residual for 8 points: sqrt(3 (1 - 6/24)) per unit sigma
    assert!((mean_fre - (3.0f64 * 0.75).sqrt()).abs() < 0.25, "{mean_fre}");
    assert!(registration_trial(2, 0.5, 0).is_err());
    assert!(registration_trial(9, 0.5, 0).is_err());
}

#[test]
fn rank_tests_parse_text() {
    assert_eq!(parse_sample("1, 2;3 4\t5").unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    assert!(parse_sample("1, x").is_err());
    let f = friedman("1 2 3\n4 5 6\n\n7 8 9\n").unwrap();
    assert!((f.chi2 - 6.0).abs() < 1e-12);
    let m = mann_whitney("1 3 5", "2 4").unwrap();
    // pairs with a > b: (3,2), (5,2), (5,4); U sits on its mean so every split is as extreme
    assert_eq!(m.u, 3.0);
    assert_eq!(m.p, 1.0);
    let m = mann_whitney("10 11 12", "1 2").unwrap();
    assert_eq!(m.u, 6.0);
    // U = 0 or 6 out of C(5,2) = 10 splits
    assert!((m.p - 0.2).abs() < 1e-12, "{}", m.p);
}
