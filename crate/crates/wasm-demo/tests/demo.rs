use safe_wasm_demo::demo::{patch_grid, toy_spaces, DISCARDED};

#[test]
fn patch_grid_codes_cover_the_grid() {
    let g = patch_grid(0, 1, true, 1.0, 0.3).unwrap();
    let cells = (g.size() / g.patch()).pow(2);
    assert_eq!(g.codes().len(), cells);
    assert_eq!(g.truth().len(), cells);
    assert_eq!(g.rgba().len(), g.size() * g.size() * 4);
    assert!(g.codes().iter().all(|&c| c <= DISCARDED));
    assert!(g.codes().contains(&1));
    // every cell holding lesion pixels is either annotated or a missed lesion
    for (&code, &t) in g.codes().iter().zip(&g.truth()) {
        if t == 1 {
            assert!(code == 1 || code == 2);
        }
    }
}

#[test]
fn healthy_image_has_no_unhealthy_cells() {
    let g = patch_grid(3, 0, false, 1.0, 0.3).unwrap();
    assert!(g.codes().iter().all(|&c| c == 0 || c == DISCARDED));
    assert!(g.truth().iter().all(|&t| t == 0));
}

#[test]
fn bad_parameters_are_rejected() {
    assert!(patch_grid(0, 0, true, -1.0, 0.3).is_err());
    assert!(toy_spaces(0, 0, 10, 0.1).is_err());
    assert!(toy_spaces(0, 3, 10, 0.9).is_err());
}

#[test]
fn annotation_map_abstains_more_as_tau_rises() {
    let spaces = toy_spaces(7, 3, 100, 0.1).unwrap();
    let undecided = |tau| spaces.annotation_map(9, tau, 40).unwrap().iter().filter(|&&c| c == 2).count();
    let (lo, hi) = (undecided(0.5), undecided(0.9));
    assert_eq!(lo, 0, "K = 9 with three models never abstains at tau 0.5");
    assert!(hi > lo);
}

#[test]
fn sweep_is_monotone_in_tau() {
    let spaces = toy_spaces(1, 3, 120, 0.15).unwrap();
    let taus: Vec<f64> = (0..=10).map(|i| 0.5 + 0.05 * i as f64).collect();
    let out = spaces.tau_sweep(9, &taus, 200).unwrap();
    let d: Vec<f64> = out.iter().step_by(2).copied().collect();
    assert_eq!(d[0], 1.0);
    assert!(d.windows(2).all(|w| w[1] <= w[0]), "{d:?}");
    for (i, acc) in out.iter().skip(1).step_by(2).enumerate() {
        assert!(*acc <= d[i]);
    }
}
