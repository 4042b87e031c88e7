mod common;

use common::{affinity, fc_by_path_enumeration, fc_by_threshold_sweep, random_fc_case};
use lungseg::fc::{binarize, compute_connectivity_from, AffinityParams};
use lungseg::{Dims, Volume};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run(d: Dims, v: &[f64], seeds: &[usize], p: &AffinityParams<f64>) -> Vec<f64> {
    let vol = Volume::from_hu(d, [1.0; 3], v.to_vec()).unwrap();
    let s: Vec<[usize; 3]> = seeds.iter().map(|&i| d.coords(i)).collect();
    compute_connectivity_from(&vol, &s, p).unwrap().strength().to_vec()
}

#[test]
fn matches_simple_path_enumeration_on_small_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = AffinityParams::default();
    for _ in 0..150 {
        let (d, v, seeds) = random_fc_case(&mut rng, 16);
        let got = run(d, &v, &seeds, &p);
        let want = fc_by_path_enumeration(d, &v, &seeds, p.mean, p.sigma);
        for (i, (g, w)) in got.iter().zip(&want).enumerate() {
            assert!((g - w).abs() <= 1e-12, "{d} voxel {i}: {g} vs {w}");
        }
    }
}

#[test]
fn matches_bottleneck_sweep_up_to_4_cube() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let p = AffinityParams {
        mean: -500.0,
        sigma: 220.0,
        theta: 0.5,
    };
    for _ in 0..200 {
        let (d, v, seeds) = random_fc_case(&mut rng, 64);
        let got = run(d, &v, &seeds, &p);
        let want = fc_by_threshold_sweep(d, &v, &seeds, p.mean, p.sigma);
        for (i, (g, w)) in got.iter().zip(&want).enumerate() {
            assert!((g - w).abs() <= 1e-12, "{d} voxel {i}: {g} vs {w}");
        }
    }
}

#[test]
fn the_two_oracles_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..60 {
        let (d, v, seeds) = random_fc_case(&mut rng, 14);
        let a = fc_by_path_enumeration(d, &v, &seeds, -550.0, 150.0);
        let b = fc_by_threshold_sweep(d, &v, &seeds, -550.0, 150.0);
        assert_eq!(a, b);
    }
}

#[test]
fn wall_in_a_line_caps_strength_and_theta_cuts_it_off() {
    let m = -550.0;
    let d = Dims::new(4, 1, 1);
    let v = [m, m, 3071.0, m];
    let p = AffinityParams::default();
    let got = run(d, &v, &[0], &p);
    let wall = affinity(m, 3071.0, m, 150.0);
    assert_eq!(got[0], 1.0);
    assert_eq!(got[1], 1.0);
    assert!((got[2] - wall).abs() <= 1e-15);
    assert!((got[3] - wall).abs() <= 1e-15);

    let cmap = compute_connectivity_from(&Volume::from_hu(d, [1.0; 3], v.to_vec()).unwrap(), &[[0, 0, 0]], &p).unwrap();
    let just_above = wall * (1.0 + 1e-6);
    let mask = binarize(&cmap, just_above).unwrap();
    assert_eq!(mask.labels(), &[1, 1, 0, 0]);
    let mask = binarize(&cmap, wall).unwrap();
    assert_eq!(mask.labels(), &[1, 1, 1, 1]);
}

#[test]
fn single_precision_tracks_double() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..30 {
        let (d, v, seeds) = random_fc_case(&mut rng, 64);
        let want = run(d, &v, &seeds, &AffinityParams::default());
        let vol = Volume::<f32>::from_hu(d, [1.0; 3], v.iter().map(|&x| x as f32).collect()).unwrap();
        let s: Vec<[usize; 3]> = seeds.iter().map(|&i| d.coords(i)).collect();
        let got = compute_connectivity_from(&vol, &s, &AffinityParams::<f32>::default()).unwrap();
        for (g, w) in got.strength().iter().zip(&want) {
            assert!((*g as f64 - w).abs() <= 1e-5, "{g} vs {w}");
        }
    }
}
