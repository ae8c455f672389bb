use super::*;

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        num_train: 500,
        num_test: 100,
        seed,
        ..SynthConfig::default()
    }
}

#[test]
fn origin_maps_to_scale() {
    assert_eq!(source_from_target([0.0, 0.0], 0.4, [1, 0]), [0.4, 0.4]);
}

#[test]
fn swapped_example() {
    let x = source_from_target([1.0, 0.5], 0.3, [1, 0]);
    assert!((x[0] - 0.763_274_768_6).abs() < 1e-9, "{x:?}");
    assert!((x[1] - 1.162_090_691_8).abs() < 1e-9, "{x:?}");
}

#[test]
fn identity_permutation_rejected() {
    let c = SynthConfig {
        permutation: [0, 1],
        ..small(0)
    };
    assert!(generate(&c).is_err());
    let c = SynthConfig {
        permutation: [1, 1],
        ..small(0)
    };
    assert!(generate(&c).is_err());
    let c = SynthConfig {
        num_test: 0,
        ..small(0)
    };
    assert!(generate(&c).is_err());
}

#[test]
fn default_counts_and_alignment() {
    let g = generate(&SynthConfig::default()).unwrap();
    assert_eq!(g.train.len(), 27_000);
    assert_eq!(g.test.len(), 3_000);
    let t = g.meta.t.unwrap();
    assert!((0.3..=0.5).contains(&t));
    assert!(alignment_residual(&g.train, t, [1, 0]) < 1e-12);
    assert!(alignment_residual(&g.test, t, [1, 0]) < 1e-12);

    // Uniform on [-1, 1] has standard deviation 2 / sqrt(12).
    let n = g.train.len() as f64;
    let mean: f64 = (0..g.train.len()).map(|i| g.train.y.get(i, 0)).sum::<f64>() / n;
    let bound = 3.0 * (2.0 / 12f64.sqrt()) / n.sqrt();
    assert!(mean.abs() < bound, "{mean} vs {bound}");
}

#[test]
fn target_ranges() {
    let g = generate(&small(4)).unwrap();
    for i in 0..g.train.len() {
        let y = g.train.y.row_slice(i);
        assert!((-1.0..=1.0).contains(&y[0]));
        let noise = y[1] - 0.5 * y[0];
        assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&noise));
    }
}

#[test]
fn map_is_injective_on_samples() {
    // Each coordinate of x is u + t cos(u) with u a coordinate of Ay, whose
    // slope is at least 1 - t > 0, so distinct targets give distinct sources.
    let g = generate(&small(9)).unwrap();
    let t = g.meta.t.unwrap();
    let d = &g.train;
    let mut min_sep = f64::INFINITY;
    for i in 0..d.len() {
        for j in 0..i {
            let dx: f64 = (0..2).map(|k| (d.x.get(i, k) - d.x.get(j, k)).abs()).fold(0.0, f64::max);
            let dy: f64 = (0..2).map(|k| (d.y.get(i, k) - d.y.get(j, k)).abs()).fold(0.0, f64::max);
            assert!(dx >= (1.0 - t) * dy - 1e-12);
            min_sep = min_sep.min(dx);
        }
    }
    assert!(min_sep > 0.0);
}

#[test]
fn generation_is_deterministic() {
    assert_eq!(generate(&small(3)).unwrap(), generate(&small(3)).unwrap());
    assert_ne!(generate(&small(3)).unwrap().train, generate(&small(4)).unwrap().train);
}

#[test]
fn per_sample_scales_stay_in_range() {
    let c = SynthConfig {
        t_mode: TMode::PerSample,
        ..small(2)
    };
    let g = generate(&c).unwrap();
    assert_eq!(g.meta.t, None);
    let mut scales = Vec::new();
    for i in 0..g.train.len() {
        let y = g.train.y.row_slice(i);
        // Ay = (y2, y1); recover t from the first coordinate.
        let t = (g.train.x.get(i, 0) - y[1]) / y[1].cos();
        assert!((0.3 - 1e-9..=0.5 + 1e-9).contains(&t), "{t}");
        let second = (g.train.x.get(i, 1) - y[0]) / y[0].cos();
        assert!((t - second).abs() < 1e-9);
        scales.push(t);
    }
    let spread = scales.iter().cloned().fold(f64::MIN, f64::max)
        - scales.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread > 0.1);
}

#[test]
fn anchors_are_aligned_pairs() {
    let g = generate(&small(1)).unwrap();
    let t = g.meta.t.unwrap();
    let a = select_anchors(&g.train, 1, 7).unwrap();
    assert_eq!(a.len(), 1);
    let (x, y) = &a.pairs[0];
    let expect = source_from_target([y[0], y[1]], t, [1, 0]);
    assert!((x[0] - expect[0]).abs() < 1e-12 && (x[1] - expect[1]).abs() < 1e-12);

    assert_eq!(a, select_anchors(&g.train, 1, 7).unwrap());
    assert!(matches!(
        select_anchors(&g.train, 501, 0),
        Err(SynthError::TooManyAnchors { .. })
    ));
}

#[test]
fn all_anchors_cover_the_dataset() {
    let g = generate(&small(1)).unwrap();
    let a = select_anchors(&g.train, g.train.len(), 3).unwrap();
    let mut got: Vec<Vec<f64>> = a.pairs.iter().map(|p| p.1.clone()).collect();
    let mut want: Vec<Vec<f64>> = (0..g.train.len()).map(|i| g.train.y.row_slice(i).to_vec()).collect();
    let key = |v: &Vec<f64>| (v[0].to_bits(), v[1].to_bits());
    got.sort_by_key(key);
    want.sort_by_key(key);
    assert_eq!(got, want);
}

fn labelled(n: usize) -> PairedDataset {
    let rows: Vec<[f64; 2]> = (0..n).map(|i| [i as f64, 0.0]).collect();
    PairedDataset::new(Tensor::from_rows(&rows), Tensor::from_rows(&rows)).unwrap()
}

#[test]
fn shuffling_breaks_alignment() {
    // Two independent uniform permutations agree at any fixed position with
    // probability 1/N, so about one surviving pair per shuffle.
    let n = 40;
    let data = labelled(n);
    let trials = 3000;
    let mut survivors = 0usize;
    for seed in 0..trials {
        let (x, y) = shuffle_unpaired(&data, seed);
        survivors += (0..n).filter(|&i| x.get(i, 0) == y.get(i, 0)).count();
    }
    let frac = survivors as f64 / (trials as usize * n) as f64;
    let expected = 1.0 / n as f64;
    // Fixed-point count of a random permutation has variance ~1.
    let tol = 4.0 / ((trials as f64).sqrt() * n as f64);
    assert!((frac - expected).abs() < tol, "{frac} vs {expected}");
}

#[test]
fn shuffling_keeps_marginals() {
    let g = generate(&small(5)).unwrap();
    let (x, y) = shuffle_unpaired(&g.train, 11);
    for (orig, shuf) in [(&g.train.x, &x), (&g.train.y, &y)] {
        let mut a = orig.data().to_vec();
        let mut b = shuf.data().to_vec();
        assert!((a.iter().sum::<f64>() - b.iter().sum::<f64>()).abs() < 1e-9);
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
    }
    let (x2, _) = shuffle_unpaired(&g.train, 12);
    assert_ne!(x, x2);
}

#[test]
fn csv_and_meta_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = generate(&small(8)).unwrap();
    let data_path = dir.path().join("train.csv");
    write_dataset(&g.train, &data_path).unwrap();
    assert_eq!(read_dataset(&data_path).unwrap(), g.train);
    let text = std::fs::read_to_string(&data_path).unwrap();
    assert!(text.starts_with("x1,x2,y1,y2\n"));
    assert_eq!(text.lines().count(), 501);

    let meta_path = dir.path().join("metadata.txt");
    write_meta(&g.meta, &meta_path).unwrap();
    assert_eq!(read_meta(&meta_path).unwrap(), g.meta);
}

#[test]
fn malformed_csv_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "a,b,c,d\n1,2,3,4\n").unwrap();
    assert!(matches!(read_dataset(&p), Err(SynthError::Format { .. })));
    std::fs::write(&p, "x1,x2,y1,y2\n1,2,3,oops\n").unwrap();
    assert!(matches!(read_dataset(&p), Err(SynthError::Format { .. })));
}
