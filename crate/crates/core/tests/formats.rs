use std::path::Path;

use dlif::grid::{SampledCurve, TimeGrid};
use dlif::io::{decode_checkpoint, decode_curve, decode_dpt, encode_checkpoint, encode_curve, encode_dpt};
use dlif::model::toy_config;
use dlif::basis::Family;
use dlif::rng::Rng;
use dlif::sim::DynamicVolume;
use dlif::trainer::{TrainConfig, Trainer};

fn random_volume(seed: u64) -> DynamicVolume {
    let grid = TimeGrid::uniform(5, 10.0).unwrap();
    let mut rng = Rng::new(seed);
    let data = (0..5 * 4 * 4 * 8).map(|_| rng.normal() * 3.0).collect();
    let mut v = DynamicVolume::new(grid, [4, 4, 8], 2.0, data).unwrap();
    v.seed = Some(seed);
    v
}

#[test]
fn dpt_round_trip_is_f32_exact() {
    let v = random_volume(1);
    let bytes = encode_dpt(&v).unwrap();
    let back = decode_dpt(&bytes, Path::new("x.dpt")).unwrap();
    assert_eq!(back.dims, v.dims);
    assert_eq!(back.grid, v.grid);
    assert_eq!(back.seed, Some(1));
    for (a, b) in back.data.iter().zip(&v.data) {
        assert_eq!(*a, *b as f32 as f64);
    }
    // a second pass is lossless
    assert_eq!(encode_dpt(&back).unwrap(), bytes);
}

#[test]
fn dpt_errors_carry_offsets() {
    let bytes = encode_dpt(&random_volume(2)).unwrap();
    let err = decode_dpt(&bytes[..bytes.len() - 3], Path::new("cut.dpt")).unwrap_err().to_string();
    assert!(err.contains("cut.dpt") && err.contains("byte offset"), "{err}");
    let mut bad = bytes.clone();
    bad[2] = b'X';
    assert!(decode_dpt(&bad, Path::new("bad.dpt")).is_err());
}

#[test]
fn curve_csv_round_trip_is_exact() {
    let grid = TimeGrid::standard();
    let mut rng = Rng::new(3);
    let c = SampledCurve::new(grid.clone(), (0..30).map(|_| rng.normal() * 1e3).collect()).unwrap();
    let text = encode_curve(&c);
    let back = decode_curve(&text, Path::new("c.csv")).unwrap();
    assert_eq!(back, c);
}

#[test]
fn curve_csv_rejects_junk() {
    let bad = "t_start_min,t_end_min,value\n0,1,2\n1,2,abc\n";
    let err = decode_curve(bad, Path::new("j.csv")).unwrap_err().to_string();
    assert!(err.contains("j.csv") && err.contains("byte offset"), "{err}");
    assert!(decode_curve("a,b,c\n", Path::new("h.csv")).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let cfg = toy_config(Family::Gaussian, true, true);
    let tc = TrainConfig::default();
    let tr = Trainer::new(cfg.clone(), &tc, 5).unwrap();
    let bytes = encode_checkpoint(&tr).unwrap();
    let ck = decode_checkpoint(&bytes, Path::new("m.ckpt"), Some(&cfg)).unwrap();
    assert_eq!(ck.header.model, cfg);
    for ((n1, a), (n2, b)) in ck.model.store.iter().zip(tr.model.store.iter()) {
        assert_eq!(n1, n2);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(*x, *y as f32 as f64);
        }
    }
    let other = toy_config(Family::ExpSigmoid, false, false);
    assert!(decode_checkpoint(&bytes, Path::new("m.ckpt"), Some(&other)).is_err());
    assert!(decode_checkpoint(&bytes[..bytes.len() - 1], Path::new("m.ckpt"), None).is_err());
    let mut long = bytes.clone();
    long.push(0);
    assert!(decode_checkpoint(&long, Path::new("m.ckpt"), None).is_err());
}
