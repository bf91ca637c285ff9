use std::fs;
use std::path::Path;

use deepads_core::data::netpbm::{encode_pgm, encode_ppm, GrayImage, RgbImage};
use deepads_core::data::{gen_synthetic, load_dataset, write_dataset};
use deepads_core::Error;

fn put_image(root: &Path, stem: &str, w: usize, h: usize) {
    fs::create_dir_all(root.join("images")).unwrap();
    let img = RgbImage {
        width: w,
        height: h,
        pixels: (0..w * h * 3).map(|k| (k * 7 % 256) as u8).collect(),
    };
    fs::write(
        root.join("images").join(format!("{stem}.ppm")),
        encode_ppm(&img),
    )
    .unwrap();
}

fn put_mask(root: &Path, stem: &str, w: usize, h: usize, pixels: Vec<u8>) {
    fs::create_dir_all(root.join("masks")).unwrap();
    let g = GrayImage {
        width: w,
        height: h,
        pixels,
    };
    fs::write(
        root.join("masks").join(format!("{stem}.pgm")),
        encode_pgm(&g),
    )
    .unwrap();
}

#[test]
fn pairs_load_in_stem_order() {
    let dir = tempfile::tempdir().unwrap();
    for stem in ["c", "a", "b"] {
        put_image(dir.path(), stem, 4, 4);
        put_mask(dir.path(), stem, 4, 4, vec![0; 16]);
    }
    let ds = load_dataset(dir.path(), (8, 8)).unwrap();
    let ids: Vec<&str> = ds.samples.iter().map(|s| s.id.as_str()).collect();
    assert_eq!(ids, ["a", "b", "c"]);
    assert_eq!(ds.samples[0].image.shape(), &[8, 8, 3]);
    assert_eq!(ds.samples[0].mask.shape(), &[8, 8]);
    assert!(ds.unmatched.is_empty());
}

#[test]
fn mask_binarised_at_128() {
    let dir = tempfile::tempdir().unwrap();
    put_image(dir.path(), "x", 2, 1);
    put_mask(dir.path(), "x", 2, 1, vec![200, 100]);
    let ds = load_dataset(dir.path(), (1, 2)).unwrap();
    assert_eq!(ds.samples[0].mask.data(), &[1.0, 0.0]);
}

#[test]
fn unmatched_stems_reported() {
    let dir = tempfile::tempdir().unwrap();
    put_image(dir.path(), "both", 2, 2);
    put_mask(dir.path(), "both", 2, 2, vec![255; 4]);
    put_mask(dir.path(), "orphan_mask", 2, 2, vec![255; 4]);
    put_image(dir.path(), "orphan_image", 2, 2);
    let ds = load_dataset(dir.path(), (2, 2)).unwrap();
    assert_eq!(ds.samples.len(), 1);
    assert_eq!(ds.unmatched, ["orphan_image", "orphan_mask"]);
}

#[test]
fn error_paths() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_dataset(dir.path(), (8, 8)),
        Err(Error::Io { .. })
    ));

    put_image(dir.path(), "a", 2, 2);
    put_mask(dir.path(), "b", 2, 2, vec![0; 4]);
    assert!(matches!(
        load_dataset(dir.path(), (8, 8)),
        Err(Error::EmptyInput(_))
    ));

    fs::write(dir.path().join("masks/a.pgm"), b"P5\n2 2\n255\n\x00").unwrap();
    let err = load_dataset(dir.path(), (8, 8)).unwrap_err();
    assert!(matches!(err, Error::Format { .. }));
    assert!(err.to_string().contains("a.pgm"), "{err}");
}

#[test]
fn synthetic_round_trip_and_quads_csv() {
    let dir = tempfile::tempdir().unwrap();
    let synth = gen_synthetic(4, (24, 32), 3).unwrap();
    write_dataset(dir.path(), &synth).unwrap();
    let csv = fs::read_to_string(dir.path().join("quads.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("stem,x0,y0,x1,y1,x2,y2,x3,y3\n"));

    let from_masks = load_dataset(dir.path(), (24, 32)).unwrap();
    assert_eq!(from_masks.samples.len(), 4);
    for (a, b) in from_masks.samples.iter().zip(&synth) {
        assert_eq!(a.mask, b.sample.mask);
        assert_eq!(a.id, b.sample.id);
        for (x, y) in a.image.data().iter().zip(b.sample.image.data()) {
            assert!((x - y).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    // Without masks/, annotations come from quads.csv and rasterise identically.
    fs::remove_dir_all(dir.path().join("masks")).unwrap();
    let from_quads = load_dataset(dir.path(), (24, 32)).unwrap();
    for (a, b) in from_quads.samples.iter().zip(&from_masks.samples) {
        assert_eq!(a.mask, b.mask);
    }
}

#[test]
fn synthetic_foreground_contrasts_with_background() {
    let synth = gen_synthetic(100, (48, 48), 21).unwrap();
    for s in &synth {
        let (img, mask) = (&s.sample.image, &s.sample.mask);
        let n_in = mask.sum();
        let n_out = mask.len() as f64 - n_in;
        let best = (0..3)
            .map(|c| {
                let (mut sin, mut sout) = (0.0, 0.0);
                for (k, &m) in mask.data().iter().enumerate() {
                    let v = img.data()[k * 3 + c];
                    if m == 1.0 {
                        sin += v
                    } else {
                        sout += v
                    }
                }
                (sin / n_in - sout / n_out).abs()
            })
            .fold(0.0, f64::max);
        assert!(best >= 0.2, "{}: contrast {best}", s.sample.id);
        let frac = n_in / mask.len() as f64;
        assert!((0.05..=0.35).contains(&frac));
    }
}
