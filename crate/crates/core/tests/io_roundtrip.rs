use hazelift::raster::{load_image, save_image, RasterImage};
use hazelift::Error;
use proptest::prelude::*;

#[test]
fn all_white_png_loads_as_ones() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("white.png");
    image::RgbImage::from_pixel(2, 2, image::Rgb([255, 255, 255]))
        .save(&p)
        .unwrap();
    let img = load_image(&p).unwrap();
    assert_eq!((img.width(), img.height(), img.channels()), (2, 2, 3));
    assert!(img.data().iter().all(|&s| s == 1.0));
}

#[test]
fn all_black_bmp_loads_as_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("black.bmp");
    image::RgbImage::from_pixel(2, 2, image::Rgb([0, 0, 0]))
        .save(&p)
        .unwrap();
    let img = load_image(&p).unwrap();
    assert!(img.data().iter().all(|&s| s == 0.0));
}

#[test]
fn grayscale_file_has_one_channel() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.png");
    image::GrayImage::from_fn(3, 2, |x, _| image::Luma([(x * 100) as u8]))
        .save(&p)
        .unwrap();
    let img = load_image(&p).unwrap();
    assert_eq!(img.channels(), 1);
    assert_eq!(img.get(2, 1, 0), 200.0 / 255.0);
}

#[test]
fn half_gray_quantizes_to_128() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("half.png");
    let img = RasterImage::from_fn(4, 3, 3, |_, _, _| 0.5).unwrap();
    save_image(&img, &p).unwrap();
    let raw = image::open(&p).unwrap().to_rgb8();
    assert!(raw.pixels().all(|px| px.0 == [128, 128, 128]));

    let white = RasterImage::from_fn(2, 2, 1, |_, _, _| 1.0).unwrap();
    let q = dir.path().join("w.png");
    save_image(&white, &q).unwrap();
    assert!(image::open(&q)
        .unwrap()
        .to_luma8()
        .pixels()
        .all(|px| px.0 == [255]));
}

#[test]
fn bad_paths_and_formats() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_image(dir.path().join("missing.png")),
        Err(Error::Io { .. })
    ));
    let txt = dir.path().join("note.txt");
    std::fs::write(&txt, "hello").unwrap();
    assert!(matches!(load_image(&txt), Err(Error::Format { .. })));
    let garbage = dir.path().join("broken.png");
    std::fs::write(&garbage, [1u8, 2, 3]).unwrap();
    assert!(load_image(&garbage).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn save_then_load_within_one_level(
        w in 1usize..9,
        h in 1usize..9,
        gray in any::<bool>(),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let channels = if gray { 1 } else { 3 };
        let img = RasterImage::from_fn(w, h, channels, |_, _, _| rng.gen()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.png");
        save_image(&img, &p).unwrap();
        let back = load_image(&p).unwrap();
        prop_assert_eq!(back.channels(), channels);
        for (a, b) in img.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}
