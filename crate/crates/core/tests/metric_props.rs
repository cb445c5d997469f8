use proptest::prelude::*;
use taylorcast_core::metrics::{mae, mse, psnr, ssim, ssim_with, SsimParams, PSNR_CAP};
use taylorcast_core::Tensor;

fn frame(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n)
}

fn image(data: Vec<f64>, h: usize, w: usize) -> Tensor {
    Tensor::new(&[1, h, w], data).unwrap()
}

proptest! {
    #[test]
    fn mae_bounded_by_root_mse(a in frame(64), b in frame(64)) {
        let (a, b) = (image(a, 8, 8), image(b, 8, 8));
        prop_assert!(mae(&a, &b).unwrap() <= mse(&a, &b).unwrap().sqrt() + 1e-12);
    }

    #[test]
    fn pixel_errors_ignore_order(a in frame(36), b in frame(36), perm in Just((0..36).collect::<Vec<usize>>()).prop_shuffle()) {
        let (pa, pb): (Vec<f64>, Vec<f64>) = perm.iter().map(|&i| (a[i], b[i])).unzip();
        let (a, b, pa, pb) = (image(a, 6, 6), image(b, 6, 6), image(pa, 6, 6), image(pb, 6, 6));
        prop_assert!((mse(&a, &b).unwrap() - mse(&pa, &pb).unwrap()).abs() < 1e-12);
        prop_assert!((mae(&a, &b).unwrap() - mae(&pa, &pb).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn mse_matches_direct_sum(a in frame(20), b in frame(20)) {
        let direct = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / 20.0;
        prop_assert!((mse(&image(a, 4, 5), &image(b, 4, 5)).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn ssim_follows_data_range(a in frame(144), b in frame(144), scale in 0.1f64..50.0) {
        let base = ssim(&image(a.clone(), 12, 12), &image(b.clone(), 12, 12)).unwrap();
        let sa = image(a.iter().map(|v| v * scale).collect(), 12, 12);
        let sb = image(b.iter().map(|v| v * scale).collect(), 12, 12);
        let p = SsimParams { data_range: scale, ..SsimParams::default() };
        prop_assert!((ssim_with(&sa, &sb, &p).unwrap() - base).abs() < 1e-9);
    }

    #[test]
    fn ssim_symmetric_and_bounded(a in frame(144), b in frame(144)) {
        let (a, b) = (image(a, 12, 12), image(b, 12, 12));
        let s = ssim(&a, &b).unwrap();
        prop_assert_eq!(s, ssim(&b, &a).unwrap());
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&s));
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn psnr_capped_for_identical_frames() {
    let a = image(vec![0.3; 16], 4, 4);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
    let b = image(vec![0.4; 16], 4, 4);
    assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
}
