//! Frame-quality metrics on `[C, H, W]` frames with values in `[0, 1]`.

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// PSNR reported for identical frames.
pub const PSNR_CAP: f64 = 100.0;

fn check_pair(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check_pair("mse", pred, target)?;
    let s: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(s / pred.numel() as f64)
}

pub fn mae(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check_pair("mae", pred, target)?;
    let s: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(s / pred.numel() as f64)
}

/// Peak signal-to-noise ratio in dB for unit data range, capped at [`PSNR_CAP`].
pub fn psnr(pred: &Tensor, target: &Tensor) -> Result<f64> {
    let m = mse(pred, target)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * m.log10()).min(PSNR_CAP))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
        }
    }
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Mean structural similarity over all valid window positions and channels.
///
/// Frames smaller than the window use the largest odd window that fits.
pub fn ssim_with(a: &Tensor, b: &Tensor, p: &SsimParams) -> Result<f64> {
    check_pair("ssim", a, b)?;
    if a.rank() != 3 {
        return shape_err("ssim", format!("expected [C,H,W], got {:?}", a.shape()));
    }
    let (c, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let mut win = p.window.min(h).min(w);
    if win % 2 == 0 {
        win -= 1;
    }
    let g = gaussian_window(win, p.sigma);
    let c1 = (p.k1 * p.data_range).powi(2);
    let c2 = (p.k2 * p.data_range).powi(2);
    let (oh, ow) = (h - win + 1, w - win + 1);
    let mut total = 0.0;
    for ch in 0..c {
        let x = &a.data()[ch * h * w..][..h * w];
        let y = &b.data()[ch * h * w..][..h * w];
        for r in 0..oh {
            for q in 0..ow {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..win {
                    for j in 0..win {
                        let wt = g[i] * g[j];
                        let k = (r + i) * w + q + j;
                        let (u, v) = (x[k], y[k]);
                        mx += wt * u;
                        my += wt * v;
                        xx += wt * (u * u);
                        yy += wt * (v * v);
                        xy += wt * (u * v);
                    }
                }
                let vx = xx - mx * mx;
                let vy = yy - my * my;
                let cov = xy - mx * my;
                total += (2.0 * mx * my + c1) * (2.0 * cov + c2)
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        }
    }
    Ok(total / (c * oh * ow) as f64)
}

pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    ssim_with(a, b, &SsimParams::default())
}

/// Metrics averaged over a sequence of predicted frames, plus per-frame values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub mse: f64,
    pub mae: f64,
    pub ssim: f64,
    pub psnr: f64,
    pub per_frame: Vec<FrameMetrics>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameMetrics {
    pub mse: f64,
    pub mae: f64,
    pub ssim: f64,
    pub psnr: f64,
}

impl MetricReport {
    pub fn from_frames(pred: &[Tensor], target: &[Tensor]) -> Result<Self> {
        if pred.len() != target.len() || pred.is_empty() {
            return shape_err(
                "metric_report",
                format!("{} predictions vs {} targets", pred.len(), target.len()),
            );
        }
        let per_frame: Vec<FrameMetrics> = pred
            .iter()
            .zip(target)
            .map(|(p, t)| {
                Ok(FrameMetrics {
                    mse: mse(p, t)?,
                    mae: mae(p, t)?,
                    ssim: ssim(p, t)?,
                    psnr: psnr(p, t)?,
                })
            })
            .collect::<Result<_>>()?;
        let n = per_frame.len() as f64;
        let avg = |f: fn(&FrameMetrics) -> f64| per_frame.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            mse: avg(|m| m.mse),
            mae: avg(|m| m.mae),
            ssim: avg(|m| m.ssim),
            psnr: avg(|m| m.psnr),
            per_frame,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(seed: u64, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        let mut s = seed;
        let data = (0..n)
            .map(|_| {
                s = s
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn identical_frames() {
        let a = noise(1, &[1, 16, 16]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_is_symmetric_and_bounded() {
        let a = noise(2, &[2, 16, 12]);
        let b = noise(3, &[2, 16, 12]);
        let ab = ssim(&a, &b).unwrap();
        assert_eq!(ab, ssim(&b, &a).unwrap());
        assert!((-1.0..=1.0).contains(&ab) && ab < 0.5);
    }

    #[test]
    fn ssim_of_constant_frames_is_luminance_term() {
        let a = Tensor::full(&[1, 12, 12], 0.3);
        let b = Tensor::full(&[1, 12, 12], 0.6);
        let c1: f64 = 1e-4;
        let expected = (2.0 * 0.3 * 0.6 + c1) / (0.09 + 0.36 + c1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn psnr_from_known_mse() {
        let a = Tensor::full(&[1, 4, 4], 0.5);
        let b = Tensor::full(&[1, 4, 4], 0.6);
        // mse = 0.01 -> 20 dB
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert!((mae(&a, &b).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn small_frames_shrink_window() {
        let a = noise(4, &[1, 6, 8]);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn report_averages_frames() {
        let a = vec![Tensor::full(&[1, 4, 4], 0.5), Tensor::full(&[1, 4, 4], 0.5)];
        let b = vec![Tensor::full(&[1, 4, 4], 0.5), Tensor::full(&[1, 4, 4], 0.7)];
        let r = MetricReport::from_frames(&a, &b).unwrap();
        assert!((r.mse - 0.02).abs() < 1e-12);
        assert_eq!(r.per_frame.len(), 2);
        assert_eq!(r.per_frame[0].psnr, PSNR_CAP);
        assert!(MetricReport::from_frames(&a, &b[..1]).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(mse(&Tensor::zeros(&[1, 2, 2]), &Tensor::zeros(&[1, 2, 3])).is_err());
    }
}
