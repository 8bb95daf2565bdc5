use super::{FrameStream, Stage, Trace, TraceMeta};
use crate::Result;

/// ITU-R BT.601 luma weights for R, G and B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Mean pixel-wise luma of every frame, one sample per frame.
///
/// The returned trace has empty user/session identifiers; attach them with
/// [`Trace::with_identity`].
pub fn extract_luma(stream: &FrameStream) -> Result<Trace> {
    let n = stream.width() as f64 * stream.height() as f64;
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let samples = stream
        .frames()
        .iter()
        .map(|f| {
            let sum: f64 = f
                .r
                .iter()
                .zip(&f.g)
                .zip(&f.b)
                .map(|((&r, &g), &b)| wr * r as f64 + wg * g as f64 + wb * b as f64)
                .sum();
            sum / n
        })
        .collect();
    let meta = TraceMeta {
        frame_size: Some((stream.width(), stream.height())),
        warmup_samples: 0,
    };
    Ok(Trace::new(samples, stream.fps(), "", "", Stage::Raw)?.with_meta(meta))
}

/// Mean red-channel value of every frame, for capture validation.
pub fn red_channel_means(stream: &FrameStream) -> Vec<f64> {
    let n = stream.width() as f64 * stream.height() as f64;
    stream
        .frames()
        .iter()
        .map(|f| f.r.iter().map(|&v| v as f64).sum::<f64>() / n)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Frame;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(rng: &mut ChaCha8Rng, n: usize) -> Frame {
        Frame {
            r: (0..n).map(|_| rng.gen()).collect(),
            g: (0..n).map(|_| rng.gen()).collect(),
            b: (0..n).map(|_| rng.gen()).collect(),
        }
    }

    #[test]
    fn pure_red_frame() {
        let s = FrameStream::new(2, 2, 240.0, vec![Frame::solid(2, 2, [255, 0, 0])]).unwrap();
        let t = extract_luma(&s).unwrap();
        assert_eq!(t.len(), 1);
        assert!((t.samples()[0] - 76.245).abs() < 1e-12);
        assert_eq!(t.stage(), Stage::Raw);
        assert_eq!(t.fps(), 240.0);
        assert_eq!(t.meta().frame_size, Some((2, 2)));
    }

    #[test]
    fn grey_frame_is_its_own_luma() {
        let s = FrameStream::new(3, 1, 30.0, vec![Frame::solid(3, 1, [100, 100, 100])]).unwrap();
        assert!((extract_luma(&s).unwrap().samples()[0] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn random_frame_matches_pixel_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = random_frame(&mut rng, 16);
        let mut acc = 0.0;
        for i in 0..16 {
            acc += 0.299 * f.r[i] as f64 + 0.587 * f.g[i] as f64 + 0.114 * f.b[i] as f64;
        }
        let s = FrameStream::new(4, 4, 30.0, vec![f]).unwrap();
        assert!((extract_luma(&s).unwrap().samples()[0] - acc / 16.0).abs() < 1e-9);
    }

    #[test]
    fn luma_is_pixel_permutation_invariant_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let f = random_frame(&mut rng, 36);
            let mut perm: Vec<usize> = (0..36).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let g = Frame {
                r: perm.iter().map(|&i| f.r[i]).collect(),
                g: perm.iter().map(|&i| f.g[i]).collect(),
                b: perm.iter().map(|&i| f.b[i]).collect(),
            };
            let per_pixel: Vec<f64> = (0..36)
                .map(|i| 0.299 * f.r[i] as f64 + 0.587 * f.g[i] as f64 + 0.114 * f.b[i] as f64)
                .collect();
            let lo = per_pixel.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = per_pixel.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s = FrameStream::new(6, 6, 30.0, vec![f, g]).unwrap();
            let t = extract_luma(&s).unwrap();
            assert!((t.samples()[0] - t.samples()[1]).abs() < 1e-9);
            assert!(t.samples()[0] >= lo - 1e-12 && t.samples()[0] <= hi + 1e-12);
        }
    }

    #[test]
    fn luma_scales_with_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            // halve every channel value of an even-valued frame
            let mut f = random_frame(&mut rng, 9);
            for p in [&mut f.r, &mut f.g, &mut f.b] {
                for v in p.iter_mut() {
                    *v &= 0xFE;
                }
            }
            let half = Frame {
                r: f.r.iter().map(|v| v / 2).collect(),
                g: f.g.iter().map(|v| v / 2).collect(),
                b: f.b.iter().map(|v| v / 2).collect(),
            };
            let s = FrameStream::new(3, 3, 30.0, vec![f, half]).unwrap();
            let t = extract_luma(&s).unwrap();
            assert!((t.samples()[0] - 2.0 * t.samples()[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn red_means_per_frame() {
        let s = FrameStream::new(
            1,
            2,
            30.0,
            vec![Frame {
                r: vec![10, 20],
                g: vec![0, 0],
                b: vec![0, 0],
            }],
        )
        .unwrap();
        assert_eq!(red_channel_means(&s), vec![15.0]);
    }
}
