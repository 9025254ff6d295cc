use super::window::VideoSequence;
use crate::error::{Error, Result};
use crate::model::FusedVector;

/// Per-feature standardization fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    /// Population standard deviation; constant features use 1.
    pub scale: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a FusedVector>,
    {
        let mut n = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        for r in rows {
            if n == 0 {
                sum = vec![0.0; r.len()];
                sq = vec![0.0; r.len()];
            } else if r.len() != sum.len() {
                return Err(Error::FeatureLengthMismatch {
                    expected: sum.len(),
                    actual: r.len(),
                });
            }
            for ((s, q), &v) in sum.iter_mut().zip(&mut sq).zip(r.as_slice()) {
                *s += v;
                *q += v * v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let scale = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / nf - m * m).max(0.0);
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(FeatureScaler { mean, scale })
    }

    pub fn fit_sequences<'a, I>(videos: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a VideoSequence>,
    {
        Self::fit(videos.into_iter().flat_map(|v| v.features.iter()))
    }

    pub fn transform(&self, v: &FusedVector) -> FusedVector {
        FusedVector(
            v.as_slice()
                .iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .map(|((x, m), s)| (x - m) / s)
                .collect(),
        )
    }

    pub fn transform_sequence(&self, seq: &VideoSequence) -> VideoSequence {
        VideoSequence {
            features: seq.features.iter().map(|f| self.transform(f)).collect(),
            ..seq.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizes() {
        let rows = [
            FusedVector(vec![1.0, 5.0]),
            FusedVector(vec![3.0, 5.0]),
            FusedVector(vec![5.0, 5.0]),
        ];
        let s = FeatureScaler::fit(&rows).unwrap();
        assert_eq!(s.mean, vec![3.0, 5.0]);
        assert!((s.scale[0] - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(s.scale[1], 1.0);
        let t: Vec<_> = rows.iter().map(|r| s.transform(r)).collect();
        let m: f64 = t.iter().map(|r| r.0[0]).sum::<f64>() / 3.0;
        let v: f64 = t.iter().map(|r| r.0[0] * r.0[0]).sum::<f64>() / 3.0;
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        assert!(t.iter().all(|r| r.0[1] == 0.0));
    }

    #[test]
    fn errors() {
        assert!(matches!(FeatureScaler::fit(&[]), Err(Error::EmptyDataset)));
        let rows = [FusedVector(vec![1.0]), FusedVector(vec![1.0, 2.0])];
        assert!(matches!(FeatureScaler::fit(&rows), Err(Error::FeatureLengthMismatch { .. })));
    }
}
