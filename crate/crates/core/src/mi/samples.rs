//! Row-aligned (latent, action) sample pairs with train/val/test tags.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone)]
pub struct PairedSamples {
    pub z: Tensor,
    pub a: Tensor,
    pub split: Vec<Split>,
}

impl PairedSamples {
    pub fn new(z: Tensor, a: Tensor, split: Vec<Split>) -> Result<Self> {
        if z.rows() != a.rows() || z.rows() != split.len() {
            return Err(Error::shape(
                format!("{} aligned rows", z.rows()),
                format!("a: {}, split: {}", a.rows(), split.len()),
            ));
        }
        if z.rows() < 2 {
            return Err(Error::data("need at least 2 paired samples"));
        }
        Ok(PairedSamples { z, a, split })
    }

    /// Seeded random split assignment by fraction (train, val, test).
    pub fn with_splits(z: Tensor, a: Tensor, fractions: (f64, f64, f64), seed: u64) -> Result<Self> {
        let (ft, fv, fe) = fractions;
        if !(0.999..=1.001).contains(&(ft + fv + fe)) {
            return Err(Error::config("split fractions must sum to 1"));
        }
        let n = z.rows();
        let mut rng = Rng::stream(seed, 0x59);
        let perm = rng.permutation(n);
        let n_train = (ft * n as f64).round() as usize;
        let n_val = (fv * n as f64).round() as usize;
        let mut split = vec![Split::Test; n];
        for (rank, &row) in perm.iter().enumerate() {
            split[row] = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
        PairedSamples::new(z, a, split)
    }

    pub fn len(&self) -> usize {
        self.split.len()
    }

    pub fn is_empty(&self) -> bool {
        self.split.is_empty()
    }

    pub fn rows_of(&self, which: Split) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == which)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn require_splits(&self) -> Result<()> {
        for which in [Split::Train, Split::Val, Split::Test] {
            if self.rows_of(which).is_empty() {
                return Err(Error::data(format!("empty {which:?} split")));
            }
        }
        Ok(())
    }

    /// Seeded uniform permutation of the action rows; the z rows and split
    /// tags stay put, so any estimator runs unchanged on a pairing whose
    /// true mutual information is zero.
    pub fn permuted_actions(&self, seed: u64) -> PairedSamples {
        let n = self.len();
        let mut rng = Rng::stream(seed, 0x60);
        let perm = rng.permutation(n);
        let d = self.a.cols();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            data.extend_from_slice(self.a.row(perm[i]));
        }
        PairedSamples {
            z: self.z.clone(),
            a: Tensor::from_vec(&[n, d], data).unwrap(),
            split: self.split.clone(),
        }
    }

    /// Rows restricted to one split as dense matrices.
    pub fn split_matrices(&self, which: Split) -> (Tensor, Tensor) {
        let rows = self.rows_of(which);
        let (dz, da) = (self.z.cols(), self.a.cols());
        let mut zd = Vec::with_capacity(rows.len() * dz);
        let mut ad = Vec::with_capacity(rows.len() * da);
        for &r in &rows {
            zd.extend_from_slice(self.z.row(r));
            ad.extend_from_slice(self.a.row(r));
        }
        (
            Tensor::from_vec(&[rows.len(), dz], zd).unwrap(),
            Tensor::from_vec(&[rows.len(), da], ad).unwrap(),
        )
    }
}
