//! Product-quantized codebook: L independent sub-books of K entries each.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Codebook geometry. Entry values live in the model's `ParamSet` as a
/// `[code_len * num_codes, code_dim]` tensor (sub-book l occupies rows
/// `l*num_codes .. (l+1)*num_codes`), so they receive gradients like any
/// other parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Codebook {
    /// K: entries per sub-book.
    pub num_codes: usize,
    /// L: tokens per latent action.
    pub code_len: usize,
    /// d: embedding dimension per token.
    pub code_dim: usize,
}

impl Codebook {
    pub fn new(num_codes: usize, code_len: usize, code_dim: usize) -> Result<Self> {
        if num_codes < 2 {
            return Err(Error::config("codebook needs at least 2 entries per sub-book"));
        }
        if code_len == 0 || code_dim == 0 {
            return Err(Error::config("code_len and code_dim must be positive"));
        }
        Ok(Codebook {
            num_codes,
            code_len,
            code_dim,
        })
    }

    pub fn table_rows(&self) -> usize {
        self.code_len * self.num_codes
    }

    pub fn latent_dim(&self) -> usize {
        self.code_len * self.code_dim
    }

    pub fn table_row(&self, subbook: usize, code: usize) -> usize {
        subbook * self.num_codes + code
    }

    fn check_table(&self, table: &Tensor) -> Result<()> {
        if table.shape() != [self.table_rows(), self.code_dim] {
            return Err(Error::shape(
                format!("[{}, {}]", self.table_rows(), self.code_dim),
                format!("{:?}", table.shape()),
            ));
        }
        if !table.all_finite() {
            return Err(Error::numeric("codebook contains non-finite entries"));
        }
        Ok(())
    }

    /// Nearest entry (Euclidean) per sub-book; ties resolve to the lowest
    /// index.
    pub fn nearest(&self, table: &Tensor, e: &[f64]) -> Vec<usize> {
        debug_assert_eq!(e.len(), self.latent_dim());
        let d = self.code_dim;
        (0..self.code_len)
            .map(|l| {
                let chunk = &e[l * d..(l + 1) * d];
                let mut best = 0usize;
                let mut best_dist = f64::INFINITY;
                for k in 0..self.num_codes {
                    let row = table.row(self.table_row(l, k));
                    let dist: f64 = chunk
                        .iter()
                        .zip(row)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    if dist < best_dist {
                        best_dist = dist;
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    pub fn embed(&self, table: &Tensor, indices: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.latent_dim());
        for (l, &k) in indices.iter().enumerate() {
            out.extend_from_slice(table.row(self.table_row(l, k)));
        }
        out
    }

    /// Quantize one continuous latent; returns the code plus the quantizer
    /// loss values: l_quant = |e - z|^2 and l_commit = beta * |e - z|^2
    /// (identical value, different gradient targets during training).
    pub fn quantize_one(&self, table: &Tensor, e: &[f64], beta: f64) -> Result<(LatentCode, f64, f64)> {
        self.check_table(table)?;
        if e.len() != self.latent_dim() {
            return Err(Error::shape(
                format!("latent of {}", self.latent_dim()),
                format!("{}", e.len()),
            ));
        }
        let indices = self.nearest(table, e);
        let embedding = self.embed(table, &indices);
        let dist: f64 = e
            .iter()
            .zip(&embedding)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((LatentCode { indices, embedding }, dist, beta * dist))
    }

    /// Batch quantization: e is [B, L*d]; returns per-sample indices and the
    /// quantized embeddings as a tensor of the same shape.
    pub fn quantize_batch(&self, table: &Tensor, e: &Tensor) -> Result<(Vec<Vec<usize>>, Tensor)> {
        self.check_table(table)?;
        if e.cols() != self.latent_dim() {
            return Err(Error::shape(
                format!("[B, {}]", self.latent_dim()),
                format!("{:?}", e.shape()),
            ));
        }
        let b = e.rows();
        let mut indices = Vec::with_capacity(b);
        let mut data = Vec::with_capacity(b * self.latent_dim());
        for r in 0..b {
            let idx = self.nearest(table, e.row(r));
            data.extend(self.embed(table, &idx));
            indices.push(idx);
        }
        Ok((indices, Tensor::from_vec(&[b, self.latent_dim()], data)?))
    }

    /// Flat table rows for a batch of per-sample indices, row-major in
    /// (sample, sub-book) order; used to gather codebook rows on the tape.
    pub fn flat_rows(&self, indices: &[Vec<usize>]) -> Vec<usize> {
        indices
            .iter()
            .flat_map(|sample| {
                sample
                    .iter()
                    .enumerate()
                    .map(|(l, &k)| self.table_row(l, k))
            })
            .collect()
    }
}

/// A quantized latent action: L discrete indices plus the gathered embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub indices: Vec<usize>,
    pub embedding: Vec<f64>,
}

/// Plug-in Shannon entropy (bits) of the joint L-tuple symbol distribution.
pub fn latent_entropy(codes: &[LatentCode]) -> Result<f64> {
    if codes.is_empty() {
        return Err(Error::data("latent entropy of an empty code list"));
    }
    let mut counts: std::collections::BTreeMap<&[usize], usize> = std::collections::BTreeMap::new();
    for c in codes {
        *counts.entry(c.indices.as_slice()).or_insert(0) += 1;
    }
    let n = codes.len() as f64;
    Ok(counts
        .values()
        .map(|&c| {
            let c = c as f64;
            // c/n * log2(n/c), summed; exact 0 for a single symbol.
            c / n * (n / c).log2()
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_code_book() -> (Codebook, Tensor) {
        // One sub-book, d=1, entries {-1, +1}.
        let cb = Codebook::new(2, 1, 1).unwrap();
        let table = Tensor::from_vec(&[2, 1], vec![-1.0, 1.0]).unwrap();
        (cb, table)
    }

    #[test]
    fn nearest_neighbor_and_loss_values() {
        let (cb, table) = two_code_book();
        let (code, l_quant, l_commit) = cb.quantize_one(&table, &[0.3], 0.25).unwrap();
        assert_eq!(code.indices, vec![1]);
        assert_eq!(code.embedding, vec![1.0]);
        assert!((l_quant - 0.49).abs() < 1e-12);
        assert!((l_commit - 0.25 * 0.49).abs() < 1e-12);
    }

    #[test]
    fn exact_codebook_hit_has_zero_losses() {
        let (cb, table) = two_code_book();
        let (code, l_quant, l_commit) = cb.quantize_one(&table, &[-1.0], 0.25).unwrap();
        assert_eq!(code.indices, vec![0]);
        assert_eq!(l_quant, 0.0);
        assert_eq!(l_commit, 0.0);
    }

    #[test]
    fn batch_matches_one_by_one() {
        let cb = Codebook::new(4, 2, 3).unwrap();
        let mut table = Tensor::zeros(&[8, 3]);
        for (i, v) in table.data_mut().iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        let e = Tensor::from_vec(
            &[2, 6],
            (0..12).map(|i| (i as f64 * 0.21).cos()).collect(),
        )
        .unwrap();
        let (indices, embed) = cb.quantize_batch(&table, &e).unwrap();
        for r in 0..2 {
            let (code, _, _) = cb.quantize_one(&table, e.row(r), 0.25).unwrap();
            assert_eq!(code.indices, indices[r]);
            assert_eq!(code.embedding, embed.row(r));
        }
    }

    #[test]
    fn entropy_trivial_cases() {
        let same = vec![
            LatentCode {
                indices: vec![3, 1],
                embedding: vec![]
            };
            10
        ];
        assert_eq!(latent_entropy(&same).unwrap(), 0.0);

        // Uniform over all 4^2 tuples -> exactly 4 bits.
        let mut codes = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                codes.push(LatentCode {
                    indices: vec![a, b],
                    embedding: vec![],
                });
            }
        }
        assert_eq!(latent_entropy(&codes).unwrap(), 4.0);
        assert!(latent_entropy(&[]).is_err());
    }

    #[test]
    fn flat_rows_layout() {
        let cb = Codebook::new(16, 4, 2).unwrap();
        let rows = cb.flat_rows(&[vec![0, 1, 2, 3], vec![15, 0, 0, 0]]);
        assert_eq!(rows, vec![0, 17, 34, 51, 15, 16, 32, 48]);
    }
}
