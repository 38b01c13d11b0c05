use super::{Init, LayerParams};
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

/// Token lookup table. Parameter: `table [vocab, dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub params: LayerParams,
}

#[derive(Debug)]
pub struct EmbeddingCache {
    ids: Vec<usize>,
}

impl Embedding {
    pub fn new(vocab: usize, dim: usize, rng: &mut Rng) -> Self {
        let mut params = LayerParams::new();
        // fan-in of a lookup is the row width
        params.push("table", Init::Lecun.tensor(&[vocab, dim], dim, rng));
        Self { params }
    }

    pub fn from_table(table: Tensor) -> Result<Self> {
        if table.rank() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "embedding table must be rank 2, got {:?}",
                table.shape()
            )));
        }
        let mut params = LayerParams::new();
        params.push("table", table);
        Ok(Self { params })
    }

    pub fn vocab(&self) -> usize {
        self.params.at(0).value.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.params.at(0).value.shape()[1]
    }

    pub fn forward(&self, ids: &[usize]) -> Result<(Tensor, EmbeddingCache)> {
        let (vocab, dim) = (self.vocab(), self.dim());
        if ids.is_empty() {
            return Err(Error::ShapeMismatch("empty id batch".into()));
        }
        let table = self.params.at(0).value.data();
        let mut y = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(Error::VocabOverflow { id, size: vocab });
            }
            y.extend_from_slice(&table[id * dim..(id + 1) * dim]);
        }
        Ok((
            Tensor::from_vec(&[ids.len(), dim], y)?,
            EmbeddingCache { ids: ids.to_vec() },
        ))
    }

    /// Scatter-adds `dy` rows into the table gradient.
    pub fn backward(&mut self, dy: &Tensor, cache: EmbeddingCache) -> Result<()> {
        let dim = self.dim();
        if dy.shape() != [cache.ids.len(), dim] {
            return Err(Error::ShapeMismatch(format!(
                "embedding backward expects [{}, {dim}], got {:?}",
                cache.ids.len(),
                dy.shape()
            )));
        }
        let grad = self.params.at_mut(0).grad.data_mut();
        for (row, &id) in dy.data().chunks_exact(dim).zip(&cache.ids) {
            grad[id * dim..(id + 1) * dim]
                .iter_mut()
                .zip(row)
                .for_each(|(g, v)| *g += v);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data_mut()[i * n + i] = 1.0;
        }
        t
    }

    #[test]
    fn identity_table_gives_one_hot() {
        let e = Embedding::from_table(identity(4)).unwrap();
        let (y, _) = e.forward(&[2]).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn duplicate_ids_accumulate() {
        let mut e = Embedding::from_table(identity(3)).unwrap();
        let (_, cache) = e.forward(&[1, 1]).unwrap();
        let dy = Tensor::from_rows(&[&[1.0, 2.0, 3.0], &[0.5, 0.5, 0.5]]).unwrap();
        e.backward(&dy, cache).unwrap();
        assert_eq!(
            e.params.at(0).grad.data(),
            &[0.0, 0.0, 0.0, 1.5, 2.5, 3.5, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn out_of_range_id() {
        let e = Embedding::from_table(identity(3)).unwrap();
        assert!(matches!(
            e.forward(&[3]),
            Err(Error::VocabOverflow { id: 3, size: 3 })
        ));
    }
}
