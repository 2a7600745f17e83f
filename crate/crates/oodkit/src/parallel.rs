//! Row-chunked parallel scoring. Each row is scored independently, so the
//! output is identical to the sequential scorers regardless of thread count.

use oodkit_core::oe::OeHead;
use oodkit_core::{EmbeddingSet, GaussianModel, Result};
use rayon::prelude::*;

const CHUNK_ROWS: usize = 512;

fn chunked<F>(query: &EmbeddingSet, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f32]) -> Result<Vec<f64>> + Sync,
{
    if query.is_empty() {
        return f(query.data());
    }
    let d = query.dim();
    let parts: Vec<Vec<f64>> = query
        .data()
        .par_chunks(CHUNK_ROWS * d)
        .map(&f)
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

pub fn score_maha(model: &GaussianModel, query: &EmbeddingSet) -> Result<Vec<f64>> {
    chunked(query, |rows| model.score_rows(rows, query.dim()))
}

pub fn maha_per_class(model: &GaussianModel, query: &EmbeddingSet) -> Result<Vec<f64>> {
    chunked(query, |rows| model.per_class_rows(rows, query.dim()))
}

pub fn score_oe(head: &OeHead, query: &EmbeddingSet) -> Result<Vec<f64>> {
    chunked(query, |rows| head.score_rows(rows, query.dim()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 3;
        let train: Vec<f32> = (0..60 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels = (0..60).map(|i| i % 3).collect();
        let train = EmbeddingSet::new(train, d).unwrap().with_labels(labels).unwrap();
        let model = oodkit_core::maha::fit_gaussian(&train, None).unwrap();
        let query: Vec<f32> = (0..2000 * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let query = EmbeddingSet::new(query, d).unwrap();
        assert_eq!(
            score_maha(&model, &query).unwrap(),
            oodkit_core::maha::score_maha(&model, &query).unwrap()
        );
        assert_eq!(
            maha_per_class(&model, &query).unwrap(),
            oodkit_core::maha::maha_per_class(&model, &query).unwrap()
        );
    }
}
