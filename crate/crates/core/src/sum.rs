/// Pairwise summation; the result depends only on the order of `values`.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise reduction of equal-length accumulator vectors, column by column.
pub(crate) fn pairwise_columns(blocks: &[Vec<f64>], width: usize) -> Vec<f64> {
    let mut column = Vec::with_capacity(blocks.len());
    (0..width)
        .map(|k| {
            column.clear();
            column.extend(blocks.iter().map(|b| b[k]));
            pairwise_sum(&column)
        })
        .collect()
}
