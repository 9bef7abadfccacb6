use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Coordinate magnitudes binned on `[edge_k, edge_{k+1})`.
///
/// The first bin is the underflow bucket `[0, edges[0])`, which holds exact
/// zeros; the last is the overflow bucket `[edges[last], ∞)`. Counts sum to
/// the vector length.
pub fn coordinate_histogram(g: &[f64], edges: &[f64]) -> Result<Vec<HistogramBin>> {
    if edges.is_empty() || edges[0] <= 0.0 || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "histogram edges must be positive and strictly increasing".into(),
        ));
    }
    let mut bins = Vec::with_capacity(edges.len() + 1);
    bins.push(HistogramBin { lo: 0.0, hi: edges[0], count: 0 });
    bins.extend(edges.windows(2).map(|w| HistogramBin { lo: w[0], hi: w[1], count: 0 }));
    bins.push(HistogramBin { lo: *edges.last().unwrap(), hi: f64::INFINITY, count: 0 });
    for &gi in g {
        // Index of the first edge strictly greater than |g_i|.
        let k = edges.partition_point(|&e| e <= gi.abs());
        bins[k].count += 1;
    }
    Ok(bins)
}

/// Decade edges `10^lo, 10^(lo+1), …, 10^hi`, each exactly the decimal literal.
pub fn decade_edges(lo_exp: i32, hi_exp: i32) -> Result<Vec<f64>> {
    if hi_exp <= lo_exp {
        return Err(Error::InvalidParameter(format!(
            "decade range needs lo < hi, got {lo_exp}..{hi_exp}"
        )));
    }
    Ok((lo_exp..=hi_exp)
        .map(|k| format!("1e{k}").parse().expect("decimal literal parses"))
        .collect())
}
