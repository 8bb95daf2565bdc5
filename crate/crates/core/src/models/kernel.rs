use rayon::prelude::*;

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// `1 / (d · var(X))` over all entries; 1 when the data has no variance.
pub fn scale_gamma(rows: &[Vec<f64>]) -> f64 {
    let d = rows.first().map_or(0, Vec::len);
    let n = (rows.len() * d) as f64;
    if n == 0.0 {
        return 1.0;
    }
    let mean = rows.iter().flatten().sum::<f64>() / n;
    let var = rows.iter().flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0
    }
}

/// Row-major kernel matrix of the rows against themselves.
pub fn gram(rows: &[Vec<f64>], gamma: f64) -> Vec<f64> {
    let n = rows.len();
    let mut k = vec![0.0; n * n];
    k.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, out)| {
        for (j, o) in out.iter_mut().enumerate() {
            *o = rbf(&rows[i], &rows[j], gamma);
        }
    });
    k
}
