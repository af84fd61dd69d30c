//! Subsampling count tables without replacement.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::linalg::{ensure_finite, DenseMatrix};

fn total_count(x: &DenseMatrix) -> Result<u64> {
    ensure_finite(x, "table")?;
    let mut total = 0u64;
    for &v in x.iter() {
        if v < 0.0 || (v - v.round()).abs() > 1e-9 {
            return invalid(format!("subsampling needs nonnegative integer counts, found {v}"));
        }
        total += v.round() as u64;
    }
    Ok(total)
}

/// Keeps `n_sub` of the `ΣX` unit counts, chosen uniformly without
/// replacement.
pub fn subsample_counts_with<R: Rng + ?Sized>(
    x: &DenseMatrix,
    n_sub: u64,
    rng: &mut R,
) -> Result<DenseMatrix> {
    let total = total_count(x)?;
    if n_sub == 0 || n_sub > total {
        return invalid(format!("subsample size {n_sub} outside 1..={total}"));
    }
    if n_sub == total {
        return Ok(x.map(f64::round));
    }
    // Unit counts are numbered cell by cell in column-major order.
    let mut ends = Vec::with_capacity(x.len());
    let mut acc = 0u64;
    for &v in x.iter() {
        acc += v.round() as u64;
        ends.push(acc);
    }
    let mut out = DenseMatrix::zeros(x.nrows(), x.ncols());
    let picked = index::sample(rng, total as usize, n_sub as usize);
    for unit in picked.iter() {
        let cell = ends.partition_point(|&e| e <= unit as u64);
        out[cell] += 1.0;
    }
    Ok(out)
}

pub fn subsample_counts(x: &DenseMatrix, n_sub: u64, seed: u64) -> Result<DenseMatrix> {
    subsample_counts_with(x, n_sub, &mut ChaCha8Rng::seed_from_u64(seed))
}
