use super::CholeskyFactor;

/// Marginal variances use dense inversion up to this dimension.
pub const DENSE_THRESHOLD: usize = 200;

/// Entries of `(L Lᵀ)⁻¹` on the pattern of `L`, laid out like `L.values`.
///
/// Takahashi recursion, columns right to left:
///
/// `Σ_ij = δ_ij / L_jj² − (1 / L_jj) Σ_{k > j, L_kj ≠ 0} L_kj Σ_ki`
///
/// Every `Σ_ki` on the right lies inside the (symbolically closed) pattern of
/// a later column, so nothing outside the pattern is ever needed.
pub(super) fn selected_inverse(f: &CholeskyFactor) -> Vec<f64> {
    let n = f.n();
    let (cp, ri, lv) = (&f.col_ptr, &f.row_idx, &f.values);
    let mut sigma = vec![0.0; lv.len()];

    let lookup = |sigma: &[f64], a: usize, b: usize| -> f64 {
        let (r, c) = if a >= b { (a, b) } else { (b, a) };
        let rows = &ri[cp[c]..cp[c + 1]];
        let k = rows.binary_search(&r).expect("Σ entry outside the factor pattern");
        sigma[cp[c] + k]
    };

    for j in (0..n).rev() {
        let p0 = cp[j];
        let ljj = lv[p0];
        let below = p0 + 1..cp[j + 1];
        // off-diagonal entries of column j, bottom-up
        for pi in below.clone().rev() {
            let i = ri[pi];
            let s: f64 = below.clone().map(|pk| lv[pk] * lookup(&sigma, ri[pk], i)).sum();
            sigma[pi] = -s / ljj;
        }
        let s: f64 = below.map(|pk| lv[pk] * sigma[pk]).sum();
        sigma[p0] = 1.0 / (ljj * ljj) - s / ljj;
    }
    sigma
}
