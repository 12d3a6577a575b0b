use nalgebra::DMatrix;

use super::{NetworkError, NetworkModel, C64};

/// Bus admittance matrix, indexed by position in `model.buses`.
///
/// An empty branch list gives the shunt-only (possibly all-zero) matrix
/// without a connectivity check.
pub fn build_ybus(model: &NetworkModel) -> Result<DMatrix<C64>, NetworkError> {
    model.check_unique_ids()?;
    if !model.branches.is_empty() {
        model.check_connected()?;
    }
    let n = model.n_bus();
    let mut y = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for br in &model.branches {
        let (f, t) = (model.index_of(br.from)?, model.index_of(br.to)?);
        let ys = C64::new(1.0, 0.0) / C64::new(br.r, br.x);
        let bc = C64::new(0.0, br.b / 2.0);
        let tap = if br.tap == 0.0 { 1.0 } else { br.tap };
        y[(f, f)] += (ys + bc) / (tap * tap);
        y[(t, t)] += ys + bc;
        y[(f, t)] -= ys / tap;
        y[(t, f)] -= ys / tap;
    }
    for (k, b) in model.buses.iter().enumerate() {
        y[(k, k)] += C64::new(b.g_sh, b.b_sh);
    }
    Ok(y)
}

/// `Σ i_inj,k − (Y·V)_k` for every bus.
pub fn network_residual(ybus: &DMatrix<C64>, v: &[C64], injections: &[C64]) -> Vec<C64> {
    let n = v.len();
    (0..n)
        .map(|k| {
            let yv: C64 = (0..n).map(|m| ybus[(k, m)] * v[m]).sum();
            injections[k] - yv
        })
        .collect()
}
