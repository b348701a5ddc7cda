//! Compares the variational lower bound with the exact log-likelihood on a
//! small graph, before and after a few rounds of coordinate updates.

use nalgebra::{dmatrix, dvector, DMatrix};
use osbm::inference::{estep_tau, lower_bound, mstep_alpha, update_xi, VariationalState};
use osbm::model::{exact_log_likelihood, OsbmParams};
use osbm::{FitConfig, Graph};

fn main() -> osbm::Result<()> {
    let g = Graph::from_edges(5, [(0, 1), (1, 0), (1, 2), (2, 1), (3, 4), (4, 3), (2, 3)])?;
    let w = dmatrix![2.0, -1.0; -1.0, 2.0];
    let p = OsbmParams::from_blocks(vec![0.4, 0.4], &w, &dvector![0.0, 0.0], &dvector![0.0, 0.0], -1.0)?;
    let exact = exact_log_likelihood(&g, &p)?;
    println!("exact log-likelihood {exact:.6}");

    let n = g.n_vertices();
    let tau = DMatrix::from_fn(n, 2, |i, q| if (i < 3) == (q == 0) { 0.8 } else { 0.2 });
    let mut state = VariationalState::new(tau, DMatrix::zeros(n, n))?;
    let mut params = p;
    let cfg = FitConfig::default();
    for round in 0..5 {
        state = update_xi(&state, &params)?;
        params = params.with_alpha(mstep_alpha(&state))?;
        state = estep_tau(&g, &state, &params, &cfg)?;
        let bound = lower_bound(&g, &state, &params)?;
        let exact = exact_log_likelihood(&g, &params)?;
        println!("round {round}: bound {bound:.6}  exact {exact:.6}  gap {:.6}", exact - bound);
    }
    Ok(())
}
