//! Fits the model to a graph with two overlapping communities and compares
//! the recovered memberships with the planted ones.
//!
//! `cargo run --release --example fit_communities -- [seed]`

use nalgebra::{dmatrix, dvector};
use osbm::eval::{l2_distance, pair_matrix};
use osbm::model::{sample_graph, sample_latent, OsbmParams};
use osbm::{fit, FitConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> osbm::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let w = dmatrix![5.0, -1.0; -1.0, 5.0];
    let truth = OsbmParams::from_blocks(vec![0.35, 0.35], &w, &dvector![0.5, 0.5], &dvector![0.5, 0.5], -4.5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = sample_latent(&truth, 80, &mut rng)?;
    let g = sample_graph(&z, &truth, &mut rng)?;

    let result = fit(&g, 2, &FitConfig { seed, ..Default::default() })?;
    println!(
        "converged {} after {} iterations, final bound {:.3}",
        result.converged,
        result.iterations,
        result.final_bound()
    );
    println!("estimated alpha {:?}", result.params.alpha());
    println!("estimated W~\n{:.2}", result.params.w_tilde());

    let d = l2_distance(&pair_matrix(&z), &pair_matrix(&result.z_map))?;
    println!("pair-matrix distance to the planted memberships: {d}");
    println!(
        "planted: {} outliers, {} overlapping; recovered: {} outliers, {} overlapping",
        z.outlier_count(),
        z.overlap_count(),
        result.z_map.outlier_count(),
        result.z_map.overlap_count()
    );
    Ok(())
}
