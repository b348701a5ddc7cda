//! Draws memberships and a graph from a two-class model and prints a few
//! graph statistics.
//!
//! `cargo run --example sample_network -- [n] [seed]`

use nalgebra::{dmatrix, dvector};
use osbm::model::{sample_graph, sample_latent, OsbmParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> osbm::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(40);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);

    let w = dmatrix![4.0, -1.0; -1.0, 4.0];
    let params = OsbmParams::from_blocks(vec![0.3, 0.3], &w, &dvector![1.0, 1.0], &dvector![1.0, 1.0], -5.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = sample_latent(&params, n, &mut rng)?;
    let g = sample_graph(&z, &params, &mut rng)?;

    println!("vertices {}  edges {}  density {:.4}", n, g.edge_count(), g.density()?);
    println!("outliers {}  overlapping {}", z.outlier_count(), z.overlap_count());
    for i in 0..n.min(8) {
        println!("vertex {i:>2}: z = {:?}  out {:>2}  in {:>2}", z.row(i), g.out_degree(i), g.in_degree(i));
    }
    Ok(())
}
