//! Shows the label-switching and inversion symmetries: both leave the
//! induced stochastic block model unchanged, and canonicalization undoes
//! them.

use nalgebra::{dmatrix, dvector};
use osbm::identifiability::{canonicalize, find_equivalence, invert, permute, phi, InversionVector, Permutation};
use osbm::model::OsbmParams;

fn main() -> osbm::Result<()> {
    let w = dmatrix![2.0, -1.0; 0.5, 3.0];
    let p = OsbmParams::from_blocks(vec![0.2, 0.4], &w, &dvector![0.3, -0.2], &dvector![0.1, 0.4], -2.0)?;

    let sigma = Permutation::new(vec![1, 0])?;
    let a = InversionVector::new(vec![1, 0])?;
    let moved = invert(&permute(&p, &sigma)?, &a)?;
    println!("original alpha {:?}, W~ {:.2}", p.alpha(), p.w_tilde());
    println!("transformed alpha {:?}, W~ {:.2}", moved.alpha(), moved.w_tilde());

    let sbm = phi(&p);
    let sbm_moved = phi(&moved);
    let nu = |c: usize| sigma.pattern_map(c ^ a.mask());
    let diff = sbm.relabel(nu).max_abs_diff(&sbm_moved);
    println!("induced block models agree up to relabeling: max diff {diff:.2e}");

    match find_equivalence(&p, &moved, 1e-9)? {
        Some((s, inv)) => println!("witness: permutation {:?}, inversion {:?}", s.as_slice(), inv.bits()),
        None => println!("no witness found"),
    }

    let c1 = canonicalize(&p);
    let c2 = canonicalize(&moved);
    println!("canonical forms coincide: {}", c1.params.max_abs_diff(&c2.params) < 1e-9);
    println!("canonical alpha {:?}, W~ {:.2}", c1.params.alpha(), c1.params.w_tilde());
    Ok(())
}
