//! Round-trips a graph through the edge-list text format and shows how
//! malformed input is reported.

use osbm::Graph;

fn main() -> osbm::Result<()> {
    let text = "# a directed 4-cycle with one chord\nn=4\n0 1\n1 2\n2 3\n3 0\n0 2\n";
    let g = Graph::from_edge_list(text)?;
    println!("read {} vertices and {} edges", g.n_vertices(), g.edge_count());
    for (i, j) in g.edges() {
        println!("  {i} -> {j}");
    }

    let written = g.to_edge_list();
    let again = Graph::from_edge_list(&written)?;
    println!("round trip preserved the graph: {}", again == g);

    let rotated = g.permute_vertices(&[1, 2, 3, 0])?;
    println!("after relabeling vertices, edge 1 -> 3 present: {}", rotated.has_edge(1, 3));

    for bad in ["n=3\n0 1\n1 1\n", "n=3\n0 5\n", "n=3\n0 x\n"] {
        match Graph::from_edge_list(bad) {
            Ok(_) => println!("unexpectedly accepted {bad:?}"),
            Err(e) => println!("rejected {bad:?}: {e}"),
        }
    }
    Ok(())
}
