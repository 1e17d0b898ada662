use super::{active_subgraph, GraphError, MetaGraph};
use std::fmt::Write;

/// Graphviz rendering of every cell's active subgraph, one cluster per
/// stage. Leaf-to-output connections are drawn dashed.
pub fn export_dot(meta: &MetaGraph) -> Result<String, GraphError> {
    let mut out = String::from("digraph metagraph {\n  rankdir=LR;\n  node [shape=box];\n");
    for (k, cell) in meta.cells().iter().enumerate() {
        let sub = active_subgraph(cell)?;
        let last = cell.output_vertex();
        let _ = writeln!(out, "  subgraph cluster_{k} {{\n    label=\"stage {k}\";");
        let _ = writeln!(out, "    s{k}_0 [label=\"input\"];");
        for v in sub.active_vertices() {
            let op = cell.op(v).expect("active vertex has an operator");
            let _ = writeln!(out, "    s{k}_{v} [label=\"{v}: {op}\"];");
        }
        let _ = writeln!(out, "    s{k}_{last} [label=\"output\"];");
        for (u, v) in sub.cell.edges() {
            if v != last {
                let _ = writeln!(out, "    s{k}_{u} -> s{k}_{v};");
            }
        }
        for v in sub.feeder_vertices() {
            let _ = writeln!(out, "    s{k}_{v} -> s{k}_{last} [style=dashed];");
        }
        out.push_str("  }\n");
    }
    out.push_str("}\n");
    Ok(out)
}
