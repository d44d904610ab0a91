//! Dataset files: a JSON array of graph documents (see
//! [`crate::graph::GraphDoc`]), plus helpers for alphabet normalization.

use std::fs;
use std::path::Path;

use crate::graph::{parse_graph, Graph, GraphDoc};
use crate::Result;

pub fn dataset_from_str(text: &str) -> Result<Vec<Graph>> {
    let docs: Vec<GraphDoc> = serde_json::from_str(text)?;
    docs.iter().map(parse_graph).collect()
}

pub fn dataset_to_string(graphs: &[Graph]) -> Result<String> {
    let docs: Vec<GraphDoc> = graphs.iter().map(|g| g.to_doc()).collect();
    Ok(serde_json::to_string_pretty(&docs)?)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Graph>> {
    dataset_from_str(&fs::read_to_string(path)?)
}

pub fn save_dataset(path: &Path, graphs: &[Graph]) -> Result<()> {
    fs::write(path, dataset_to_string(graphs)?)?;
    Ok(())
}

/// Lift every graph to the dataset-wide label alphabet (the maximum declared
/// size), so embeddings across the dataset share one provenance.
pub fn normalize_alphabet(graphs: Vec<Graph>) -> Result<Vec<Graph>> {
    let alphabet = graphs.iter().map(|g| g.n_labels()).max().unwrap_or(1);
    graphs.into_iter().map(|g| g.with_alphabet(alphabet)).collect()
}

/// Whitespace-separated decimals, one coefficient sequence.
pub fn load_mu_file(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| crate::Error::InvalidSchemeSpec(format!("bad coefficient `{tok}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::erdos_renyi;

    #[test]
    fn dataset_roundtrip() {
        let graphs: Vec<Graph> =
            (0..3).map(|s| erdos_renyi(6, 0.5, s, false).unwrap()).collect();
        let text = dataset_to_string(&graphs).unwrap();
        let back = dataset_from_str(&text).unwrap();
        assert_eq!(graphs, back);
        assert_eq!(dataset_to_string(&back).unwrap(), text);
    }

    #[test]
    fn alphabet_normalization() {
        let a = Graph::from_edges(2, &[(0, 1)], None, None).unwrap();
        let b = Graph::from_edges(2, &[(0, 1)], Some(vec![1, 3]), Some(3)).unwrap();
        let out = normalize_alphabet(vec![a, b]).unwrap();
        assert!(out.iter().all(|g| g.n_labels() == 3));
    }
}
