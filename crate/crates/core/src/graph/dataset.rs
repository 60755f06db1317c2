use super::{DatasetSplit, DirectedGraph};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Graph, node features, labels and a train/validation/test split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub graph: DirectedGraph,
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: DatasetSplit,
}

impl Dataset {
    pub fn new(
        graph: DirectedGraph,
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
        split: DatasetSplit,
    ) -> Result<Self> {
        let n = graph.num_nodes();
        if features.rows() != n {
            return Err(Error::InvalidArgument(format!(
                "{} feature rows for {n} nodes",
                features.rows()
            )));
        }
        if labels.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {n} nodes",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        split.validate(n)?;
        Ok(Dataset {
            graph,
            features,
            labels,
            num_classes,
            split,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Same features, labels and split on a different graph over the same nodes.
    pub fn with_graph(&self, graph: DirectedGraph) -> Result<Dataset> {
        Dataset::new(
            graph,
            self.features.clone(),
            self.labels.clone(),
            self.num_classes,
            self.split.clone(),
        )
    }
}
