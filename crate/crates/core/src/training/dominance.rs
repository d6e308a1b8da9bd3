//! Which last-hidden-layer features each phase kernel leans on.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{FeedbackModel, Network};

pub const TOP_FEATURES: usize = 10;

/// Features of the last regular hidden layer ranked by the magnitude of
/// their weight into one phase-modulated unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelRanking {
    pub network: usize,
    pub kernel: usize,
    /// Feature indices, most dominant first.
    pub ranking: Vec<usize>,
    /// `|W|` in ranking order.
    pub magnitudes: Vec<f64>,
}

impl KernelRanking {
    pub fn top(&self) -> &[usize] {
        &self.ranking[..TOP_FEATURES.min(self.ranking.len())]
    }
}

pub fn dominance_analysis(model: &FeedbackModel) -> Result<Vec<KernelRanking>> {
    let mut out = Vec::new();
    for (m, net) in model.networks.iter().enumerate() {
        let pmnn = match net {
            Network::Pmnn(p) if !p.hidden().is_empty() => p,
            _ => return Err(Error::invalid(
                "dominance analysis needs a phase-modulated network with a regular hidden layer",
            )),
        };
        let w = pmnn.modulated().weights();
        for kernel in 0..w.nrows() {
            let row: Vec<f64> = w.row(kernel).iter().map(|v| v.abs()).collect();
            let mut ranking: Vec<usize> = (0..row.len()).collect();
            ranking.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
            let magnitudes = ranking.iter().map(|&i| row[i]).collect();
            out.push(KernelRanking {
                network: m,
                kernel,
                ranking,
                magnitudes,
            });
        }
    }
    Ok(out)
}

/// Long-format CSV `network,kernel,rank,feature,magnitude,top`.
pub fn write_dominance_csv<W: Write>(rankings: &[KernelRanking], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["network", "kernel", "rank", "feature", "magnitude", "top"])?;
    for r in rankings {
        for (rank, (f, mag)) in r.ranking.iter().zip(&r.magnitudes).enumerate() {
            w.write_record([
                r.network.to_string(),
                r.kernel.to_string(),
                rank.to_string(),
                f.to_string(),
                mag.to_string(),
                u8::from(rank < TOP_FEATURES).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::{CanonicalParams, PhaseKernelBank};
    use crate::feedback::{
        Architecture, DenseLayer, InputNormalization, InputPipeline, PmnnParams,
    };
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn model_with(modulated: DMatrix<f64>) -> FeedbackModel {
        let n = modulated.nrows();
        let h = modulated.ncols();
        let bank = PhaseKernelBank::equal_time(n, &CanonicalParams::new(1.0).unwrap()).unwrap();
        let hidden = vec![DenseLayer::zeros(3, h)];
        let net = PmnnParams::new(
            hidden,
            DenseLayer::new(modulated, DVector::zeros(n)).unwrap(),
            DVector::from_element(n, 1.0),
        )
        .unwrap();
        let pipeline = InputPipeline {
            normalization: InputNormalization::identity(3),
            pca: None,
            phase_inputs: false,
        };
        FeedbackModel::new(
            Architecture::Pmnn { hidden: vec![h] },
            pipeline,
            bank,
            vec![Network::Pmnn(net)],
            vec![1.0],
        )
        .unwrap()
    }

    #[test]
    fn one_hot_rows_rank_their_hot_index_first() {
        let w = DMatrix::from_fn(5, 12, |r, c| {
            if c == (3 * r + 1) % 12 {
                -2.0
            } else {
                0.01 * c as f64
            }
        });
        let ranks = dominance_analysis(&model_with(w)).unwrap();
        assert_eq!(ranks.len(), 5);
        for r in &ranks {
            assert_eq!(r.ranking[0], (3 * r.kernel + 1) % 12);
            assert_eq!(r.top().len(), TOP_FEATURES);
        }
    }

    #[test]
    fn requires_hidden_layer() {
        let bank = PhaseKernelBank::equal_time(4, &CanonicalParams::new(1.0).unwrap()).unwrap();
        let m = FeedbackModel::untrained(Architecture::pmnn_linear(), 3, 1, bank.clone()).unwrap();
        assert!(dominance_analysis(&m).is_err());
        let f = FeedbackModel::untrained(Architecture::ffnn_default(), 3, 1, bank).unwrap();
        assert!(dominance_analysis(&f).is_err());
    }

    #[test]
    fn csv_flags_top_ten() {
        let w = DMatrix::from_fn(2, 12, |r, c| (r + c) as f64);
        let mut buf = Vec::new();
        write_dominance_csv(&dominance_analysis(&model_with(w)).unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 12);
        assert_eq!(
            text.lines().filter(|l| l.ends_with(",1")).count(),
            2 * TOP_FEATURES
        );
    }

    proptest! {
        #[test]
        fn ranking_is_permutation_and_scale_invariant(
            vals in prop::collection::vec(-5.0..5.0f64, 3 * 8),
            row in 0usize..3,
        ) {
            let w = DMatrix::from_row_slice(3, 8, &vals);
            let base = dominance_analysis(&model_with(w.clone())).unwrap();
            for r in &base {
                let mut sorted = r.ranking.clone();
                sorted.sort_unstable();
                prop_assert_eq!(sorted, (0..8).collect::<Vec<_>>());
            }
            let mut scaled = w;
            scaled.row_mut(row).scale_mut(2.0);
            let after = dominance_analysis(&model_with(scaled)).unwrap();
            prop_assert_eq!(&after[row].ranking, &base[row].ranking);
        }
    }
}
