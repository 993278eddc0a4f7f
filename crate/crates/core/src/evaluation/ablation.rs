use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::Corpus;
use crate::encoder::UtteranceEncoder;
use crate::error::{Error, Result};
use crate::training::{train, TrainConfig};
use crate::turns::CombineMode;

use super::{evaluate, EvalReport};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationCell {
    pub combine_mode: CombineMode,
    pub use_topic: bool,
    pub best_epoch: usize,
    pub val_acc: f64,
    pub test_acc: f64,
    pub test_report: EvalReport,
}

impl AblationCell {
    pub fn name(&self) -> String {
        let base = match self.combine_mode {
            CombineMode::None => "no turn embeddings",
            CombineMode::Sum => "turn embeddings (sum)",
            CombineMode::Concat => "turn embeddings (concat)",
        };
        if self.use_topic {
            format!("{base} + topic")
        } else {
            base.to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub cells: Vec<AblationCell>,
}

impl AblationTable {
    pub fn cell(&self, mode: CombineMode, use_topic: bool) -> Option<&AblationCell> {
        self.cells
            .iter()
            .find(|c| c.combine_mode == mode && c.use_topic == use_topic)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "combine_mode,use_topic,best_epoch,val_acc,test_acc")?;
        for c in &self.cells {
            writeln!(
                w,
                "{},{},{},{},{}",
                c.combine_mode, c.use_topic, c.best_epoch, c.val_acc, c.test_acc
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<34} {:>8} {:>8} {:>6}", "model", "val", "test", "epoch")?;
        for c in &self.cells {
            writeln!(
                f,
                "{:<34} {:>8.2} {:>8.2} {:>6}",
                c.name(),
                100.0 * c.val_acc,
                100.0 * c.test_acc,
                c.best_epoch
            )?;
        }
        Ok(())
    }
}

/// Grid of [`CombineMode`] × topic on/off (topic only when the corpus has
/// topics), all cells sharing `base`'s seed. Cells train in parallel.
pub fn run_ablation(corpus: &Corpus, base: &TrainConfig, encoder: &UtteranceEncoder) -> Result<AblationTable> {
    let topic_options: &[bool] = if corpus.has_topics() { &[false, true] } else { &[false] };
    let grid: Vec<(CombineMode, bool)> = [CombineMode::None, CombineMode::Sum, CombineMode::Concat]
        .into_iter()
        .flat_map(|m| topic_options.iter().map(move |&t| (m, t)))
        .collect();
    let cells = grid
        .into_par_iter()
        .map(|(combine_mode, use_topic)| {
            let config = TrainConfig {
                combine_mode,
                use_topic,
                ..base.clone()
            };
            let outcome = train(corpus, &config, encoder)?;
            let test_report = evaluate(&outcome.best, &corpus.test, encoder, "test")?;
            Ok(AblationCell {
                combine_mode,
                use_topic,
                best_epoch: outcome.best_epoch,
                val_acc: outcome.best_val_acc,
                test_acc: outcome.test_acc,
                test_report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable { cells })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub chunk_size: usize,
    pub best_epoch: usize,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Columns `chunk_size,acc` where `acc` is test accuracy at the best
    /// validation epoch.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "chunk_size,acc")?;
        for r in &self.rows {
            writeln!(w, "{},{}", r.chunk_size, r.test_acc)?;
        }
        Ok(())
    }
}

impl fmt::Display for SweepTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<12}", "chunk_size")?;
        for r in &self.rows {
            write!(f, " {:>7}", r.chunk_size)?;
        }
        writeln!(f)?;
        write!(f, "{:<12}", "acc")?;
        for r in &self.rows {
            write!(f, " {:>7.2}", 100.0 * r.test_acc)?;
        }
        writeln!(f)
    }
}

/// Sorted, deduplicated chunk sizes; duplicates are dropped with a warning.
pub fn normalize_sizes(sizes: &[usize]) -> Result<Vec<usize>> {
    if sizes.is_empty() {
        return Err(Error::Argument("no chunk sizes given".into()));
    }
    if sizes.contains(&0) {
        return Err(Error::Argument("chunk sizes must be positive".into()));
    }
    let unique: BTreeSet<usize> = sizes.iter().copied().collect();
    if unique.len() != sizes.len() {
        warn!("duplicate chunk sizes in {sizes:?} ignored");
    }
    Ok(unique.into_iter().collect())
}

/// One full training run per chunk size, all with `config`'s seed.
pub fn chunk_size_sweep(
    corpus: &Corpus,
    config: &TrainConfig,
    sizes: &[usize],
    encoder: &UtteranceEncoder,
) -> Result<SweepTable> {
    let sizes = normalize_sizes(sizes)?;
    let rows = sizes
        .into_par_iter()
        .map(|chunk_size| {
            let cfg = TrainConfig {
                chunk_size,
                ..config.clone()
            };
            let outcome = train(corpus, &cfg, encoder)?;
            Ok(SweepRow {
                chunk_size,
                best_epoch: outcome.best_epoch,
                val_acc: outcome.best_val_acc,
                test_acc: outcome.test_acc,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_deduplicated_and_sorted() {
        assert_eq!(normalize_sizes(&[16, 4, 8, 4]).unwrap(), vec![4, 8, 16]);
        assert!(normalize_sizes(&[]).is_err());
        assert!(normalize_sizes(&[0, 3]).is_err());
    }
}
