use std::io::Write;

use serde::Serialize;

use crate::error::Result;

/// One row of the run log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub objective: f64,
    pub heldout_acc: Option<f64>,
    pub heldout_maf1: Option<f64>,
    pub nnz: usize,
    /// Wall time since training started.
    pub seconds: f64,
    /// Index rows refreshed during the epoch; a full rebuild counts every row.
    pub index_refreshes: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub stopped_early: bool,
}

pub const LOG_HEADER: &str =
    "epoch\tobjective\theldout_acc\theldout_maf1\tnnz\tseconds\tindex_refreshes";

impl TrainLog {
    pub fn push(&mut self, r: EpochRecord) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Tab-separated log with a header row. Missing heldout metrics are
    /// written as `NA`.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
        writeln!(out, "{LOG_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{:.6}\t{}",
                r.epoch,
                r.objective,
                opt(r.heldout_acc),
                opt(r.heldout_maf1),
                r.nnz,
                r.seconds,
                r.index_refreshes
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_layout() {
        let mut log = TrainLog::default();
        log.push(EpochRecord {
            epoch: 1,
            objective: 0.5,
            heldout_acc: None,
            heldout_maf1: Some(0.25),
            nnz: 7,
            seconds: 0.0,
            index_refreshes: 3,
        });
        let mut buf = Vec::new();
        log.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], LOG_HEADER);
        assert_eq!(lines[1], "1\t0.5\tNA\t0.25\t7\t0.000000\t3");
    }
}
