//! Append-only CSV loss log.

use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every loss term of one training step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iteration: u64,
    #[serde(rename = "L_mel")]
    pub l_mel: f64,
    #[serde(rename = "L_AD")]
    pub l_ad: f64,
    #[serde(rename = "L_AD_adv")]
    pub l_ad_adv: f64,
    #[serde(rename = "L_HD")]
    pub l_hd: f64,
    #[serde(rename = "L_HD_adv")]
    pub l_hd_adv: f64,
    #[serde(rename = "L_FM")]
    pub l_fm: f64,
    pub lr: f64,
}

pub struct LossLog {
    writer: csv::Writer<std::fs::File>,
}

impl LossLog {
    /// Open for appending; the header is written only to a new or empty file.
    pub fn open(path: &Path) -> Result<Self> {
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        Ok(Self { writer })
    }

    pub fn append(&mut self, r: &LossReport) -> Result<()> {
        self.writer.serialize(r).map_err(csv_err)?;
        self.writer.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn read_loss_log(path: &Path) -> Result<Vec<LossReport>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_once_and_append() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("loss.csv");
        let r = |i| LossReport {
            iteration: i,
            l_mel: 1.5,
            l_ad: 0.7,
            l_ad_adv: 0.6,
            l_hd: 2.0,
            l_hd_adv: 1.0,
            l_fm: 0.25,
            lr: 2e-4,
        };
        LossLog::open(&p).unwrap().append(&r(0)).unwrap();
        let mut log = LossLog::open(&p).unwrap();
        log.append(&r(1)).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "iteration,L_mel,L_AD,L_AD_adv,L_HD,L_HD_adv,L_FM,lr"
        );
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_loss_log(&p).unwrap(), vec![r(0), r(1)]);
    }
}
