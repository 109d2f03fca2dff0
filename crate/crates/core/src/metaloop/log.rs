use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub split: String,
    pub loss_base: f64,
    pub loss_meta: Option<f64>,
    pub acc_train_noisy: f64,
    pub acc_train_true: f64,
    pub acc_test: Option<f64>,
    pub corrected_label_acc: f64,
    pub kl_meta: Option<f64>,
}

pub const LOG_COLUMNS: [&str; 9] = [
    "epoch",
    "split",
    "loss_base",
    "loss_meta",
    "acc_train_noisy",
    "acc_train_true",
    "acc_test",
    "corrected_label_acc",
    "kl_meta",
];

/// Per-epoch rows of one training run plus any warnings raised on the way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub rows: Vec<EpochRow>,
    pub warnings: Vec<String>,
}

impl RunLog {
    pub fn last(&self) -> Option<&EpochRow> {
        self.rows.last()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        if self.rows.is_empty() {
            w.write_record(LOG_COLUMNS)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::contract(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::contract(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<RunLog> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(file);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != LOG_COLUMNS {
            return Err(Error::format(
                0,
                format!("{}: unexpected columns {header:?}", path.display()),
            ));
        }
        let rows = r.deserialize().collect::<std::result::Result<Vec<EpochRow>, _>>()?;
        Ok(RunLog {
            rows,
            warnings: Vec::new(),
        })
    }
}
