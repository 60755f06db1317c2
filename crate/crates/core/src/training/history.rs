use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Eval-mode metrics at one recorded epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub epoch: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Training trajectory: one record every `eval_every` epochs plus the last epoch run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<HistoryRecord>,
    /// Epoch whose parameters were selected.
    pub best_val_epoch: usize,
    /// Last epoch that ran.
    pub final_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,train_acc,val_acc,test_acc,train_loss,val_loss";

    pub fn best(&self) -> Option<&HistoryRecord> {
        self.records.iter().find(|r| r.epoch == self.best_val_epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            writeln!(
                out,
                "{},{:?},{:?},{:?},{:?},{:?}",
                r.epoch, r.train_acc, r.val_acc, r.test_acc, r.train_loss, r.val_loss
            )
            .expect("writing to a String");
        }
        out
    }
}
