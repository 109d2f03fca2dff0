use std::fs;
use std::path::{Path, PathBuf};

use crate::corrector::Snapshot;
use crate::error::{Error, Result};

/// Snapshots in ascending epoch order, applied over equal contiguous epoch
/// ranges at meta-test time.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    snapshots: Vec<Snapshot>,
}

impl SnapshotSet {
    pub fn new(snapshots: Vec<Snapshot>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::config("a snapshot set needs at least one snapshot"));
        }
        if let Some(w) = snapshots.windows(2).find(|w| w[0].epoch_tag >= w[1].epoch_tag) {
            return Err(Error::config(format!(
                "snapshot tags must increase strictly, got {} then {}",
                w[0].epoch_tag, w[1].epoch_tag
            )));
        }
        let first = &snapshots[0].corrector;
        for s in &snapshots[1..] {
            let c = &s.corrector;
            if c.config() != first.config() || c.feature_width() != first.feature_width() || c.c_out() != first.c_out()
            {
                return Err(Error::config(format!(
                    "snapshot at epoch {} does not share the shape of the first snapshot",
                    s.epoch_tag
                )));
            }
        }
        Ok(SnapshotSet { snapshots })
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn tags(&self) -> Vec<usize> {
        self.snapshots.iter().map(|s| s.epoch_tag).collect()
    }

    /// Index of the snapshot that drives `epoch` (1-based) of a run with
    /// `epochs` epochs.
    pub fn index_for_epoch(&self, epoch: usize, epochs: usize) -> usize {
        debug_assert!(epoch >= 1 && epoch <= epochs);
        ((epoch - 1) * self.snapshots.len() / epochs).min(self.snapshots.len() - 1)
    }

    pub fn for_epoch(&self, epoch: usize, epochs: usize) -> &Snapshot {
        &self.snapshots[self.index_for_epoch(epoch, epochs)]
    }

    pub fn file_name(tag: usize) -> String {
        format!("snapshot_epoch{tag:04}.json")
    }

    /// Writes one file per snapshot and returns their paths.
    pub fn save_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.snapshots
            .iter()
            .map(|s| {
                let path = dir.join(Self::file_name(s.epoch_tag));
                s.save(&path)?;
                Ok(path)
            })
            .collect()
    }

    /// Loads every `snapshot_*.json` in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with("snapshot_") && name.ends_with(".json") {
                paths.push(path);
            }
        }
        if paths.is_empty() {
            return Err(Error::config(format!("no snapshot files in {}", dir.display())));
        }
        let mut snaps = paths.iter().map(|p| Snapshot::load(p)).collect::<Result<Vec<_>>>()?;
        snaps.sort_by_key(|s| s.epoch_tag);
        SnapshotSet::new(snaps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrector::{Corrector, CorrectorConfig};

    fn snap(tag: usize) -> Snapshot {
        let cfg = CorrectorConfig {
            hidden_size: 2,
            ..CorrectorConfig::default()
        };
        Snapshot::new(tag, Corrector::init(cfg, 6, 3, tag as u64).unwrap())
    }

    #[test]
    fn equal_contiguous_ranges() {
        let set = SnapshotSet::new(vec![snap(3), snap(6), snap(9)]).unwrap();
        let used: Vec<usize> = (1..=9).map(|e| set.for_epoch(e, 9).epoch_tag).collect();
        assert_eq!(used, vec![3, 3, 3, 6, 6, 6, 9, 9, 9]);
        let one = SnapshotSet::new(vec![snap(5)]).unwrap();
        assert!((1..=7).all(|e| one.index_for_epoch(e, 7) == 0));
        let uneven: Vec<usize> = (1..=4).map(|e| set.index_for_epoch(e, 4)).collect();
        assert_eq!(uneven, vec![0, 0, 1, 2]);
    }

    #[test]
    fn rejects_empty_and_unordered() {
        assert!(SnapshotSet::new(vec![]).is_err());
        assert!(SnapshotSet::new(vec![snap(4), snap(4)]).is_err());
        assert!(SnapshotSet::new(vec![snap(5), snap(2)]).is_err());
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let set = SnapshotSet::new(vec![snap(2), snap(10), snap(30)]).unwrap();
        let paths = set.save_dir(dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        assert_eq!(SnapshotSet::load_dir(dir.path()).unwrap(), set);
    }
}
