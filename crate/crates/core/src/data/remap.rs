//! Hierarchical relabeling of the 4-class schema into three binary tasks.

use super::{io::schema_by_name, DataError, Dataset};

/// The three binary restagings of the 4-class task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HierarchyLevel {
    /// Unknown (stranger) vs. known (acquaintance, friend, very good friend).
    I,
    /// Acquaintance vs. friend (very good friend folded into friend); strangers dropped.
    II,
    /// Friend vs. very good friend; everything else dropped.
    III,
}

impl HierarchyLevel {
    pub fn parse(s: &str) -> Option<HierarchyLevel> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Some(HierarchyLevel::I),
            "II" | "2" => Some(HierarchyLevel::II),
            "III" | "3" => Some(HierarchyLevel::III),
            _ => None,
        }
    }

    pub fn schema_name(self) -> &'static str {
        match self {
            HierarchyLevel::I => "noxi_l1",
            HierarchyLevel::II => "noxi_l2",
            HierarchyLevel::III => "noxi_l3",
        }
    }

    /// Maps a 4-class index to the binary index, or None to drop the dyad.
    fn map_label(self, label: usize) -> Option<usize> {
        match (self, label) {
            (HierarchyLevel::I, 0) => Some(0),        // Str -> Unk
            (HierarchyLevel::I, _) => Some(1),        // Acq/Fri/Vgf -> Kno
            (HierarchyLevel::II, 0) => None,          // Str dropped
            (HierarchyLevel::II, 1) => Some(0),       // Acq
            (HierarchyLevel::II, _) => Some(1),       // Fri, Vgf -> Fri
            (HierarchyLevel::III, 2) => Some(0),      // Fri
            (HierarchyLevel::III, 3) => Some(1),      // Vgf
            (HierarchyLevel::III, _) => None,
        }
    }
}

/// Rewrites a 4-class dataset into the binary schema of `level`. Dyads whose
/// labels fall outside the level's retained set are dropped entirely; a dyad
/// is kept only when every labeled direction survives the mapping. The result
/// may be empty.
pub fn remap_hierarchical(dataset: &Dataset, level: HierarchyLevel) -> Result<Dataset, DataError> {
    if dataset.schema.n_classes() != 4 || !dataset.schema.bidirectional {
        return Err(DataError::WrongSchema {
            expected: "noxi".into(),
            got: dataset.schema.name.clone(),
        });
    }
    let schema = schema_by_name(level.schema_name()).expect("level schemas are registered");
    let mut dyads = Vec::new();
    for dyad in &dataset.dyads {
        let label_i = level.map_label(dyad.label_i_to_j());
        let label_j = dyad.label_j_to_i().map(|l| level.map_label(l));
        let (label_i, label_j) = match (label_i, label_j) {
            (Some(li), Some(Some(lj))) => (li, Some(lj)),
            (Some(li), None) => (li, None),
            _ => continue,
        };
        let mut mapped = dyad.clone();
        for clip in &mut mapped.clips {
            clip.label_i_to_j = label_i;
            clip.label_j_to_i = label_j;
        }
        dyads.push(mapped);
    }
    let out = Dataset {
        schema,
        feature_dim: dataset.feature_dim,
        dyads,
    };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{ClipRecord, Dyad, LabelSchema, ModalityBundle};
    use super::*;

    /// One dyad per (label_i, label_j) combination, 2 clips each.
    fn fixture() -> Dataset {
        let d = 2;
        let mut dyads = Vec::new();
        for li in 0..4usize {
            for lj in 0..4usize {
                let id = format!("p{li}{lj}");
                let clips = (0..2)
                    .map(|t| ClipRecord {
                        dyad_id: id.clone(),
                        clip_index: t,
                        person_i: ModalityBundle::zeros(d),
                        person_j: ModalityBundle::zeros(d),
                        label_i_to_j: li,
                        label_j_to_i: Some(lj),
                    })
                    .collect();
                dyads.push(Dyad {
                    dyad_id: id,
                    n_clips: 2,
                    clips,
                });
            }
        }
        Dataset {
            schema: LabelSchema::noxi(),
            feature_dim: d,
            dyads,
        }
    }

    #[test]
    fn level_one_merges_known_classes() {
        let out = remap_hierarchical(&fixture(), HierarchyLevel::I).unwrap();
        assert_eq!(out.schema.classes, vec!["Unk", "Kno"]);
        assert_eq!(out.n_dyads(), 16, "level I keeps every dyad");
        for dyad in &out.dyads {
            let li: usize = dyad.dyad_id[1..2].parse().unwrap();
            assert_eq!(dyad.label_i_to_j(), usize::from(li != 0));
        }
    }

    #[test]
    fn level_two_drops_strangers_and_folds_vgf() {
        let out = remap_hierarchical(&fixture(), HierarchyLevel::II).unwrap();
        // Both directions must avoid Str: 3×3 combinations survive.
        assert_eq!(out.n_dyads(), 9);
        let vgf_both = out.dyads.iter().find(|d| d.dyad_id == "p33").unwrap();
        assert_eq!(vgf_both.label_i_to_j(), 1, "Vgf relabeled Friend");
        assert_eq!(vgf_both.label_j_to_i(), Some(1));
        let acq = out.dyads.iter().find(|d| d.dyad_id == "p12").unwrap();
        assert_eq!(acq.label_i_to_j(), 0);
        assert_eq!(acq.label_j_to_i(), Some(1));
    }

    #[test]
    fn level_three_keeps_only_friend_grades() {
        let out = remap_hierarchical(&fixture(), HierarchyLevel::III).unwrap();
        assert_eq!(out.n_dyads(), 4, "only Fri/Vgf × Fri/Vgf combinations");
        assert_eq!(out.schema.classes, vec!["Fri", "Vgf"]);
        for dyad in &out.dyads {
            assert!(dyad.label_i_to_j() < 2);
        }
    }

    #[test]
    fn remap_preserves_clip_counts_for_retained_dyads() {
        let src = fixture();
        let out = remap_hierarchical(&src, HierarchyLevel::II).unwrap();
        for dyad in &out.dyads {
            let orig = src.dyads.iter().find(|d| d.dyad_id == dyad.dyad_id).unwrap();
            assert_eq!(dyad.n_clips, orig.n_clips);
            assert_eq!(dyad.clips.len(), orig.clips.len());
        }
    }

    #[test]
    fn level_three_on_strangers_only_is_empty() {
        let mut ds = fixture();
        ds.dyads.retain(|d| d.dyad_id == "p00");
        let out = remap_hierarchical(&ds, HierarchyLevel::III).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn wrong_schema_rejected() {
        let mut ds = fixture();
        ds.schema = LabelSchema::udiva();
        assert!(matches!(
            remap_hierarchical(&ds, HierarchyLevel::I),
            Err(DataError::WrongSchema { .. })
        ));
    }
}
