//! Canonical text serialization for feature datasets.
//!
//! One record per line, tab-separated:
//! `dyad_id  n_clips  clip_index  label_i_to_j  label_j_to_i|-  <8 float lists>`
//! where the float lists are comma-separated, in fixed order
//! i.face, i.body, i.audio, i.text, j.face, j.body, j.audio, j.text.
//! Floats carry 9 significant digits, which makes save→load→save idempotent.

use std::fmt::Write as _;
use std::path::Path;

use super::{ClipRecord, DataError, Dataset, Dyad, LabelSchema, ModalityBundle};

const HEADER_PREFIX: &str = "#asyrec-features v1";

/// Schemas reconstructible from their name in the file header.
pub(crate) fn schema_by_name(name: &str) -> Option<LabelSchema> {
    match name {
        "noxi" => Some(LabelSchema::noxi()),
        "udiva" => Some(LabelSchema::udiva()),
        "noxi_l1" => Some(LabelSchema {
            name: "noxi_l1".into(),
            classes: vec!["Unk".into(), "Kno".into()],
            bidirectional: true,
        }),
        "noxi_l2" => Some(LabelSchema {
            name: "noxi_l2".into(),
            classes: vec!["Acq".into(), "Fri".into()],
            bidirectional: true,
        }),
        "noxi_l3" => Some(LabelSchema {
            name: "noxi_l3".into(),
            classes: vec!["Fri".into(), "Vgf".into()],
            bidirectional: true,
        }),
        _ => {
            let k: usize = name.strip_prefix("synth")?.parse().ok()?;
            (k >= 2).then(|| LabelSchema {
                name: name.into(),
                classes: (1..=k).map(|i| format!("C{i}")).collect(),
                bidirectional: true,
            })
        }
    }
}

fn fmt_floats(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v:.8e}");
    }
}

/// Serializes a dataset into the canonical line format.
pub fn write_dataset_string(dataset: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{HEADER_PREFIX} d={} schema={}",
        dataset.feature_dim, dataset.schema.name
    );
    for dyad in &dataset.dyads {
        for clip in &dyad.clips {
            let _ = write!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                dyad.dyad_id,
                dyad.n_clips,
                clip.clip_index,
                dataset.schema.classes[clip.label_i_to_j],
                clip.label_j_to_i
                    .map(|l| dataset.schema.classes[l].clone())
                    .unwrap_or_else(|| "-".into()),
            );
            for bundle in [&clip.person_i, &clip.person_j] {
                for m in super::Modality::ALL {
                    out.push('\t');
                    fmt_floats(&mut out, bundle.row(m));
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    std::fs::write(path, write_dataset_string(dataset))?;
    Ok(())
}

fn parse_floats(field: &str, d: usize, line: usize, what: &str) -> Result<Vec<f64>, DataError> {
    let values: Result<Vec<f64>, _> = field.split(',').map(str::parse::<f64>).collect();
    let values = values.map_err(|e| DataError::Malformed {
        line,
        msg: format!("{what}: {e}"),
    })?;
    if values.len() != d {
        return Err(DataError::Malformed {
            line,
            msg: format!("{what} has {} values, expected dimension {d}", values.len()),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(DataError::Malformed {
            line,
            msg: format!("{what} contains a non-finite value"),
        });
    }
    Ok(values)
}

/// Parses the canonical format from a string; line numbers in errors are
/// 1-based and count the header.
pub fn parse_dataset_string(text: &str) -> Result<Dataset, DataError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(DataError::Malformed {
        line: 1,
        msg: "empty file".into(),
    })?;
    let rest = header
        .strip_prefix(HEADER_PREFIX)
        .ok_or_else(|| DataError::Malformed {
            line: 1,
            msg: format!("header must start with `{HEADER_PREFIX}`"),
        })?;
    let mut d: Option<usize> = None;
    let mut schema: Option<LabelSchema> = None;
    for token in rest.split_whitespace() {
        if let Some(v) = token.strip_prefix("d=") {
            d = Some(v.parse().map_err(|_| DataError::Malformed {
                line: 1,
                msg: format!("bad dimension `{v}`"),
            })?);
        } else if let Some(v) = token.strip_prefix("schema=") {
            schema = Some(schema_by_name(v).ok_or_else(|| DataError::Malformed {
                line: 1,
                msg: format!("unknown schema `{v}`"),
            })?);
        }
    }
    let d = d.ok_or(DataError::Malformed {
        line: 1,
        msg: "header missing d=".into(),
    })?;
    let schema = schema.ok_or(DataError::Malformed {
        line: 1,
        msg: "header missing schema=".into(),
    })?;

    let mut dyads: Vec<Dyad> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 13 {
            return Err(DataError::Malformed {
                line: line_no,
                msg: format!("expected 13 tab-separated fields, got {}", fields.len()),
            });
        }
        let dyad_id = fields[0].to_string();
        let n_clips: usize = fields[1].parse().map_err(|_| DataError::Malformed {
            line: line_no,
            msg: format!("bad clip count `{}`", fields[1]),
        })?;
        let clip_index: usize = fields[2].parse().map_err(|_| DataError::Malformed {
            line: line_no,
            msg: format!("bad clip index `{}`", fields[2]),
        })?;
        let label_i_to_j = schema
            .class_index(fields[3])
            .ok_or_else(|| DataError::Malformed {
                line: line_no,
                msg: format!("label `{}` outside schema {}", fields[3], schema.name),
            })?;
        let label_j_to_i = if fields[4] == "-" {
            if schema.bidirectional {
                return Err(DataError::Malformed {
                    line: line_no,
                    msg: format!("schema {} is bidirectional but label_j_to_i is `-`", schema.name),
                });
            }
            None
        } else {
            if !schema.bidirectional {
                return Err(DataError::Malformed {
                    line: line_no,
                    msg: format!("schema {} is unidirectional; expected `-`", schema.name),
                });
            }
            Some(schema.class_index(fields[4]).ok_or_else(|| DataError::Malformed {
                line: line_no,
                msg: format!("label `{}` outside schema {}", fields[4], schema.name),
            })?)
        };

        let mut vecs = Vec::with_capacity(8);
        for (k, field) in fields[5..13].iter().enumerate() {
            let person = if k < 4 { 'i' } else { 'j' };
            let what = format!("{person}.{:?}", super::Modality::ALL[k % 4]);
            vecs.push(parse_floats(field, d, line_no, &what)?);
        }
        let mut it = vecs.into_iter();
        let person_i = ModalityBundle {
            face: it.next().unwrap(),
            body: it.next().unwrap(),
            audio: it.next().unwrap(),
            text: it.next().unwrap(),
        };
        let person_j = ModalityBundle {
            face: it.next().unwrap(),
            body: it.next().unwrap(),
            audio: it.next().unwrap(),
            text: it.next().unwrap(),
        };
        if clip_index >= n_clips {
            return Err(DataError::Malformed {
                line: line_no,
                msg: format!("clip index {clip_index} not below clip count {n_clips}"),
            });
        }

        let clip = ClipRecord {
            dyad_id: dyad_id.clone(),
            clip_index,
            person_i,
            person_j,
            label_i_to_j,
            label_j_to_i,
        };

        match dyads.last_mut() {
            Some(dyad) if dyad.dyad_id == dyad_id => {
                if clip_index != dyad.clips.len() {
                    return Err(DataError::Malformed {
                        line: line_no,
                        msg: format!(
                            "dyad {dyad_id}: expected clip index {}, got {clip_index}",
                            dyad.clips.len()
                        ),
                    });
                }
                if n_clips != dyad.n_clips {
                    return Err(DataError::Malformed {
                        line: line_no,
                        msg: format!("dyad {dyad_id}: clip count changed from {}", dyad.n_clips),
                    });
                }
                if clip.label_i_to_j != dyad.label_i_to_j()
                    || clip.label_j_to_i != dyad.label_j_to_i()
                {
                    return Err(DataError::Malformed {
                        line: line_no,
                        msg: format!("dyad {dyad_id}: labels vary across clips"),
                    });
                }
                dyad.clips.push(clip);
            }
            _ => {
                if dyads.iter().any(|dy| dy.dyad_id == dyad_id) {
                    return Err(DataError::Malformed {
                        line: line_no,
                        msg: format!("dyad {dyad_id}: records are not contiguous"),
                    });
                }
                if clip_index != 0 {
                    return Err(DataError::Malformed {
                        line: line_no,
                        msg: format!("dyad {dyad_id}: first record has clip index {clip_index}"),
                    });
                }
                dyads.push(Dyad {
                    dyad_id,
                    n_clips,
                    clips: vec![clip],
                });
            }
        }
    }

    for dyad in &dyads {
        if dyad.clips.len() != dyad.n_clips {
            return Err(DataError::Malformed {
                line: 0,
                msg: format!(
                    "dyad {}: declared {} clips, file holds {} (missing clip index)",
                    dyad.dyad_id,
                    dyad.n_clips,
                    dyad.clips.len()
                ),
            });
        }
    }

    let dataset = Dataset {
        schema,
        feature_dim: d,
        dyads,
    };
    dataset.validate()?;
    Ok(dataset)
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path)?;
    parse_dataset_string(&text)
}

#[cfg(test)]
mod tests {
    use super::super::{synth_generate, SynthConfig};
    use super::*;

    fn tiny_dataset() -> Dataset {
        let cfg = SynthConfig {
            feature_dim: 3,
            classes: 2,
            dyads_per_class: 1,
            clips_per_dyad: 3,
            noise: 0.1,
            ..SynthConfig::default()
        };
        synth_generate(&cfg, 11).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let ds = tiny_dataset();
        let first = write_dataset_string(&ds);
        let loaded = parse_dataset_string(&first).unwrap();
        let second = write_dataset_string(&loaded);
        assert_eq!(first, second);
    }

    #[test]
    fn round_trip_preserves_structure() {
        let ds = tiny_dataset();
        let loaded = parse_dataset_string(&write_dataset_string(&ds)).unwrap();
        assert_eq!(loaded.schema, ds.schema);
        assert_eq!(loaded.n_dyads(), ds.n_dyads());
        assert_eq!(loaded.n_clips(), ds.n_clips());
        let reloaded = parse_dataset_string(&write_dataset_string(&loaded)).unwrap();
        assert_eq!(loaded, reloaded);
    }

    #[test]
    fn wrong_vector_length_names_line() {
        let ds = tiny_dataset();
        let text = write_dataset_string(&ds);
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        // Truncate one float list on the third record (line 4 counting the header).
        let fields: Vec<String> = lines[3].split('\t').map(String::from).collect();
        let mut broken = fields.clone();
        let shorter: Vec<&str> = fields[6].split(',').skip(1).collect();
        broken[6] = shorter.join(",");
        lines[3] = broken.join("\t");
        let err = parse_dataset_string(&(lines.join("\n") + "\n")).unwrap_err();
        assert_eq!(err, DataError::Malformed { line: 4, msg: "i.Body has 2 values, expected dimension 3".into() });
    }

    #[test]
    fn missing_clip_is_rejected() {
        let ds = tiny_dataset();
        let text = write_dataset_string(&ds);
        let lines: Vec<&str> = text.lines().collect();
        // Drop the middle clip of the first dyad.
        let broken: Vec<&str> = lines
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 2)
            .map(|(_, l)| *l)
            .collect();
        let err = parse_dataset_string(&(broken.join("\n") + "\n")).unwrap_err();
        assert!(matches!(err, DataError::Malformed { .. }));
    }

    #[test]
    fn unknown_label_is_rejected() {
        let ds = tiny_dataset();
        let text = write_dataset_string(&ds);
        let broken = text.replacen("\tC1\t", "\tC9\t", 1);
        let err = parse_dataset_string(&broken).unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 2, .. }));
    }

    #[test]
    fn float_formatting_is_nine_significant_digits() {
        let mut s = String::new();
        fmt_floats(&mut s, &[std::f64::consts::PI, -0.000123456789123]);
        assert_eq!(s, "3.14159265e0,-1.23456789e-4");
    }
}
