//! JSON Lines pool format: one sample object per line, UTF-8, LF endings.
//!
//! Canonical form (what the writer emits) keys every object alphabetically
//! and prints floats at full round-trip precision, so
//! read -> write -> read -> write is byte-stable. A line may carry an
//! explicit `uncertainty`, a `class_probs` vector (converted to least
//! confidence at ingestion), or both.

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::{BoundingBox, FeatureVector, ObjectInstance, Pool, Sample};
use crate::selector::least_confidence;

// Field order is alphabetical on purpose: serde_json emits struct fields in
// declaration order, which makes this the canonical key order.
#[derive(Debug, Serialize, Deserialize)]
struct ObjectRecord {
    bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<String>,
    feature: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PoolRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_probs: Option<Vec<f64>>,
    id: String,
    image_feature: Vec<f64>,
    #[serde(default)]
    objects: Vec<ObjectRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    uncertainty: Option<f64>,
}

fn record_to_sample(record: PoolRecord, line_no: usize) -> Result<Sample> {
    let context = |msg: String| Error::format(format!("line {line_no}: {msg}"));

    let uncertainty = match (record.uncertainty, &record.class_probs) {
        (Some(u), _) => u,
        (None, Some(probs)) => least_confidence(probs)
            .map_err(|e| context(format!("cannot derive uncertainty: {e}")))?,
        (None, None) => {
            return Err(context(format!(
                "sample {:?} needs either uncertainty or class_probs",
                record.id
            )))
        }
    };

    let image_feature = FeatureVector::new(record.image_feature)
        .map_err(|e| context(format!("sample {:?} image_feature: {e}", record.id)))?;

    let objects = record
        .objects
        .into_iter()
        .enumerate()
        .map(|(i, obj)| {
            let [x, y, w, h] = obj.bbox;
            Ok(ObjectInstance {
                bbox: BoundingBox::new(x, y, w, h)
                    .map_err(|e| context(format!("sample {:?} object {i}: {e}", record.id)))?,
                feature: FeatureVector::new(obj.feature)
                    .map_err(|e| context(format!("sample {:?} object {i}: {e}", record.id)))?,
                detection_score: obj.score,
                class_label: obj.class,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Sample {
        id: record.id,
        uncertainty,
        image_feature,
        objects,
        class_probs: record.class_probs,
    })
}

fn sample_to_record(sample: &Sample) -> PoolRecord {
    PoolRecord {
        class_probs: sample.class_probs.clone(),
        id: sample.id.clone(),
        image_feature: sample.image_feature.values().to_vec(),
        objects: sample
            .objects
            .iter()
            .map(|obj| ObjectRecord {
                bbox: [obj.bbox.x, obj.bbox.y, obj.bbox.w, obj.bbox.h],
                class: obj.class_label.clone(),
                feature: obj.feature.values().to_vec(),
                score: obj.detection_score,
            })
            .collect(),
        uncertainty: Some(sample.uncertainty),
    }
}

/// Parses a pool from JSON Lines text.
pub fn read_pool(reader: impl BufRead) -> Result<Pool> {
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PoolRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format(format!("line {}: {e}", idx + 1)))?;
        samples.push(record_to_sample(record, idx + 1)?);
    }
    Pool::new(samples)
}

/// Reads a pool file from disk.
pub fn read_pool_file(path: &Path) -> Result<Pool> {
    let file = fs::File::open(path)?;
    read_pool(std::io::BufReader::new(file))
}

/// One canonical JSON line for a sample (no trailing newline).
pub fn sample_to_json_line(sample: &Sample) -> String {
    serde_json::to_string(&sample_to_record(sample)).expect("pool records always serialize")
}

/// Writes the pool in canonical JSON Lines form.
pub fn pool_to_jsonl(pool: &Pool, mut writer: impl Write) -> Result<()> {
    for sample in pool.iter() {
        writer.write_all(sample_to_json_line(sample).as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Canonical JSON Lines text for the pool.
pub fn pool_to_jsonl_string(pool: &Pool) -> String {
    let mut out = Vec::new();
    pool_to_jsonl(pool, &mut out).expect("writing to a Vec cannot fail");
    String::from_utf8(out).expect("canonical form is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn object_line() -> &'static str {
        r#"{"id":"img1","image_feature":[0.5,1.5],"objects":[{"bbox":[1.0,2.0,3.0,4.0],"feature":[9.0,8.0],"score":0.7,"class":"car"}],"uncertainty":0.25}"#
    }

    #[test]
    fn parse_line_with_objects() {
        let pool = read_pool(Cursor::new(object_line())).unwrap();
        assert_eq!(pool.len(), 1);
        let s = pool.get(0);
        assert_eq!(s.id, "img1");
        assert_eq!(s.uncertainty, 0.25);
        assert_eq!(s.objects.len(), 1);
        assert_eq!(s.objects[0].class_label.as_deref(), Some("car"));
        assert_eq!(s.objects[0].detection_score, Some(0.7));
    }

    #[test]
    fn uncertainty_derived_from_class_probs() {
        let line = r#"{"id":"a","image_feature":[1.0],"objects":[],"class_probs":[0.5,0.3,0.2]}"#;
        let pool = read_pool(Cursor::new(line)).unwrap();
        assert_eq!(pool.get(0).uncertainty, 0.5);
    }

    #[test]
    fn missing_uncertainty_and_probs_rejected() {
        let line = r#"{"id":"a","image_feature":[1.0],"objects":[]}"#;
        let err = read_pool(Cursor::new(line)).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn malformed_json_names_line() {
        let text = format!("{}\nnot json\n", object_line());
        let err = read_pool(Cursor::new(text)).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn canonical_roundtrip_is_byte_identical() {
        let text = format!(
            "{}\n{}\n",
            object_line(),
            r#"{"id":"img2","image_feature":[0.0,0.0],"objects":[],"uncertainty":0.75}"#
        );
        let pool = read_pool(Cursor::new(text)).unwrap();
        let first = pool_to_jsonl_string(&pool);
        let reread = read_pool(Cursor::new(first.clone())).unwrap();
        assert_eq!(pool, reread);
        let second = pool_to_jsonl_string(&reread);
        assert_eq!(first, second);
    }

    #[test]
    fn duplicate_ids_rejected_at_load() {
        let text = format!("{}\n{}\n", object_line(), object_line());
        assert!(matches!(
            read_pool(Cursor::new(text)),
            Err(Error::InvalidPool(_))
        ));
    }

    #[test]
    fn full_precision_floats_survive() {
        let sigma = 0.1 + 0.2; // 0.30000000000000004
        let pool = Pool::new(vec![Sample::plain("x", sigma, vec![1.0 / 3.0]).unwrap()]).unwrap();
        let text = pool_to_jsonl_string(&pool);
        let reread = read_pool(Cursor::new(text)).unwrap();
        assert_eq!(reread.get(0).uncertainty.to_bits(), sigma.to_bits());
        assert_eq!(
            reread.get(0).image_feature.values()[0].to_bits(),
            (1.0f64 / 3.0).to_bits()
        );
    }
}
