//! Dataset persistence: JSON-lines examples plus a sidecar JSON manifest.
//! Reading back what was written is the identity, including ordering and
//! the manifest.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::synthesis::{GenerationManifest, PseudoDataset, PseudoExample};

/// Write examples as JSON-lines, one object per line, keys in the fixed
/// order idx, text, context (when present), label, template_id, seed.
pub fn write_examples(examples: &[PseudoExample], path: &Path) -> Result<()> {
    let mut out = String::new();
    for example in examples {
        out.push_str(
            &serde_json::to_string(example)
                .map_err(|e| Error::Catalog(format!("serializing example {}: {e}", example.idx)))?,
        );
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a JSON-lines example file; parse failures name the offending line.
pub fn read_examples(path: &Path) -> Result<Vec<PseudoExample>> {
    let content = fs::read_to_string(path)?;
    let mut examples = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let example: PseudoExample = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        examples.push(example);
    }
    Ok(examples)
}

/// Write a dataset and its manifest.
pub fn write_dataset(
    dataset: &PseudoDataset,
    dataset_path: &Path,
    manifest_path: &Path,
) -> Result<()> {
    write_examples(&dataset.examples, dataset_path)?;
    let manifest = serde_json::to_string_pretty(&dataset.manifest)
        .map_err(|e| Error::Catalog(format!("serializing manifest: {e}")))?;
    fs::write(manifest_path, manifest + "\n")?;
    Ok(())
}

/// Read a dataset written by [`write_dataset`].
pub fn read_dataset(dataset_path: &Path, manifest_path: &Path) -> Result<PseudoDataset> {
    let examples = read_examples(dataset_path)?;
    let content = fs::read_to_string(manifest_path)?;
    let manifest: GenerationManifest =
        serde_json::from_str(&content).map_err(|e| Error::Parse {
            path: manifest_path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })?;
    Ok(PseudoDataset { examples, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn sample_dataset(n: usize) -> PseudoDataset {
        let examples: Vec<PseudoExample> = (0..n)
            .map(|i| PseudoExample {
                idx: i as u64 * 3,
                text: format!("text number {i}"),
                context: if i % 2 == 0 {
                    Some(format!("ctx {i}"))
                } else {
                    None
                },
                label: if i % 2 == 0 { "positive" } else { "negative" }.into(),
                template_id: "gen".into(),
                seed: 42,
            })
            .collect();
        let mut rejections = BTreeMap::new();
        rejections.insert("duplicate".to_string(), 3);
        rejections.insert("too-short".to_string(), 1);
        let mut label_counts = BTreeMap::new();
        label_counts.insert("positive".to_string(), (n / 2 + 2) as u64);
        label_counts.insert("negative".to_string(), (n / 2 + 1) as u64);
        PseudoDataset {
            manifest: GenerationManifest {
                task: "demo".into(),
                requested: n + 5,
                achieved: n,
                attempts: (n + 9) as u64,
                rejections,
                config_digest: "abc123".into(),
                label_counts,
            },
            examples,
        }
    }

    #[test]
    fn empty_dataset_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample_dataset(0);
        let d = dir.path().join("dataset.jsonl");
        let m = dir.path().join("manifest.json");
        write_dataset(&ds, &d, &m).unwrap();
        assert_eq!(read_dataset(&d, &m).unwrap(), ds);
    }

    #[test]
    fn thousand_example_round_trip_is_field_for_field() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample_dataset(1000);
        let d = dir.path().join("dataset.jsonl");
        let m = dir.path().join("manifest.json");
        write_dataset(&ds, &d, &m).unwrap();
        assert_eq!(read_dataset(&d, &m).unwrap(), ds);
    }

    #[test]
    fn keys_follow_the_fixed_order() {
        let ds = sample_dataset(2);
        let with_ctx = serde_json::to_string(&ds.examples[0]).unwrap();
        assert!(with_ctx.starts_with("{\"idx\":0,\"text\":"));
        let ctx_pos = with_ctx.find("\"context\"").unwrap();
        assert!(ctx_pos < with_ctx.find("\"label\"").unwrap());
        assert!(with_ctx.find("\"label\"").unwrap() < with_ctx.find("\"template_id\"").unwrap());
        assert!(with_ctx.find("\"template_id\"").unwrap() < with_ctx.find("\"seed\"").unwrap());
        // context key is omitted entirely when absent
        let without_ctx = serde_json::to_string(&ds.examples[1]).unwrap();
        assert!(!without_ctx.contains("\"context\""));
    }

    #[test]
    fn truncated_file_reports_failing_line() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample_dataset(10);
        let d = dir.path().join("dataset.jsonl");
        let m = dir.path().join("manifest.json");
        write_dataset(&ds, &d, &m).unwrap();
        let content = fs::read_to_string(&d).unwrap();
        let cut = content.len() - 25; // mid-way through the last object
        fs::write(&d, &content[..cut]).unwrap();
        match read_examples(&d) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 10),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
