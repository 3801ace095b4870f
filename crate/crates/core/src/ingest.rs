//! Pre-annotated caption corpora (parser output supplied by the record).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{count_labels, Dataset, DatasetKind, GroundedPair, Manifest, DATASET_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::grammar::{classify_agreement, AgreementAnnotation, AgreementLabel, GrammaticalNumber, VerbForms};
use crate::image::ImageBuffer;
use crate::splits::{plan_splits, SplitSizes};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub subject_index: usize,
    pub attractor_index: usize,
    pub verb_index: usize,
    pub subject_number: GrammaticalNumber,
    pub attractor_number: GrammaticalNumber,
    pub verb_number: GrammaticalNumber,
    pub verb_singular_form: String,
    pub verb_plural_form: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedCaption {
    pub id: String,
    pub tokens: Vec<String>,
    pub annotation: AgreementAnnotation,
    pub verb_forms: VerbForms,
    /// Resolved against the corpus file's directory.
    pub image_path: Option<PathBuf>,
}

impl AnnotatedCaption {
    pub fn label(&self) -> AgreementLabel {
        classify_agreement(&self.annotation).expect("validated at load")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RejectionReport {
    pub rejections: Vec<Rejection>,
}

impl RejectionReport {
    pub fn is_empty(&self) -> bool {
        self.rejections.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rejections.len()
    }
}

pub fn validate_record(rec: CorpusRecord, base_dir: &Path) -> Result<AnnotatedCaption, String> {
    let n = rec.tokens.len();
    for (name, idx) in [
        ("subject_index", rec.subject_index),
        ("attractor_index", rec.attractor_index),
        ("verb_index", rec.verb_index),
    ] {
        if idx >= n {
            return Err(format!("{name} {idx} out of bounds for {n} tokens"));
        }
    }
    let annotation = AgreementAnnotation {
        subject_index: rec.subject_index,
        attractor_index: rec.attractor_index,
        verb_index: rec.verb_index,
        subject_number: rec.subject_number,
        attractor_number: rec.attractor_number,
        verb_number: rec.verb_number,
    };
    if classify_agreement(&annotation).is_err() {
        return Err("ill-formed agreement".into());
    }
    if rec.verb_singular_form == rec.verb_plural_form {
        return Err("singular and plural verb forms are identical".into());
    }
    let verb_forms = VerbForms {
        singular: rec.verb_singular_form,
        plural: rec.verb_plural_form,
    };
    let expected = verb_forms.form(rec.verb_number);
    if rec.tokens[rec.verb_index] != expected {
        return Err(format!(
            "verb token {:?} is not the {} form {expected:?}",
            rec.tokens[rec.verb_index], rec.verb_number
        ));
    }
    Ok(AnnotatedCaption {
        id: rec.id,
        tokens: rec.tokens,
        annotation,
        verb_forms,
        image_path: rec.image_path.map(|p| base_dir.join(p)),
    })
}

/// Parses a line-delimited corpus. Invalid records are collected into the
/// report; only an unreadable file is an error.
pub fn load_annotated_corpus(path: &Path) -> Result<(Vec<AnnotatedCaption>, RejectionReport)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = Vec::new();
    let mut report = RejectionReport::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let rec: CorpusRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|id| id.as_str()).map(str::to_owned));
                report.rejections.push(Rejection {
                    line: line_no,
                    id,
                    reason: format!("malformed record: {e}"),
                });
                continue;
            }
        };
        let id = rec.id.clone();
        match validate_record(rec, base_dir) {
            Ok(c) => out.push(c),
            Err(reason) => report.rejections.push(Rejection {
                line: line_no,
                id: Some(id),
                reason,
            }),
        }
    }
    Ok((out, report))
}

/// Splits records into (ambiguous, disambiguating), preserving input order
/// within each side.
pub fn partition_corpus(records: &[AnnotatedCaption]) -> (Vec<AnnotatedCaption>, Vec<AnnotatedCaption>) {
    records
        .iter()
        .cloned()
        .partition(|r| r.label() == AgreementLabel::Ambiguous)
}

/// Builds a natural-setting dataset. Images are resampled to `canvas_size`.
pub fn build_natural_dataset(
    records: &[AnnotatedCaption],
    seed: u64,
    sizes: SplitSizes,
    canvas_size: usize,
) -> Result<Dataset> {
    let mut pairs = Vec::with_capacity(records.len());
    for (ordinal, r) in records.iter().enumerate() {
        let image = match &r.image_path {
            Some(p) => {
                let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
                Some(Arc::new(ImageBuffer::decode_png(&bytes)?.resized(canvas_size)))
            }
            None => None,
        };
        pairs.push(GroundedPair {
            ordinal,
            id: r.id.clone(),
            spec: None,
            tokens: r.tokens.clone(),
            image,
            annotation: r.annotation,
            label: r.label(),
            verb_forms: Some(r.verb_forms.clone()),
        });
    }
    let labels: Vec<_> = pairs.iter().map(|p| p.label).collect();
    let splits = plan_splits(&labels, seed, sizes)?;
    Ok(Dataset {
        manifest: Manifest {
            format_version: DATASET_FORMAT_VERSION,
            kind: DatasetKind::Natural,
            seed,
            canvas_size,
            render: None,
            sizes,
            counts: count_labels(&labels),
            splits,
        },
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::GrammaticalNumber::*;
    use std::io::Write;

    fn record(id: &str, text: &str, s: usize, a: usize, v: usize, nums: [GrammaticalNumber; 3], forms: (&str, &str)) -> CorpusRecord {
        CorpusRecord {
            id: id.into(),
            tokens: crate::grammar::tokens(text),
            subject_index: s,
            attractor_index: a,
            verb_index: v,
            subject_number: nums[0],
            attractor_number: nums[1],
            verb_number: nums[2],
            verb_singular_form: forms.0.into(),
            verb_plural_form: forms.1.into(),
            image_path: None,
        }
    }

    pub(crate) fn natural_rows() -> Vec<CorpusRecord> {
        vec![
            record("n1", "girl aged stands with a hand on a tree alone", 0, 0, 2, [Singular, Singular, Singular], ("stands", "stand")),
            record(
                "n2",
                "young boys with school uniforms and backpacks prepare for school on an early morning",
                1,
                6,
                7,
                [Plural, Plural, Plural],
                ("prepares", "prepare"),
            ),
            record("n3", "young girls dressed in colonial gear tie their shoes at farm", 1, 5, 6, [Plural, Singular, Plural], ("ties", "tie")),
        ]
    }

    fn write_corpus(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn empty_file() {
        let f = write_corpus(&[]);
        let (recs, rep) = load_annotated_corpus(f.path()).unwrap();
        assert!(recs.is_empty() && rep.is_empty());
    }

    #[test]
    fn natural_rows_partition() {
        let lines: Vec<String> = natural_rows().iter().map(|r| serde_json::to_string(r).unwrap()).collect();
        let f = write_corpus(&lines);
        let (recs, rep) = load_annotated_corpus(f.path()).unwrap();
        assert!(rep.is_empty(), "{rep:?}");
        let (amb, dis) = partition_corpus(&recs);
        assert_eq!((amb.len(), dis.len()), (2, 1));
        assert_eq!(dis[0].id, "n3");
        let mut reversed = recs.clone();
        reversed.reverse();
        let (amb2, dis2) = partition_corpus(&reversed);
        let ids = |v: &[AnnotatedCaption]| {
            let mut x: Vec<_> = v.iter().map(|r| r.id.clone()).collect();
            x.sort();
            x
        };
        assert_eq!(ids(&amb), ids(&amb2));
        assert_eq!(ids(&dis), ids(&dis2));
    }

    #[test]
    fn rejections_are_reported() {
        let mut bad_agreement = natural_rows()[2].clone();
        bad_agreement.id = "bad".into();
        bad_agreement.verb_number = Singular;
        bad_agreement.tokens[6] = "ties".into();
        let mut bad_index = natural_rows()[0].clone();
        bad_index.id = "oob".into();
        bad_index.verb_index = 40;
        let mut wrong_token = natural_rows()[0].clone();
        wrong_token.id = "tok".into();
        wrong_token.tokens[2] = "stand".into();
        let lines = vec![
            serde_json::to_string(&natural_rows()[0]).unwrap(),
            serde_json::to_string(&bad_agreement).unwrap(),
            serde_json::to_string(&bad_index).unwrap(),
            serde_json::to_string(&wrong_token).unwrap(),
            r#"{"id": "x", "tokens": []}"#.to_string(),
            "not json".to_string(),
        ];
        let f = write_corpus(&lines);
        let (recs, rep) = load_annotated_corpus(f.path()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(rep.len(), 5);
        assert_eq!(rep.rejections[0].reason, "ill-formed agreement");
        assert_eq!(rep.rejections[0].id.as_deref(), Some("bad"));
        assert_eq!(rep.rejections[3].id.as_deref(), Some("x"));
        assert_eq!(rep.rejections[4].id, None);
    }

    #[test]
    fn loaded_records_reproduce_their_verb() {
        let base = Path::new(".");
        for r in natural_rows() {
            let c = validate_record(r, base).unwrap();
            assert_eq!(
                c.tokens[c.annotation.verb_index],
                c.verb_forms.form(c.annotation.verb_number)
            );
        }
    }

    #[test]
    fn unreadable_file_is_io_error() {
        assert!(matches!(
            load_annotated_corpus(Path::new("/nonexistent/corpus.jsonl")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn natural_dataset_minimal_pairs() {
        let base = Path::new(".");
        let recs: Vec<_> = natural_rows().into_iter().map(|r| validate_record(r, base).unwrap()).collect();
        let ds = build_natural_dataset(&recs, 3, SplitSizes { train: 1, validation: 1, test: 1 }, 32).unwrap();
        let b = ds.bundle(0.0, None).unwrap();
        assert_eq!(b.test.len(), 1);
        assert_eq!(
            b.test[0].pair.linear_caption.join(" "),
            "young girls dressed in colonial gear ties their shoes at farm"
        );
        assert!(b.test[0].image.is_none());
    }
}
