//! Grounded pairs, split bundles and the on-disk dataset layout:
//!
//! ```text
//! <dir>/manifest.json     versioned; split membership by ordinal
//! <dir>/records.jsonl     one caption/annotation record per pair
//! <dir>/images/<id>.png   8-bit RGB, one per pair that has an image
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::artgen::spec::CaptionSpec;
use crate::artgen::RenderConfig;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grammar::{
    classify_agreement, make_minimal_pair, AgreementAnnotation, AgreementLabel, GrammaticalNumber,
    MinimalPair, VerbForms, VerbLexicon,
};
use crate::image::ImageBuffer;
use crate::splits::{SplitPlan, SplitSizes};

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundedPair {
    /// Ordinal within the dataset; for artificial data also the spec index.
    pub ordinal: usize,
    pub id: String,
    pub spec: Option<CaptionSpec>,
    pub tokens: Vec<String>,
    pub image: Option<Arc<ImageBuffer>>,
    pub annotation: AgreementAnnotation,
    pub label: AgreementLabel,
    /// Head-verb inflections when they do not come from the artificial lexicon.
    pub verb_forms: Option<VerbForms>,
}

impl GroundedPair {
    pub fn minimal_pair(&self) -> Result<MinimalPair> {
        match &self.verb_forms {
            Some(forms) => make_minimal_pair(&self.tokens, &self.annotation, self.ordinal, forms),
            None => make_minimal_pair(
                &self.tokens,
                &self.annotation,
                self.ordinal,
                &VerbLexicon::artificial(),
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestItem {
    pub id: String,
    pub pair: MinimalPair,
    pub image: Option<Arc<ImageBuffer>>,
}

#[derive(Debug, Clone)]
pub struct SplitBundle {
    pub train: Vec<GroundedPair>,
    pub validation: Vec<GroundedPair>,
    pub test: Vec<TestItem>,
    pub injection_rate: f64,
    pub injected_count: usize,
    pub seed: u64,
}

impl SplitBundle {
    pub fn count_labels(&self) -> (usize, usize) {
        let dis = self
            .train
            .iter()
            .filter(|p| p.label == AgreementLabel::Disambiguating)
            .count();
        (self.train.len() - dis, dis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Artificial,
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub total: usize,
    pub ambiguous: usize,
    pub disambiguating: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: DatasetKind,
    pub seed: u64,
    pub canvas_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub render: Option<RenderConfig>,
    pub sizes: SplitSizes,
    pub counts: Counts,
    pub splits: SplitPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRecord {
    id: String,
    tokens: Vec<String>,
    subject_index: usize,
    attractor_index: usize,
    verb_index: usize,
    subject_number: GrammaticalNumber,
    attractor_number: GrammaticalNumber,
    label: AgreementLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    verb_singular_form: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    verb_plural_form: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub pairs: Vec<GroundedPair>,
}

pub fn count_labels<'a>(labels: impl IntoIterator<Item = &'a AgreementLabel>) -> Counts {
    let mut c = Counts {
        total: 0,
        ambiguous: 0,
        disambiguating: 0,
    };
    for l in labels {
        c.total += 1;
        match l {
            AgreementLabel::Ambiguous => c.ambiguous += 1,
            AgreementLabel::Disambiguating => c.disambiguating += 1,
        }
    }
    c
}

impl Dataset {
    fn pair(&self, ordinal: usize) -> Result<&GroundedPair> {
        self.pairs
            .get(ordinal)
            .ok_or_else(|| Error::Dataset(format!("split refers to missing ordinal {ordinal}")))
    }

    /// Materializes the splits for one injection rate.
    pub fn bundle(&self, rate: f64, train_size: Option<usize>) -> Result<SplitBundle> {
        let plan = &self.manifest.splits;
        let (members, injected_count) = plan.training_members(rate, train_size)?;
        let train = members
            .iter()
            .map(|&i| self.pair(i).cloned())
            .collect::<Result<Vec<_>>>()?;
        let validation = plan
            .validation
            .iter()
            .map(|&i| self.pair(i).cloned())
            .collect::<Result<Vec<_>>>()?;
        let test = plan
            .test
            .iter()
            .map(|&i| {
                let p = self.pair(i)?;
                Ok(TestItem {
                    id: p.id.clone(),
                    pair: p.minimal_pair()?,
                    image: p.image.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SplitBundle {
            train,
            validation,
            test,
            injection_rate: rate,
            injected_count,
            seed: plan.seed,
        })
    }

    pub fn write_to(&self, dir: &Path, exec: Exec) -> Result<()> {
        let images = dir.join("images");
        fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
        let manifest_path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;

        let records_path = dir.join("records.jsonl");
        let file = fs::File::create(&records_path).map_err(|e| Error::io(&records_path, e))?;
        let mut w = BufWriter::new(file);
        for p in &self.pairs {
            let rec = PairRecord {
                id: p.id.clone(),
                tokens: p.tokens.clone(),
                subject_index: p.annotation.subject_index,
                attractor_index: p.annotation.attractor_index,
                verb_index: p.annotation.verb_index,
                subject_number: p.annotation.subject_number,
                attractor_number: p.annotation.attractor_number,
                label: p.label,
                verb_singular_form: p.verb_forms.as_ref().map(|f| f.singular.clone()),
                verb_plural_form: p.verb_forms.as_ref().map(|f| f.plural.clone()),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io(&records_path, e))?;
        }
        w.flush().map_err(|e| Error::io(&records_path, e))?;

        let encoded = exec.map(&self.pairs, |p| match &p.image {
            Some(img) => img.encode_png().map(Some),
            None => Ok(None),
        });
        for (p, bytes) in self.pairs.iter().zip(encoded) {
            if let Some(bytes) = bytes? {
                let path = images.join(format!("{}.png", p.id));
                fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(())
    }

    pub fn read_from(dir: &Path, exec: Exec) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Dataset(format!(
                "dataset format version {} (expected {DATASET_FORMAT_VERSION})",
                manifest.format_version
            )));
        }

        let records_path = dir.join("records.jsonl");
        let file = fs::File::open(&records_path).map_err(|e| Error::io(&records_path, e))?;
        let mut records = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(&records_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str::<PairRecord>(&line)?);
        }

        let images = exec.map(&records, |r| -> Result<Option<Arc<ImageBuffer>>> {
            let path = dir.join("images").join(format!("{}.png", r.id));
            match fs::read(&path) {
                Ok(bytes) => Ok(Some(Arc::new(ImageBuffer::decode_png(&bytes)?))),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(Error::io(&path, e)),
            }
        });

        let mut pairs = Vec::with_capacity(records.len());
        for (ordinal, (r, image)) in records.into_iter().zip(images).enumerate() {
            let annotation = AgreementAnnotation {
                subject_index: r.subject_index,
                attractor_index: r.attractor_index,
                verb_index: r.verb_index,
                subject_number: r.subject_number,
                attractor_number: r.attractor_number,
                verb_number: r.subject_number,
            };
            let label = classify_agreement(&annotation)?;
            if label != r.label {
                return Err(Error::Dataset(format!("record {} carries a stale label", r.id)));
            }
            let spec = match manifest.kind {
                DatasetKind::Artificial => Some(CaptionSpec::from_index(ordinal)?),
                DatasetKind::Natural => None,
            };
            let verb_forms = match (r.verb_singular_form, r.verb_plural_form) {
                (Some(singular), Some(plural)) => Some(VerbForms { singular, plural }),
                _ => None,
            };
            pairs.push(GroundedPair {
                ordinal,
                id: r.id,
                spec,
                tokens: r.tokens,
                image: image?,
                annotation,
                label,
                verb_forms,
            });
        }
        Ok(Dataset { manifest, pairs })
    }
}
