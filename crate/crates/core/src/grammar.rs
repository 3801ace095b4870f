//! Subject–verb number agreement: grammatical number, ambiguity labels,
//! verb-phrase inflection and minimal-pair construction.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrammaticalNumber {
    Singular,
    Plural,
}

impl GrammaticalNumber {
    pub fn flip(self) -> Self {
        match self {
            GrammaticalNumber::Singular => GrammaticalNumber::Plural,
            GrammaticalNumber::Plural => GrammaticalNumber::Singular,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GrammaticalNumber::Singular => "singular",
            GrammaticalNumber::Plural => "plural",
        }
    }
}

impl fmt::Display for GrammaticalNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgreementLabel {
    /// Subject, attractor and verb share a number; both rules fit.
    Ambiguous,
    /// Subject and attractor differ; only the hierarchical rule fits.
    Disambiguating,
}

/// Token positions and numbers of the agreement triple in one caption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementAnnotation {
    pub subject_index: usize,
    pub attractor_index: usize,
    pub verb_index: usize,
    pub subject_number: GrammaticalNumber,
    pub attractor_number: GrammaticalNumber,
    pub verb_number: GrammaticalNumber,
}

pub fn number_of_numeral(numeral: &str) -> Result<GrammaticalNumber> {
    match numeral {
        "a" => Ok(GrammaticalNumber::Singular),
        "two" | "three" => Ok(GrammaticalNumber::Plural),
        other => Err(Error::Lexicon(format!("unknown numeral {other:?}"))),
    }
}

/// Rejects captions whose verb does not agree with its subject.
pub fn classify_agreement(ann: &AgreementAnnotation) -> Result<AgreementLabel> {
    if ann.verb_number != ann.subject_number {
        return Err(Error::IllFormed(format!(
            "verb is {} but subject is {}",
            ann.verb_number, ann.subject_number
        )));
    }
    Ok(if ann.subject_number == ann.attractor_number {
        AgreementLabel::Ambiguous
    } else {
        AgreementLabel::Disambiguating
    })
}

/// The ten verb phrases of the artificial caption grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerbPhrase {
    Walk,
    Sleep,
    RunFast,
    WaveHand,
    WriteText,
    TakeBus,
    TakePhoto,
    PlaySoccer,
    PlayBaseball,
    ThrowArrow,
}

impl VerbPhrase {
    pub const ALL: [VerbPhrase; 10] = [
        VerbPhrase::Walk,
        VerbPhrase::Sleep,
        VerbPhrase::RunFast,
        VerbPhrase::WaveHand,
        VerbPhrase::WriteText,
        VerbPhrase::TakeBus,
        VerbPhrase::TakePhoto,
        VerbPhrase::PlaySoccer,
        VerbPhrase::PlayBaseball,
        VerbPhrase::ThrowArrow,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn key(self) -> &'static str {
        match self {
            VerbPhrase::Walk => "walk",
            VerbPhrase::Sleep => "sleep",
            VerbPhrase::RunFast => "run_fast",
            VerbPhrase::WaveHand => "wave_hand",
            VerbPhrase::WriteText => "write_text",
            VerbPhrase::TakeBus => "take_bus",
            VerbPhrase::TakePhoto => "take_photo",
            VerbPhrase::PlaySoccer => "play_soccer",
            VerbPhrase::PlayBaseball => "play_baseball",
            VerbPhrase::ThrowArrow => "throw_arrow",
        }
    }

    pub fn from_key(key: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|vp| vp.key() == key)
            .ok_or_else(|| Error::Lexicon(format!("unknown verb phrase {key:?}")))
    }

    // (singular head, plural head, complement)
    fn parts(self) -> (&'static str, &'static str, &'static [&'static str]) {
        match self {
            VerbPhrase::Walk => ("walks", "walk", &[]),
            VerbPhrase::Sleep => ("sleeps", "sleep", &[]),
            VerbPhrase::RunFast => ("runs", "run", &["fast"]),
            VerbPhrase::WaveHand => ("waves", "wave", &["its", "hand"]),
            VerbPhrase::WriteText => ("writes", "write", &["a", "text"]),
            VerbPhrase::TakeBus => ("takes", "take", &["a", "bus"]),
            VerbPhrase::TakePhoto => ("takes", "take", &["a", "photo"]),
            VerbPhrase::PlaySoccer => ("plays", "play", &["soccer"]),
            VerbPhrase::PlayBaseball => ("plays", "play", &["baseball"]),
            VerbPhrase::ThrowArrow => ("throws", "throw", &["an", "arrow", "at", "a", "target"]),
        }
    }
}

impl fmt::Display for VerbPhrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub vp: VerbPhrase,
    pub singular_form: Vec<String>,
    pub plural_form: Vec<String>,
}

/// Table of singular/plural realizations. The head verb is the first token
/// of each form.
#[derive(Debug, Clone)]
pub struct VerbLexicon {
    entries: Vec<LexiconEntry>,
}

impl Default for VerbLexicon {
    fn default() -> Self {
        Self::artificial()
    }
}

impl VerbLexicon {
    pub fn artificial() -> Self {
        let entries = VerbPhrase::ALL
            .into_iter()
            .map(|vp| {
                let (sg, pl, rest) = vp.parts();
                let realize = |head: &str| {
                    std::iter::once(head)
                        .chain(rest.iter().copied())
                        .map(str::to_owned)
                        .collect()
                };
                LexiconEntry {
                    vp,
                    singular_form: realize(sg),
                    plural_form: realize(pl),
                }
            })
            .collect();
        VerbLexicon { entries }
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn entry(&self, vp: VerbPhrase) -> Result<&LexiconEntry> {
        self.entries
            .iter()
            .find(|e| e.vp == vp)
            .ok_or_else(|| Error::Lexicon(format!("verb phrase {vp} not in lexicon")))
    }

    pub fn inflect_vp(&self, vp: VerbPhrase, number: GrammaticalNumber) -> Result<Vec<String>> {
        let e = self.entry(vp)?;
        Ok(match number {
            GrammaticalNumber::Singular => e.singular_form.clone(),
            GrammaticalNumber::Plural => e.plural_form.clone(),
        })
    }
}

/// Anything that can supply both inflections of a head verb.
pub trait Inflections {
    /// Returns `(singular, plural)` for a head verb in either form.
    fn forms_of(&self, verb: &str) -> Option<(String, String)>;
}

impl Inflections for VerbLexicon {
    fn forms_of(&self, verb: &str) -> Option<(String, String)> {
        self.entries.iter().find_map(|e| {
            let (sg, pl) = (&e.singular_form[0], &e.plural_form[0]);
            (verb == sg || verb == pl).then(|| (sg.clone(), pl.clone()))
        })
    }
}

/// Explicit inflection pair carried by an annotated record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbForms {
    pub singular: String,
    pub plural: String,
}

impl VerbForms {
    pub fn form(&self, number: GrammaticalNumber) -> &str {
        match number {
            GrammaticalNumber::Singular => &self.singular,
            GrammaticalNumber::Plural => &self.plural,
        }
    }
}

impl Inflections for VerbForms {
    fn forms_of(&self, verb: &str) -> Option<(String, String)> {
        (verb == self.singular || verb == self.plural)
            .then(|| (self.singular.clone(), self.plural.clone()))
    }
}

/// An image plus two captions that differ only in the head verb's number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalPair {
    /// Dataset ordinal of the source pair; also identifies its image.
    pub source: usize,
    pub hierarchical_caption: Vec<String>,
    pub linear_caption: Vec<String>,
    pub verb_index: usize,
    pub gold_number: GrammaticalNumber,
}

pub fn make_minimal_pair(
    caption: &[String],
    ann: &AgreementAnnotation,
    source: usize,
    inflections: &impl Inflections,
) -> Result<MinimalPair> {
    match classify_agreement(ann)? {
        AgreementLabel::Disambiguating => {}
        AgreementLabel::Ambiguous => {
            return Err(Error::Contract(
                "minimal pairs are only defined on disambiguating captions".into(),
            ))
        }
    }
    let verb = caption.get(ann.verb_index).ok_or_else(|| {
        Error::Contract(format!(
            "verb index {} outside caption of length {}",
            ann.verb_index,
            caption.len()
        ))
    })?;
    let (sg, pl) = inflections
        .forms_of(verb)
        .ok_or_else(|| Error::Lexicon(format!("verb {verb:?} has no known inflections")))?;
    let expected = match ann.verb_number {
        GrammaticalNumber::Singular => &sg,
        GrammaticalNumber::Plural => &pl,
    };
    if verb != expected {
        return Err(Error::IllFormed(format!(
            "verb {verb:?} is not the {} form {expected:?}",
            ann.verb_number
        )));
    }
    let mut linear_caption = caption.to_vec();
    linear_caption[ann.verb_index] = match ann.attractor_number {
        GrammaticalNumber::Singular => sg,
        GrammaticalNumber::Plural => pl,
    };
    Ok(MinimalPair {
        source,
        hierarchical_caption: caption.to_vec(),
        linear_caption,
        verb_index: ann.verb_index,
        gold_number: ann.subject_number,
    })
}

pub fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}
