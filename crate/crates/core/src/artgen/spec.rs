use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::{number_of_numeral, AgreementAnnotation, GrammaticalNumber, VerbLexicon, VerbPhrase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Numeral {
    A,
    Two,
    Three,
}

impl Numeral {
    pub const ALL: [Numeral; 3] = [Numeral::A, Numeral::Two, Numeral::Three];

    pub fn word(self) -> &'static str {
        match self {
            Numeral::A => "a",
            Numeral::Two => "two",
            Numeral::Three => "three",
        }
    }

    pub fn count(self) -> usize {
        self as usize + 1
    }

    pub fn number(self) -> GrammaticalNumber {
        // infallible for the closed numeral set
        number_of_numeral(self.word()).expect("closed numeral set")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Black,
    Red,
    Blue,
    Yellow,
    Lime,
}

impl Color {
    pub const ALL: [Color; 5] = [Color::Black, Color::Red, Color::Blue, Color::Yellow, Color::Lime];

    pub fn word(self) -> &'static str {
        match self {
            Color::Black => "black",
            Color::Red => "red",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Lime => "lime",
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Black => [0, 0, 0],
            Color::Red => [255, 0, 0],
            Color::Blue => [0, 0, 255],
            Color::Yellow => [255, 255, 0],
            Color::Lime => [0, 255, 0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Rectangle,
    Triangle,
    Hexagon,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Circle, Shape::Rectangle, Shape::Triangle, Shape::Hexagon];

    pub fn word(self, number: GrammaticalNumber) -> String {
        let stem = match self {
            Shape::Circle => "circle",
            Shape::Rectangle => "rectangle",
            Shape::Triangle => "triangle",
            Shape::Hexagon => "hexagon",
        };
        match number {
            GrammaticalNumber::Singular => stem.to_owned(),
            GrammaticalNumber::Plural => format!("{stem}s"),
        }
    }
}

/// One instantiation of `NUM1 COLOR1 SHAPE1 with NUM2 COLOR2 SHAPE2 VP`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CaptionSpec {
    pub num1: Numeral,
    pub color1: Color,
    pub shape1: Shape,
    pub num2: Numeral,
    pub color2: Color,
    pub shape2: Shape,
    pub vp: VerbPhrase,
}

pub const SPEC_COUNT: usize = 3 * 3 * 5 * 4 * 4 * 4 * 10;

impl CaptionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.color1 == self.color2 {
            return Err(Error::Contract(format!(
                "attractor color must differ from subject color ({})",
                self.color1.word()
            )));
        }
        Ok(())
    }

    fn color2_rank(&self) -> usize {
        let c2 = self.color2 as usize;
        let c1 = self.color1 as usize;
        if c2 > c1 {
            c2 - 1
        } else {
            c2
        }
    }

    /// Position in [`enumerate_specs`] order.
    pub fn index(&self) -> usize {
        let mut i = self.num1 as usize;
        i = i * 3 + self.num2 as usize;
        i = i * 5 + self.color1 as usize;
        i = i * 4 + self.color2_rank();
        i = i * 4 + self.shape1 as usize;
        i = i * 4 + self.shape2 as usize;
        i * 10 + self.vp.index()
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index >= SPEC_COUNT {
            return Err(Error::Contract(format!("spec index {index} out of range")));
        }
        let mut r = index;
        let vp = VerbPhrase::ALL[r % 10];
        r /= 10;
        let shape2 = Shape::ALL[r % 4];
        r /= 4;
        let shape1 = Shape::ALL[r % 4];
        r /= 4;
        let c2_rank = r % 4;
        r /= 4;
        let color1 = Color::ALL[r % 5];
        r /= 5;
        let num2 = Numeral::ALL[r % 3];
        let num1 = Numeral::ALL[r / 3];
        let color2 = Color::ALL
            .into_iter()
            .filter(|&c| c != color1)
            .nth(c2_rank)
            .expect("rank < 4");
        Ok(CaptionSpec {
            num1,
            color1,
            shape1,
            num2,
            color2,
            shape2,
            vp,
        })
    }

    pub fn subject_number(&self) -> GrammaticalNumber {
        self.num1.number()
    }

    pub fn attractor_number(&self) -> GrammaticalNumber {
        self.num2.number()
    }
}

impl fmt::Display for CaptionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (tokens, _) = realize_caption(self);
        f.write_str(&tokens.join(" "))
    }
}

/// All specs in lexicographic order over
/// `(num1, num2, color1, color2, shape1, shape2, vp)`.
pub fn enumerate_specs() -> Vec<CaptionSpec> {
    let mut out = Vec::with_capacity(SPEC_COUNT);
    for num1 in Numeral::ALL {
        for num2 in Numeral::ALL {
            for color1 in Color::ALL {
                for color2 in Color::ALL.into_iter().filter(|&c| c != color1) {
                    for shape1 in Shape::ALL {
                        for shape2 in Shape::ALL {
                            for vp in VerbPhrase::ALL {
                                out.push(CaptionSpec {
                                    num1,
                                    color1,
                                    shape1,
                                    num2,
                                    color2,
                                    shape2,
                                    vp,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub const SUBJECT_INDEX: usize = 2;
pub const ATTRACTOR_INDEX: usize = 6;
pub const VERB_INDEX: usize = 7;

pub fn realize_caption(spec: &CaptionSpec) -> (Vec<String>, AgreementAnnotation) {
    let subject_number = spec.subject_number();
    let attractor_number = spec.attractor_number();
    let mut tokens = vec![
        spec.num1.word().to_owned(),
        spec.color1.word().to_owned(),
        spec.shape1.word(subject_number),
        "with".to_owned(),
        spec.num2.word().to_owned(),
        spec.color2.word().to_owned(),
        spec.shape2.word(attractor_number),
    ];
    tokens.extend(
        VerbLexicon::artificial()
            .inflect_vp(spec.vp, subject_number)
            .expect("every verb phrase is in the artificial lexicon"),
    );
    let ann = AgreementAnnotation {
        subject_index: SUBJECT_INDEX,
        attractor_index: ATTRACTOR_INDEX,
        verb_index: VERB_INDEX,
        subject_number,
        attractor_number,
        verb_number: subject_number,
    };
    (tokens, ann)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{classify_agreement, tokens, AgreementLabel};

    fn spec(
        num1: Numeral,
        color1: Color,
        shape1: Shape,
        num2: Numeral,
        color2: Color,
        shape2: Shape,
        vp: VerbPhrase,
    ) -> CaptionSpec {
        CaptionSpec {
            num1,
            color1,
            shape1,
            num2,
            color2,
            shape2,
            vp,
        }
    }

    #[test]
    fn census() {
        let specs = enumerate_specs();
        assert_eq!(specs.len(), 28_800);
        let mut amb = 0;
        let mut dis = 0;
        for s in &specs {
            let (_, ann) = realize_caption(s);
            match classify_agreement(&ann).unwrap() {
                AgreementLabel::Ambiguous => amb += 1,
                AgreementLabel::Disambiguating => dis += 1,
            }
        }
        assert_eq!((amb, dis), (16_000, 12_800));
    }

    #[test]
    fn index_round_trip() {
        for (i, s) in enumerate_specs().iter().enumerate() {
            assert_eq!(s.index(), i);
            assert_eq!(CaptionSpec::from_index(i).unwrap(), *s);
            s.validate().unwrap();
        }
        assert!(CaptionSpec::from_index(SPEC_COUNT).is_err());
    }

    #[test]
    fn realizations_from_examples() {
        use Color::*;
        use Numeral::*;
        use Shape::*;
        let cases = [
            (
                spec(A, Lime, Rectangle, A, Red, Rectangle, VerbPhrase::WaveHand),
                "a lime rectangle with a red rectangle waves its hand",
            ),
            (
                spec(Two, Red, Rectangle, A, Black, Circle, VerbPhrase::PlaySoccer),
                "two red rectangles with a black circle play soccer",
            ),
            (
                spec(Two, Yellow, Circle, Three, Blue, Hexagon, VerbPhrase::TakePhoto),
                "two yellow circles with three blue hexagons take a photo",
            ),
        ];
        for (s, text) in cases {
            let (toks, ann) = realize_caption(&s);
            assert_eq!(toks, tokens(text));
            assert_eq!(toks[ann.subject_index], s.shape1.word(s.subject_number()));
            assert_eq!(toks[ann.attractor_index], s.shape2.word(s.attractor_number()));
        }
    }
}
