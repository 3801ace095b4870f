//! 16×16 monochrome pictograms, one per verb phrase.

use crate::grammar::VerbPhrase;

pub const GLYPH_SIZE: usize = 16;

const WALK: [&str; 16] = [
    "......###.......",
    "......###.......",
    "......###.......",
    "................",
    ".....#####......",
    "....#.###.#.....",
    "...#..###..#....",
    "......###.......",
    "......###.......",
    ".....##.##......",
    "....##...##.....",
    "...##.....##....",
    "..##.......##...",
    ".##.........##..",
    "................",
    "................",
];

const SLEEP: [&str; 16] = [
    "################",
    "################",
    "...........###..",
    ".........###....",
    ".......###......",
    ".....###........",
    "...###..........",
    "################",
    "################",
    "................",
    "........#######.",
    "...........##...",
    "..........##....",
    ".........##.....",
    "........#######.",
    "................",
];

const RUN_FAST: [&str; 16] = [
    "................",
    "##......##......",
    ".##......##.....",
    "..##......##....",
    "...##......##...",
    "....##......##..",
    ".....##......##.",
    "......##......##",
    "......##......##",
    ".....##......##.",
    "....##......##..",
    "...##......##...",
    "..##......##....",
    ".##......##.....",
    "##......##......",
    "................",
];

const WAVE_HAND: [&str; 16] = [
    "................",
    "..##.##.##.##...",
    "..##.##.##.##...",
    "..##.##.##.##...",
    "..##.##.##.##.##",
    "..##.##.##.####.",
    "..############..",
    "..###########...",
    "..##########....",
    "...#########....",
    "....#######.....",
    "....######......",
    "....######......",
    "....######......",
    "................",
    "................",
];

const WRITE_TEXT: [&str; 16] = [
    "................",
    "################",
    "................",
    "################",
    "................",
    "##########......",
    "................",
    "################",
    "................",
    "################",
    "................",
    "######..........",
    "................",
    "................",
    "................",
    "................",
];

const TAKE_BUS: [&str; 16] = [
    "................",
    "................",
    ".##############.",
    ".#............#.",
    ".#.##.##.##.#.#.",
    ".#.##.##.##.#.#.",
    ".#..........#.#.",
    ".##############.",
    ".##############.",
    ".##############.",
    ".##############.",
    "...###....###...",
    "...###....###...",
    "................",
    "................",
    "................",
];

const TAKE_PHOTO: [&str; 16] = [
    "................",
    "................",
    ".....####.......",
    "################",
    "#..............#",
    "#.....####.....#",
    "#....######....#",
    "#...###..###...#",
    "#...##....##...#",
    "#...###..###...#",
    "#....######....#",
    "#.....####.....#",
    "#..............#",
    "################",
    "................",
    "................",
];

const PLAY_SOCCER: [&str; 16] = [
    ".....######.....",
    "...##......##...",
    "..#....##....#..",
    ".#....####....#.",
    ".#...######...#.",
    "#....######....#",
    "#.....####.....#",
    "#..##......##..#",
    "#.####....####.#",
    "#.####....####.#",
    ".#.##......##.#.",
    ".#............#.",
    "..#....##....#..",
    "...##.####.##...",
    ".....######.....",
    "................",
];

const PLAY_BASEBALL: [&str; 16] = [
    ".....######.....",
    "...##......##...",
    "..#.#......#.#..",
    ".#..#......#..#.",
    ".#...#....#...#.",
    "#....#....#....#",
    "#....#....#....#",
    "#....#....#....#",
    "#....#....#....#",
    "#....#....#....#",
    ".#...#....#...#.",
    ".#..#......#..#.",
    "..#.#......#.#..",
    "...##......##...",
    ".....######.....",
    "................",
];

const THROW_ARROW: [&str; 16] = [
    "##..............",
    "###.............",
    ".###............",
    "..###...........",
    "...###..........",
    "....###.........",
    ".....###........",
    "......###.......",
    ".......###.####.",
    "........###...##",
    ".........##.#..#",
    "...........###.#",
    "..........#.##.#",
    "..........#....#",
    "...........#..#.",
    "............##..",
];

fn art(vp: VerbPhrase) -> &'static [&'static str; 16] {
    match vp {
        VerbPhrase::Walk => &WALK,
        VerbPhrase::Sleep => &SLEEP,
        VerbPhrase::RunFast => &RUN_FAST,
        VerbPhrase::WaveHand => &WAVE_HAND,
        VerbPhrase::WriteText => &WRITE_TEXT,
        VerbPhrase::TakeBus => &TAKE_BUS,
        VerbPhrase::TakePhoto => &TAKE_PHOTO,
        VerbPhrase::PlaySoccer => &PLAY_SOCCER,
        VerbPhrase::PlayBaseball => &PLAY_BASEBALL,
        VerbPhrase::ThrowArrow => &THROW_ARROW,
    }
}

/// Glyph bit at `(x, y)` in native 16×16 coordinates.
pub fn glyph_bit(vp: VerbPhrase, x: usize, y: usize) -> bool {
    art(vp)[y].as_bytes()[x] == b'#'
}

/// Nearest-neighbour sample of the glyph at output resolution `size`.
pub fn glyph_bit_scaled(vp: VerbPhrase, size: usize, x: usize, y: usize) -> bool {
    glyph_bit(vp, x * GLYPH_SIZE / size, y * GLYPH_SIZE / size)
}

pub fn glyph_mask(vp: VerbPhrase, size: usize) -> Vec<bool> {
    (0..size * size)
        .map(|i| glyph_bit_scaled(vp, size, i % size, i / size))
        .collect()
}
