//! Synthetic bar-chart question answering with gaze targets.
//!
//! Each instance is a P x P grid of cell intensities encoding column bars, a
//! three-token question (operation, column, column), a yes/no answer that is
//! deterministically derivable from the chart, and a gaze target built from
//! synthetic fixations on the task-relevant cells.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gaze::{build_gaze_map, Fixation};
use crate::grid::Map2D;

/// Question operation. Token ids 0..4 in this order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuestionKind {
    /// Is the bar in `col_a` taller than the bar in `col_b`?
    WhichTaller,
    /// Is the bar in `col_a` shorter than the bar in `col_b`?
    WhichShorter,
    /// Are heights strictly rising from `col_a` to `col_b`?
    IsRising,
    /// Are heights strictly falling from `col_a` to `col_b`?
    IsFalling,
}

impl QuestionKind {
    pub fn token(self) -> usize {
        match self {
            QuestionKind::WhichTaller => 0,
            QuestionKind::WhichShorter => 1,
            QuestionKind::IsRising => 2,
            QuestionKind::IsFalling => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            QuestionKind::WhichTaller => "taller",
            QuestionKind::WhichShorter => "shorter",
            QuestionKind::IsRising => "rising",
            QuestionKind::IsFalling => "falling",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "taller" => QuestionKind::WhichTaller,
            "shorter" => QuestionKind::WhichShorter,
            "rising" => QuestionKind::IsRising,
            "falling" => QuestionKind::IsFalling,
            _ => return None,
        })
    }
}

/// A question over two referenced columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Question {
    pub kind: QuestionKind,
    pub col_a: usize,
    pub col_b: usize,
}

/// One synthetic training/evaluation example.
#[derive(Clone, Debug)]
pub struct SynthInstance {
    /// P x P cell intensities; bars grow upward from the bottom row.
    pub chart: Map2D,
    pub question: Question,
    /// Token ids: `[kind, 4 + col_a, 4 + col_b]`.
    pub tokens: Vec<usize>,
    pub answer: bool,
    /// P x P gaze target, max 1 on a task-relevant cell.
    pub target_gaze: Map2D,
    /// `(row, col)` bar cells of the referenced columns.
    pub relevant_cells: Vec<(usize, usize)>,
}

/// Number of question tokens per instance.
pub const QUESTION_TOKENS: usize = 3;
/// Operation tokens precede the column-reference tokens.
pub const KIND_TOKENS: usize = 4;

/// Vocabulary size for a given grid: four operations plus one reference
/// token per column.
pub fn vocab_size(grid: usize) -> usize {
    KIND_TOKENS + grid
}

/// Evaluates a question against column heights.
pub fn answer_for(heights: &[usize], q: &Question) -> bool {
    match q.kind {
        QuestionKind::WhichTaller => heights[q.col_a] > heights[q.col_b],
        QuestionKind::WhichShorter => heights[q.col_a] < heights[q.col_b],
        QuestionKind::IsRising => (q.col_a..q.col_b).all(|c| heights[c] < heights[c + 1]),
        QuestionKind::IsFalling => (q.col_a..q.col_b).all(|c| heights[c] > heights[c + 1]),
    }
}

/// Reads bar heights back out of a chart grid.
pub fn heights_from_chart(chart: &Map2D) -> Vec<usize> {
    let p = chart.width();
    (0..p)
        .map(|c| (0..chart.height()).filter(|&r| chart.get(r, c) > 0.5).count())
        .collect()
}

fn chart_from_heights(heights: &[usize], p: usize) -> Map2D {
    Map2D::from_fn(p, p, |r, c| if p - r <= heights[c] { 1.0 } else { 0.0 }).unwrap()
}

fn sample_question(rng: &mut ChaCha8Rng, p: usize) -> Question {
    let kind = match rng.gen_range(0..4u8) {
        0 => QuestionKind::WhichTaller,
        1 => QuestionKind::WhichShorter,
        2 => QuestionKind::IsRising,
        _ => QuestionKind::IsFalling,
    };
    match kind {
        QuestionKind::WhichTaller | QuestionKind::WhichShorter => {
            let col_a = rng.gen_range(0..p);
            let mut col_b = rng.gen_range(0..p - 1);
            if col_b >= col_a {
                col_b += 1;
            }
            Question { kind, col_a, col_b }
        }
        QuestionKind::IsRising | QuestionKind::IsFalling => {
            let col_a = rng.gen_range(0..p - 1);
            let col_b = rng.gen_range(col_a + 1..p);
            Question { kind, col_a, col_b }
        }
    }
}

/// Every bar cell of each referenced column: the region a reader must
/// inspect to answer, and the region whose removal destroys the answer.
fn relevant_cells(heights: &[usize], q: &Question, p: usize) -> Vec<(usize, usize)> {
    let columns: Vec<usize> = match q.kind {
        QuestionKind::WhichTaller | QuestionKind::WhichShorter => {
            alloc::vec![q.col_a, q.col_b]
        }
        QuestionKind::IsRising | QuestionKind::IsFalling => (q.col_a..=q.col_b).collect(),
    };
    let mut cells = Vec::new();
    for &c in &columns {
        for r in (p - heights[c])..p {
            cells.push((r, c));
        }
    }
    cells
}

/// Generates `n` instances, deterministically under `seed`, with yes/no
/// answers kept balanced by steering each draw toward the minority label.
pub fn synth_dataset(n: usize, grid: usize, seed: u64, gaze_sigma: f64) -> Result<Vec<SynthInstance>> {
    let p = grid.max(4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut yes = 0usize;
    let mut no = 0usize;
    for _ in 0..n {
        let want_yes = if yes < no {
            true
        } else if no < yes {
            false
        } else {
            rng.gen_bool(0.5)
        };
        let mut chosen = None;
        for _ in 0..200 {
            let heights: Vec<usize> = (0..p).map(|_| rng.gen_range(1..=p)).collect();
            let q = sample_question(&mut rng, p);
            let ans = answer_for(&heights, &q);
            if ans == want_yes {
                chosen = Some((heights, q, ans));
                break;
            }
            if chosen.is_none() {
                chosen = Some((heights, q, ans));
            }
        }
        let (heights, q, ans) = chosen.unwrap();
        if ans {
            yes += 1;
        } else {
            no += 1;
        }
        let cells = relevant_cells(&heights, &q, p);
        let fixations: Vec<Fixation> = cells
            .iter()
            .map(|&(r, c)| Fixation {
                x_px: c as f64,
                y_px: r as f64,
                start_us: 0,
                duration_ms: 200.0,
            })
            .collect();
        let target_gaze = build_gaze_map(&fixations, p, p, gaze_sigma)?;
        out.push(SynthInstance {
            chart: chart_from_heights(&heights, p),
            tokens: alloc::vec![q.kind.token(), KIND_TOKENS + q.col_a, KIND_TOKENS + q.col_b],
            question: q,
            answer: ans,
            target_gaze,
            relevant_cells: cells,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_dataset() {
        let a = synth_dataset(50, 8, 7, 0.6).unwrap();
        let b = synth_dataset(50, 8, 7, 0.6).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.chart, y.chart);
            assert_eq!(x.tokens, y.tokens);
            assert_eq!(x.answer, y.answer);
            assert_eq!(x.target_gaze, y.target_gaze);
        }
    }

    #[test]
    fn labels_balanced() {
        let data = synth_dataset(1000, 8, 3, 0.6).unwrap();
        let yes = data.iter().filter(|i| i.answer).count() as f64 / 1000.0;
        assert!((0.45..=0.55).contains(&yes), "yes fraction {yes}");
    }

    #[test]
    fn answers_match_rule_oracle_from_chart() {
        let data = synth_dataset(400, 8, 11, 0.6).unwrap();
        for inst in &data {
            let heights = heights_from_chart(&inst.chart);
            assert_eq!(answer_for(&heights, &inst.question), inst.answer);
        }
    }

    #[test]
    fn tokens_encode_the_question() {
        let data = synth_dataset(50, 6, 5, 0.6).unwrap();
        for inst in &data {
            assert_eq!(inst.tokens.len(), QUESTION_TOKENS);
            assert_eq!(inst.tokens[0], inst.question.kind.token());
            assert_eq!(inst.tokens[1], KIND_TOKENS + inst.question.col_a);
            assert_eq!(inst.tokens[2], KIND_TOKENS + inst.question.col_b);
            assert!(inst.tokens.iter().all(|&t| t < vocab_size(6)));
        }
    }

    #[test]
    fn gaze_target_peaks_on_a_relevant_cell() {
        let data = synth_dataset(200, 8, 19, 0.6).unwrap();
        for inst in &data {
            let g = &inst.target_gaze;
            let mut best = (0usize, 0usize);
            let mut best_v = f64::NEG_INFINITY;
            for r in 0..8 {
                for c in 0..8 {
                    if g.get(r, c) > best_v {
                        best_v = g.get(r, c);
                        best = (r, c);
                    }
                }
            }
            assert_eq!(best_v, 1.0);
            assert!(
                inst.relevant_cells.contains(&best),
                "peak {best:?} not in {:?}",
                inst.relevant_cells
            );
        }
    }

    #[test]
    fn question_columns_are_well_formed() {
        let data = synth_dataset(300, 8, 23, 0.6).unwrap();
        for inst in &data {
            let q = &inst.question;
            match q.kind {
                QuestionKind::WhichTaller | QuestionKind::WhichShorter => {
                    assert_ne!(q.col_a, q.col_b)
                }
                QuestionKind::IsRising | QuestionKind::IsFalling => assert!(q.col_a < q.col_b),
            }
        }
    }
}
