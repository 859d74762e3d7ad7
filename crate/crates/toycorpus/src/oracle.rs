//! Rule-based answers read straight off a feature grid.

use jex_owsplit::text::{naive_plural, normalize};
use jex_tensor::Tensor;

use crate::spec::ToySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub shape: usize,
    pub color: usize,
}

fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

/// Objects found in a grid (cells with objectness above one half).
pub fn decode_cells(spec: &ToySpec, grid: &Tensor) -> Vec<Cell> {
    let s = spec.shapes.len();
    (0..grid.rows())
        .map(|r| grid.row(r))
        .filter(|row| row[1] > 0.5)
        .map(|row| Cell {
            shape: argmax(&row[2..2 + s]),
            color: argmax(&row[2 + s..]),
        })
        .collect()
}

/// Answers a templated question from `grid`, or `None` if it does not parse.
pub fn oracle_answer(spec: &ToySpec, grid: &Tensor, question: &str) -> Option<String> {
    let cells = decode_cells(spec, grid);
    let tokens = normalize(question);
    let words: Vec<&str> = tokens.iter().map(String::as_str).collect();
    let shape = |name: &str| spec.shapes.iter().position(|s| s.name == name);
    let color = |name: &str| spec.colors.iter().position(|c| c == name);
    match words.as_slice() {
        ["how", "many", plural, "are", "there"] => {
            let s = spec
                .shapes
                .iter()
                .position(|s| naive_plural(&s.name) == *plural)?;
            Some(cells.iter().filter(|c| c.shape == s).count().to_string())
        }
        ["what", "color", "is", "the", name] => {
            let s = shape(name)?;
            let mut matches = cells.iter().filter(|c| c.shape == s);
            let only = matches.next()?;
            if matches.next().is_some() {
                return None;
            }
            Some(spec.colors[only.color].clone())
        }
        ["is", "there", "a", c, name] => {
            let (s, c) = (shape(name)?, color(c)?);
            let yes = cells.iter().any(|x| x.shape == s && x.color == c);
            Some(if yes { "yes" } else { "no" }.to_owned())
        }
        _ => None,
    }
}
