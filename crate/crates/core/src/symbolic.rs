//! Symbolic coding of circle points by the partitions P_n(x_b).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dd::DD;
use crate::error::{Error, Result};
use crate::partition::PartitionHierarchy;
use crate::real::Real;

/// Alphabet {1, 0, a}, ordered as the rows of the transition matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Symbol {
    One,
    Zero,
    A,
}

impl Symbol {
    pub const ALL: [Symbol; 3] = [Symbol::One, Symbol::Zero, Symbol::A];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_char(self) -> char {
        match self {
            Symbol::One => '1',
            Symbol::Zero => '0',
            Symbol::A => 'a',
        }
    }

    pub fn from_char(c: char) -> Option<Symbol> {
        match c {
            '1' => Some(Symbol::One),
            '0' => Some(Symbol::Zero),
            'a' => Some(Symbol::A),
            _ => None,
        }
    }
}

/// 𝔸 with rows and columns ordered (1, 0, a).
pub const TRANSITION: [[u8; 3]; 3] = [[1, 1, 0], [0, 0, 1], [1, 1, 0]];

/// Whether `next` may follow `prev` in a forward word.
pub fn allowed(prev: Symbol, next: Symbol) -> bool {
    TRANSITION[prev.index()][next.index()] == 1
}

pub fn transition_power(k: u32) -> [[u64; 3]; 3] {
    let mut out = [[0u64; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        row[i] = 1;
    }
    for _ in 0..k {
        let mut next = [[0u64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                next[i][j] = (0..3).map(|m| out[i][m] * TRANSITION[m][j] as u64).sum();
            }
        }
        out = next;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    /// Admissible for 𝔸, coarsest symbol first.
    Forward,
    /// Admissible for 𝔸ᵗ, finest symbol first.
    Reversed,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word {
    pub symbols: Vec<Symbol>,
    pub direction: Direction,
}

impl Word {
    pub fn forward(symbols: Vec<Symbol>) -> Word {
        Word {
            symbols,
            direction: Direction::Forward,
        }
    }

    pub fn parse(s: &str, direction: Direction) -> Option<Word> {
        let symbols = s.chars().map(Symbol::from_char).collect::<Option<Vec<_>>>()?;
        Some(Word { symbols, direction })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn reversed(&self) -> Word {
        Word {
            symbols: self.symbols.iter().rev().copied().collect(),
            direction: match self.direction {
                Direction::Forward => Direction::Reversed,
                Direction::Reversed => Direction::Forward,
            },
        }
    }

    pub fn is_admissible(&self) -> bool {
        self.symbols.windows(2).all(|w| match self.direction {
            Direction::Forward => allowed(w[0], w[1]),
            Direction::Reversed => allowed(w[1], w[0]),
        })
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.symbols {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

/// All forward-admissible words of length `n`, in lexicographic symbol order.
pub fn admissible_words(n: usize) -> Vec<Word> {
    let mut words: Vec<Vec<Symbol>> = if n == 0 { vec![vec![]] } else { Symbol::ALL.iter().map(|&s| vec![s]).collect() };
    for _ in 1..n {
        words = words
            .into_iter()
            .flat_map(|w| {
                let last = *w.last().expect("nonempty");
                Symbol::ALL.iter().filter(move |&&s| allowed(last, s)).map(move |&s| {
                    let mut v = w.clone();
                    v.push(s);
                    v
                })
            })
            .collect();
    }
    words.into_iter().map(Word::forward).collect()
}

/// Periodic tail γ(x) appended after the first symbol of a reversed word.
pub fn gamma_tail(first: Symbol, len: usize) -> Vec<Symbol> {
    let (even, odd) = match first {
        Symbol::A => (Symbol::Zero, Symbol::A),
        _ => (Symbol::A, Symbol::Zero),
    };
    (0..len).map(|i| if i % 2 == 0 { even } else { odd }).collect()
}

/// The symbol a_n read from the element of P_n containing `z`.
fn symbol_at<R: Real>(h: &PartitionHierarchy, z: R, n: usize) -> Symbol {
    let p = h.level(n);
    let tag = p.locate(z).tag;
    if tag.generation == n + 1 {
        Symbol::Zero
    } else if tag.index < p.q(n - 1) {
        Symbol::A
    } else {
        Symbol::One
    }
}

/// Forward word (a_1, …, a_n) of `z`.
pub fn encode<R: Real>(h: &PartitionHierarchy, z: R, n: usize) -> Result<Word> {
    if n > h.max_level() {
        return Err(Error::InvalidParameter(format!(
            "coding depth {n} exceeds hierarchy depth {}",
            h.max_level()
        )));
    }
    let zd = z.to_dd();
    let top = h.level(n);
    let count = (top.q(n) + top.q(n + 1)) as usize;
    let floor = top.orbit().precision.floor();
    if let Some(step) = (0..count).find(|&i| {
        let d = crate::circle::signed_offset(top.point(i as u64), zd);
        d.abs() < DD::from(floor)
    }) {
        return Err(Error::OrbitOfBreak { step });
    }
    Ok(Word::forward((1..=n).map(|m| symbol_at(h, zd, m)).collect()))
}

/// Word of every element of P_n, in partition order.
pub fn partition_words(h: &PartitionHierarchy, n: usize) -> Result<Vec<Word>> {
    let p = h.level(n);
    p.intervals()
        .iter()
        .map(|iv| {
            let mid = crate::circle::wrap(p.point(iv.left) + DD::from(0.5 * iv.length));
            encode(h, mid, n)
        })
        .collect()
}
