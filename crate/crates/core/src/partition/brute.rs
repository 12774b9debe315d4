use super::{check_equipartition_shape, AffinityMatrix, Direction, Partition};
use crate::error::{Error, Result};

/// Largest number of equipartitions the exhaustive search will visit.
pub const BRUTE_FORCE_CAP: u128 = 2_000_000;

/// n! / ((m!)^k k!) with m = n/k: the number of ways to split n labelled
/// nodes into k unlabelled blocks of equal size.
pub fn count_equipartitions(n: usize, k: usize) -> u128 {
    if k == 0 || n % k != 0 {
        return 0;
    }
    let m = n / k;
    // Product over blocks of C(remaining - 1, m - 1): the smallest free node
    // opens each block.
    let mut total: u128 = 1;
    let mut remaining = n;
    for _ in 0..k {
        total = total.saturating_mul(binomial(remaining - 1, m - 1));
        remaining -= m;
    }
    total
}

fn binomial(n: usize, r: usize) -> u128 {
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Exact optimum of k-equi-MinCut / k-equi-MaxCut by enumeration.
pub fn brute_force_equipartition(a: &AffinityMatrix, k: usize, direction: Direction) -> Result<(Partition, f64)> {
    let n = a.n();
    check_equipartition_shape(n, k)?;
    let count = count_equipartitions(n, k);
    if count > BRUTE_FORCE_CAP {
        return Err(Error::Capacity {
            what: "equipartition count",
            got: usize::try_from(count).unwrap_or(usize::MAX),
            limit: BRUTE_FORCE_CAP as usize,
        });
    }
    let mut search = Search { a, m: n / k, direction, assignment: vec![usize::MAX; n], best: None };
    search.open_block(0);
    let (assignment, value) = search.best.expect("at least one equipartition exists");
    Ok((Partition::equal(assignment, k)?, value))
}

struct Search<'a> {
    a: &'a AffinityMatrix,
    m: usize,
    direction: Direction,
    assignment: Vec<usize>,
    best: Option<(Vec<usize>, f64)>,
}

impl Search<'_> {
    fn open_block(&mut self, block: usize) {
        let Some(first) = self.assignment.iter().position(|&c| c == usize::MAX) else {
            self.leaf();
            return;
        };
        self.assignment[first] = block;
        self.fill(block, first + 1, self.m - 1);
        self.assignment[first] = usize::MAX;
    }

    fn fill(&mut self, block: usize, from: usize, need: usize) {
        if need == 0 {
            self.open_block(block + 1);
            return;
        }
        for i in from..self.assignment.len() {
            if self.assignment[i] == usize::MAX {
                self.assignment[i] = block;
                self.fill(block, i + 1, need - 1);
                self.assignment[i] = usize::MAX;
            }
        }
    }

    fn leaf(&mut self) {
        let n = self.assignment.len();
        let mut cut = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                if self.assignment[i] != self.assignment[j] {
                    cut += self.a.get(i, j);
                }
            }
        }
        let improve = match &self.best {
            None => true,
            Some((_, v)) => self.direction.better(cut, *v),
        };
        if improve {
            self.best = Some((self.assignment.clone(), cut));
        }
    }
}
