//! Exact Shapley factorisation of `f(z_1 + ... + z_N)` for an elementwise
//! nonlinearity `f`.
//!
//! Component `i` receives
//! `sum_{S ⊆ N\{i}} |S|!(N-1-|S|)!/N! * (f(z_S + z_i) - f(z_S))`
//! and the baseline `f(0)` is returned separately, so that
//! `sum_i phi_i + f(0) == f(sum_i z_i)`.

use crate::error::{Error, Result};
use crate::numerics::{Activation, Vector};

pub const MAX_PLAYERS: usize = 8;

/// A nonlinearity applied to a sum of equally sized components.
#[derive(Clone, Debug)]
pub struct SumGame {
    pub nonlinearity: Activation,
    pub components: Vec<Vector>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapleyValues {
    /// One contribution per component, in component order.
    pub contributions: Vec<Vector>,
    /// `f(0)`, elementwise.
    pub baseline: Vector,
}

impl ShapleyValues {
    /// `sum_i phi_i + baseline`.
    pub fn total(&self) -> Vector {
        let mut t = self.baseline.clone();
        for c in &self.contributions {
            t.add_assign(c);
        }
        t
    }
}

impl SumGame {
    pub fn new(nonlinearity: Activation, components: Vec<Vector>) -> Result<Self> {
        let game = SumGame { nonlinearity, components };
        game.validate()?;
        Ok(game)
    }

    pub fn players(&self) -> usize {
        self.components.len()
    }

    pub fn len(&self) -> usize {
        self.components.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.components.len();
        if n == 0 || n > MAX_PLAYERS {
            return Err(Error::InvalidInput(format!(
                "sum game needs 1..={MAX_PLAYERS} components, got {n}"
            )));
        }
        let len = self.components[0].len();
        if self.components.iter().any(|c| c.len() != len) {
            return Err(Error::DimensionMismatch("sum game components differ in length".into()));
        }
        Ok(())
    }

    /// `f` applied to the full sum.
    pub fn value(&self) -> Vector {
        let mut z = Vector::zeros(self.len());
        for c in &self.components {
            z.add_assign(c);
        }
        z.map(|x| self.nonlinearity.apply(x))
    }
}

fn factorials(n: usize) -> Vec<f64> {
    let mut f = vec![1.0; n + 1];
    for k in 1..=n {
        f[k] = f[k - 1] * k as f64;
    }
    f
}

/// Subset-enumeration Shapley values, `O(2^N)` per element.
pub fn exact_shapley(game: &SumGame) -> Result<ShapleyValues> {
    game.validate()?;
    let n = game.players();
    let len = game.len();
    let f = game.nonlinearity;
    let fact = factorials(n);
    // weight[s] = s!(n-1-s)!/n!
    let weight: Vec<f64> = (0..n).map(|s| fact[s] * fact[n - 1 - s] / fact[n]).collect();
    let subsets = 1usize << n;

    let mut contributions = vec![Vector::zeros(len); n];
    let mut sums = vec![0.0; subsets];
    let mut values = vec![0.0; subsets];
    for e in 0..len {
        for mask in 1..subsets {
            let low = mask.trailing_zeros() as usize;
            sums[mask] = sums[mask & (mask - 1)] + game.components[low][e];
        }
        for mask in 0..subsets {
            values[mask] = f.apply(sums[mask]);
        }
        for (i, contrib) in contributions.iter_mut().enumerate() {
            let bit = 1usize << i;
            let mut phi = 0.0;
            for mask in 0..subsets {
                if mask & bit == 0 {
                    let s = mask.count_ones() as usize;
                    phi += weight[s] * (values[mask | bit] - values[mask]);
                }
            }
            contrib[e] = phi;
        }
    }
    Ok(ShapleyValues { contributions, baseline: Vector::filled(len, f.apply(0.0)) })
}

/// Independent oracle: average marginal contribution over all `N!`
/// orderings of the players.
pub fn shapley_oracle_permutations(game: &SumGame) -> Result<ShapleyValues> {
    game.validate()?;
    let n = game.players();
    let len = game.len();
    let f = game.nonlinearity;
    let mut totals = vec![Vector::zeros(len); n];
    let mut count = 0usize;

    let mut order: Vec<usize> = (0..n).collect();
    let mut visit = |order: &[usize]| {
        count += 1;
        let mut running = Vector::zeros(len);
        for &p in order {
            let before = running.map(|x| f.apply(x));
            running.add_assign(&game.components[p]);
            let after = running.map(|x| f.apply(x));
            totals[p].add_assign(&after.sub(&before));
        }
    };
    permute(&mut order, n, &mut visit);

    let inv = 1.0 / count as f64;
    Ok(ShapleyValues {
        contributions: totals.into_iter().map(|t| t.scale(inv)).collect(),
        baseline: Vector::filled(len, f.apply(0.0)),
    })
}

/// Heap's algorithm.
fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k <= 1 {
        visit(items);
        return;
    }
    for i in 0..k - 1 {
        permute(items, k - 1, visit);
        if k.is_multiple_of(2) {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
    }
    permute(items, k - 1, visit);
}
