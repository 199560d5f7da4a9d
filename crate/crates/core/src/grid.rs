//! Partition of input space induced by the bounds of a rule set.
//!
//! Each numerical dimension is cut at every distinct rule bound. Each one-hot
//! group is a single axis whose variants are "category `d` is hot" for every
//! category some rule constrains, plus one aggregate variant standing for all
//! unconstrained categories. Within a cell every rule's change count is
//! constant, so one prototype per cell decides the optimal rule for the cell.

use std::ops::Range;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::rule::{Rule, CATEGORICAL_BOUND};
use crate::schema::FeatureSchema;

pub const DEFAULT_CELL_LIMIT: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub enum Axis {
    Numerical {
        dim: usize,
        /// Sorted distinct bounds, starting at `-inf` and ending at `+inf`.
        bounds: Vec<f64>,
    },
    Categorical {
        dims: Range<usize>,
        variants: Vec<Variant>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Variant {
    Hot(usize),
    /// Hot somewhere among these categories, none of which any rule bounds.
    Unconstrained(Vec<usize>),
}

impl Axis {
    pub fn len(&self) -> usize {
        match self {
            Axis::Numerical { bounds, .. } => bounds.len() - 1,
            Axis::Categorical { variants, .. } => variants.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    /// Interval or variant index along each axis.
    pub index: Vec<usize>,
    pub prototype: Vec<f64>,
    pub optimal_rule: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Grid {
    pub axes: Vec<Axis>,
    pub dim: usize,
    pub cells: Vec<GridCell>,
}

/// Sorted distinct finite-or-infinite bounds of `rules` on dimension `d`,
/// always including both infinities.
pub fn dimension_bounds(rules: &[Rule], d: usize) -> Vec<f64> {
    let mut b: Vec<f64> = rules
        .iter()
        .flat_map(|r| [r.lower()[d], r.upper()[d]])
        .chain([f64::NEG_INFINITY, f64::INFINITY])
        .collect();
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

/// Finite bounds per dimension, the threshold whitelist for metarule trees.
pub fn finite_bounds(rules: &[Rule], dim: usize) -> Vec<Vec<f64>> {
    (0..dim)
        .map(|d| {
            dimension_bounds(rules, d)
                .into_iter()
                .filter(|v| v.is_finite())
                .collect()
        })
        .collect()
}

pub fn build_axes(rules: &[Rule], schema: &FeatureSchema) -> Vec<Axis> {
    let mut axes = Vec::new();
    let mut d = 0;
    while d < schema.dim() {
        match schema.group_of(d) {
            None => {
                axes.push(Axis::Numerical {
                    dim: d,
                    bounds: dimension_bounds(rules, d),
                });
                d += 1;
            }
            Some(g) => {
                let constrained = |e: usize| {
                    rules
                        .iter()
                        .any(|r| r.lower()[e].is_finite() || r.upper()[e].is_finite())
                };
                let mut variants: Vec<Variant> = g
                    .dims
                    .clone()
                    .filter(|&e| constrained(e))
                    .map(Variant::Hot)
                    .collect();
                let free: Vec<usize> = g.dims.clone().filter(|&e| !constrained(e)).collect();
                if !free.is_empty() {
                    variants.push(Variant::Unconstrained(free));
                }
                d = g.dims.end;
                axes.push(Axis::Categorical {
                    dims: g.dims,
                    variants,
                });
            }
        }
    }
    axes
}

/// Number of cells, saturating.
pub fn cell_count(axes: &[Axis]) -> u128 {
    axes.iter()
        .fold(1u128, |acc, a| acc.saturating_mul(a.len() as u128))
}

/// Enumerates every cell of the grid spanned by `rules`, without prototypes.
pub fn build_grid(rules: &[Rule], schema: &FeatureSchema, cell_limit: usize) -> Result<Grid> {
    if rules.is_empty() {
        return Err(Error::NoValidRules);
    }
    let axes = build_axes(rules, schema);
    let count = cell_count(&axes);
    if count > cell_limit as u128 {
        return Err(Error::CellLimitExceeded {
            count,
            limit: cell_limit,
        });
    }
    let cells = (0..count as usize)
        .map(|i| GridCell {
            index: unrank(&axes, i),
            prototype: Vec::new(),
            optimal_rule: None,
        })
        .collect();
    Ok(Grid {
        axes,
        dim: schema.dim(),
        cells,
    })
}

/// Mixed-radix decomposition of a cell number; the last axis varies fastest.
fn unrank(axes: &[Axis], mut i: usize) -> Vec<usize> {
    let mut index = vec![0; axes.len()];
    for (k, a) in axes.iter().enumerate().rev() {
        index[k] = i % a.len();
        i /= a.len();
    }
    index
}

/// Training-data extent of each dimension, used to anchor unbounded intervals.
#[derive(Clone, Debug)]
pub struct DataRange {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl DataRange {
    pub fn of(data: &Dataset) -> Self {
        let (min, max) = (0..data.dim()).map(|d| data.column_range(d)).unzip();
        DataRange { min, max }
    }
}

/// A point strictly inside the interval `(a, b]`.
pub fn interval_prototype(a: f64, b: f64, data_min: f64, data_max: f64) -> f64 {
    let mid = |lo: f64, hi: f64| lo + (hi - lo) / 2.0;
    let p = match (a.is_finite(), b.is_finite()) {
        (true, true) => mid(a, b),
        (false, true) => {
            if data_min >= b {
                b - 1.0
            } else {
                mid(data_min - 1.0, b)
            }
        }
        (true, false) => {
            if data_max <= a {
                a + 1.0
            } else {
                mid(a, data_max + 1.0)
            }
        }
        (false, false) => mid(data_min, data_max),
    };
    // rounding can land on the open end or past the closed end
    if p > a && p <= b {
        p
    } else if b.is_finite() {
        b
    } else {
        a.next_up()
    }
}

impl Grid {
    /// The hyperrectangle of `cell`.
    pub fn cell_box(&self, cell: &GridCell) -> Rule {
        let mut r = Rule::universal(self.dim);
        for (axis, &k) in self.axes.iter().zip(&cell.index) {
            match axis {
                Axis::Numerical { dim, bounds } => {
                    r = r.with_lower(*dim, bounds[k]).with_upper(*dim, bounds[k + 1]);
                }
                Axis::Categorical { variants, .. } => match &variants[k] {
                    Variant::Hot(d) => r = r.with_lower(*d, CATEGORICAL_BOUND),
                    Variant::Unconstrained(_) => {
                        for v in variants {
                            if let Variant::Hot(d) = v {
                                r = r.with_upper(*d, CATEGORICAL_BOUND);
                            }
                        }
                    }
                },
            }
        }
        r
    }

    pub fn make_prototype(&self, cell: &GridCell, range: &DataRange) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.dim];
        for (axis, &k) in self.axes.iter().zip(&cell.index) {
            match axis {
                Axis::Numerical { dim, bounds } => {
                    x[*dim] = interval_prototype(
                        bounds[k],
                        bounds[k + 1],
                        range.min[*dim],
                        range.max[*dim],
                    );
                }
                Axis::Categorical { variants, .. } => match variants.get(k) {
                    Some(Variant::Hot(d)) => x[*d] = 1.0,
                    Some(Variant::Unconstrained(free)) => x[free[0]] = 1.0,
                    None => return Err(Error::ImpossibleCell(format!("{:?}", cell.index))),
                },
            }
        }
        if !self.cell_box(cell).covers(&x) {
            return Err(Error::ImpossibleCell(format!("{:?}", cell.index)));
        }
        Ok(x)
    }

    pub fn fill_prototypes(&mut self, data: &Dataset, exec: Execution) -> Result<()> {
        let range = DataRange::of(data);
        let protos = exec::try_map_range(exec, self.cells.len(), |i| {
            self.make_prototype(&self.cells[i], &range)
        })?;
        for (c, p) in self.cells.iter_mut().zip(protos) {
            c.prototype = p;
        }
        Ok(())
    }

    /// The cell containing a one-hot valid point.
    pub fn locate(&self, x: &[f64]) -> GridCell {
        let index = self
            .axes
            .iter()
            .map(|axis| match axis {
                Axis::Numerical { dim, bounds } => {
                    // first bound ≥ x closes the cell
                    bounds.partition_point(|&b| b < x[*dim]) - 1
                }
                Axis::Categorical { variants, .. } => variants
                    .iter()
                    .position(|v| match v {
                        Variant::Hot(d) => x[*d] == 1.0,
                        Variant::Unconstrained(free) => free.iter().any(|&d| x[d] == 1.0),
                    })
                    .unwrap_or(0),
            })
            .collect();
        GridCell {
            index,
            prototype: Vec::new(),
            optimal_rule: None,
        }
    }
}
