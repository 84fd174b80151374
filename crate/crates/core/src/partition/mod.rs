//! Dynamical partitions P_n(z₀) built from a single orbit.

mod barycentric;
mod checks;
mod renorm;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use barycentric::{
    barycentric_scan, check_location_cases, ratio_bracket, BarycentricLevel, BarycentricReport, LocationCase, LocationCheck,
    RatioBracket, RatioSample, BRACKET_MARGIN,
};
pub use checks::{
    check_denjoy, comparability_census, denjoy_product, finzi_ratios, is_qn_small, Census, DenjoyReport,
    FinziReport,
};
pub use renorm::{normalized_return_map, one_sided_derivative_product, JumpIdentity, RenormalizedReturnMap};

use crate::circle::ccw_distance;
use crate::dd::DD;
use crate::error::{Error, Result};
use crate::map::{orbit, CircleMap};
use crate::real::{Precision, Real};
use crate::rotation::closest_returns;

/// Forward orbit z₀, z₁, … together with its closest-return times.
#[derive(Debug, Clone)]
pub struct OrbitData {
    pub precision: Precision,
    pub points: Vec<DD>,
    pub q: Vec<u64>,
}

impl OrbitData {
    /// Orbit long enough for partitions up to `max_level` (and one refinement).
    pub fn compute<M: CircleMap>(map: &M, z0: DD, max_level: usize, precision: Precision) -> Result<OrbitData> {
        let count = max_level + 3;
        let q = match precision {
            Precision::Double => closest_returns(map, z0.hi(), count, 50_000_000)?,
            Precision::Extended => closest_returns(map, z0, count, 50_000_000)?,
        };
        let len = (q[max_level + 1] + q[max_level + 2]) as usize;
        let points = match precision {
            Precision::Double => orbit(map, z0.hi(), len).into_iter().map(DD::from).collect(),
            Precision::Extended => orbit(map, z0, len),
        };
        Ok(OrbitData { precision, points, q })
    }

    pub fn max_level(&self) -> usize {
        self.q.len() - 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tag {
    /// n for I_i^{(n)}, n+1 for I_j^{(n+1)}.
    pub generation: usize,
    pub index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionInterval {
    pub tag: Tag,
    /// Orbit index of the counter-clockwise first endpoint.
    pub left: u64,
    pub right: u64,
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct DynamicalPartition {
    pub level: usize,
    orbit: Arc<OrbitData>,
    /// Sorted by the position of the left endpoint.
    intervals: Vec<PartitionInterval>,
}

impl DynamicalPartition {
    pub fn build<M: CircleMap>(map: &M, z0: f64, n: usize, precision: Precision) -> Result<DynamicalPartition> {
        let orbit = Arc::new(OrbitData::compute(map, DD::from(z0), n, precision)?);
        DynamicalPartition::from_orbit(orbit, n)
    }

    pub fn from_orbit(orbit: Arc<OrbitData>, n: usize) -> Result<DynamicalPartition> {
        if n == 0 {
            return Err(Error::InvalidParameter("partition level must be at least 1".into()));
        }
        if n + 1 >= orbit.q.len() {
            return Err(Error::InvalidParameter(format!(
                "orbit supports levels up to {}, requested {n}",
                orbit.q.len().saturating_sub(2)
            )));
        }
        let qn = orbit.q[n];
        let qn1 = orbit.q[n + 1];
        let total = (qn + qn1) as usize;
        if orbit.points.len() < total {
            return Err(Error::InvalidParameter("orbit too short for requested level".into()));
        }
        let pts = &orbit.points;
        let mut order: Vec<usize> = (0..total).collect();
        order.sort_by(|&a, &b| pts[a].partial_cmp(&pts[b]).expect("orbit points are finite"));
        let floor = orbit.precision.floor();
        let mut intervals = Vec::with_capacity(total);
        for w in 0..total {
            let a = order[w] as u64;
            let b = order[(w + 1) % total] as u64;
            let diff = a.abs_diff(b);
            let m = a.min(b);
            let tag = if diff == qn && m < qn1 {
                Tag { generation: n, index: m }
            } else if diff == qn1 && m < qn {
                Tag { generation: n + 1, index: m }
            } else {
                return Err(Error::PrecisionExhausted {
                    level: n,
                    detail: format!("adjacent orbit points z_{a}, z_{b} do not bound a partition element"),
                });
            };
            let length = ccw_distance(pts[a as usize], pts[b as usize]).to_f64();
            let length = if total == 1 { 1.0 } else { length };
            if length < floor {
                return Err(Error::PrecisionExhausted {
                    level: n,
                    detail: format!("interval {tag:?} has length {length:e} below floor {floor:e}"),
                });
            }
            intervals.push(PartitionInterval {
                tag,
                left: a,
                right: b,
                length,
            });
        }
        Ok(DynamicalPartition {
            level: n,
            orbit,
            intervals,
        })
    }

    pub fn intervals(&self) -> &[PartitionInterval] {
        &self.intervals
    }

    pub fn orbit(&self) -> &Arc<OrbitData> {
        &self.orbit
    }

    pub fn q(&self, n: usize) -> u64 {
        self.orbit.q[n]
    }

    pub fn point(&self, i: u64) -> DD {
        self.orbit.points[i as usize]
    }

    pub fn cardinality(&self) -> usize {
        self.intervals.len()
    }

    pub fn total_length(&self) -> f64 {
        let s: DD = self
            .intervals
            .iter()
            .map(|iv| ccw_distance(self.point(iv.left), self.point(iv.right)))
            .sum();
        s.to_f64()
    }

    pub fn max_length(&self) -> f64 {
        self.intervals.iter().map(|i| i.length).fold(0.0, f64::max)
    }

    pub fn min_length(&self) -> f64 {
        self.intervals.iter().map(|i| i.length).fold(f64::INFINITY, f64::min)
    }

    pub fn get(&self, tag: Tag) -> Option<&PartitionInterval> {
        self.intervals.iter().find(|i| i.tag == tag)
    }

    /// Element containing `x` under the half-open convention [left, right).
    pub fn locate<R: Real>(&self, x: R) -> &PartitionInterval {
        let x = x.to_dd();
        let pos = self
            .intervals
            .partition_point(|iv| self.point(iv.left) <= x);
        if pos == 0 {
            &self.intervals[self.intervals.len() - 1]
        } else {
            &self.intervals[pos - 1]
        }
    }

    /// Relative position of `x` inside the element `iv`, measured from its left end.
    pub fn barycentric<R: Real>(&self, iv: &PartitionInterval, x: R) -> f64 {
        let d = ccw_distance(self.point(iv.left), x.to_dd());
        let len = ccw_distance(self.point(iv.left), self.point(iv.right));
        (d / len).to_f64()
    }

    /// Checks disjointness, cover, cardinality and the index structure.
    pub fn validate(&self) -> Result<()> {
        let n = self.level;
        let (qn, qn1) = (self.q(n), self.q(n + 1));
        let expect = (qn + qn1) as usize;
        if self.cardinality() != expect {
            return Err(Error::PrecisionExhausted {
                level: n,
                detail: format!("cardinality {} != {expect}", self.cardinality()),
            });
        }
        let mut tags: Vec<Tag> = self.intervals.iter().map(|i| i.tag).collect();
        tags.sort();
        tags.dedup();
        if tags.len() != expect {
            return Err(Error::PrecisionExhausted {
                level: n,
                detail: "duplicate partition tags".into(),
            });
        }
        for w in 0..self.intervals.len() {
            let a = &self.intervals[w];
            let b = &self.intervals[(w + 1) % self.intervals.len()];
            if a.right != b.left {
                return Err(Error::PrecisionExhausted {
                    level: n,
                    detail: format!("gap or overlap between {:?} and {:?}", a.tag, b.tag),
                });
            }
        }
        let total = self.total_length();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::PrecisionExhausted {
                level: n,
                detail: format!("total length {total}"),
            });
        }
        Ok(())
    }

    /// P_{n+1} obtained by splitting every I_i^{(n)} along the orbit chain
    /// z_{i+q_n}, z_{i+q_n+q_{n+1}}, …, z_{i+q_{n+2}}, z_i.
    pub fn refine(&self) -> Result<DynamicalPartition> {
        let n = self.level;
        if n + 2 >= self.orbit.q.len() {
            return Err(Error::InvalidParameter("orbit too short to refine".into()));
        }
        let (qn, qn1, qn2) = (self.q(n), self.q(n + 1), self.q(n + 2));
        if self.orbit.points.len() < (qn1 + qn2) as usize {
            return Err(Error::InvalidParameter("orbit too short to refine".into()));
        }
        let k = (qn2 - qn) / qn1;
        let floor = self.orbit.precision.floor();
        let mut out = Vec::with_capacity((qn1 + qn2) as usize);
        for iv in &self.intervals {
            if iv.tag.generation == n + 1 {
                out.push(*iv);
                continue;
            }
            let i = iv.tag.index;
            let mut chain: Vec<u64> = (0..=k).map(|s| i + qn + s * qn1).collect();
            chain.push(i);
            if iv.left == i {
                chain.reverse();
            }
            let left = self.point(iv.left);
            let len = ccw_distance(left, self.point(iv.right));
            let mut prev = DD::from(0.0);
            for w in 0..chain.len() - 1 {
                let a = chain[w];
                let b = chain[w + 1];
                let db = if w + 1 == chain.len() - 1 {
                    len
                } else {
                    ccw_distance(left, self.point(b))
                };
                if !(db > prev && db <= len) {
                    return Err(Error::PrecisionExhausted {
                        level: n + 1,
                        detail: format!("refinement chain out of order inside I_{i}^({n})"),
                    });
                }
                let tag = if a.abs_diff(b) == qn2 {
                    Tag { generation: n + 2, index: a.min(b) }
                } else {
                    Tag { generation: n + 1, index: a.min(b) }
                };
                let length = (db - prev).to_f64();
                if length < floor {
                    return Err(Error::PrecisionExhausted {
                        level: n + 1,
                        detail: format!("refined interval {tag:?} below floor"),
                    });
                }
                out.push(PartitionInterval {
                    tag,
                    left: a,
                    right: b,
                    length,
                });
                prev = db;
            }
        }
        out.sort_by(|a, b| {
            self.point(a.left)
                .partial_cmp(&self.point(b.left))
                .expect("orbit points are finite")
        });
        Ok(DynamicalPartition {
            level: n + 1,
            orbit: self.orbit.clone(),
            intervals: out,
        })
    }
}

/// P_1, …, P_max built from one shared orbit.
#[derive(Debug, Clone)]
pub struct PartitionHierarchy {
    levels: Vec<DynamicalPartition>,
}

impl PartitionHierarchy {
    pub fn build<M: CircleMap>(map: &M, z0: DD, max_level: usize, precision: Precision) -> Result<PartitionHierarchy> {
        let orbit = Arc::new(OrbitData::compute(map, z0, max_level, precision)?);
        let levels = (1..=max_level)
            .map(|n| DynamicalPartition::from_orbit(orbit.clone(), n))
            .collect::<Result<_>>()?;
        Ok(PartitionHierarchy { levels })
    }

    pub fn max_level(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, n: usize) -> &DynamicalPartition {
        &self.levels[n - 1]
    }

    pub fn orbit(&self) -> &Arc<OrbitData> {
        self.levels[0].orbit()
    }
}

/// Least-squares slope of ln(max |I|) against n.
pub fn decay_slope(levels: &[(usize, f64)]) -> f64 {
    let n = levels.len() as f64;
    let mx = levels.iter().map(|&(l, _)| l as f64).sum::<f64>() / n;
    let my = levels.iter().map(|&(_, v)| v.ln()).sum::<f64>() / n;
    let sxy: f64 = levels.iter().map(|&(l, v)| (l as f64 - mx) * (v.ln() - my)).sum();
    let sxx: f64 = levels.iter().map(|&(l, _)| (l as f64 - mx).powi(2)).sum();
    sxy / sxx
}
