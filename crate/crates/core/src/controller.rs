//! Centralized code-rate controller.
//!
//! Each coding node reports how many packets it sent during the last period
//! (η_i) and how many of those each of its successors received (η_j^(i)).
//! The controller answers with a new absolute rate
//!
//! ```text
//! r_i = η_i / max_{j ∈ N_i} η_j^(i)
//! ```
//!
//! clamped to the configured bounds. The aggregate over successors is `max`
//! by default; `min` is available as a configuration switch.

use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rlnc::CodeRate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ControllerError {
    #[error("node {0:?} has no successors")]
    NoSuccessors(NodeId),
    #[error("node {0:?} sent nothing this period")]
    NoTraffic(NodeId),
    #[error("report for node {node:?} names successors {got:?}, configured {expected:?}")]
    SuccessorMismatch {
        node: NodeId,
        expected: Vec<NodeId>,
        got: Vec<NodeId>,
    },
    #[error("no report from node {0:?}")]
    StaleReport(NodeId),
    #[error("rate bounds must satisfy 0 < min <= max")]
    InvalidBounds,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeReport {
    pub node_id: NodeId,
    pub sent: u64,
    pub received: BTreeMap<NodeId, u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateBounds {
    pub min: CodeRate,
    pub max: CodeRate,
}

impl RateBounds {
    pub fn new(min: CodeRate, max: CodeRate) -> Result<Self, ControllerError> {
        if min > max {
            return Err(ControllerError::InvalidBounds);
        }
        Ok(RateBounds { min, max })
    }
}

impl Default for RateBounds {
    fn default() -> Self {
        RateBounds {
            min: CodeRate::ONE,
            max: CodeRate::new(4, 1).unwrap(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessorAggregate {
    #[default]
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advisory {
    None,
    /// Every successor received nothing; the rate is pinned to the upper bound.
    TotalLoss,
    /// The node sent nothing, so there is nothing to measure; keep its rate.
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateDirective {
    pub node_id: NodeId,
    pub rate: CodeRate,
    pub advisory: Advisory,
}

/// Rate for one node from one report.
pub fn compute_rate(
    report: &NodeReport,
    bounds: RateBounds,
    aggregate: SuccessorAggregate,
) -> Result<RateDirective, ControllerError> {
    if report.received.is_empty() {
        return Err(ControllerError::NoSuccessors(report.node_id));
    }
    if report.sent == 0 {
        return Err(ControllerError::NoTraffic(report.node_id));
    }
    let counts = report.received.values().copied();
    let best = match aggregate {
        SuccessorAggregate::Max => counts.max(),
        SuccessorAggregate::Min => counts.min(),
    }
    .unwrap_or(0);
    if best == 0 {
        return Ok(RateDirective {
            node_id: report.node_id,
            rate: bounds.max,
            advisory: Advisory::TotalLoss,
        });
    }
    let raw = Ratio::new(report.sent, best);
    let rate = CodeRate::new(*raw.numer(), *raw.denom())
        .expect("both counts positive")
        .clamp(bounds.min, bounds.max);
    Ok(RateDirective {
        node_id: report.node_id,
        rate,
        advisory: Advisory::None,
    })
}

/// Controller configuration: the coding nodes and their successor sets.
#[derive(Debug, Clone)]
pub struct Controller {
    successors: BTreeMap<NodeId, Vec<NodeId>>,
    pub bounds: RateBounds,
    pub aggregate: SuccessorAggregate,
}

impl Controller {
    pub fn new(
        successors: BTreeMap<NodeId, Vec<NodeId>>,
        bounds: RateBounds,
        aggregate: SuccessorAggregate,
    ) -> Result<Self, ControllerError> {
        if let Some((&node, _)) = successors.iter().find(|(_, s)| s.is_empty()) {
            return Err(ControllerError::NoSuccessors(node));
        }
        let successors = successors
            .into_iter()
            .map(|(k, mut v)| {
                v.sort();
                v.dedup();
                (k, v)
            })
            .collect();
        Ok(Controller {
            successors,
            bounds,
            aggregate,
        })
    }

    pub fn coding_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.successors.keys().copied()
    }

    pub fn successors(&self, node: NodeId) -> Option<&[NodeId]> {
        self.successors.get(&node).map(Vec::as_slice)
    }

    /// One reporting period: a directive for every configured coding node.
    /// Nodes that sent nothing keep the rate they have in `current` (or the
    /// lower bound if absent) with [`Advisory::Hold`].
    pub fn update_epoch(
        &self,
        reports: &[NodeReport],
        current: &BTreeMap<NodeId, CodeRate>,
    ) -> Result<Vec<RateDirective>, ControllerError> {
        let by_node: BTreeMap<NodeId, &NodeReport> =
            reports.iter().map(|r| (r.node_id, r)).collect();
        self.successors
            .iter()
            .map(|(&node, succ)| {
                let report = by_node
                    .get(&node)
                    .ok_or(ControllerError::StaleReport(node))?;
                let got: Vec<NodeId> = report.received.keys().copied().collect();
                if &got != succ {
                    return Err(ControllerError::SuccessorMismatch {
                        node,
                        expected: succ.clone(),
                        got,
                    });
                }
                match compute_rate(report, self.bounds, self.aggregate) {
                    Err(ControllerError::NoTraffic(_)) => Ok(RateDirective {
                        node_id: node,
                        rate: current.get(&node).copied().unwrap_or(self.bounds.min),
                        advisory: Advisory::Hold,
                    }),
                    other => other,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn report(node: usize, sent: u64, recv: &[(usize, u64)]) -> NodeReport {
        NodeReport {
            node_id: NodeId(node),
            sent,
            received: recv.iter().map(|&(j, c)| (NodeId(j), c)).collect(),
        }
    }

    fn rate(r: &RateDirective) -> f64 {
        r.rate.as_f64()
    }

    #[test]
    fn rate_examples() {
        let b = RateBounds::default();
        let agg = SuccessorAggregate::Max;
        let d = compute_rate(&report(0, 10, &[(1, 8)]), b, agg).unwrap();
        assert_eq!(d.rate, CodeRate::new(5, 4).unwrap());
        assert_eq!(rate(&compute_rate(&report(0, 10, &[(1, 10)]), b, agg).unwrap()), 1.0);
        let d = compute_rate(&report(0, 10, &[(1, 2), (2, 0)]), b, agg).unwrap();
        assert_eq!(d.rate, CodeRate::new(4, 1).unwrap());
        assert_eq!(d.advisory, Advisory::None);
        let d = compute_rate(&report(0, 10, &[(1, 0), (2, 0)]), b, agg).unwrap();
        assert_eq!(d.advisory, Advisory::TotalLoss);
        assert_eq!(d.rate, b.max);
        // min aggregate provisions for the worst successor
        let d = compute_rate(&report(0, 10, &[(1, 8), (2, 5)]), b, SuccessorAggregate::Min).unwrap();
        assert_eq!(d.rate, CodeRate::new(2, 1).unwrap());
    }

    #[test]
    fn rate_errors() {
        let b = RateBounds::default();
        assert_eq!(
            compute_rate(&report(3, 10, &[]), b, SuccessorAggregate::Max),
            Err(ControllerError::NoSuccessors(NodeId(3)))
        );
        assert_eq!(
            compute_rate(&report(3, 0, &[(1, 0)]), b, SuccessorAggregate::Max),
            Err(ControllerError::NoTraffic(NodeId(3)))
        );
    }

    fn chain_controller() -> Controller {
        let succ = [(0, vec![1]), (1, vec![2, 3])]
            .into_iter()
            .map(|(k, v): (usize, Vec<usize>)| (NodeId(k), v.into_iter().map(NodeId).collect()))
            .collect();
        Controller::new(succ, RateBounds::default(), SuccessorAggregate::Max).unwrap()
    }

    #[test]
    fn epoch_update() {
        let c = chain_controller();
        let lossless = [report(0, 5, &[(1, 5)]), report(1, 7, &[(2, 7), (3, 7)])];
        let out = c.update_epoch(&lossless, &BTreeMap::new()).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|d| d.rate == CodeRate::ONE));

        assert_eq!(
            c.update_epoch(&[], &BTreeMap::new()),
            Err(ControllerError::StaleReport(NodeId(0)))
        );
        assert_eq!(
            c.update_epoch(&lossless[..1], &BTreeMap::new()),
            Err(ControllerError::StaleReport(NodeId(1)))
        );
        let wrong = [report(0, 5, &[(2, 5)]), lossless[1].clone()];
        assert!(matches!(
            c.update_epoch(&wrong, &BTreeMap::new()),
            Err(ControllerError::SuccessorMismatch { .. })
        ));

        let idle = [report(0, 0, &[(1, 0)]), lossless[1].clone()];
        let cur: BTreeMap<_, _> = [(NodeId(0), CodeRate::new(3, 2).unwrap())].into();
        let out = c.update_epoch(&idle, &cur).unwrap();
        assert_eq!(out[0].advisory, Advisory::Hold);
        assert_eq!(out[0].rate, CodeRate::new(3, 2).unwrap());
    }

    #[test]
    fn empty_successor_set_is_config_error() {
        let succ = [(NodeId(0), vec![])].into_iter().collect();
        assert!(matches!(
            Controller::new(succ, RateBounds::default(), SuccessorAggregate::Max),
            Err(ControllerError::NoSuccessors(NodeId(0)))
        ));
    }

    proptest! {
        #[test]
        fn rate_is_bounded_and_monotone(sent in 1u64..10_000, a in 0u64..10_000, b in 0u64..10_000, other in 0u64..10_000) {
            let bounds = RateBounds::default();
            let (lo, hi) = (a.min(b), a.max(b));
            let r_lo = compute_rate(&report(0, sent, &[(1, lo), (2, other.min(lo))]), bounds, SuccessorAggregate::Max).unwrap();
            let r_hi = compute_rate(&report(0, sent, &[(1, hi), (2, other.min(lo))]), bounds, SuccessorAggregate::Max).unwrap();
            prop_assert!(r_lo.rate >= bounds.min && r_lo.rate <= bounds.max);
            prop_assert!(r_hi.rate >= bounds.min && r_hi.rate <= bounds.max);
            // non-increasing in the best successor's receipt count
            prop_assert!(r_hi.rate <= r_lo.rate);
            // idempotent
            let again = compute_rate(&report(0, sent, &[(1, hi), (2, other.min(lo))]), bounds, SuccessorAggregate::Max).unwrap();
            prop_assert_eq!(again, r_hi);
        }
    }
}
