use std::collections::BTreeMap;

use ancosa::controller::*;
use ancosa::rlnc::CodeRate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn chain() -> Controller {
    let succ: BTreeMap<NodeId, Vec<NodeId>> = [(NodeId(0), vec![NodeId(1)])].into();
    Controller::new(succ, RateBounds::default(), SuccessorAggregate::Max).unwrap()
}

#[test]
fn lossy_link_rate_converges_to_inverse_delivery() {
    let controller = chain();
    for loss in [0.1, 0.3, 0.5] {
        let mut rng = ChaCha8Rng::seed_from_u64((loss * 100.0) as u64);
        let mut rate = CodeRate::new(6, 5).unwrap();
        let mut rates = Vec::new();
        let incoming = 1000;
        for _epoch in 0..50 {
            let sent = rate.emit_count(incoming) as u64;
            let received = (0..sent).filter(|_| rng.random::<f64>() >= loss).count() as u64;
            let report = NodeReport { node_id: NodeId(0), sent, received: [(NodeId(1), received)].into() };
            let current = [(NodeId(0), rate)].into();
            rate = controller.update_epoch(&[report], &current).unwrap()[0].rate;
            rates.push(rate.as_f64());
        }
        let tail = &rates[10..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let target = 1.0 / (1.0 - loss);
        assert!((mean - target).abs() < 0.02 * target, "loss {loss}: mean rate {mean}, target {target}");
    }
}

#[test]
fn heavy_loss_pins_rate_to_upper_bound() {
    let controller = chain();
    let report = NodeReport { node_id: NodeId(0), sent: 100, received: [(NodeId(1), 10)].into() };
    let d = controller.update_epoch(&[report], &BTreeMap::new()).unwrap();
    assert_eq!(d[0].rate, CodeRate::new(4, 1).unwrap());
}

#[test]
fn custom_bounds_are_respected() {
    let bounds = RateBounds::new(CodeRate::new(11, 10).unwrap(), CodeRate::new(2, 1).unwrap()).unwrap();
    let r = compute_rate(
        &NodeReport { node_id: NodeId(4), sent: 10, received: [(NodeId(5), 10)].into() },
        bounds,
        SuccessorAggregate::Max,
    )
    .unwrap();
    assert_eq!(r.rate, bounds.min);
    assert_eq!(r.node_id, NodeId(4));
    assert!(RateBounds::new(CodeRate::new(3, 1).unwrap(), CodeRate::ONE).is_err());
}
