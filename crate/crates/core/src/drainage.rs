//! Water/air partition of the pore space by radius thresholding.

use crate::error::{Error, Result};
use crate::network::PoreNetwork;

#[derive(Debug, Clone, PartialEq)]
pub struct DrainageResult {
    /// Largest radius still filled with water.
    pub threshold: f64,
    pub water_mask: Vec<bool>,
    /// Water-filled volume over total volume.
    pub achieved_saturation: f64,
}

impl DrainageResult {
    pub fn water_count(&self) -> usize {
        self.water_mask.iter().filter(|&&w| w).count()
    }

    pub fn water_ids(&self) -> Vec<usize> {
        (0..self.water_mask.len()).filter(|&k| self.water_mask[k]).collect()
    }
}

/// Empties every ball whose radius exceeds `threshold`.
pub fn drain_by_threshold(net: &PoreNetwork, threshold: f64) -> Result<DrainageResult> {
    if net.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    let (order, cumulative) = sorted_cumulative(net);
    let total = *cumulative.last().expect("non-empty");
    let taken = order.partition_point(|&k| net.node(k).radius <= threshold);
    let water = if taken == 0 { 0.0 } else { cumulative[taken - 1] };
    let mut water_mask = vec![false; net.node_count()];
    for &k in &order[..taken] {
        water_mask[k] = true;
    }
    Ok(DrainageResult {
        threshold,
        water_mask,
        achieved_saturation: water / total,
    })
}

/// Picks the smallest node radius whose threshold reaches at least `target`
/// saturation.
pub fn drain_to_saturation(net: &PoreNetwork, target: f64) -> Result<DrainageResult> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Domain(format!("target saturation must lie in (0, 1], got {target}")));
    }
    if net.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    let (order, cumulative) = sorted_cumulative(net);
    let total = *cumulative.last().expect("non-empty");
    let n = order.len();
    let mut k = 0;
    loop {
        // extend to the end of the tie group so equal radii share one fate
        let r = net.node(order[k]).radius;
        while k + 1 < n && net.node(order[k + 1]).radius == r {
            k += 1;
        }
        if cumulative[k] / total >= target || k + 1 == n {
            break;
        }
        k += 1;
    }
    let threshold = net.node(order[k]).radius;
    let mut water_mask = vec![false; n];
    for &id in &order[..=k] {
        water_mask[id] = true;
    }
    Ok(DrainageResult {
        threshold,
        water_mask,
        achieved_saturation: cumulative[k] / total,
    })
}

/// Node ids sorted by radius (ties by id) and running volume sums in that order.
fn sorted_cumulative(net: &PoreNetwork) -> (Vec<usize>, Vec<f64>) {
    let mut order: Vec<usize> = (0..net.node_count()).collect();
    order.sort_by(|&a, &b| net.node(a).radius.total_cmp(&net.node(b).radius).then(a.cmp(&b)));
    let mut acc = 0.0;
    let cumulative = order
        .iter()
        .map(|&k| {
            acc += net.node(k).volume;
            acc
        })
        .collect();
    (order, cumulative)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::BallNode;

    fn balls(radii: &[f64]) -> PoreNetwork {
        let nodes = radii
            .iter()
            .enumerate()
            .map(|(k, &r)| BallNode::new(k, [10.0 * k as f64, 0.0, 0.0], r))
            .collect();
        PoreNetwork::new(nodes, vec![]).unwrap()
    }

    #[test]
    fn single_node_is_always_selected() {
        let d = drain_to_saturation(&balls(&[2.0]), 0.5).unwrap();
        assert_eq!(d.water_mask, vec![true]);
        assert_eq!(d.achieved_saturation, 1.0);
    }

    #[test]
    fn full_saturation_keeps_everything() {
        let d = drain_to_saturation(&balls(&[3.0, 1.0, 2.0]), 1.0).unwrap();
        assert_eq!(d.water_count(), 3);
        assert_eq!(d.threshold, 3.0);
        assert_eq!(d.achieved_saturation, 1.0);
    }

    #[test]
    fn smallest_sufficient_threshold() {
        // volumes proportional to 1, 8, 27
        let net = balls(&[1.0, 2.0, 3.0]);
        let d = drain_to_saturation(&net, 0.2).unwrap();
        assert_eq!(d.threshold, 2.0);
        assert_eq!(d.water_mask, vec![true, true, false]);
        assert!((d.achieved_saturation - 9.0 / 36.0).abs() < 1e-15);
        let d = drain_to_saturation(&net, 0.25).unwrap();
        assert_eq!(d.threshold, 2.0);
        let d = drain_to_saturation(&net, 0.26).unwrap();
        assert_eq!(d.threshold, 3.0);
    }

    #[test]
    fn equal_radii_share_a_fate() {
        let d = drain_to_saturation(&balls(&[1.0, 1.0, 1.0, 5.0]), 0.01).unwrap();
        assert_eq!(d.water_mask, vec![true, true, true, false]);
    }

    #[test]
    fn idempotent_at_achieved_saturation() {
        let net = balls(&[1.5, 0.7, 2.2, 1.1, 3.0, 0.9]);
        for t in [0.05, 0.3, 0.6, 0.9] {
            let d = drain_to_saturation(&net, t).unwrap();
            let again = drain_to_saturation(&net, d.achieved_saturation).unwrap();
            assert_eq!(d.water_mask, again.water_mask);
            assert_eq!(drain_by_threshold(&net, d.threshold).unwrap().water_mask, d.water_mask);
        }
    }

    #[test]
    fn rejects_bad_targets() {
        let net = balls(&[1.0]);
        assert!(matches!(drain_to_saturation(&net, 0.0), Err(Error::Domain(_))));
        assert!(matches!(drain_to_saturation(&net, 1.5), Err(Error::Domain(_))));
        let empty = PoreNetwork::new(vec![], vec![]).unwrap();
        assert!(matches!(drain_to_saturation(&empty, 0.5), Err(Error::EmptyNetwork)));
    }
}
