/// Slack on the cumulative-mass comparison so that sums like 0.6 + 0.3
/// count as reaching 0.9.
const MASS_SLACK: f64 = 1e-12;

/// Keep the smallest set of most probable actions whose mass reaches `p`,
/// zero the rest and renormalize. Equal probabilities are ranked by lower
/// index first.
pub fn apply_top_p_mask(probs: &[f64], p: f64) -> Vec<f64> {
    if p >= 1.0 || probs.is_empty() {
        return probs.to_vec();
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut kept = vec![false; probs.len()];
    let mut mass = 0.0;
    for &i in &order {
        kept[i] = true;
        mass += probs[i];
        if mass >= p - MASS_SLACK {
            break;
        }
    }
    probs
        .iter()
        .zip(&kept)
        .map(|(&x, &k)| if k { x / mass } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let m = apply_top_p_mask(&[0.5, 0.3, 0.15, 0.05], 0.9);
        let expect = [0.5 / 0.95, 0.3 / 0.95, 0.15 / 0.95, 0.0];
        for (a, b) in m.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(apply_top_p_mask(&[0.5, 0.3, 0.2], 1.0), vec![0.5, 0.3, 0.2]);
        assert_eq!(apply_top_p_mask(&[0.25; 4], 0.9), vec![0.25; 4]);
        // tie at the boundary keeps the lower index
        let m = apply_top_p_mask(&[0.3, 0.4, 0.3], 0.6);
        assert!((m[0] - 3.0 / 7.0).abs() < 1e-15 && (m[1] - 4.0 / 7.0).abs() < 1e-15);
        assert_eq!(m[2], 0.0);
        assert_eq!(apply_top_p_mask(&[0.6, 0.3, 0.1], 0.9)[2], 0.0);
    }

    proptest! {
        #[test]
        fn preserves_argmax_and_normalizes(
            raw in proptest::collection::vec(0.0f64..1.0, 1..12),
            p in 0.01f64..1.0,
        ) {
            let s: f64 = raw.iter().sum();
            prop_assume!(s > 1e-6);
            let probs: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let m = apply_top_p_mask(&probs, p);
            prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let arg = |v: &[f64]| v.iter().enumerate().fold(0, |b, (i, &x)| if x > v[b] { i } else { b });
            prop_assert_eq!(arg(&probs), arg(&m));
        }
    }
}
