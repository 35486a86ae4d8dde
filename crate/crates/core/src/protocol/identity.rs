//! Numeric check of the telescoping identity
//! `sum_i I(A^{i-1}; B_i | C, B_{i+1}^n) = sum_i I(B_{i+1}^n; A_i | C, A^{i-1})`
//! on an explicit joint distribution.

use serde::{Deserialize, Serialize};

use super::{guard, ProtocolError};
use crate::prob::{conditional_mutual_information, JointPmf};

/// Joint cells allowed for the check.
const CELL_CAP: f64 = 1_048_576.0; // 2^20

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub deviation: f64,
}

/// `a_axes` and `b_axes` name the sequences `A_1..A_n` and `B_1..B_n` in
/// order; `c_axes` is the common conditioning variable (possibly empty).
pub fn csiszar_identity_check(
    joint: &JointPmf,
    a_axes: &[&str],
    b_axes: &[&str],
    c_axes: &[&str],
) -> Result<IdentityCheck, ProtocolError> {
    if a_axes.len() != b_axes.len() || a_axes.is_empty() {
        return Err(ProtocolError::InvalidInput(
            "need equally long, non-empty A and B sequences".into(),
        ));
    }
    let cells: f64 = joint.sizes().iter().map(|&s| s as f64).product();
    guard("identity joint", cells.log2(), CELL_CAP.log2())?;
    let n = a_axes.len();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for i in 0..n {
        if i > 0 {
            let mut cond: Vec<&str> = c_axes.to_vec();
            cond.extend_from_slice(&b_axes[i + 1..]);
            lhs += conditional_mutual_information(joint, &a_axes[..i], &[b_axes[i]], &cond)?;
        }
        if i + 1 < n {
            let mut cond: Vec<&str> = c_axes.to_vec();
            cond.extend_from_slice(&a_axes[..i]);
            rhs += conditional_mutual_information(joint, &b_axes[i + 1..], &[a_axes[i]], &cond)?;
        }
    }
    Ok(IdentityCheck {
        lhs,
        rhs,
        deviation: (lhs - rhs).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::Axis;
    use crate::seed::derive_rng;
    use rand::Rng;

    #[test]
    fn holds_on_random_joints() {
        let mut rng = derive_rng(5, "identity", &[]);
        let names = ["A1", "A2", "A3", "B1", "B2", "B3", "C"];
        let axes: Vec<Axis> = names.iter().map(|n| Axis::new(*n, 2)).collect();
        for _ in 0..5 {
            let mut w: Vec<f64> = (0..128).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            let j = JointPmf::new(axes.clone(), w).unwrap();
            let r = csiszar_identity_check(&j, &names[..3], &names[3..6], &["C"]).unwrap();
            assert!(r.deviation < 1e-10, "{r:?}");
            assert!(r.lhs > 0.0);
        }
    }

    #[test]
    fn rejects_mismatched_lengths() {
        let j = JointPmf::new(vec![Axis::new("A1", 2), Axis::new("B1", 2)], vec![0.25; 4]).unwrap();
        assert!(csiszar_identity_check(&j, &["A1"], &[], &[]).is_err());
    }
}
