use nalgebra::Vector3;

use super::contacts::Contact;

/// Antipodal pair and how deep inside both friction cones its grasp line
/// sits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AntipodalPair {
    pub i: usize,
    pub j: usize,
    /// `1 - worst_angle / atan(mu)`, in `[0, 1]`.
    pub margin: f64,
}

/// Cosine of the angle between the line `from -> to` and the inward normal at
/// `from`; `None` for coincident points.
fn line_cos(from: &Contact, to: &Contact) -> Option<f64> {
    let d = Vector3::from(to.position) - Vector3::from(from.position);
    let len = d.norm();
    if len < 1e-12 {
        return None;
    }
    Some(d.dot(&Vector3::from(from.normal)) / len)
}

/// Calls `f` for every pair whose connecting line lies within both
/// friction cones.
pub fn for_each_antipodal_pair(contacts: &[Contact], mut f: impl FnMut(AntipodalPair)) {
    for i in 0..contacts.len() {
        for j in i + 1..contacts.len() {
            let mu = contacts[i].mu.min(contacts[j].mu);
            let half_angle = mu.atan();
            let cos_limit = half_angle.cos();
            let (Some(ci), Some(cj)) = (line_cos(&contacts[i], &contacts[j]), line_cos(&contacts[j], &contacts[i])) else {
                continue;
            };
            let worst = ci.min(cj);
            if worst < cos_limit {
                continue;
            }
            let margin = (1.0 - worst.clamp(-1.0, 1.0).acos() / half_angle).clamp(0.0, 1.0);
            f(AntipodalPair { i, j, margin });
        }
    }
}

/// Pair with the largest cone margin; the first such pair on ties.
pub fn best_antipodal_pair(contacts: &[Contact]) -> Option<AntipodalPair> {
    let mut best: Option<AntipodalPair> = None;
    for_each_antipodal_pair(contacts, |p| {
        if best.is_none_or(|b| p.margin > b.margin) {
            best = Some(p);
        }
    });
    best
}

/// Two-finger antipodal criterion: some contact pair whose connecting line
/// is within `atan(mu)` of both inward normals.
pub fn force_closure(contacts: &[Contact]) -> bool {
    for i in 0..contacts.len() {
        for j in i + 1..contacts.len() {
            let cos_limit = contacts[i].mu.min(contacts[j].mu).atan().cos();
            if let (Some(ci), Some(cj)) = (line_cos(&contacts[i], &contacts[j]), line_cos(&contacts[j], &contacts[i])) {
                if ci >= cos_limit && cj >= cos_limit {
                    return true;
                }
            }
        }
    }
    false
}
