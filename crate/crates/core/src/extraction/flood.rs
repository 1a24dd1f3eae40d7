use super::ExtractionError;
use crate::field::SemanticPointField;

/// Parameters of the DINO-gated region growing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthParams {
    pub theta_dino: f64,
    pub radius: f64,
}

/// Normalized mean DINO feature of the flagged points, summed in index order.
pub(crate) fn mean_direction(field: &SemanticPointField, member: &[bool]) -> Vec<f64> {
    let d = field.dims().0;
    let mut sum = vec![0.0f64; d];
    for (i, _) in member.iter().enumerate().filter(|(_, &m)| m) {
        for (s, &x) in sum.iter_mut().zip(field.dino(i)) {
            *s += x as f64;
        }
    }
    let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        sum.iter_mut().for_each(|x| *x /= norm);
    }
    sum
}

pub(crate) fn similarity(row: &[f32], direction: &[f64]) -> f64 {
    row.iter().zip(direction).map(|(&x, &m)| x as f64 * m).sum()
}

/// Layer-synchronous region growing.
///
/// Each round the candidate layer is every point of `restrict` within
/// `radius` of an accepted point, not yet accepted, whose DINO feature has
/// dot product at least `theta_dino` with the normalized mean of the
/// accepted set. The whole layer is accepted at once, so the result does not
/// depend on visiting order. Returns accepted indices ascending.
pub fn flood_fill(
    field: &SemanticPointField,
    seeds: &[usize],
    params: GrowthParams,
    restrict: &[usize],
) -> Result<Vec<usize>, ExtractionError> {
    if seeds.is_empty() {
        return Err(ExtractionError::NoSeeds);
    }
    if !(params.radius > 0.0) {
        return Err(ExtractionError::InvalidConfig(format!("growth radius {} must be positive", params.radius)));
    }
    let n = field.len();
    let mut allowed = vec![false; n];
    for &i in restrict {
        *allowed.get_mut(i).ok_or(ExtractionError::BadIndex(i))? = true;
    }
    let mut accepted = vec![false; n];
    for &s in seeds {
        if s >= n {
            return Err(ExtractionError::BadIndex(s));
        }
        if !allowed[s] {
            return Err(ExtractionError::SeedOutsideRestrict(s));
        }
        accepted[s] = true;
    }

    let mut frontier = vec![false; n];
    let mut candidates: Vec<usize> = Vec::new();
    let mut push_neighbors = |i: usize, accepted: &[bool], candidates: &mut Vec<usize>| {
        for j in field.radius_neighbors(field.position(i), params.radius) {
            if allowed[j] && !accepted[j] && !frontier[j] {
                frontier[j] = true;
                candidates.push(j);
            }
        }
    };
    for i in (0..n).filter(|&i| accepted[i]) {
        push_neighbors(i, &accepted, &mut candidates);
    }

    loop {
        let mean = mean_direction(field, &accepted);
        candidates.retain(|&j| !accepted[j]);
        candidates.sort_unstable();
        let layer: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&j| similarity(field.dino(j), &mean) >= params.theta_dino)
            .collect();
        if layer.is_empty() {
            break;
        }
        for &j in &layer {
            accepted[j] = true;
        }
        for &j in &layer {
            push_neighbors(j, &accepted, &mut candidates);
        }
    }
    Ok((0..n).filter(|&i| accepted[i]).collect())
}
