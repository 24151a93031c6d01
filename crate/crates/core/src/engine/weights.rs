use serde::Serialize;

use super::EngineError;
use crate::models::LoadData;

/// Priority weights `w^1 > ... > w^n >= 0`.
///
/// Levels are 1-based. Level 0 is a virtual level of infinite weight and
/// level `n + 1` a virtual level of weight zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightScheme {
    weights: Vec<f64>,
}

impl WeightScheme {
    pub fn new(weights: Vec<f64>) -> Result<Self, EngineError> {
        if weights.is_empty() {
            return Err(EngineError::Weights("no levels".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(EngineError::Weights("weights must be finite and nonnegative".into()));
        }
        if weights.windows(2).any(|p| p[0] <= p[1]) {
            return Err(EngineError::Weights("weights must strictly decrease".into()));
        }
        Ok(WeightScheme { weights })
    }

    pub fn levels(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `w^k` for `k` in `0..=n+1`.
    pub fn w(&self, k: usize) -> f64 {
        match k {
            0 => f64::INFINITY,
            k if k > self.weights.len() => 0.0,
            k => self.weights[k - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelViolation {
    pub level: usize,
    pub weight: f64,
    /// `Σ_{k>j} w^k |L^k|`.
    pub lower_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceViolation {
    pub higher: String,
    pub lower: String,
    /// `w^{k1} / P_i` and `w^{k2} / P_j`.
    pub higher_ratio: f64,
    pub lower_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightReport {
    pub level_counts: Vec<usize>,
    pub margin: f64,
    pub separation: Vec<LevelViolation>,
    pub dominance: Vec<DominanceViolation>,
}

impl WeightReport {
    /// Each level outweighs all lower levels together.
    pub fn separation_holds(&self) -> bool {
        self.separation.is_empty()
    }

    /// Every per-kW weight dominates those of lower levels by the margin.
    pub fn dominance_holds(&self) -> bool {
        self.dominance.is_empty()
    }
}

/// Checks both weighting conditions against a set of loads.
///
/// Separation (`w^j > Σ_{k>j} w^k |L^k|`) is exact. Dominance of
/// `w^{k1} / P_i` over `w^{k2} / P_j` for `k1 < k2` needs a factor of at
/// least `margin`.
pub fn validate_weights(ws: &WeightScheme, loads: &[LoadData], margin: f64) -> WeightReport {
    let n = ws.levels();
    let mut counts = vec![0usize; n];
    for l in loads {
        if (1..=n).contains(&l.level) {
            counts[l.level - 1] += 1;
        }
    }

    let separation = (1..=n)
        .filter_map(|j| {
            let lower_total: f64 = (j + 1..=n).map(|k| ws.w(k) * counts[k - 1] as f64).sum();
            (ws.w(j) <= lower_total).then(|| LevelViolation {
                level: j,
                weight: ws.w(j),
                lower_total,
            })
        })
        .collect();

    let ratio = |l: &LoadData| {
        let w = ws.w(l.level);
        if w == 0.0 {
            0.0
        } else if l.kw <= 0.0 {
            f64::INFINITY
        } else {
            w / l.kw
        }
    };
    let mut dominance = Vec::new();
    for hi in loads {
        for lo in loads.iter().filter(|lo| lo.level > hi.level) {
            let (a, b) = (ratio(hi), ratio(lo));
            let holds = b == 0.0 || (a.is_infinite() && b.is_finite()) || a >= margin * b;
            if !holds {
                dominance.push(DominanceViolation {
                    higher: hi.id.clone(),
                    lower: lo.id.clone(),
                    higher_ratio: a,
                    lower_ratio: b,
                });
            }
        }
    }

    WeightReport {
        level_counts: counts,
        margin,
        separation,
        dominance,
    }
}

/// Tolerance for comparing objective values of size `w`.
pub(crate) fn objective_tol(w: f64) -> f64 {
    1e-6 * w.abs().max(1.0)
}

/// Level `K*` with `w^{K*} <= W_sdp - W_int < w^{K*-1}`.
///
/// A gap within solver tolerance below a weight counts as reaching it, so
/// a level is never pruned on rounding noise. A negative gap is clamped to
/// zero.
pub fn identify_k_star(w_sdp: f64, w_int: f64, ws: &WeightScheme) -> usize {
    let gap = (w_sdp - w_int).max(0.0) + objective_tol(w_sdp);
    (1..=ws.levels())
        .find(|&k| ws.w(k) > 0.0 && ws.w(k) <= gap)
        .unwrap_or(ws.levels() + 1)
}

/// Number of level-`K*` loads the gap can still pay for:
/// `floor((W_sdp - W_int) / w^{K*})`, with the same tolerance as
/// [`identify_k_star`].
pub fn compute_n_re(w_sdp: f64, w_int: f64, w_k: f64) -> Result<usize, EngineError> {
    if !(w_k > 0.0) {
        return Err(EngineError::ZeroWeight);
    }
    let gap = (w_sdp - w_int).max(0.0) + objective_tol(w_sdp);
    Ok((gap / w_k).floor() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(id: &str, level: usize, kw: f64) -> LoadData {
        LoadData {
            id: id.into(),
            bus: 0,
            demand: vec![],
            weight: 0.0,
            level,
            kw,
        }
    }

    #[test]
    fn scheme_rejects_bad_orders() {
        assert!(WeightScheme::new(vec![]).is_err());
        assert!(WeightScheme::new(vec![1.0, 1.0]).is_err());
        assert!(WeightScheme::new(vec![1.0, -1.0]).is_err());
        let ws = WeightScheme::new(vec![100.0, 10.0, 0.2]).unwrap();
        assert_eq!(ws.w(0), f64::INFINITY);
        assert_eq!(ws.w(3), 0.2);
        assert_eq!(ws.w(4), 0.0);
    }

    #[test]
    fn thirteen_node_levels_separate() {
        let ws = WeightScheme::new(vec![100.0, 10.0, 0.2]).unwrap();
        let loads = [
            load("675", 1, 843.0),
            load("645", 1, 170.0),
            load("634", 2, 400.0),
            load("646", 2, 230.0),
            load("632", 3, 100.0),
            load("671", 3, 1425.0),
            load("611", 3, 170.0),
        ];
        let r = validate_weights(&ws, &loads, 10.0);
        assert_eq!(r.level_counts, vec![2, 2, 3]);
        assert!(r.separation_holds());
    }

    #[test]
    fn separation_fails_when_lower_level_is_crowded() {
        let ws = WeightScheme::new(vec![5.0, 1.0]).unwrap();
        let loads: Vec<LoadData> = (0..6).map(|i| load(&i.to_string(), 2, 10.0)).collect();
        let r = validate_weights(&ws, &loads, 10.0);
        assert_eq!(r.separation.len(), 1);
        assert_eq!(r.separation[0].lower_total, 6.0);
    }

    #[test]
    fn single_level_is_vacuous() {
        let ws = WeightScheme::new(vec![1.0]).unwrap();
        let r = validate_weights(&ws, &[load("a", 1, 1.0), load("b", 1, 5.0)], 10.0);
        assert!(r.separation_holds() && r.dominance_holds());
    }

    #[test]
    fn dominance_uses_margin() {
        let ws = WeightScheme::new(vec![10.0, 1.0]).unwrap();
        // 10/100 = 0.1 against 1/20 = 0.05: a factor of two only
        let loads = [load("big", 1, 100.0), load("small", 2, 20.0)];
        assert!(!validate_weights(&ws, &loads, 10.0).dominance_holds());
        assert!(validate_weights(&ws, &loads, 2.0).dominance_holds());
    }

    #[test]
    fn k_star_examples() {
        let ws = WeightScheme::new(vec![100.0, 10.0, 0.2]).unwrap();
        assert_eq!(identify_k_star(214.86, 210.0, &ws), 3);
        assert_eq!(identify_k_star(210.31, 210.2, &ws), 4);
        assert_eq!(identify_k_star(350.0, 210.0, &ws), 1);
        assert_eq!(identify_k_star(209.9999999, 210.0, &ws), 4);
        // on a boundary, and just under it, the gap reaches the level
        assert_eq!(identify_k_star(220.0, 210.0, &ws), 2);
        assert_eq!(identify_k_star(219.99999, 210.0, &ws), 2);
        assert_eq!(identify_k_star(219.99, 210.0, &ws), 3);
    }

    #[test]
    fn n_re_examples() {
        assert_eq!(compute_n_re(214.86, 210.0, 0.2).unwrap(), 24);
        assert_eq!(compute_n_re(10.2, 10.0, 0.2).unwrap(), 1);
        assert_eq!(compute_n_re(10.1999999, 10.0, 0.2).unwrap(), 1);
        assert_eq!(compute_n_re(215.0, 210.0, 10.0).unwrap(), 0);
        assert_eq!(compute_n_re(1.0, 0.0, 0.0), Err(EngineError::ZeroWeight));
    }
}
