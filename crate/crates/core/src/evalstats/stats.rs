//! Clinical and statistical summaries.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // unused when std is in the crate graph
use num_traits::Float;

use crate::error::{Error, Result};

/// `(EDV - ESV) / EDV * 100`.
pub fn ejection_fraction(edv: f64, esv: f64) -> Result<f64> {
    if !(edv > 0.0) {
        return Err(Error::arg("edv>0", format!("EDV = {}", edv)));
    }
    Ok((edv - esv) / edv * 100.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlandAltman {
    pub bias: f64,
    pub sd: f64,
    pub loa_low: f64,
    pub loa_high: f64,
}

/// Bias and limits of agreement at two standard deviations.
pub fn bland_altman(proposed: &[f64], reference: &[f64]) -> Result<BlandAltman> {
    if proposed.len() != reference.len() {
        return Err(Error::arg(
            "equal-lengths",
            format!("{} vs {} values", proposed.len(), reference.len()),
        ));
    }
    let n = proposed.len();
    if n < 2 {
        return Err(Error::arg("n>=2", format!("{} pair(s)", n)));
    }
    let diffs: Vec<f64> = proposed.iter().zip(reference).map(|(p, r)| p - r).collect();
    let bias = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - bias) * (d - bias)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    Ok(BlandAltman {
        bias,
        sd,
        loa_low: bias - 2.0 * sd,
        loa_high: bias + 2.0 * sd,
    })
}

/// Pearson correlation coefficient.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::arg("equal-lengths", format!("{} vs {} values", xs.len(), ys.len())));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::arg("n>=2", format!("{} value(s)", n)));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::arg("non-constant", "correlation of a constant series"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// `(threshold, fraction of scores strictly greater)` at `count` thresholds
/// evenly spaced on `[0, 1]`.
pub fn dice_reliability_curve(scores: &[f64], count: usize) -> Result<Vec<(f64, f64)>> {
    if scores.is_empty() {
        return Err(Error::arg("non-empty", "no scores"));
    }
    if count < 2 {
        return Err(Error::arg("thresholds>=2", format!("{} threshold(s)", count)));
    }
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::arg("score-in-[0,1]", format!("score {}", s)));
    }
    let n = scores.len() as f64;
    Ok((0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            (t, scores.iter().filter(|&&s| s > t).count() as f64 / n)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KruskalWallisResult {
    pub h: f64,
    /// Chi-squared approximation with `group_count - 1` degrees of freedom.
    pub p_value: f64,
    /// Exact permutation p-value, when the number of group assignments is
    /// small enough to enumerate.
    pub p_exact: Option<f64>,
    pub group_count: usize,
    pub n_total: usize,
    /// Every value was tied (H = 0, p = 1 by convention).
    pub all_tied: bool,
}

/// Mid-ranks (1-based) of `values`.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = alloc::vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

const EXACT_LIMIT: f64 = 200_000.0;

pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KruskalWallisResult> {
    if groups.len() < 2 {
        return Err(Error::arg("groups>=2", format!("{} group(s)", groups.len())));
    }
    if let Some(i) = groups.iter().position(|g| g.is_empty()) {
        return Err(Error::arg("non-empty-groups", format!("group {} is empty", i)));
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    if pooled.iter().any(|v| v.is_nan()) {
        return Err(Error::arg("finite-values", "NaN in sample"));
    }
    let n = pooled.len();
    let nf = n as f64;
    let ranks = average_ranks(&pooled);
    let sizes: Vec<usize> = groups.iter().map(|g| g.len()).collect();
    let g = groups.len();

    // tie correction
    let mut sorted = pooled.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut ties = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    let correction = if n > 1 { 1.0 - ties / (nf * nf * nf - nf) } else { 0.0 };
    if correction <= 0.0 {
        return Ok(KruskalWallisResult {
            h: 0.0,
            p_value: 1.0,
            p_exact: Some(1.0),
            group_count: g,
            n_total: n,
            all_tied: true,
        });
    }
    let stat = |sums: &[f64]| {
        let s: f64 = sums.iter().zip(&sizes).map(|(r, &m)| r * r / m as f64).sum();
        (12.0 / (nf * (nf + 1.0)) * s - 3.0 * (nf + 1.0)) / correction
    };
    let mut sums = alloc::vec![0.0; g];
    let mut off = 0;
    for (k, &m) in sizes.iter().enumerate() {
        sums[k] = ranks[off..off + m].iter().sum();
        off += m;
    }
    let h = stat(&sums).max(0.0);
    let p_value = chi_squared_sf(h, (g - 1) as f64);

    let assignments = multinomial(n, &sizes);
    let p_exact = (assignments <= EXACT_LIMIT).then(|| {
        let mut caps = sizes.clone();
        let mut acc = alloc::vec![0.0; g];
        let mut hits = 0u64;
        let mut total = 0u64;
        enumerate(&ranks, 0, &mut caps, &mut acc, &mut |s| {
            total += 1;
            if stat(s) >= h - 1e-9 {
                hits += 1;
            }
        });
        hits as f64 / total as f64
    });
    Ok(KruskalWallisResult {
        h,
        p_value,
        p_exact,
        group_count: g,
        n_total: n,
        all_tied: false,
    })
}

fn multinomial(n: usize, sizes: &[usize]) -> f64 {
    let ln = libm::lgamma(n as f64 + 1.0) - sizes.iter().map(|&m| libm::lgamma(m as f64 + 1.0)).sum::<f64>();
    ln.exp()
}

fn enumerate(ranks: &[f64], pos: usize, caps: &mut [usize], acc: &mut [f64], visit: &mut impl FnMut(&[f64])) {
    if pos == ranks.len() {
        visit(acc);
        return;
    }
    for k in 0..caps.len() {
        if caps[k] == 0 {
            continue;
        }
        caps[k] -= 1;
        acc[k] += ranks[pos];
        enumerate(ranks, pos + 1, caps, acc, visit);
        acc[k] -= ranks[pos];
        caps[k] += 1;
    }
}

/// Upper tail `P(X > x)` of the chi-squared distribution with `k` degrees of
/// freedom.
pub fn chi_squared_sf(x: f64, k: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(k / 2.0, x / 2.0)
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let ln_pre = -x + a * x.ln() - libm::lgamma(a);
    if x < a + 1.0 {
        // series for P
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..1000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        (1.0 - sum * ln_pre.exp()).clamp(0.0, 1.0)
    } else {
        // Lentz continued fraction for Q
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (ln_pre.exp() * h).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn ef_examples() {
        assert_eq!(ejection_fraction(100.0, 40.0).unwrap(), 60.0);
        assert_eq!(ejection_fraction(50.0, 50.0).unwrap(), 0.0);
        assert_eq!(ejection_fraction(0.0, 1.0).unwrap_err().rule(), "edv>0");
    }

    #[test]
    fn bland_altman_hand_example() {
        let ba = bland_altman(&[12.0, 18.0], &[10.0, 20.0]).unwrap();
        assert_eq!(ba.bias, 0.0);
        assert!((ba.sd - 8.0f64.sqrt()).abs() < 1e-12);
        assert!((ba.loa_high - 2.0 * 8.0f64.sqrt()).abs() < 1e-12);
        let same = bland_altman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((same.bias, same.sd), (0.0, 0.0));
        assert!(bland_altman(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn correlation_signs() {
        let xs = [1.0, 2.5, 3.0, 7.0];
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((correlation(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        assert!((correlation(&xs, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(correlation(&xs, &[1.0; 4]).unwrap_err().rule(), "non-constant");
    }

    #[test]
    fn reliability_curve_is_strict() {
        let c = dice_reliability_curve(&[0.2, 0.8], 3).unwrap();
        assert_eq!(c, vec![(0.0, 1.0), (0.5, 0.5), (1.0, 0.0)]);
        let ones = dice_reliability_curve(&[1.0; 5], 11).unwrap();
        assert!(ones[..10].iter().all(|&(_, f)| f == 1.0));
        assert!(dice_reliability_curve(&[], 3).is_err());
    }

    #[test]
    fn kruskal_wallis_hand_example() {
        let r = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]]).unwrap();
        assert!((r.h - 7.2).abs() < 1e-12);
        assert!((r.p_value - (-3.6f64).exp()).abs() < 1e-12);
        // 6 of the 1680 assignments reach H = 7.2
        assert!((r.p_exact.unwrap() - 6.0 / 1680.0).abs() < 1e-15);
    }

    #[test]
    fn kruskal_wallis_ties() {
        let r = kruskal_wallis(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(r.h.abs() < 1e-12);
        assert!(r.p_value > 0.9);
        let t = kruskal_wallis(&[vec![3.0, 3.0], vec![3.0]]).unwrap();
        assert!(t.all_tied && t.h == 0.0 && t.p_value == 1.0);
    }

    #[test]
    fn chi_squared_tail_matches_statrs() {
        for &k in &[1.0, 2.0, 3.0, 5.0, 10.0] {
            let d = ChiSquared::new(k).unwrap();
            for &x in &[0.01, 0.5, 1.0, 2.0, 4.5, 9.0, 20.0, 60.0] {
                let want = 1.0 - d.cdf(x);
                let got = chi_squared_sf(x, k);
                assert!((got - want).abs() < 1e-10, "k={} x={} {} vs {}", k, x, got, want);
            }
        }
    }
}
