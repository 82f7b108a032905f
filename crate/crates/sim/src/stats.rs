//! One-way ANOVA, Tukey-Kramer HSD and Spearman rank correlation.

// the quadrature tables keep every published digit
#![allow(clippy::excessive_precision)]

use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("needs >= 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {0} has fewer than 2 observations")]
    SmallGroup(usize),
    #[error("group {0} holds a non-finite value")]
    NonFinite(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anova {
    pub f: f64,
    pub p: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub ms_between: f64,
    pub ms_within: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn check(groups: &[Vec<f64>]) -> Result<(), StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    for (i, g) in groups.iter().enumerate() {
        if g.len() < 2 {
            return Err(StatsError::SmallGroup(i));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(StatsError::NonFinite(i));
        }
    }
    Ok(())
}

/// Returns `(ms_within, df_within)`.
fn pooled_variance(groups: &[Vec<f64>]) -> (f64, usize) {
    let total: usize = groups.iter().map(Vec::len).sum();
    let df = total - groups.len();
    let ss: f64 = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
        })
        .sum();
    (ss / df as f64, df)
}

/// Equal group means do not need equal sizes. With no spread between group
/// means F is 0 (p = 1); with spread but none inside groups F is +inf
/// (p = 0).
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<Anova, StatsError> {
    check(groups)?;
    let total: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / total as f64;
    let ss_between: f64 = groups
        .iter()
        .map(|g| g.len() as f64 * (mean(g) - grand).powi(2))
        .sum();
    let df_between = groups.len() - 1;
    let (ms_within, df_within) = pooled_variance(groups);
    let ms_between = ss_between / df_between as f64;
    let (f, p) = if ss_between <= f64::EPSILON * grand.abs().max(1.0) * total as f64 {
        (0.0, 1.0)
    } else if ms_within == 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        let f = ms_between / ms_within;
        let dist = FisherSnedecor::new(df_between as f64, df_within as f64)
            .expect("positive degrees of freedom");
        (f, dist.sf(f))
    };
    Ok(Anova {
        f,
        p,
        df_between,
        df_within,
        ms_between,
        ms_within,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TukeyPair {
    pub i: usize,
    pub j: usize,
    /// `mean(j) - mean(i)`.
    pub diff: f64,
    pub lower: f64,
    pub upper: f64,
    pub q: f64,
    pub p_adj: f64,
    pub significant: bool,
}

/// Tukey-Kramer comparisons of every pair `i < j` at family-wise level
/// `alpha`.
pub fn tukey_hsd(groups: &[Vec<f64>], alpha: f64) -> Result<Vec<TukeyPair>, StatsError> {
    check(groups)?;
    let k = groups.len();
    let (mse, df) = pooled_variance(groups);
    let q_crit = qtukey(1.0 - alpha, k as f64, df as f64);
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let diff = means[j] - means[i];
            let se = (mse / 2.0
                * (1.0 / groups[i].len() as f64 + 1.0 / groups[j].len() as f64))
                .sqrt();
            let (q, p_adj) = if se == 0.0 {
                if diff == 0.0 {
                    (0.0, 1.0)
                } else {
                    (f64::INFINITY, 0.0)
                }
            } else {
                let q = diff.abs() / se;
                (q, (1.0 - ptukey(q, k as f64, df as f64)).clamp(0.0, 1.0))
            };
            out.push(TukeyPair {
                i,
                j,
                diff,
                lower: diff - q_crit * se,
                upper: diff + q_crit * se,
                q,
                p_adj,
                significant: p_adj < alpha,
            });
        }
    }
    Ok(out)
}

fn pnorm(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Probability that the range of `cc` standard normals is below `w`
/// (`rr` independent ranges, maximum taken).
fn wprob(w: f64, rr: f64, cc: f64) -> f64 {
    const NLEG: usize = 12;
    const IHALF: usize = 6;
    const C1: f64 = -30.0;
    const C2: f64 = -50.0;
    const C3: f64 = 60.0;
    const BB: f64 = 8.0;
    const WLAR: f64 = 3.0;
    const WINCR1: f64 = 2.0;
    const WINCR2: f64 = 3.0;
    const XLEG: [f64; IHALF] = [
        0.981560634246719250690549090149,
        0.904117256370474856678465866119,
        0.769902674194304687036893833213,
        0.587317954286617447296702418941,
        0.367831498998180193752691536644,
        0.125233408511468915472441369464,
    ];
    const ALEG: [f64; IHALF] = [
        0.047175336386511827194615961485,
        0.106939325995318430960254718194,
        0.160078328543346226334652529543,
        0.203167426723065921749064455810,
        0.233492536538354808760849898925,
        0.249147045813402785000562436043,
    ];

    let qsqz = w * 0.5;
    if qsqz >= BB {
        return 1.0;
    }
    let mut pr_w = 2.0 * pnorm(qsqz) - 1.0;
    pr_w = if pr_w >= (C2 / cc).exp() {
        pr_w.powf(cc)
    } else {
        0.0
    };

    let wincr = if w > WLAR { WINCR1 } else { WINCR2 };
    let mut blb = qsqz;
    let binc = (BB - qsqz) / wincr;
    let mut bub = blb + binc;
    let mut einsum = 0.0;
    let cc1 = cc - 1.0;
    let mut wi = 1.0;
    while wi <= wincr {
        let mut elsum = 0.0;
        let a = 0.5 * (bub + blb);
        let b = 0.5 * (bub - blb);
        for jj in 1..=NLEG {
            let (j, xx) = if IHALF < jj {
                let j = NLEG - jj + 1;
                (j, XLEG[j - 1])
            } else {
                (jj, -XLEG[jj - 1])
            };
            let ac = a + b * xx;
            let qexpo = ac * ac;
            if qexpo > C3 {
                break;
            }
            let pplus = 2.0 * pnorm(ac);
            let pminus = 2.0 * pnorm(ac - w);
            let rinsum = pplus * 0.5 - pminus * 0.5;
            if rinsum >= (C1 / cc1).exp() {
                elsum += ALEG[j - 1] * (-(0.5 * qexpo)).exp() * rinsum.powf(cc1);
            }
        }
        elsum *= 2.0 * b * cc / (2.0 * std::f64::consts::PI).sqrt();
        einsum += elsum;
        blb = bub;
        bub += binc;
        wi += 1.0;
    }

    pr_w += einsum;
    if pr_w <= (C1 / rr).exp() {
        return 0.0;
    }
    pr_w = pr_w.powf(rr);
    pr_w.min(1.0)
}

/// CDF of the studentized range for `k` means and `df` error degrees of
/// freedom (Copenhaver & Holland quadrature).
pub fn ptukey(q: f64, k: f64, df: f64) -> f64 {
    const NLEGQ: usize = 16;
    const IHALFQ: usize = 8;
    const EPS1: f64 = -30.0;
    const EPS2: f64 = 1.0e-14;
    const DHAF: f64 = 100.0;
    const DQUAR: f64 = 800.0;
    const DEIGH: f64 = 5000.0;
    const DLARG: f64 = 25000.0;
    const XLEGQ: [f64; IHALFQ] = [
        0.989400934991649932596154173450,
        0.944575023073232576077988415535,
        0.865631202387831743880467897712,
        0.755404408355003033895101194847,
        0.617876244402643748446671764049,
        0.458016777657227386342419442984,
        0.281603550779258913230460501460,
        0.950125098376374401853193354250e-1,
    ];
    const ALEGQ: [f64; IHALFQ] = [
        0.271524594117540948517805724560e-1,
        0.622535239386478928628438369944e-1,
        0.951585116824927848099251076022e-1,
        0.124628971255533872052476282192,
        0.149595988816576732081501730547,
        0.169156519395002538189312079030,
        0.182603415044923588866763667969,
        0.189450610455068496285396723208,
    ];
    let rr = 1.0;

    if q <= 0.0 {
        return 0.0;
    }
    if df < 2.0 || k < 2.0 {
        return f64::NAN;
    }
    if !q.is_finite() {
        return 1.0;
    }
    if df > DLARG {
        return wprob(q, rr, k);
    }

    let f2 = df * 0.5;
    let mut f2lf = f2 * df.ln() - df * std::f64::consts::LN_2 - ln_gamma(f2);
    let f21 = f2 - 1.0;
    let ff4 = df * 0.25;
    let ulen: f64 = if df <= DHAF {
        1.0
    } else if df <= DQUAR {
        0.5
    } else if df <= DEIGH {
        0.25
    } else {
        0.125
    };
    f2lf += ulen.ln();

    let mut ans = 0.0;
    for i in 1..=50 {
        let mut otsum = 0.0;
        let twa1 = (2 * i - 1) as f64 * ulen;
        for jj in 1..=NLEGQ {
            let (j, t1) = if IHALFQ < jj {
                let j = jj - IHALFQ - 1;
                let t1 = f2lf + f21 * (twa1 + XLEGQ[j] * ulen).ln()
                    - (XLEGQ[j] * ulen + twa1) * ff4;
                (j, t1)
            } else {
                let j = jj - 1;
                let t1 = f2lf + f21 * (twa1 - XLEGQ[j] * ulen).ln()
                    + (XLEGQ[j] * ulen - twa1) * ff4;
                (j, t1)
            };
            if t1 >= EPS1 {
                let qsqz = if IHALFQ < jj {
                    q * ((XLEGQ[j] * ulen + twa1) * 0.5).sqrt()
                } else {
                    q * ((-(XLEGQ[j] * ulen) + twa1) * 0.5).sqrt()
                };
                otsum += wprob(qsqz, rr, k) * ALEGQ[j] * t1.exp();
            }
        }
        if i as f64 * ulen >= 1.0 && otsum <= EPS2 {
            break;
        }
        ans += otsum;
    }
    ans.min(1.0)
}

/// Quantile of the studentized range, by bisection on [`ptukey`].
pub fn qtukey(p: f64, k: f64, df: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while ptukey(hi, k, df) < p {
        hi *= 2.0;
        if hi > 1e6 {
            return f64::INFINITY;
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ptukey(mid, k, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman's rho: Pearson correlation of average ranks. NaN when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anova_small_oracle() {
        let a = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![3.0, 4.0, 5.0]])
            .unwrap();
        assert!((a.f - 3.0).abs() < 1e-12);
        assert!((a.p - 0.125).abs() < 1e-12);
        assert_eq!((a.df_between, a.df_within), (2, 6));
    }

    #[test]
    fn identical_groups() {
        let g = vec![vec![1.0, 2.0, 3.0]; 3];
        let a = one_way_anova(&g).unwrap();
        assert_eq!(a.f, 0.0);
        assert_eq!(a.p, 1.0);
        assert!(tukey_hsd(&g, 0.05).unwrap().iter().all(|p| !p.significant));
    }

    #[test]
    fn zero_within_variance() {
        let a = one_way_anova(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(a.f, f64::INFINITY);
        assert_eq!(a.p, 0.0);
        let t = tukey_hsd(&[vec![1.0, 1.0], vec![2.0, 2.0]], 0.05).unwrap();
        assert!(t[0].significant);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(one_way_anova(&[vec![1.0, 2.0]]), Err(StatsError::TooFewGroups(1)));
        assert_eq!(
            one_way_anova(&[vec![1.0, 2.0], vec![3.0]]),
            Err(StatsError::SmallGroup(1))
        );
        assert_eq!(
            one_way_anova(&[vec![1.0, f64::NAN], vec![3.0, 4.0]]),
            Err(StatsError::NonFinite(0))
        );
    }

    #[test]
    fn ptukey_oracle() {
        let cases = [
            (3.5, 3.0, 10.0, 0.9228966891615896),
            (2.0, 2.0, 5.0, 0.7835627707303147),
            (4.0, 5.0, 20.0, 0.9304128560769541),
            (3.0, 3.0, 1000.0, 0.9139458084788669),
            (1.0, 4.0, 30.0, 0.10651686873078864),
            (5.0, 3.0, 12.0, 0.9894004184264451),
        ];
        for (q, k, df, want) in cases {
            let got = ptukey(q, k, df);
            assert!((got - want).abs() < 1e-7, "ptukey({q},{k},{df}) = {got}, want {want}");
        }
    }

    #[test]
    fn qtukey_oracle() {
        assert!((qtukey(0.95, 3.0, 15.0) - 3.6733776588970946).abs() < 1e-6);
    }

    #[test]
    fn two_separated_groups_differ() {
        // means 0 and 100, unit spread, 20 each
        let g0: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let g1: Vec<f64> = g0.iter().map(|x| x + 100.0).collect();
        let t = tukey_hsd(&[g0, g1], 0.05).unwrap();
        assert!(t[0].significant);
        assert!((t[0].diff - 100.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]) - 0.8).abs() < 1e-12);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }
}
