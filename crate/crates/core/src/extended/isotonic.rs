//! Euclidean projection onto `{lo ≤ q ≤ hi, each column monotone along the
//! s-ordered rows, mean(q) ≥ target}`.
//!
//! Columns are stored contiguously (`q[k * n + i]`). The projection is
//! `clamp(pava(x) + λ, lo, hi)` with the smallest `λ ≥ 0` meeting the mean:
//! PAVA commutes with constant shifts and clamping an isotonic fit gives the
//! box-constrained isotonic fit, so one scalar search finishes the job.

/// Rows with equal `s`, as `(start, len)` runs over the sorted order.
pub fn tie_groups(sorted_s: &[f64]) -> Vec<(usize, usize)> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=sorted_s.len() {
        if i == sorted_s.len() || sorted_s[i] != sorted_s[start] {
            groups.push((start, i - start));
            start = i;
        }
    }
    groups
}

/// Weighted pool-adjacent-violators: nondecreasing least-squares fit of `y`.
pub fn pava(y: &mut [f64], w: &[f64]) {
    pava_with(y, w, &mut Blocks::default());
}

/// Block stack reused across PAVA calls.
#[derive(Debug, Default, Clone)]
pub struct Blocks {
    vals: Vec<f64>,
    wts: Vec<f64>,
    lens: Vec<usize>,
}

pub fn pava_with(y: &mut [f64], w: &[f64], b: &mut Blocks) {
    debug_assert_eq!(y.len(), w.len());
    b.vals.clear();
    b.wts.clear();
    b.lens.clear();
    for (&v, &wt) in y.iter().zip(w) {
        let (mut v, mut wt, mut len) = (v, wt, 1);
        while let Some(&last) = b.vals.last() {
            if last <= v {
                break;
            }
            let lw = b.wts.pop().unwrap();
            b.vals.pop();
            v = (last * lw + v * wt) / (lw + wt);
            wt += lw;
            len += b.lens.pop().unwrap();
        }
        b.vals.push(v);
        b.wts.push(wt);
        b.lens.push(len);
    }
    let mut i = 0;
    for (&v, &len) in b.vals.iter().zip(&b.lens) {
        y[i..i + len].fill(v);
        i += len;
    }
}

/// Unit-weight PAVA in place, scanning backwards for a nonincreasing fit.
fn pava_unit(col: &mut [f64], decreasing: bool, b: &mut Blocks) {
    let n = col.len();
    b.vals.clear();
    b.lens.clear();
    for t in 0..n {
        let mut v = col[if decreasing { n - 1 - t } else { t }];
        let mut len = 1usize;
        while let Some(&last) = b.vals.last() {
            if last <= v {
                break;
            }
            let l = b.lens.pop().unwrap();
            b.vals.pop();
            v = (last * l as f64 + v * len as f64) / (l + len) as f64;
            len += l;
        }
        b.vals.push(v);
        b.lens.push(len);
    }
    let mut t = 0;
    for (&v, &len) in b.vals.iter().zip(&b.lens) {
        for u in t..t + len {
            col[if decreasing { n - 1 - u } else { u }] = v;
        }
        t += len;
    }
}

/// Unweighted isotonic regression, nondecreasing or nonincreasing.
pub fn isotonic(y: &[f64], increasing: bool) -> Vec<f64> {
    let mut v: Vec<f64> = if increasing { y.to_vec() } else { y.iter().rev().copied().collect() };
    pava(&mut v, &vec![1.0; y.len()]);
    if !increasing {
        v.reverse();
    }
    v
}

#[derive(Debug, Clone)]
pub struct ChainProjector {
    n: usize,
    groups: Vec<(usize, usize)>,
    /// Per column: nonincreasing in s when true.
    decreasing: Vec<bool>,
    lo: f64,
    hi: f64,
    min_mean: f64,
}

#[derive(Debug, Default, Clone)]
pub struct Scratch {
    vals: Vec<f64>,
    wts: Vec<f64>,
    blocks: Blocks,
}

impl ChainProjector {
    pub fn new(groups: Vec<(usize, usize)>, decreasing: Vec<bool>, lo: f64, hi: f64, min_mean: f64) -> Self {
        let n = groups.iter().map(|g| g.1).sum();
        debug_assert!(lo < hi && min_mean <= hi);
        ChainProjector { n, groups, decreasing, lo, hi, min_mean }
    }

    pub fn len(&self) -> usize {
        self.n * self.decreasing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn project(&self, x: &mut [f64], scratch: &mut Scratch) {
        debug_assert_eq!(x.len(), self.len());
        for (k, &dec) in self.decreasing.iter().enumerate() {
            self.pava_column(&mut x[k * self.n..(k + 1) * self.n], dec, scratch);
        }
        let target = self.min_mean * x.len() as f64;
        let lambda = self.find_shift(x, target);
        for v in x.iter_mut() {
            *v = (*v + lambda).clamp(self.lo, self.hi);
        }
    }

    fn pava_column(&self, col: &mut [f64], decreasing: bool, s: &mut Scratch) {
        let monotone = if decreasing {
            col.windows(2).all(|w| w[1] <= w[0])
        } else {
            col.windows(2).all(|w| w[1] >= w[0])
        };
        if self.groups.len() == self.n {
            if !monotone {
                pava_unit(col, decreasing, &mut s.blocks);
            }
            return;
        }
        s.vals.clear();
        s.wts.clear();
        let mut push = |g: &(usize, usize)| {
            let mean = col[g.0..g.0 + g.1].iter().sum::<f64>() / g.1 as f64;
            s.vals.push(mean);
            s.wts.push(g.1 as f64);
        };
        if decreasing {
            self.groups.iter().rev().for_each(&mut push);
        } else {
            self.groups.iter().for_each(&mut push);
        }
        pava_with(&mut s.vals, &s.wts, &mut s.blocks);
        let m = self.groups.len();
        for (j, g) in self.groups.iter().enumerate() {
            let v = if decreasing { s.vals[m - 1 - j] } else { s.vals[j] };
            col[g.0..g.0 + g.1].fill(v);
        }
    }

    /// Smallest `λ ≥ 0` with `Σ clamp(u + λ) ≥ target`; the sum is a
    /// nondecreasing piecewise-linear function of `λ`, so a bracketed Newton
    /// iteration lands on the right segment in a few steps.
    fn find_shift(&self, u: &[f64], target: f64) -> f64 {
        let (lo, hi) = (self.lo, self.hi);
        // sum, and the number of entries free to move right / left
        let eval = |l: f64| {
            let (mut sum, mut right, mut left) = (0.0, 0usize, 0usize);
            for &v in u {
                let t = v + l;
                if t <= lo {
                    sum += lo;
                    right += (t == lo) as usize;
                } else if t >= hi {
                    sum += hi;
                    left += (t == hi) as usize;
                } else {
                    sum += t;
                    right += 1;
                    left += 1;
                }
            }
            (sum, right, left)
        };
        let tol = 1e-13 * u.len() as f64;
        let (mut gl, mut right, mut left) = eval(0.0);
        if gl >= target - tol {
            return 0.0;
        }
        let umin = u.iter().copied().fold(f64::INFINITY, f64::min);
        let (mut a, mut b) = (0.0, hi - umin);
        let mut l = 0.0;
        // the mean may fall short of the target by rounding only
        for _ in 0..200 {
            let slope = if gl < target {
                a = l;
                right
            } else {
                b = l;
                left
            } as f64;
            let newton = if slope > 0.0 { l + (target - gl) / slope } else { f64::NAN };
            l = if newton > a && newton < b { newton } else { 0.5 * (a + b) };
            (gl, right, left) = eval(l);
            if (gl - target).abs() <= tol || b - a <= 1e-16 {
                break;
            }
        }
        l
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive isotonic fit: every split into consecutive blocks, block
    /// means, keep the feasible one with the smallest squared error.
    fn brute_isotonic(y: &[f64]) -> Vec<f64> {
        let n = y.len();
        let mut best = (f64::INFINITY, Vec::new());
        for mask in 0u32..(1 << (n - 1)) {
            let mut fit = Vec::with_capacity(n);
            let mut start = 0;
            for i in 0..n {
                if i == n - 1 || mask & (1 << i) != 0 {
                    let m = y[start..=i].iter().sum::<f64>() / (i + 1 - start) as f64;
                    fit.extend(std::iter::repeat_n(m, i + 1 - start));
                    start = i + 1;
                }
            }
            if fit.windows(2).all(|w| w[0] <= w[1] + 1e-15) {
                let sse: f64 = fit.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
                if sse < best.0 {
                    best = (sse, fit);
                }
            }
        }
        best.1
    }

    #[test]
    fn ties_group_equal_s() {
        assert_eq!(tie_groups(&[0.1, 0.2, 0.2, 0.3, 0.3, 0.3]), vec![(0, 1), (1, 2), (3, 3)]);
    }

    proptest! {
        #[test]
        fn pava_matches_brute_force(y in prop::collection::vec(-3.0f64..3.0, 1..=6), inc in any::<bool>()) {
            let fit = isotonic(&y, inc);
            let expect = if inc {
                brute_isotonic(&y)
            } else {
                let r: Vec<f64> = y.iter().rev().copied().collect();
                brute_isotonic(&r).into_iter().rev().collect()
            };
            for (a, b) in fit.iter().zip(&expect) {
                prop_assert!((a - b).abs() < 1e-8);
            }
            prop_assert_eq!(isotonic(&fit, inc), fit);
        }

        #[test]
        fn projection_is_the_nearest_feasible_point(
            x in prop::collection::vec(-0.5f64..1.5, 12),
            v in prop::collection::vec(0.0f64..1.0, 12),
            target in 0.05f64..0.95,
            dirs in prop::collection::vec(any::<bool>(), 3),
        ) {
            // 4 rows (rows 1 and 2 tied) by 3 columns
            let proj = ChainProjector::new(vec![(0, 1), (1, 2), (3, 1)], dirs.clone(), 1e-9, 1.0, target);
            let mut s = Scratch::default();
            let mut y = x.clone();
            proj.project(&mut y, &mut s);
            let feasible = |q: &[f64]| {
                let inbox = q.iter().all(|&t| (1e-9..=1.0).contains(&t));
                let mean = q.iter().sum::<f64>() / q.len() as f64 >= target - 1e-12;
                let mono = (0..3).all(|k| {
                    let c = &q[k * 4..k * 4 + 4];
                    c[1] == c[2] && c.windows(2).all(|w| if dirs[k] { w[1] <= w[0] + 1e-12 } else { w[1] >= w[0] - 1e-12 })
                });
                inbox && mean && mono
            };
            prop_assert!(feasible(&y));
            let mut y2 = y.clone();
            proj.project(&mut y2, &mut s);
            for (a, b) in y.iter().zip(&y2) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            // any other feasible point u satisfies (x - y)·(u - y) ≤ 0
            let mut u = v.clone();
            proj.project(&mut u, &mut s);
            let ip: f64 = x.iter().zip(&y).zip(&u).map(|((a, b), c)| (a - b) * (c - b)).sum();
            prop_assert!(ip <= 1e-9, "ip={}", ip);
        }
    }
}
