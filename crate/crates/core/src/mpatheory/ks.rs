/// Two-sample Kolmogorov–Smirnov statistic `sup_x |F_a(x) - F_b(x)|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "KS needs two nonempty samples");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut sup: f64 = 0.0;
    while i < a.len() && j < b.len() {
        // Step past every copy of the smaller value so ties move together.
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    sup
}

/// Asymptotic 5% critical value `1.36 sqrt((n + m) / (n m))`.
pub fn ks_critical_value(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.36 * ((n + m) / (n * m)).sqrt()
}

/// Piecewise-linear CDF through the order statistics: the `i`-th of `n`
/// sorted values sits at level `i / (n - 1)`. Its quantile is the exact
/// inverse on the sample range.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Self {
        assert!(samples.len() >= 2, "need two samples for an interpolated CDF");
        samples.sort_by(f64::total_cmp);
        Self { sorted: samples }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let s = &self.sorted;
        let n = s.len();
        if x <= s[0] {
            return 0.0;
        }
        if x >= s[n - 1] {
            return 1.0;
        }
        let k = s.partition_point(|&v| v <= x);
        let (a, b) = (s[k - 1], s[k]);
        let frac = if b > a { (x - a) / (b - a) } else { 0.0 };
        (k - 1) as f64 / (n - 1) as f64 + frac / (n - 1) as f64
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let s = &self.sorted;
        let n = s.len();
        let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
        let k = (pos.floor() as usize).min(n - 2);
        let frac = pos - k as f64;
        s[k] + frac * (s[k + 1] - s[k])
    }
}
