//! Composite Gauss–Legendre quadrature.

/// Gauss–Legendre rules of every order up to a maximum, on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    rules: Vec<(Vec<f64>, Vec<f64>)>,
    max_points: usize,
}

fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Shortest rule used on a short panel.
const MIN_PANEL_POINTS: usize = 8;

impl GaussLegendre {
    pub fn new(max_points: usize) -> Self {
        let max_points = max_points.max(MIN_PANEL_POINTS);
        let rules = (0..=max_points)
            .map(|n| if n < 2 { (vec![], vec![]) } else { legendre_rule(n) })
            .collect();
        Self { rules, max_points }
    }

    pub fn max_points(&self) -> usize {
        self.max_points
    }

    pub fn rule(&self, n: usize) -> (&[f64], &[f64]) {
        let (x, w) = &self.rules[n.clamp(2, self.max_points)];
        (x, w)
    }

    /// Integrates `f` over `[a, b]` (any order of endpoints) with unit-length
    /// panels carrying `max_points` nodes each; shorter panels use
    /// proportionally fewer nodes, never below eight.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let len = (b - a).abs();
        let panels = len.ceil().max(1.0) as usize;
        let h = (b - a) / panels as f64;
        let per_panel = ((self.max_points as f64) * h.abs()).ceil() as usize;
        let (x, w) = self.rule(per_panel.max(MIN_PANEL_POINTS));
        let mut total = 0.0;
        for k in 0..panels {
            let lo = a + k as f64 * h;
            let mid = lo + 0.5 * h;
            let mut acc = 0.0;
            for (xi, wi) in x.iter().zip(w) {
                acc += wi * f(mid + 0.5 * h * xi);
            }
            total += 0.5 * h * acc;
        }
        total
    }

    /// Like [`integrate`](Self::integrate) but splits the interval at the
    /// given breakpoints, where the integrand may have a kink.
    pub fn integrate_with_breaks(&self, a: f64, b: f64, breaks: &[f64], f: impl Fn(f64) -> f64) -> f64 {
        let (lo, hi, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&c| c > lo && c < hi).collect();
        cuts.sort_by(|x, y| x.total_cmp(y));
        let mut total = 0.0;
        let mut start = lo;
        for c in cuts.into_iter().chain(std::iter::once(hi)) {
            total += self.integrate(start, c, &f);
            start = c;
        }
        sign * total
    }
}
