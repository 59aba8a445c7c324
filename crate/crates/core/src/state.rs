use crate::fluid::{FluidModel, PhaseId};

/// Phase pressures at one time level, one entry per degree of freedom, with
/// the gas saturation derived once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    p_g: Vec<f64>,
    p_w: Vec<f64>,
    s_g: Vec<f64>,
}

impl State {
    pub fn new(fluid: &FluidModel, p_g: Vec<f64>, p_w: Vec<f64>) -> Self {
        assert_eq!(p_g.len(), p_w.len(), "phase pressure vectors differ in length");
        let s_g = p_g.iter().zip(&p_w).map(|(&g, &w)| fluid.coupling(g, w).0).collect();
        Self { p_g, p_w, s_g }
    }

    pub fn zeros(n: usize) -> Self {
        Self { p_g: vec![0.0; n], p_w: vec![0.0; n], s_g: vec![0.0; n] }
    }

    /// Unknown vector `[p_g, p_w]`.
    pub fn from_unknowns(fluid: &FluidModel, x: &[f64]) -> Self {
        let n = x.len() / 2;
        Self::new(fluid, x[..n].to_vec(), x[n..].to_vec())
    }

    pub fn unknowns(&self) -> Vec<f64> {
        let mut x = self.p_g.clone();
        x.extend_from_slice(&self.p_w);
        x
    }

    pub fn len(&self) -> usize {
        self.p_g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_g.is_empty()
    }

    pub fn p_g(&self) -> &[f64] {
        &self.p_g
    }

    pub fn p_w(&self) -> &[f64] {
        &self.p_w
    }

    pub fn pressure(&self, phase: PhaseId) -> &[f64] {
        match phase {
            PhaseId::Gas => &self.p_g,
            PhaseId::Wetting => &self.p_w,
        }
    }

    pub fn s_g(&self) -> &[f64] {
        &self.s_g
    }

    pub fn s_w(&self) -> Vec<f64> {
        self.s_g.iter().map(|s| 1.0 - s).collect()
    }

    pub fn saturation(&self, phase: PhaseId) -> Vec<f64> {
        match phase {
            PhaseId::Gas => self.s_g.clone(),
            PhaseId::Wetting => self.s_w(),
        }
    }

    /// `p_g - p_w` per degree of freedom.
    pub fn capillary(&self) -> Vec<f64> {
        self.p_g.iter().zip(&self.p_w).map(|(g, w)| g - w).collect()
    }

    pub fn max_abs_diff(&self, other: &State) -> f64 {
        self.p_g
            .iter()
            .chain(&self.p_w)
            .zip(other.p_g.iter().chain(&other.p_w))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::FluidParams;

    #[test]
    fn saturations_sum_to_one() {
        let f = FluidModel::new(FluidParams::default()).unwrap();
        let s = State::new(&f, vec![0.3, -1.0, 2.0], vec![0.1, 0.5, 0.0]);
        for (g, w) in s.s_g().iter().zip(s.s_w()) {
            assert_eq!(g + w, 1.0);
        }
        assert_eq!(State::from_unknowns(&f, &s.unknowns()), s);
    }
}
