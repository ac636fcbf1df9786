use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// One-sided paired t-test of `H1: mean(baseline - candidate) > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub n: usize,
    pub mean_difference: f64,
    pub t_statistic: Option<f64>,
    pub p_value: f64,
}

pub fn paired_one_sided(baseline: &[f64], candidate: &[f64]) -> Option<PairedTest> {
    let n = baseline.len();
    if n != candidate.len() || n < 2 {
        return None;
    }
    let d: Vec<f64> = baseline.iter().zip(candidate).map(|(b, c)| b - c).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    if se == 0.0 {
        // every pair differs by the same amount
        let p = if mean > 0.0 { 0.0 } else { 1.0 };
        return Some(PairedTest { n, mean_difference: mean, t_statistic: None, p_value: p });
    }
    let t = mean / se;
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).ok()?;
    Some(PairedTest { n, mean_difference: mean, t_statistic: Some(t), p_value: 1.0 - dist.cdf(t) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        // d = {1, 2, 3, 4}: mean 2.5, s = 1.29099, t = 3.87298, df 3
        let t = paired_one_sided(&[11.0, 12.0, 13.0, 14.0], &[10.0; 4]).unwrap();
        assert!((t.t_statistic.unwrap() - 3.872983346).abs() < 1e-8);
        // upper tail of t(3) at 3.873 is 0.0152331
        assert!((t.p_value - 0.0152331).abs() < 1e-6, "{}", t.p_value);
    }

    #[test]
    fn constant_difference() {
        assert_eq!(paired_one_sided(&[5.0, 6.0], &[4.0, 5.0]).unwrap().p_value, 0.0);
        assert_eq!(paired_one_sided(&[4.0, 5.0], &[4.0, 5.0]).unwrap().p_value, 1.0);
    }

    #[test]
    fn too_few_pairs() {
        assert!(paired_one_sided(&[1.0], &[0.0]).is_none());
        assert!(paired_one_sided(&[1.0, 2.0], &[0.0]).is_none());
    }
}
