use serde::{Deserialize, Serialize};

use super::density::Density1D;

/// Copula family joining the two peak marginals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CopulaKind {
    #[default]
    Independence,
}

/// Joint density over (peak week, peak intensity).
#[derive(Debug, Clone, PartialEq)]
pub struct JointDensity2D {
    pub week: Density1D,
    pub intensity: Density1D,
    pub copula: CopulaKind,
}

pub fn joint_independence(week: Density1D, intensity: Density1D) -> JointDensity2D {
    JointDensity2D {
        week,
        intensity,
        copula: CopulaKind::Independence,
    }
}

impl JointDensity2D {
    pub fn pdf(&self, t: f64, h: f64) -> f64 {
        match self.copula {
            CopulaKind::Independence => self.week.pdf(t) * self.intensity.pdf(h),
        }
    }

    pub fn log_pdf(&self, t: f64, h: f64) -> f64 {
        log_joint_at(self, t, h)
    }

    /// Log density and its partial derivatives in `t` and `h`.
    ///
    /// Derivatives are zero wherever the log density is `-inf`.
    pub fn log_pdf_with_grad(&self, t: f64, h: f64) -> (f64, f64, f64) {
        match self.copula {
            CopulaKind::Independence => {
                let (fw, dw) = self.week.pdf_with_slope(t);
                let (fi, di) = self.intensity.pdf_with_slope(h);
                if fw > 0.0 && fi > 0.0 {
                    (fw.ln() + fi.ln(), dw / fw, di / fi)
                } else {
                    (f64::NEG_INFINITY, 0.0, 0.0)
                }
            }
        }
    }
}

/// `log f(tau, rho)`; `-inf` outside the support.
pub fn log_joint_at(joint: &JointDensity2D, tau: f64, rho: f64) -> f64 {
    match joint.copula {
        CopulaKind::Independence => joint.week.log_pdf(tau) + joint.intensity.log_pdf(rho),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square() {
        let j = joint_independence(
            Density1D::uniform(0.0, 1.0).unwrap(),
            Density1D::uniform(0.0, 1.0).unwrap(),
        );
        assert_eq!(j.pdf(0.3, 0.8), 1.0);
        assert_eq!(log_joint_at(&j, 0.3, 0.8), 0.0);
        assert_eq!(log_joint_at(&j, 1.3, 0.8), f64::NEG_INFINITY);
        assert_eq!(log_joint_at(&j, 0.3, -0.1), f64::NEG_INFINITY);
        assert_eq!(j.log_pdf_with_grad(2.0, 2.0), (f64::NEG_INFINITY, 0.0, 0.0));
    }
}
