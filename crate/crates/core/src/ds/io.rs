//! JSON serialization of mixture models.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;

use super::{DsError, LinearSubsystem, Mat2, MixtureModel};

#[derive(Serialize, Deserialize)]
struct ComponentJson {
    #[serde(rename = "A")]
    a: [f64; 4],
    b: [f64; 2],
    mu: [f64; 2],
    #[serde(rename = "Sigma")]
    sigma: [f64; 4],
    pi: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    #[serde(rename = "K")]
    k: usize,
    eps_stab: f64,
    attractor: [f64; 2],
    components: Vec<ComponentJson>,
}

fn row_major(m: &Mat2) -> [f64; 4] {
    [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]
}

fn from_row_major(v: [f64; 4]) -> Mat2 {
    Mat2::new(v[0], v[1], v[2], v[3])
}

impl MixtureModel {
    /// Pretty JSON with row-major matrices. Floats are written with
    /// round-trip precision.
    pub fn to_json(&self) -> String {
        let doc = ModelJson {
            k: self.k(),
            eps_stab: self.eps_stab,
            attractor: [self.attractor.x, self.attractor.y],
            components: (0..self.k())
                .map(|i| ComponentJson {
                    a: row_major(&self.components[i].a),
                    b: [self.components[i].b.x, self.components[i].b.y],
                    mu: [self.means[i].x, self.means[i].y],
                    sigma: row_major(&self.covariances[i]),
                    pi: self.priors[i],
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DsError> {
        let doc: ModelJson = serde_json::from_str(text).map_err(|e| DsError::Parse(e.to_string()))?;
        if doc.k != doc.components.len() {
            return Err(DsError::Parse(format!("K = {} but {} components listed", doc.k, doc.components.len())));
        }
        let mut components = Vec::new();
        let mut means = Vec::new();
        let mut covariances = Vec::new();
        let mut priors = Vec::new();
        for c in doc.components {
            components.push(LinearSubsystem { a: from_row_major(c.a), b: Vec2::new(c.b[0], c.b[1]) });
            means.push(Vec2::new(c.mu[0], c.mu[1]));
            covariances.push(from_row_major(c.sigma));
            priors.push(c.pi);
        }
        Self::new(components, means, covariances, priors, Vec2::new(doc.attractor[0], doc.attractor[1]), doc.eps_stab)
    }
}
