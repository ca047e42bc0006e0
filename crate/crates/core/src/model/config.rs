use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contact::ContactParams;
use crate::error::{Error, Result};
use crate::mesh::FeatureSet;

/// The evaluated architectures. Display/parse use the canonical CLI strings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "MGN")]
    MeshGraphNet,
    #[serde(rename = "Transolver")]
    Transolver,
    #[serde(rename = "MeshTransolver")]
    MeshTransolver,
    #[serde(rename = "MeshTransolver+Contact")]
    MeshTransolverContact,
    #[serde(rename = "GeoTransolver")]
    GeoTransolver,
    #[serde(rename = "GeoFLARE")]
    GeoFlare,
    #[serde(rename = "MeshGeoTransolver")]
    MeshGeoTransolver,
    #[serde(rename = "MeshGeoFLARE")]
    MeshGeoFlare,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::MeshGraphNet,
        Family::Transolver,
        Family::MeshTransolver,
        Family::MeshTransolverContact,
        Family::GeoTransolver,
        Family::GeoFlare,
        Family::MeshGeoTransolver,
        Family::MeshGeoFlare,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::MeshGraphNet => "MGN",
            Family::Transolver => "Transolver",
            Family::MeshTransolver => "MeshTransolver",
            Family::MeshTransolverContact => "MeshTransolver+Contact",
            Family::GeoTransolver => "GeoTransolver",
            Family::GeoFlare => "GeoFLARE",
            Family::MeshGeoTransolver => "MeshGeoTransolver",
            Family::MeshGeoFlare => "MeshGeoFLARE",
        }
    }

    /// Pre-MPNN, global processor and post-MPNN stages.
    pub fn is_hybrid(self) -> bool {
        matches!(
            self,
            Family::MeshTransolver | Family::MeshTransolverContact | Family::MeshGeoTransolver | Family::MeshGeoFlare
        )
    }

    pub fn is_pure_attention(self) -> bool {
        matches!(self, Family::Transolver | Family::GeoTransolver | Family::GeoFlare)
    }

    pub fn uses_mesh(self) -> bool {
        !self.is_pure_attention()
    }

    pub fn has_contact(self) -> bool {
        matches!(
            self,
            Family::MeshTransolverContact | Family::MeshGeoTransolver | Family::MeshGeoFlare
        )
    }

    pub fn geometry_aware(self) -> bool {
        matches!(
            self,
            Family::GeoTransolver | Family::GeoFlare | Family::MeshGeoTransolver | Family::MeshGeoFlare
        )
    }

    pub fn mixer(self) -> TokenMixer {
        match self {
            Family::GeoFlare | Family::MeshGeoFlare => TokenMixer::Flare,
            _ => TokenMixer::Dense,
        }
    }

    pub fn feature_set(self) -> FeatureSet {
        if self.is_hybrid() {
            FeatureSet::Hybrid
        } else if self.is_pure_attention() {
            FeatureSet::Attention
        } else {
            FeatureSet::Mesh
        }
    }

    /// `(L_pre, L_attn, L_post)` of the full-scale configuration.
    pub fn full_scale_stages(self) -> (usize, usize, usize) {
        match self {
            Family::MeshGraphNet => (6, 0, 0),
            Family::Transolver => (0, 6, 0),
            Family::MeshTransolver | Family::MeshTransolverContact => (1, 6, 2),
            Family::GeoTransolver | Family::GeoFlare => (0, 4, 0),
            Family::MeshGeoTransolver | Family::MeshGeoFlare => (1, 4, 2),
        }
    }

    pub fn full_scale_contact_k(self) -> Option<usize> {
        match self {
            Family::MeshTransolverContact => Some(32),
            Family::MeshGeoTransolver | Family::MeshGeoFlare => Some(16),
            _ => None,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown family `{s}`")))
    }
}

/// Token interaction inside the global processor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMixer {
    /// Multi-head self-attention over all tokens.
    Dense,
    /// Two-stage low-rank routing through `routes` latent slots.
    Flare,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: Family,
    pub dim: usize,
    pub d_hidden: usize,
    pub tokens: usize,
    pub l_pre: usize,
    pub l_attn: usize,
    pub l_post: usize,
    pub feature_set: FeatureSet,
    pub heads: usize,
    pub mixer: TokenMixer,
    /// Routes for the factorised mixer.
    pub routes: usize,
    /// Learnable per-slice temperature on the slice logits.
    pub sharpen: bool,
    pub geometry_aware: bool,
    pub contact: Option<ContactParams>,
}

impl ModelConfig {
    /// Full-scale hyperparameters: `d_h = 128`, `M = 128`, stage counts and
    /// contact `k` per family.
    pub fn full_scale(family: Family, dim: usize) -> Self {
        let (l_pre, l_attn, l_post) = family.full_scale_stages();
        let tokens = 128;
        Self {
            family,
            dim,
            d_hidden: 128,
            tokens,
            l_pre,
            l_attn,
            l_post,
            feature_set: family.feature_set(),
            heads: 4,
            mixer: family.mixer(),
            routes: (tokens / 4).max(1),
            sharpen: matches!(family, Family::MeshTransolver | Family::MeshTransolverContact),
            geometry_aware: family.geometry_aware(),
            contact: family.full_scale_contact_k().map(|k| ContactParams {
                k,
                ..ContactParams::default()
            }),
        }
    }

    /// Reduced widths and depths for desktop-scale runs; same structure.
    pub fn desk(family: Family, dim: usize) -> Self {
        let mut c = Self::full_scale(family, dim);
        c.d_hidden = 16;
        c.tokens = 8;
        c.routes = 2;
        let (pre, attn, post) = match family {
            Family::MeshGraphNet => (3, 0, 0),
            f if f.is_pure_attention() => (0, 2, 0),
            _ => (1, 1, 2),
        };
        c.l_pre = pre;
        c.l_attn = attn;
        c.l_post = post;
        // sized for the default oracle lattice
        if let Some(cp) = c.contact.as_mut() {
            cp.radius = Some(15.0);
            cp.k = 8;
        }
        c
    }

    pub fn d_node(&self) -> usize {
        self.feature_set.width(self.dim)
    }

    pub fn contact_enabled(&self) -> bool {
        self.contact.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(2..=3).contains(&self.dim) {
            return bad(format!("dim {} not in 2..=3", self.dim));
        }
        if self.d_hidden == 0 || self.tokens == 0 || self.heads == 0 || self.routes == 0 {
            return bad("d_hidden, tokens, heads and routes must be positive".into());
        }
        if !self.d_hidden.is_multiple_of(self.heads) {
            return bad(format!(
                "d_hidden {} not divisible by {} heads",
                self.d_hidden, self.heads
            ));
        }
        let f = self.family;
        if f.is_hybrid() && (self.l_pre == 0 || self.l_post == 0) {
            return bad(format!("{f} needs L_pre >= 1 and L_post >= 1"));
        }
        if f.is_pure_attention() && (self.l_pre != 0 || self.l_post != 0) {
            return bad(format!("{f} must have L_pre = L_post = 0"));
        }
        if f.is_pure_attention() && self.l_attn == 0 {
            return bad(format!("{f} needs at least one attention block"));
        }
        if f == Family::MeshGraphNet && (self.l_attn != 0 || self.l_pre + self.l_post == 0) {
            return bad("MGN is a pure MPNN stack".into());
        }
        if self.contact.is_some() && !f.uses_mesh() {
            return bad(format!("{f} cannot carry a contact block"));
        }
        if let Some(c) = &self.contact {
            c.validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex_digest(json.as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
