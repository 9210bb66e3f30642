use crate::error::{contract_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Single-scale backbone.
    Hrsam,
    /// Adds a downsampled auxiliary scale and a cross-scale scan per stage.
    HrsamPlusPlus,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Hrsam => "hrsam",
            Variant::HrsamPlusPlus => "hrsampp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hrsam" => Some(Variant::Hrsam),
            "hrsampp" => Some(Variant::HrsamPlusPlus),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub variant: Variant,
    pub stages: usize,
    /// Blocks per stage.
    pub depth: usize,
    pub dim: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    /// Window side `S` in tokens.
    pub window: usize,
    pub out_dim: usize,
    /// Patch side in pixels.
    pub patch: usize,
    /// Side of the auxiliary image in pixels (second variant only).
    pub aux_size: usize,
    pub ssm_state: usize,
    pub rope: bool,
    /// When false, the second variant drops the auxiliary scale and the
    /// per-stage cross-scale scan, which reduces it to the first variant.
    pub multiscale: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Hrsam,
            stages: 4,
            depth: 3,
            dim: 768,
            heads: 12,
            ffn_mult: 4,
            window: 16,
            out_dim: 256,
            patch: 16,
            aux_size: 512,
            ssm_state: 32,
            rope: true,
            multiscale: true,
        }
    }
}

impl EncoderConfig {
    /// Small configuration for 256² inputs.
    pub fn toy() -> Self {
        Self {
            dim: 96,
            heads: 4,
            window: 8,
            aux_size: 128,
            ..Self::default()
        }
    }

    /// Narrow configuration for shape checks at 1024² and beyond.
    pub fn tiny() -> Self {
        Self {
            dim: 32,
            heads: 2,
            window: 8,
            ssm_state: 8,
            ..Self::default()
        }
    }

    pub fn with_variant(mut self, v: Variant) -> Self {
        self.variant = v;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads.max(1)
    }

    /// Shift of the padding-shifted blocks, `(S/2, S/2)`.
    pub fn shift(&self) -> (usize, usize) {
        (self.window / 2, self.window / 2)
    }

    pub fn uses_aux_scale(&self) -> bool {
        self.variant == Variant::HrsamPlusPlus && self.multiscale
    }

    pub fn aux_grid(&self) -> usize {
        self.aux_size / self.patch
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("stages", self.stages),
            ("depth", self.depth),
            ("dim", self.dim),
            ("heads", self.heads),
            ("ffn_mult", self.ffn_mult),
            ("out_dim", self.out_dim),
            ("patch", self.patch),
            ("ssm_state", self.ssm_state),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return contract_err(format!("{name} must be positive"));
        }
        if self.window < 2 {
            return contract_err("window size must be at least 2 for shifted blocks");
        }
        if self.dim % self.heads != 0 {
            return contract_err(format!("{} heads do not divide dim {}", self.heads, self.dim));
        }
        if self.head_dim() % 4 != 0 {
            return contract_err(format!("head width {} is not divisible by 4", self.head_dim()));
        }
        if self.uses_aux_scale() {
            let unit = self.patch * self.window;
            if self.aux_size == 0 || self.aux_size % unit != 0 {
                return contract_err(format!(
                    "aux size {} is not a multiple of patch·window = {unit}",
                    self.aux_size
                ));
            }
        }
        Ok(())
    }

    /// Input extents must be multiples of `patch · window`.
    pub fn check_image(&self, h: usize, w: usize) -> Result<()> {
        let unit = self.patch * self.window;
        if h == 0 || w == 0 || h % unit != 0 || w % unit != 0 {
            return contract_err(format!(
                "image {h}x{w} is not a multiple of patch·window = {unit}"
            ));
        }
        Ok(())
    }
}
