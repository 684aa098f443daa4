//! Image variants: 2x super-resolution and colorization.
//!
//! Both operations have a hermetic built-in back-end (bicubic upsampling,
//! a fixed colormap) and an external back-end that pipes a PNG through a
//! user supplied command, which is how neural models are attached.

mod bicubic;
pub mod colormap;

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{Error, Result};
use crate::external::run_filter;
use crate::preprocess::{preprocess_range, preprocess_signal, PreprocessConfig};
use crate::types::{
    normalize_intensity, GrayImage, ImageVariant, LidarFrame, RgbImage, VariantImage, VariantKind,
};

pub use bicubic::upsample2;

/// Fixed super-resolution factor.
pub const SR_SCALE: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnhancerKind {
    BuiltinBicubicSr,
    BuiltinColormapColor,
    External,
}

/// A resolved back-end for one enhancement operation.
#[derive(Clone, Debug, PartialEq)]
pub struct EnhancerSpec {
    pub kind: EnhancerKind,
    pub command: Option<String>,
    pub timeout: Duration,
}

impl EnhancerSpec {
    pub fn builtin_sr() -> Self {
        Self {
            kind: EnhancerKind::BuiltinBicubicSr,
            command: None,
            timeout: Duration::from_secs(60),
        }
    }

    pub fn builtin_color() -> Self {
        Self {
            kind: EnhancerKind::BuiltinColormapColor,
            command: None,
            timeout: Duration::from_secs(60),
        }
    }

    pub fn external(command: impl Into<String>, timeout: Duration) -> Self {
        Self {
            kind: EnhancerKind::External,
            command: Some(command.into()),
            timeout,
        }
    }

    fn external_command(&self) -> Result<&str> {
        match self.command.as_deref() {
            Some(c) if !c.trim().is_empty() => Ok(c),
            _ => Err(Error::Config(
                "external enhancer needs a non-empty command".into(),
            )),
        }
    }
}

/// `[enhance.sr]` / `[enhance.color]` config sections.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    /// Defaults to the built-in, or `external` when a command is given.
    pub kind: Option<EnhancerKind>,
    pub command: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhanceConfig {
    pub sr: BackendSection,
    pub color: BackendSection,
    pub timeout_s: f64,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            sr: BackendSection::default(),
            color: BackendSection::default(),
            timeout_s: 60.0,
        }
    }
}

impl EnhanceConfig {
    fn resolve(&self, section: &BackendSection, builtin: EnhancerKind) -> Result<EnhancerSpec> {
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(Error::Config(format!(
                "enhance.timeout_s = {}",
                self.timeout_s
            )));
        }
        let kind = section.kind.unwrap_or(if section.command.is_some() {
            EnhancerKind::External
        } else {
            builtin
        });
        if kind != builtin && kind != EnhancerKind::External {
            return Err(Error::Config(format!(
                "{kind:?} cannot serve as {builtin:?}"
            )));
        }
        let spec = EnhancerSpec {
            kind,
            command: section.command.clone(),
            timeout: Duration::from_secs_f64(self.timeout_s),
        };
        if kind == EnhancerKind::External {
            spec.external_command()?;
        }
        Ok(spec)
    }

    pub fn sr_spec(&self) -> Result<EnhancerSpec> {
        self.resolve(&self.sr, EnhancerKind::BuiltinBicubicSr)
    }

    pub fn color_spec(&self) -> Result<EnhancerSpec> {
        self.resolve(&self.color, EnhancerKind::BuiltinColormapColor)
    }
}

pub fn super_resolve(img: &GrayImage, spec: &EnhancerSpec) -> Result<GrayImage> {
    let out = match spec.kind {
        EnhancerKind::BuiltinBicubicSr => upsample2(img),
        EnhancerKind::External => {
            let command = spec.external_command()?;
            let bytes = run_filter(command, &codec::encode_gray_png(img)?, spec.timeout)?;
            codec::decode_gray_png(&bytes).map_err(|e| Error::External {
                command: command.to_string(),
                reason: format!("bad PNG on stdout: {e}"),
            })?
        }
        EnhancerKind::BuiltinColormapColor => {
            return Err(Error::Config("colormap back-end cannot super-resolve".into()))
        }
    };
    let expected = (SR_SCALE * img.width(), SR_SCALE * img.height());
    if (out.width(), out.height()) != expected {
        return Err(Error::External {
            command: spec.command.clone().unwrap_or_default(),
            reason: format!(
                "returned {}x{}, expected {}x{}",
                out.width(),
                out.height(),
                expected.0,
                expected.1
            ),
        });
    }
    Ok(out)
}

pub fn colorize(img: &GrayImage, spec: &EnhancerSpec) -> Result<RgbImage> {
    match spec.kind {
        EnhancerKind::BuiltinColormapColor => {
            let data = img
                .data()
                .iter()
                .flat_map(|&v| colormap::CIVIDIS[v as usize])
                .collect();
            RgbImage::new(img.width(), img.height(), data)
        }
        EnhancerKind::External => {
            let command = spec.external_command()?;
            let bytes = run_filter(command, &codec::encode_gray_png(img)?, spec.timeout)?;
            let out = codec::decode_rgb_png(&bytes).map_err(|e| Error::External {
                command: command.to_string(),
                reason: format!("bad PNG on stdout: {e}"),
            })?;
            if (out.width(), out.height()) != (img.width(), img.height()) {
                return Err(Error::External {
                    command: command.to_string(),
                    reason: format!(
                        "returned {}x{}, expected {}x{}",
                        out.width(),
                        out.height(),
                        img.width(),
                        img.height()
                    ),
                });
            }
            Ok(out)
        }
        EnhancerKind::BuiltinBicubicSr => {
            Err(Error::Config("bicubic back-end cannot colorize".into()))
        }
    }
}

/// Resolved back-ends for a run.
#[derive(Clone, Debug)]
pub struct Enhancer {
    pub sr: EnhancerSpec,
    pub color: EnhancerSpec,
}

impl Enhancer {
    pub fn builtin() -> Self {
        Self {
            sr: EnhancerSpec::builtin_sr(),
            color: EnhancerSpec::builtin_color(),
        }
    }

    pub fn from_config(cfg: &EnhanceConfig) -> Result<Self> {
        Ok(Self {
            sr: cfg.sr_spec()?,
            color: cfg.color_spec()?,
        })
    }
}

/// Normalizes and preprocesses the frame, then builds exactly the requested
/// variants, ordered by kind. `sig_2r_c` is the colorized super-resolved
/// signal; colorization never touches range images.
pub fn build_variants(
    frame: &LidarFrame,
    needed: &BTreeSet<VariantKind>,
    enhancer: &Enhancer,
    preprocess: &PreprocessConfig,
    normalize_percentile: f64,
) -> Result<Vec<ImageVariant>> {
    let (w, h) = (frame.width(), frame.height());
    let wants_rng = needed.contains(&VariantKind::Rng) || needed.contains(&VariantKind::Rng2r);
    let wants_sig = needed.iter().any(|k| {
        matches!(
            k,
            VariantKind::Sig | VariantKind::Sig2r | VariantKind::SigC | VariantKind::Sig2rC
        )
    });

    let rng = if wants_rng {
        let raw = normalize_intensity(&frame.range, normalize_percentile)?;
        Some(preprocess_range(&raw, preprocess)?)
    } else {
        None
    };
    let sig = if wants_sig {
        let raw = normalize_intensity(&frame.signal, normalize_percentile)?;
        Some(preprocess_signal(&raw, preprocess)?)
    } else {
        None
    };
    let sig_2r = if needed.contains(&VariantKind::Sig2r) || needed.contains(&VariantKind::Sig2rC) {
        Some(super_resolve(sig.as_ref().expect("signal built"), &enhancer.sr)?)
    } else {
        None
    };

    let mut out = Vec::with_capacity(needed.len());
    for &kind in needed {
        let image = match kind {
            VariantKind::Rng => VariantImage::Gray(rng.clone().expect("range built")),
            VariantKind::Rng2r => {
                VariantImage::Gray(super_resolve(rng.as_ref().expect("range built"), &enhancer.sr)?)
            }
            VariantKind::Sig => VariantImage::Gray(sig.clone().expect("signal built")),
            VariantKind::Sig2r => VariantImage::Gray(sig_2r.clone().expect("sr signal built")),
            VariantKind::SigC => {
                VariantImage::Rgb(colorize(sig.as_ref().expect("signal built"), &enhancer.color)?)
            }
            VariantKind::Sig2rC => VariantImage::Rgb(colorize(
                sig_2r.as_ref().expect("sr signal built"),
                &enhancer.color,
            )?),
        };
        out.push(ImageVariant::new(kind, image, w, h)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Gray16Image;

    fn luminance(rgb: [u8; 3]) -> u32 {
        2126 * rgb[0] as u32 + 7152 * rgb[1] as u32 + 722 * rgb[2] as u32
    }

    #[test]
    fn colormap_luminance_is_monotone() {
        let ramp = GrayImage::from_fn(256, 1, |x, _| x as u8);
        let rgb = colorize(&ramp, &EnhancerSpec::builtin_color()).unwrap();
        for x in 1..256 {
            assert!(luminance(rgb.get(x, 0)) >= luminance(rgb.get(x - 1, 0)));
        }
    }

    #[test]
    fn colorize_constant_zero() {
        let rgb = colorize(&GrayImage::filled(3, 2, 0), &EnhancerSpec::builtin_color()).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                assert_eq!(rgb.get(x, y), colormap::CIVIDIS[0]);
            }
        }
    }

    #[test]
    fn super_resolve_dimensions() {
        let img = GrayImage::filled(1024, 64, 9);
        let out = super_resolve(&img, &EnhancerSpec::builtin_sr()).unwrap();
        assert_eq!((out.width(), out.height()), (2048, 128));
    }

    #[test]
    fn wrong_backend_kinds_rejected() {
        let img = GrayImage::filled(2, 2, 0);
        assert!(super_resolve(&img, &EnhancerSpec::builtin_color()).is_err());
        assert!(colorize(&img, &EnhancerSpec::builtin_sr()).is_err());
        let cfg = EnhanceConfig {
            sr: BackendSection {
                kind: Some(EnhancerKind::BuiltinColormapColor),
                command: None,
            },
            ..Default::default()
        };
        assert!(cfg.sr_spec().is_err());
        let cfg = EnhanceConfig {
            color: BackendSection {
                kind: Some(EnhancerKind::External),
                command: None,
            },
            ..Default::default()
        };
        assert!(cfg.color_spec().is_err());
    }

    #[test]
    fn command_implies_external() {
        let cfg = EnhanceConfig {
            sr: BackendSection {
                kind: None,
                command: Some("carn --scale 2".into()),
            },
            timeout_s: 5.0,
            ..Default::default()
        };
        let spec = cfg.sr_spec().unwrap();
        assert_eq!(spec.kind, EnhancerKind::External);
        assert_eq!(spec.timeout, Duration::from_secs(5));
        assert_eq!(cfg.color_spec().unwrap().kind, EnhancerKind::BuiltinColormapColor);
    }

    fn test_frame() -> LidarFrame {
        let (w, h) = (64, 16);
        let range = Gray16Image::new(w, h, (0..w * h).map(|i| 1000 + (i % 97) as u16 * 50).collect())
            .unwrap();
        let signal =
            Gray16Image::new(w, h, (0..w * h).map(|i| ((i * 7919) % 4000) as u16).collect()).unwrap();
        LidarFrame::new(0.0, range, signal, vec![[1.0, 0.0, 0.0]; w * h]).unwrap()
    }

    #[test]
    fn builds_only_requested_variants() {
        let frame = test_frame();
        let pre = PreprocessConfig {
            clahe_tiles: [2, 2],
            ..Default::default()
        };
        let needed = BTreeSet::from([VariantKind::Rng]);
        let v = build_variants(&frame, &needed, &Enhancer::builtin(), &pre, 0.99).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind(), VariantKind::Rng);
        assert_eq!(v[0].image().width(), 64);

        let all: BTreeSet<_> = VariantKind::ALL.into_iter().collect();
        let v = build_variants(&frame, &all, &Enhancer::builtin(), &pre, 0.99).unwrap();
        assert_eq!(v.len(), 6);
        for variant in &v {
            let k = variant.kind();
            assert_eq!(variant.image().width(), 64 * k.scale());
            assert_eq!(variant.image().height(), 16 * k.scale());
            assert_eq!(variant.image().channels(), k.channels());
        }
    }

    #[test]
    fn sig_2r_c_is_colorized_super_resolution() {
        let frame = test_frame();
        let pre = PreprocessConfig {
            clahe_tiles: [2, 2],
            ..Default::default()
        };
        let enh = Enhancer::builtin();
        let needed = BTreeSet::from([VariantKind::Sig2rC]);
        let got = build_variants(&frame, &needed, &enh, &pre, 0.99).unwrap();

        let sig = preprocess_signal(&normalize_intensity(&frame.signal, 0.99).unwrap(), &pre).unwrap();
        let expected = colorize(&super_resolve(&sig, &enh.sr).unwrap(), &enh.color).unwrap();
        assert_eq!(got[0].image(), &VariantImage::Rgb(expected));
        assert_eq!(got[0].scale(), 2);

        let again = build_variants(&frame, &needed, &enh, &pre, 0.99).unwrap();
        assert_eq!(got, again);
    }

    #[test]
    fn external_echo_colorizer_replicates_channels() {
        let img = GrayImage::from_fn(8, 4, |x, y| (x * 20 + y) as u8);
        let spec = EnhancerSpec::external("cat", Duration::from_secs(10));
        let rgb = colorize(&img, &spec).unwrap();
        for y in 0..4 {
            for x in 0..8 {
                let v = img.get(x, y);
                assert_eq!(rgb.get(x, y), [v, v, v]);
            }
        }
    }

    #[test]
    fn external_sr_dimension_contract() {
        let img = GrayImage::filled(8, 4, 3);
        let echo = EnhancerSpec::external("cat", Duration::from_secs(10));
        let err = super_resolve(&img, &echo).unwrap_err();
        assert!(err.to_string().contains("expected 16x8"), "{err}");

        let failing = EnhancerSpec::external("exit 7", Duration::from_secs(10));
        let err = super_resolve(&img, &failing).unwrap_err();
        assert!(err.to_string().contains("exit status 7"), "{err}");
    }
}
