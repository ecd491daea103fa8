//! Per-frame tracker input: stereo features with binary descriptors plus detections.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, PixelMono, PixelStereo};
use crate::masking::ObjectDetection;
use crate::Scalar;

/// Highest pyramid octave a feature may come from.
pub const MAX_SCALE_LEVEL: u8 = 7;

/// 256-bit binary feature descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Descriptor(pub [u64; 4]);

impl Descriptor {
    pub fn hamming(&self, other: &Descriptor) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    /// Returns a copy with bit `bit` (0..256) inverted.
    pub fn with_flipped(mut self, bit: usize) -> Self {
        self.0[bit / 64] ^= 1 << (bit % 64);
        self
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for word in &self.0 {
            write!(f, "{word:016x}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("descriptor must be 64 hex characters")]
pub struct ParseDescriptorError;

impl FromStr for Descriptor {
    type Err = ParseDescriptorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 64 || !s.is_ascii() {
            return Err(ParseDescriptorError);
        }
        let mut words = [0u64; 4];
        for (i, w) in words.iter_mut().enumerate() {
            *w = u64::from_str_radix(&s[i * 16..(i + 1) * 16], 16).map_err(|_| ParseDescriptorError)?;
        }
        Ok(Descriptor(words))
    }
}

impl Serialize for Descriptor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Descriptor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Keypoint location: left image only, or a rectified stereo match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeaturePixel<T: Scalar> {
    Mono(PixelMono<T>),
    Stereo(PixelStereo<T>),
}

impl<T: Scalar> FeaturePixel<T> {
    pub fn u_l(&self) -> T {
        match self {
            FeaturePixel::Mono(p) => p.u_l,
            FeaturePixel::Stereo(p) => p.u_l,
        }
    }

    pub fn v_l(&self) -> T {
        match self {
            FeaturePixel::Mono(p) => p.v_l,
            FeaturePixel::Stereo(p) => p.v_l,
        }
    }

    pub fn stereo(&self) -> Option<&PixelStereo<T>> {
        match self {
            FeaturePixel::Stereo(p) => Some(p),
            FeaturePixel::Mono(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoFeature<T: Scalar> {
    pub pixel: FeaturePixel<T>,
    pub descriptor: Descriptor,
    pub scale_level: u8,
    /// Ground-truth landmark id from the simulator. The tracker never reads it.
    pub landmark_hint: Option<u64>,
}

impl<T: Scalar> StereoFeature<T> {
    pub fn is_valid(&self) -> bool {
        self.scale_level <= MAX_SCALE_LEVEL
            && match &self.pixel {
                FeaturePixel::Stereo(p) => p.disparity() > T::zero(),
                FeaturePixel::Mono(_) => true,
            }
    }

    /// Whether the left-image keypoint lies inside a detection's box.
    pub fn in_box(&self, det: &ObjectDetection) -> bool {
        det.bbox
            .contains_point(self.pixel.u_l().to_f64_lossy(), self.pixel.v_l().to_f64_lossy())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservation<T: Scalar> {
    pub timestamp: f64,
    pub features: Vec<StereoFeature<T>>,
    pub detections: Vec<ObjectDetection>,
    pub intrinsics: CameraIntrinsics<T>,
}

impl<T: Scalar> FrameObservation<T> {
    pub fn detection(&self, id: u32) -> Option<&ObjectDetection> {
        self.detections.iter().find(|d| d.object_id == id)
    }

    /// Converts pixel coordinates and intrinsics to another scalar type.
    pub fn cast<U: Scalar>(&self) -> FrameObservation<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        FrameObservation {
            timestamp: self.timestamp,
            features: self
                .features
                .iter()
                .map(|f| StereoFeature {
                    pixel: match f.pixel {
                        FeaturePixel::Mono(p) => FeaturePixel::Mono(PixelMono {
                            u_l: c(p.u_l),
                            v_l: c(p.v_l),
                        }),
                        FeaturePixel::Stereo(p) => FeaturePixel::Stereo(PixelStereo {
                            u_l: c(p.u_l),
                            v_l: c(p.v_l),
                            u_r: c(p.u_r),
                        }),
                    },
                    descriptor: f.descriptor,
                    scale_level: f.scale_level,
                    landmark_hint: f.landmark_hint,
                })
                .collect(),
            detections: self.detections.clone(),
            intrinsics: self.intrinsics.cast(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hamming_and_flips() {
        let d = Descriptor([0xdead_beef, 1, u64::MAX, 0]);
        assert_eq!(d.hamming(&d), 0);
        let e = d.with_flipped(0).with_flipped(255).with_flipped(130);
        assert_eq!(d.hamming(&e), 3);
        assert_eq!(d.hamming(&Descriptor([!0xdead_beef, !1, 0, u64::MAX])), 256);
    }

    #[test]
    fn hex_format() {
        let d = Descriptor([1, 0, 0, 0xff]);
        let s = d.to_string();
        assert_eq!(s.len(), 64);
        assert!(s.starts_with("0000000000000001"));
        assert!(s.ends_with("00000000000000ff"));
        assert!("zz".parse::<Descriptor>().is_err());
        assert!("g".repeat(64).parse::<Descriptor>().is_err());
    }

    proptest! {
        #[test]
        fn hex_round_trip(words in prop::array::uniform4(any::<u64>())) {
            let d = Descriptor(words);
            prop_assert_eq!(d.to_string().parse::<Descriptor>().unwrap(), d);
        }
    }
}
