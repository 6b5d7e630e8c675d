use super::{OptOutReason, Provenance, RegionPair};
use crate::imaging::{connected_components, morphological_open, BinaryMask, LabelMap, PixelSet};

/// Largest allowed ratio between the third and second component areas.
pub const OPEN_AREA_RATIO: f64 = 0.2;

/// Opening with a 2x2 square, then connected components by decreasing area.
/// Two components, or more with a negligible third one, give an OptIn pair.
pub fn preprocess_mask(mask: &BinaryMask) -> Result<RegionPair, OptOutReason> {
    let opened = morphological_open(mask);
    let comps = connected_components(&opened);
    match comps.len() {
        0 | 1 => Err(OptOutReason::FewerThanTwoRegions),
        n => {
            if n >= 3 && comps[2].area as f64 > OPEN_AREA_RATIO * comps[1].area as f64 {
                return Err(OptOutReason::RegionsNotSeparable);
            }
            let mut it = comps.into_iter();
            let p1 = it.next().expect("two components").pixels;
            let p2 = it.next().expect("two components").pixels;
            Ok(RegionPair { p1, p2, provenance: Provenance::DetectorMask })
        }
    }
}

/// Regions of a ground-truth map, ordered like detector regions (larger
/// first, ties by raster order) so the labeling carries no hint. The flag
/// tells whether `p1` is the source.
pub fn regions_from_labels(labels: &LabelMap) -> Result<(RegionPair, bool), OptOutReason> {
    let s = labels.source_mask().pixels();
    let t = labels.target_mask().pixels();
    if s.is_empty() || t.is_empty() {
        return Err(OptOutReason::FewerThanTwoRegions);
    }
    let source_first = first_in_order(&s, &t);
    let (p1, p2) = if source_first { (s, t) } else { (t, s) };
    Ok((RegionPair { p1, p2, provenance: Provenance::GroundTruthMap }, source_first))
}

fn first_in_order(a: &PixelSet, b: &PixelSet) -> bool {
    if a.len() != b.len() {
        return a.len() > b.len();
    }
    // Points are sorted by (y, x).
    a.points()[0] <= b.points()[0]
}
