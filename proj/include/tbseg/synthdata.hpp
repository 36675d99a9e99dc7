#pragma once

#include <cstdint>
#include <vector>

#include "tbseg/rng.hpp"
#include "tbseg/tensor.hpp"

namespace tbseg {

enum class DomainTag : uint8_t { kInDomain = 0, kOodA = 1, kOodB = 2 };

const char* domain_tag_name(DomainTag tag);
DomainTag domain_tag_from_u8(uint8_t value);

// Cardiac-like short-axis phantom: LV disk (class 3) inside a MYO annulus
// (class 2), with an RV crescent (class 1) hugging the annulus on one side
// over background (class 0). Geometry is analytic; the image is the tissue
// mean intensity anti-aliased by 2x supersampling, then modulated by a
// smooth multiplicative bias field, a gamma (contrast) exponent, and
// additive Gaussian noise, clamped to [0, 1]. Labels come from the
// un-blurred geometry at pixel centers.
struct PhantomParams {
  int height = 64;
  int width = 64;

  float lv_radius_min = 7.0f;
  float lv_radius_max = 11.0f;
  float myo_thickness_min = 2.5f;
  float myo_thickness_max = 4.0f;
  // RV crescent size relative to the LV radius, and tangential elongation
  float rv_scale_min = 0.8f;
  float rv_scale_max = 1.2f;
  float rv_eccentricity_min = 1.3f;
  float rv_eccentricity_max = 1.8f;
  float center_jitter = 2.5f;

  // mean intensities indexed by class: background, RV, MYO, LV
  float mean_bg = 0.18f;
  float mean_rv = 0.55f;
  float mean_myo = 0.35f;
  float mean_lv = 0.75f;
  float intensity_jitter = 0.02f;  // per-sample, per-tissue uniform jitter

  float noise_sd = 0.03f;
  float bias_amplitude = 0.08f;
  float gamma = 1.0f;

  // Fraction of samples rendered as hard "apical" slices whose RV is tiny
  // (label area below small_rv_area_threshold pixels) or absent.
  float small_rv_fraction = 0.1f;
  float small_rv_area_threshold = 40.0f;

  // Throws std::invalid_argument if the geometry cannot fit in the image
  // or a field is out of range.
  void validate() const;

  // ID params unchanged; OOD-A applies compressed intensity contrast, a
  // stronger bias field, and gamma < 1; OOD-B applies a global brightness
  // shift, an even stronger bias field, gamma > 1, and more noise.
  PhantomParams shifted(DomainTag tag) const;
};

struct LabeledSample {
  Tensor image;     // (1, H, W), values in [0, 1]
  ByteImage label;  // (H, W), classes {0, 1, 2, 3}
  uint64_t seed = 0;
  DomainTag domain = DomainTag::kInDomain;
};

// Deterministic for (params, seed): sample i draws everything from the
// derived stream Rng(seed).stream(i), so the split is order-independent
// and could be generated in parallel. `tag` is recorded in each sample's
// meta; pass params already adjusted via shifted(tag) for OOD splits.
std::vector<LabeledSample> generate_split(const PhantomParams& params, int count, uint64_t seed,
                                          DomainTag tag = DomainTag::kInDomain);

size_t class_area(const ByteImage& label, uint8_t cls);

}  // namespace tbseg
