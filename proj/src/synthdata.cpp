#include "tbseg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tbseg {
namespace {

constexpr float kPi = 3.14159265358979323846f;

float uniform_in(Rng& rng, float lo, float hi) { return lo + (hi - lo) * rng.uniform(); }

struct Geometry {
  float cx, cy;        // LV center
  float r_lv;          // LV radius
  float r_out;         // outer MYO radius
  float rv_cx, rv_cy;  // RV ellipse center
  float rv_r;          // RV radial semi-axis (0 = absent)
  float rv_tan;        // RV tangential semi-axis
  float ux, uy;        // unit vector from LV center toward the RV
};

// Class of an analytic point. Regions are disjoint by construction: LV wins
// inside r_lv, MYO inside r_out, RV only strictly outside the annulus.
uint8_t classify(const Geometry& g, float x, float y) {
  const float dx = x - g.cx;
  const float dy = y - g.cy;
  const float d2 = dx * dx + dy * dy;
  if (d2 <= g.r_lv * g.r_lv) return 3;
  if (d2 <= g.r_out * g.r_out) return 2;
  if (g.rv_r > 0.0f) {
    const float ex = x - g.rv_cx;
    const float ey = y - g.rv_cy;
    const float du = ex * g.ux + ey * g.uy;   // radial
    const float dv = -ex * g.uy + ey * g.ux;  // tangential
    const float q = (du * du) / (g.rv_r * g.rv_r) + (dv * dv) / (g.rv_tan * g.rv_tan);
    if (q <= 1.0f) return 1;
  }
  return 0;
}

}  // namespace

const char* domain_tag_name(DomainTag tag) {
  switch (tag) {
    case DomainTag::kInDomain: return "ID";
    case DomainTag::kOodA: return "OOD-A";
    case DomainTag::kOodB: return "OOD-B";
  }
  throw std::runtime_error("domain_tag_name: invalid tag");
}

DomainTag domain_tag_from_u8(uint8_t value) {
  if (value > 2) {
    throw std::runtime_error("domain_tag_from_u8: invalid tag value " + std::to_string(value));
  }
  return static_cast<DomainTag>(value);
}

void PhantomParams::validate() const {
  if (height < 16 || width < 16) throw std::invalid_argument("PhantomParams: image smaller than 16");
  if (height % 8 != 0 || width % 8 != 0) {
    throw std::invalid_argument("PhantomParams: extents must be divisible by 8");
  }
  auto range_ok = [](float lo, float hi) { return lo > 0.0f && hi >= lo; };
  if (!range_ok(lv_radius_min, lv_radius_max) || lv_radius_min < 2.0f) {
    throw std::invalid_argument("PhantomParams: bad LV radius range");
  }
  if (!range_ok(myo_thickness_min, myo_thickness_max) || myo_thickness_min < 1.0f) {
    throw std::invalid_argument("PhantomParams: bad MYO thickness range");
  }
  if (!range_ok(rv_scale_min, rv_scale_max) || !range_ok(rv_eccentricity_min, rv_eccentricity_max)) {
    throw std::invalid_argument("PhantomParams: bad RV size / eccentricity range");
  }
  if (center_jitter < 0.0f) throw std::invalid_argument("PhantomParams: negative center_jitter");
  for (float m : {mean_bg, mean_rv, mean_myo, mean_lv}) {
    if (!(m >= 0.0f && m <= 1.0f)) throw std::invalid_argument("PhantomParams: tissue mean not in [0,1]");
  }
  if (intensity_jitter < 0.0f || intensity_jitter > 0.2f) {
    throw std::invalid_argument("PhantomParams: intensity_jitter not in [0, 0.2]");
  }
  if (noise_sd < 0.0f || noise_sd > 0.2f) throw std::invalid_argument("PhantomParams: noise_sd not in [0, 0.2]");
  if (bias_amplitude < 0.0f || bias_amplitude > 0.5f) {
    throw std::invalid_argument("PhantomParams: bias_amplitude not in [0, 0.5]");
  }
  if (gamma < 0.3f || gamma > 3.0f) throw std::invalid_argument("PhantomParams: gamma not in [0.3, 3]");
  if (!(small_rv_fraction >= 0.0f && small_rv_fraction <= 1.0f)) {
    throw std::invalid_argument("PhantomParams: small_rv_fraction not in [0, 1]");
  }
  if (small_rv_area_threshold < 10.0f) {
    throw std::invalid_argument("PhantomParams: small_rv_area_threshold below 10 pixels");
  }

  // Worst-case radial footprint: LV center jitter, the annulus, and the RV
  // ellipse whose far edge sits 1.25 radial semi-axes beyond the annulus.
  const float rv_r_max = rv_scale_max * lv_radius_max * 0.55f;
  const float reach = center_jitter + lv_radius_max + myo_thickness_max + 1.25f * rv_r_max + 1.0f;
  const float half = 0.5f * static_cast<float>(std::min(height, width));
  if (reach > half) {
    throw std::invalid_argument("PhantomParams: geometry infeasible, worst-case reach " +
                             std::to_string(reach) + " px exceeds half-extent " +
                             std::to_string(half));
  }
}

PhantomParams PhantomParams::shifted(DomainTag tag) const {
  PhantomParams p = *this;
  switch (tag) {
    case DomainTag::kInDomain:
      break;
    case DomainTag::kOodA:
      // contrast compression toward the middle, stronger shading, gamma < 1
      p.mean_bg = std::min(1.0f, mean_bg + 0.06f);
      p.mean_rv = std::max(0.0f, mean_rv - 0.05f);
      p.mean_myo = std::min(1.0f, mean_myo + 0.06f);
      p.mean_lv = std::max(0.0f, mean_lv - 0.07f);
      p.bias_amplitude = std::min(0.5f, bias_amplitude * 2.0f);
      p.gamma = 0.85f;
      p.noise_sd = std::min(0.2f, noise_sd * 1.25f);
      break;
    case DomainTag::kOodB:
      // global brightness shift plus shading/contrast/noise: the strong shift
      p.mean_bg = std::min(1.0f, mean_bg + 0.15f);
      p.mean_rv = std::min(1.0f, mean_rv + 0.10f);
      p.mean_myo = std::min(1.0f, mean_myo + 0.12f);
      p.mean_lv = std::min(1.0f, mean_lv + 0.08f);
      p.bias_amplitude = std::min(0.5f, bias_amplitude * 3.0f);
      p.gamma = 1.35f;
      p.noise_sd = std::min(0.2f, noise_sd * 1.6f);
      break;
  }
  p.validate();
  return p;
}

std::vector<LabeledSample> generate_split(const PhantomParams& params, int count, uint64_t seed,
                                          DomainTag tag) {
  params.validate();
  if (count < 1) throw std::runtime_error("generate_split: count must be >= 1");

  const size_t h = static_cast<size_t>(params.height);
  const size_t w = static_cast<size_t>(params.width);
  const Rng root(seed);

  std::vector<LabeledSample> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng = root.stream(static_cast<uint64_t>(i));

    Geometry g;
    g.cx = 0.5f * static_cast<float>(params.width) +
           uniform_in(rng, -params.center_jitter, params.center_jitter);
    g.cy = 0.5f * static_cast<float>(params.height) +
           uniform_in(rng, -params.center_jitter, params.center_jitter);
    g.r_lv = uniform_in(rng, params.lv_radius_min, params.lv_radius_max);
    g.r_out = g.r_lv + uniform_in(rng, params.myo_thickness_min, params.myo_thickness_max);
    const float rv_scale = uniform_in(rng, params.rv_scale_min, params.rv_scale_max);
    const float ecc = uniform_in(rng, params.rv_eccentricity_min, params.rv_eccentricity_max);
    const float phi = kPi + uniform_in(rng, -0.5f, 0.5f);  // RV sits on the left, jittered
    const float small_u = rng.uniform();
    const float absent_u = rng.uniform();

    g.rv_r = rv_scale * g.r_lv * 0.55f;
    if (small_u < params.small_rv_fraction) {
      if (absent_u < 0.45f) {
        g.rv_r = 0.0f;  // apical slice past the RV
      } else {
        // Cap the full ellipse area at 60% of the threshold; the rendered
        // crescent (a subset, plus pixelation error) stays below it.
        const float target = 0.6f * params.small_rv_area_threshold;
        g.rv_r = std::sqrt(target / (kPi * ecc));
      }
    }
    g.rv_tan = g.rv_r * ecc;
    g.ux = std::cos(phi);
    g.uy = std::sin(phi);
    g.rv_cx = g.cx + (g.r_out + 0.25f * g.rv_r) * g.ux;
    g.rv_cy = g.cy + (g.r_out + 0.25f * g.rv_r) * g.uy;

    float means[4] = {params.mean_bg, params.mean_rv, params.mean_myo, params.mean_lv};
    for (float& m : means) {
      m = std::clamp(m + uniform_in(rng, -params.intensity_jitter, params.intensity_jitter),
                     0.0f, 1.0f);
    }
    const float bias_fx = uniform_in(rng, 0.7f, 1.3f);
    const float bias_fy = uniform_in(rng, 0.7f, 1.3f);
    const float bias_px = uniform_in(rng, 0.0f, 2.0f * kPi);
    const float bias_py = uniform_in(rng, 0.0f, 2.0f * kPi);

    LabeledSample s;
    s.seed = rng.seed();
    s.domain = tag;
    s.image = Tensor({1, h, w});
    s.label = ByteImage({h, w});

    for (size_t y = 0; y < h; ++y) {
      for (size_t x = 0; x < w; ++x) {
        const float fx = static_cast<float>(x);
        const float fy = static_cast<float>(y);
        s.label[y * w + x] = classify(g, fx + 0.5f, fy + 0.5f);

        // 2x2 supersampled tissue intensity (anti-aliased edges)
        float v = 0.0f;
        for (int sy = 0; sy < 2; ++sy) {
          for (int sx = 0; sx < 2; ++sx) {
            const uint8_t c = classify(g, fx + 0.25f + 0.5f * static_cast<float>(sx),
                                       fy + 0.25f + 0.5f * static_cast<float>(sy));
            v += means[c];
          }
        }
        v *= 0.25f;

        if (params.bias_amplitude > 0.0f) {
          const float bx = std::sin(kPi * bias_fx * (fx + 0.5f) / static_cast<float>(w) + bias_px);
          const float by = std::sin(kPi * bias_fy * (fy + 0.5f) / static_cast<float>(h) + bias_py);
          v *= 1.0f + params.bias_amplitude * bx * by;
        }
        if (params.gamma != 1.0f) {
          v = std::pow(std::max(v, 0.0f), params.gamma);
        }
        s.image[y * w + x] = v;
      }
    }
    if (params.noise_sd > 0.0f) {
      for (size_t j = 0; j < h * w; ++j) {
        s.image[j] += params.noise_sd * rng.normal();
      }
    }
    for (size_t j = 0; j < h * w; ++j) {
      s.image[j] = std::clamp(s.image[j], 0.0f, 1.0f);
    }
    out.push_back(std::move(s));
  }
  return out;
}

size_t class_area(const ByteImage& label, uint8_t cls) {
  size_t n = 0;
  for (size_t i = 0; i < label.size(); ++i) n += (label[i] == cls) ? 1 : 0;
  return n;
}

}  // namespace tbseg
