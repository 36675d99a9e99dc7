#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tbseg/rng.hpp"
#include "tbseg/synthdata.hpp"
#include "tbseg/tensor.hpp"

namespace tbseg::testutil {

// ---- finite-difference gradient checking ----
//
// A differentiable op is checked by projecting its output to a scalar with
// fixed random coefficients, L(x) = sum_i c_i f(x)_i, and comparing the
// recorded gradient against the central difference
// (L(x + eps e_j) - L(x - eps e_j)) / (2 eps). The relative error metric
// floors the denominator so near-zero pairs compare absolutely.

inline constexpr double kFdEps = 1e-3;
inline constexpr double kFdRelTol = 1e-2;

inline double rel_err(double a, double b) {
  const double denom = std::max({std::fabs(a), std::fabs(b), 1e-3});
  return std::fabs(a - b) / denom;
}

// Evaluates `scalar_fn` (a fresh forward pass; must be deterministic given
// the perturbed tensor) while wiggling each element of `x`, comparing with
// `analytic` gradients. Returns the worst relative error.
inline double max_fd_error(Tensor& x, const std::function<double()>& scalar_fn,
                           const Tensor& analytic) {
  double worst = 0.0;
  for (size_t j = 0; j < x.size(); ++j) {
    const float keep = x[j];
    x[j] = keep + static_cast<float>(kFdEps);
    const double up = scalar_fn();
    x[j] = keep - static_cast<float>(kFdEps);
    const double down = scalar_fn();
    x[j] = keep;
    const double fd = (up - down) / (2.0 * kFdEps);
    worst = std::max(worst, rel_err(fd, static_cast<double>(analytic[j])));
  }
  return worst;
}

inline Tensor random_tensor(std::vector<size_t> shape, Rng& rng, float scale = 1.0f) {
  Tensor t(std::move(shape));
  for (size_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * scale;
  return t;
}

// Keeps relu inputs away from the kink so the central difference stays on
// one side of it.
inline void push_off_kink(Tensor& t, float margin = 5e-3f) {
  for (size_t i = 0; i < t.size(); ++i) {
    if (std::fabs(t[i]) < margin) t[i] = t[i] < 0.0f ? -margin : margin;
  }
}

// Separates each 2x2 maxpool window's top two values so an eps wiggle
// cannot flip the argmax.
inline void separate_pool_ties(Tensor& t, float gap = 5e-3f) {
  const size_t n = t.extent(0), c = t.extent(1), h = t.extent(2), w = t.extent(3);
  for (size_t i = 0; i < n * c; ++i) {
    float* plane = t.data() + i * h * w;
    for (size_t y = 0; y + 1 < h; y += 2) {
      for (size_t x = 0; x + 1 < w; x += 2) {
        float* v[4] = {&plane[y * w + x], &plane[y * w + x + 1], &plane[(y + 1) * w + x],
                       &plane[(y + 1) * w + x + 1]};
        size_t best = 0;
        for (size_t k = 1; k < 4; ++k) {
          if (*v[k] > *v[best]) best = k;
        }
        for (size_t k = 0; k < 4; ++k) {
          if (k != best && *v[best] - *v[k] < gap) *v[k] = *v[best] - gap;
        }
      }
    }
  }
}

// Toy labeled samples with a centered disk of each class, for quick
// training/recalibration tests that do not need the phantom generator.
inline std::vector<LabeledSample> tiny_dataset(size_t count, size_t h, size_t w, uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledSample> out;
  for (size_t i = 0; i < count; ++i) {
    LabeledSample s;
    s.image = Tensor({1, h, w});
    s.label = ByteImage({h, w});
    const float cx = static_cast<float>(w) * (0.35f + 0.3f * rng.uniform());
    const float cy = static_cast<float>(h) * (0.35f + 0.3f * rng.uniform());
    const float r = static_cast<float>(std::min(h, w)) * (0.15f + 0.1f * rng.uniform());
    for (size_t y = 0; y < h; ++y) {
      for (size_t x = 0; x < w; ++x) {
        const float dx = static_cast<float>(x) + 0.5f - cx;
        const float dy = static_cast<float>(y) + 0.5f - cy;
        const float d = std::sqrt(dx * dx + dy * dy);
        uint8_t cls = 0;
        if (d < 0.5f * r) cls = 3;
        else if (d < 0.8f * r) cls = 2;
        else if (d < r) cls = 1;
        s.label[y * w + x] = cls;
        const float base[4] = {0.1f, 0.5f, 0.3f, 0.8f};
        s.image[y * w + x] = base[cls] + 0.02f * rng.normal();
      }
    }
    s.seed = seed + i;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace tbseg::testutil
