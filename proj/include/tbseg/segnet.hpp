#pragma once

#include <string>
#include <vector>

#include "tbseg/param_set.hpp"
#include "tbseg/rng.hpp"
#include "tbseg/tape.hpp"
#include "tbseg/tensor.hpp"

namespace tbseg {

// Per-voxel C-class categorical distribution over an image, (C, H, W).
// Each voxel sums to 1 within 1e-5 and entries lie in [0, 1].
struct ProbabilisticPrediction {
  Tensor probs;
  void validate() const;
};

struct NetConfig {
  int in_channels = 1;
  int num_classes = 4;  // C
  int base_width = 8;
  int depth = 3;  // number of pooling stages; input extents divisible by 2^depth
  float dropout_p = 0.0f;

  void validate() const;
  int encoder_width(int stage) const;  // stage in [1, depth]
  int bottleneck_width() const;
};

inline constexpr float kBnMomentum = 0.1f;
inline constexpr float kBnEps = 1e-5f;

// Encoder-decoder segmentation network: `depth` encoder stages of two
// 3x3 conv + batchnorm + relu layers with 2x2 max pooling between them, a
// bottleneck stage, and a mirrored decoder using nearest-neighbour 2x
// upsampling with skip concatenation, closed by a 1x1 conv producing
// C-class logits. Optional dropout follows each encoder/decoder stage.
class SegNet {
 public:
  SegNet(NetConfig cfg, ParamSet params);

  // He fan-in initialization drawn from `rng`; bn running stats start at
  // mean 0, var 1. The same seed builds a bit-identical ParamSet.
  static SegNet build(const NetConfig& cfg, Rng& rng);

  // The full parameter-name enumeration for a config, lexicographic.
  static std::vector<std::string> parameter_names(const NetConfig& cfg);

  // Reconstructs the structural config from parameter shapes (dropout_p is
  // not recoverable from shapes and must be supplied when it matters).
  static NetConfig infer_config(const ParamSet& params, float dropout_p = 0.0f);

  const NetConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  ProbabilisticPrediction predict_proba(const Tensor& image, bool dropout_active,
                                        Rng& rng) const;
  Tensor predict_logits(const Tensor& image, bool dropout_active, Rng& rng) const;

 private:
  NetConfig cfg_;
  ParamSet params_;
};

// Records the network forward pass on a tape, returning the logits node
// (N, C, H, W). In train mode batch statistics are used and folded into
// the running buffers with `bn_momentum` (0 freezes them). Dropout fires
// only when `dropout_active` and cfg.dropout_p > 0.
Tape::NodeId segnet_forward(Tape& tape, const NetConfig& cfg, ParamSet& params,
                            Tape::NodeId input, bool train_mode, float bn_momentum,
                            bool dropout_active, Rng& rng);

// Single-image eval-mode logits, (C, H, W). Read-only on the parameters.
Tensor predict_logits(const NetConfig& cfg, const ParamSet& params, const Tensor& image,
                      bool dropout_active, Rng& rng);
ProbabilisticPrediction predict_proba(const NetConfig& cfg, const ParamSet& params,
                                      const Tensor& image, bool dropout_active, Rng& rng);

// softmax over the class dim of single-image logits (C, H, W)
ProbabilisticPrediction softmax_prediction(const Tensor& logits);

}  // namespace tbseg
