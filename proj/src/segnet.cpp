#include "tbseg/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>

namespace tbseg {
namespace {

struct ConvBlock {
  std::string prefix;  // e.g. "enc1.conv1" / "enc1.bn1"
  size_t in_ch = 0;
  size_t out_ch = 0;
  size_t ksize = 3;
  bool has_bn = true;
};

// Walks the conv/bn blocks in construction order. The decoder input width at
// level d is the width arriving from below (bottleneck at d == depth,
// otherwise the decoder output one level down) plus the skip width.
void for_each_block(const NetConfig& cfg, const std::function<void(const ConvBlock&)>& fn) {
  auto stage = [&](const std::string& name, size_t in_ch, size_t out_ch) {
    fn({name + ".conv1", in_ch, out_ch, 3, true});
    fn({name + ".conv2", out_ch, out_ch, 3, true});
  };
  size_t prev = static_cast<size_t>(cfg.in_channels);
  for (int d = 1; d <= cfg.depth; ++d) {
    stage("enc" + std::to_string(d), prev, static_cast<size_t>(cfg.encoder_width(d)));
    prev = static_cast<size_t>(cfg.encoder_width(d));
  }
  stage("bottleneck", prev, static_cast<size_t>(cfg.bottleneck_width()));
  for (int d = cfg.depth; d >= 1; --d) {
    size_t from_below = static_cast<size_t>(d == cfg.depth ? cfg.bottleneck_width()
                                                           : cfg.encoder_width(d + 1));
    size_t skip = static_cast<size_t>(cfg.encoder_width(d));
    stage("dec" + std::to_string(d), from_below + skip, skip);
  }
  fn({"head", static_cast<size_t>(cfg.encoder_width(1)),
      static_cast<size_t>(cfg.num_classes), 1, false});
}

void append_block_names(const ConvBlock& b, std::vector<std::string>& out) {
  out.push_back(b.prefix + ".weight");
  out.push_back(b.prefix + ".bias");
  if (b.has_bn) {
    // bn params share the conv index: encN.convK -> encN.bnK
    std::string bn = b.prefix;
    size_t pos = bn.rfind(".conv");
    bn.replace(pos + 1, 4, "bn");
    out.push_back(bn + ".weight");
    out.push_back(bn + ".bias");
    out.push_back(bn + ".running_mean");
    out.push_back(bn + ".running_var");
  }
}

std::string bn_prefix(const std::string& conv_prefix) {
  std::string bn = conv_prefix;
  size_t pos = bn.rfind(".conv");
  bn.replace(pos + 1, 4, "bn");
  return bn;
}

}  // namespace

void ProbabilisticPrediction::validate() const {
  if (probs.rank() != 3) {
    throw std::runtime_error("ProbabilisticPrediction: expected rank-3 (C,H,W), got " +
                             probs.shape_str());
  }
  const size_t c = probs.extent(0);
  const size_t hw = probs.extent(1) * probs.extent(2);
  for (size_t v = 0; v < hw; ++v) {
    double sum = 0.0;
    for (size_t k = 0; k < c; ++k) {
      const float p = probs[k * hw + v];
      if (!(p >= 0.0f && p <= 1.0f)) {
        throw std::runtime_error("ProbabilisticPrediction: probability out of [0,1]");
      }
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-5) {
      throw std::runtime_error("ProbabilisticPrediction: voxel does not sum to 1");
    }
  }
}

void NetConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("NetConfig: in_channels must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("NetConfig: num_classes must be >= 2");
  if (base_width < 1) throw std::invalid_argument("NetConfig: base_width must be >= 1");
  if (depth < 1 || depth > 6) throw std::invalid_argument("NetConfig: depth must be in [1, 6]");
  if (!(dropout_p >= 0.0f && dropout_p < 1.0f)) {
    throw std::invalid_argument("NetConfig: dropout_p must be in [0, 1)");
  }
}

int NetConfig::encoder_width(int stage) const { return base_width << (stage - 1); }
int NetConfig::bottleneck_width() const { return base_width << depth; }

SegNet::SegNet(NetConfig cfg, ParamSet params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  if (params_.names() != parameter_names(cfg_)) {
    throw std::runtime_error("SegNet: parameter names do not match the config");
  }
}

SegNet SegNet::build(const NetConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamSet params;
  for_each_block(cfg, [&](const ConvBlock& b) {
    Tensor w({b.out_ch, b.in_ch, b.ksize, b.ksize});
    const float scale =
        std::sqrt(2.0f / static_cast<float>(b.in_ch * b.ksize * b.ksize));
    for (size_t i = 0; i < w.size(); ++i) w[i] = rng.normal() * scale;
    params.insert(b.prefix + ".weight", std::move(w));
    params.insert(b.prefix + ".bias", Tensor::full({b.out_ch}, 0.0f));
    if (b.has_bn) {
      const std::string bn = bn_prefix(b.prefix);
      params.insert(bn + ".weight", Tensor::full({b.out_ch}, 1.0f));
      params.insert(bn + ".bias", Tensor::full({b.out_ch}, 0.0f));
      params.insert(bn + ".running_mean", Tensor::full({b.out_ch}, 0.0f));
      params.insert(bn + ".running_var", Tensor::full({b.out_ch}, 1.0f));
    }
  });
  return SegNet(cfg, std::move(params));
}

std::vector<std::string> SegNet::parameter_names(const NetConfig& cfg) {
  cfg.validate();
  std::vector<std::string> names;
  for_each_block(cfg, [&](const ConvBlock& b) { append_block_names(b, names); });
  std::sort(names.begin(), names.end());
  return names;
}

NetConfig SegNet::infer_config(const ParamSet& params, float dropout_p) {
  if (!params.contains("enc1.conv1.weight") || !params.contains("head.weight")) {
    throw std::runtime_error("infer_config: parameter set is not a SegNet");
  }
  NetConfig cfg;
  const Tensor& first = params.at("enc1.conv1.weight");
  cfg.base_width = static_cast<int>(first.extent(0));
  cfg.in_channels = static_cast<int>(first.extent(1));
  cfg.num_classes = static_cast<int>(params.at("head.weight").extent(0));
  int depth = 0;
  while (params.contains("enc" + std::to_string(depth + 1) + ".conv1.weight")) ++depth;
  cfg.depth = depth;
  cfg.dropout_p = dropout_p;
  cfg.validate();
  return cfg;
}

Tape::NodeId segnet_forward(Tape& tape, const NetConfig& cfg, ParamSet& params,
                            Tape::NodeId input, bool train_mode, float bn_momentum,
                            bool dropout_active, Rng& rng) {
  cfg.validate();
  const Tensor& x0 = tape.value(input);
  if (x0.rank() != 4 || x0.extent(1) != static_cast<size_t>(cfg.in_channels)) {
    throw std::runtime_error("segnet_forward: input must be (N, " +
                             std::to_string(cfg.in_channels) + ", H, W), got " + x0.shape_str());
  }
  const size_t div = size_t{1} << cfg.depth;
  if (x0.extent(2) % div != 0 || x0.extent(3) % div != 0) {
    throw std::runtime_error("segnet_forward: spatial extents of " + x0.shape_str() +
                             " not divisible by 2^depth = " + std::to_string(div));
  }

  auto conv_bn_relu = [&](Tape::NodeId x, const std::string& conv) {
    Tape::NodeId w = tape.param(conv + ".weight", params.at(conv + ".weight"));
    Tape::NodeId b = tape.param(conv + ".bias", params.at(conv + ".bias"));
    Tape::NodeId y = tape.conv2d(x, w, b);
    const std::string bn = bn_prefix(conv);
    Tape::NodeId g = tape.param(bn + ".weight", params.at(bn + ".weight"));
    Tape::NodeId be = tape.param(bn + ".bias", params.at(bn + ".bias"));
    y = tape.batchnorm(y, g, be, &params.at(bn + ".running_mean"),
                       &params.at(bn + ".running_var"), train_mode, bn_momentum, kBnEps);
    return tape.relu(y);
  };
  auto stage = [&](Tape::NodeId x, const std::string& name, bool with_dropout) {
    x = conv_bn_relu(x, name + ".conv1");
    x = conv_bn_relu(x, name + ".conv2");
    if (with_dropout) x = tape.dropout(x, cfg.dropout_p, rng, dropout_active);
    return x;
  };

  std::vector<Tape::NodeId> skips;
  Tape::NodeId x = input;
  for (int d = 1; d <= cfg.depth; ++d) {
    x = stage(x, "enc" + std::to_string(d), true);
    skips.push_back(x);
    x = tape.maxpool2x2(x);
  }
  x = stage(x, "bottleneck", false);
  for (int d = cfg.depth; d >= 1; --d) {
    x = tape.upsample_nearest2x(x);
    x = tape.concat_channels(x, skips[static_cast<size_t>(d - 1)]);
    x = stage(x, "dec" + std::to_string(d), true);
  }
  Tape::NodeId hw = tape.param("head.weight", params.at("head.weight"));
  Tape::NodeId hb = tape.param("head.bias", params.at("head.bias"));
  return tape.conv2d(x, hw, hb);
}

Tensor predict_logits(const NetConfig& cfg, const ParamSet& params, const Tensor& image,
                      bool dropout_active, Rng& rng) {
  if (image.rank() != 3) {
    throw std::runtime_error("predict_logits: image must be (C, H, W), got " + image.shape_str());
  }
  Tensor batched({1, image.extent(0), image.extent(1), image.extent(2)},
                 std::vector<float>(image.data(), image.data() + image.size()));
  Tape tape;
  Tape::NodeId in = tape.input(std::move(batched));
  // Eval mode never writes the running statistics (momentum 0 and
  // train_mode false), so the shared batchnorm path is safe on const params.
  Tape::NodeId logits = segnet_forward(tape, cfg, const_cast<ParamSet&>(params), in,
                                       /*train_mode=*/false, /*bn_momentum=*/0.0f,
                                       dropout_active, rng);
  const Tensor& out = tape.value(logits);
  return Tensor({out.extent(1), out.extent(2), out.extent(3)},
                std::vector<float>(out.data(), out.data() + out.size()));
}

ProbabilisticPrediction predict_proba(const NetConfig& cfg, const ParamSet& params,
                                      const Tensor& image, bool dropout_active, Rng& rng) {
  return softmax_prediction(predict_logits(cfg, params, image, dropout_active, rng));
}

ProbabilisticPrediction softmax_prediction(const Tensor& logits) {
  if (logits.rank() != 3) {
    throw std::runtime_error("softmax_prediction: expected (C, H, W), got " + logits.shape_str());
  }
  Tensor batched({1, logits.extent(0), logits.extent(1), logits.extent(2)},
                 std::vector<float>(logits.data(), logits.data() + logits.size()));
  Tensor probs = ops::softmax_channels_forward(batched);
  ProbabilisticPrediction pred;
  pred.probs = Tensor({logits.extent(0), logits.extent(1), logits.extent(2)},
                      std::vector<float>(probs.data(), probs.data() + probs.size()));
  return pred;
}

ProbabilisticPrediction SegNet::predict_proba(const Tensor& image, bool dropout_active,
                                              Rng& rng) const {
  return tbseg::predict_proba(cfg_, params_, image, dropout_active, rng);
}

Tensor SegNet::predict_logits(const Tensor& image, bool dropout_active, Rng& rng) const {
  return tbseg::predict_logits(cfg_, params_, image, dropout_active, rng);
}

}  // namespace tbseg
