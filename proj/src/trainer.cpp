#include "tbseg/trainer.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

#include "tbseg/optim.hpp"
#include "tbseg/tape.hpp"

namespace tbseg {
namespace {

void flip_horizontal(Tensor& image, ByteImage& label) {
  const size_t h = label.extent(0);
  const size_t w = label.extent(1);
  for (size_t y = 0; y < h; ++y) {
    for (size_t x = 0; x < w / 2; ++x) {
      std::swap(image[y * w + x], image[y * w + (w - 1 - x)]);
      std::swap(label[y * w + x], label[y * w + (w - 1 - x)]);
    }
  }
}

void flip_vertical(Tensor& image, ByteImage& label) {
  const size_t h = label.extent(0);
  const size_t w = label.extent(1);
  for (size_t y = 0; y < h / 2; ++y) {
    for (size_t x = 0; x < w; ++x) {
      std::swap(image[y * w + x], image[(h - 1 - y) * w + x]);
      std::swap(label[y * w + x], label[(h - 1 - y) * w + x]);
    }
  }
}

}  // namespace

LabeledSample augment_sample(const LabeledSample& sample, Rng& rng) {
  LabeledSample out = sample;
  const bool hflip = rng.uniform() < 0.5f;
  const bool vflip = rng.uniform() < 0.5f;
  const float scale = 0.9f + 0.2f * rng.uniform();
  if (hflip) flip_horizontal(out.image, out.label);
  if (vflip) flip_vertical(out.image, out.label);
  for (size_t i = 0; i < out.image.size(); ++i) out.image[i] *= scale;
  return out;
}

TrainResult train(SegNet net, const std::vector<LabeledSample>& data, const TrainConfig& cfg,
                  Schedule schedule) {
  cfg.validate();
  if (data.empty()) throw std::runtime_error("train: dataset is empty");
  const NetConfig& ncfg = net.config();
  const size_t h = data[0].image.extent(1);
  const size_t w = data[0].image.extent(2);
  for (const auto& s : data) {
    if (s.image.rank() != 3 || s.image.extent(0) != static_cast<size_t>(ncfg.in_channels) ||
        s.image.extent(1) != h || s.image.extent(2) != w) {
      throw std::runtime_error("train: sample shape mismatch, got " + s.image.shape_str());
    }
    for (size_t i = 0; i < s.label.size(); ++i) {
      if (s.label[i] >= ncfg.num_classes) {
        throw std::runtime_error("train: label class out of range");
      }
    }
  }

  const Rng root(cfg.seed);
  ParamSet velocity = make_velocity(net.params());
  const size_t n = data.size();
  const size_t batch = static_cast<size_t>(cfg.batch_size);

  TrainResult result{std::move(net), {}, {}};
  result.log.schedule = schedule;
  result.log.epochs.reserve(static_cast<size_t>(cfg.total_epochs));

  std::vector<size_t> order(n);
  for (int t = 0; t < cfg.total_epochs; ++t) {
    Rng epoch_rng = root.stream(static_cast<uint64_t>(t));
    const double lr = lr_for_epoch(t, cfg, schedule);

    std::iota(order.begin(), order.end(), size_t{0});
    for (size_t i = n; i > 1; --i) {  // Fisher-Yates with the epoch stream
      std::swap(order[i - 1], order[epoch_rng.below(i)]);
    }

    double loss_sum = 0.0;
    size_t batches = 0;
    for (size_t start = 0; start < n; start += batch) {
      const size_t bsz = std::min(batch, n - start);
      Tensor images({bsz, static_cast<size_t>(ncfg.in_channels), h, w});
      ByteImage labels({bsz, h, w});
      for (size_t b = 0; b < bsz; ++b) {
        LabeledSample aug = augment_sample(data[order[start + b]], epoch_rng);
        std::memcpy(images.data() + b * aug.image.size(), aug.image.data(),
                    aug.image.size() * sizeof(float));
        std::memcpy(labels.data() + b * aug.label.size(), aug.label.data(), aug.label.size());
      }

      try {
        Tape tape;
        Tape::NodeId in = tape.input(std::move(images));
        Tape::NodeId logits =
            segnet_forward(tape, ncfg, result.net.params(), in, /*train_mode=*/true, kBnMomentum,
                           /*dropout_active=*/ncfg.dropout_p > 0.0f, epoch_rng);
        Tape::NodeId loss = tape.ce_dice_loss(logits, labels);
        loss_sum += static_cast<double>(tape.value(loss)[0]);
        ++batches;
        tape.backward(loss);
        ParamSet grads = tape.param_grads(result.net.params());
        sgd_momentum_step(result.net.params(), grads, velocity, static_cast<float>(lr),
                          static_cast<float>(cfg.momentum), static_cast<float>(cfg.weight_decay),
                          cfg.nesterov);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("train: aborted at epoch " + std::to_string(t) + ", batch " +
                                 std::to_string(batches) + " (lr=" + std::to_string(lr) +
                                 "): " + e.what());
      }
    }

    const double epoch_loss = loss_sum / static_cast<double>(batches);
    EpochRecord rec;
    rec.epoch = t;
    rec.lr = lr;
    rec.train_loss = epoch_loss;
    rec.restart = schedule == Schedule::kCyclical && t % cfg.cycle_length() == 0;
    if (cfg.log_decoder_weights) {
      const Tensor& dw = result.net.params().at("dec1.conv2.weight");
      rec.decoder_weights.assign(dw.data(), dw.data() + dw.size());
    }
    result.log.epochs.push_back(std::move(rec));

    // the window is defined on t mod T_c for either schedule
    if (in_collection_window(t, cfg)) {
      CheckpointRecord ckpt;
      ckpt.epoch = t;
      ckpt.cycle = t / cfg.cycle_length() + 1;
      ckpt.in_cycle = t % cfg.cycle_length();
      ckpt.params = result.net.params();
      ckpt.train_loss = static_cast<float>(epoch_loss);
      result.checkpoints.push_back(std::move(ckpt));
    }
  }
  return result;
}

}  // namespace tbseg
