#pragma once

#include <cstdint>
#include <vector>

#include "tbseg/param_set.hpp"
#include "tbseg/schedule.hpp"
#include "tbseg/segnet.hpp"
#include "tbseg/synthdata.hpp"

namespace tbseg {

// One harvested posterior sample: the full deployable weight set (batch
// norm running statistics included) at the end of epoch `epoch`.
struct CheckpointRecord {
  int epoch = 0;     // t, in [0, T)
  int cycle = 1;     // 1-based, floor(t / T_c) + 1
  int in_cycle = 0;  // t mod T_c
  ParamSet params;
  float train_loss = 0.0f;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // mean over the epoch's batches
  bool restart = false;     // first epoch of a cycle under the cyclical schedule
  // flattened dec1.conv2.weight when TrainConfig.log_decoder_weights is set
  // (enough to trace the weight-space trajectory without dumping the net)
  std::vector<float> decoder_weights;
};

struct TrajectoryLog {
  Schedule schedule = Schedule::kCyclical;
  std::vector<EpochRecord> epochs;  // gapless, one per epoch 0..T-1
};

struct TrainResult {
  SegNet net;  // final-epoch weights
  std::vector<CheckpointRecord> checkpoints;
  TrajectoryLog log;
};

// Runs `cfg.total_epochs` epochs of SGD with momentum over `data`. One
// epoch is one pass over the seeded shuffle of the training set in batches
// of cfg.batch_size (final batch may be short). Augmentation per sample:
// random horizontal/vertical flips and uniform +-10% intensity scaling.
// Checkpoints are harvested at the end of every epoch inside the
// collection window {t : gamma*T_c <= t mod T_c <= T_c - 1}. Momentum
// velocity persists across cycle restarts; only the learning rate resets.
// Throws std::runtime_error with epoch/batch context if the loss or a
// gradient goes non-finite.
TrainResult train(SegNet net, const std::vector<LabeledSample>& data, const TrainConfig& cfg,
                  Schedule schedule);

// The augmentation used by train(), exposed for tests: flips sample
// (image and label together) per two fair coin draws and scales intensity
// by uniform [0.9, 1.1], consuming exactly three draws from `rng`.
LabeledSample augment_sample(const LabeledSample& sample, Rng& rng);

}  // namespace tbseg
