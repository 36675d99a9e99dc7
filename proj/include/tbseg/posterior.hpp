#pragma once

#include <cstdint>
#include <vector>

#include "tbseg/schedule.hpp"
#include "tbseg/segnet.hpp"
#include "tbseg/synthdata.hpp"
#include "tbseg/trainer.hpp"

namespace tbseg {

// Checkpoint records grouped by training cycle; the raw material for the
// trajectory-based predictors.
class CheckpointStore {
 public:
  CheckpointStore() = default;
  // Validates: epochs strictly increasing, cycle ids nondecreasing and
  // 1-based, in_cycle consistent with epoch and cycle.
  explicit CheckpointStore(std::vector<CheckpointRecord> records);

  // Additionally checks every record's in-cycle epoch lies in the
  // collection window defined by `cfg`.
  void validate_window(const TrainConfig& cfg) const;

  const std::vector<CheckpointRecord>& records() const { return records_; }
  bool empty() const { return records_.empty(); }
  size_t size() const { return records_.size(); }
  int num_cycles() const;
  std::vector<const CheckpointRecord*> cycle(int c) const;  // ascending epoch

 private:
  std::vector<CheckpointRecord> records_;
};

enum class EnsembleMode { kSingle, kMulti };

// Which members to draw from a store. Single mode thins the LAST cycle's
// window backwards from the final checkpoint with `stride`; multi mode
// takes the latest n / num_cycles checkpoints of EVERY cycle.
struct EnsembleSpec {
  EnsembleMode mode = EnsembleMode::kMulti;
  int n = 30;
  int stride = 2;  // single-modal thinning step

  void validate() const;
};

// Deterministic member selection; returns records in ascending epoch
// order. Throws std::runtime_error when the store cannot satisfy the
// request (missing epochs for the single-modal comb, or a cycle with fewer
// than n / M records for multi).
std::vector<CheckpointRecord> select_members(const CheckpointStore& store,
                                             const EnsembleSpec& spec);

std::vector<ParamSet> member_params(const std::vector<CheckpointRecord>& records);

// Eq.-style Monte-Carlo predictive: the arithmetic mean of the members'
// probability maps (averaged in probability space, dropout inactive).
// Accumulation is double precision in member order, so a single member
// reproduces its own predict_proba bit-exactly.
ProbabilisticPrediction ensemble_predict(const std::vector<ParamSet>& members,
                                         const NetConfig& cfg, const Tensor& image);

// Elementwise mean of every parameter tensor except the bn running
// statistics, which are reset to the stale marker (mean 0, var 1) and must
// be re-estimated with bn_recalibrate before the model is used.
ParamSet swa_average(const std::vector<ParamSet>& members);

// One pass over `data` (given order, no augmentation, no dropout) in train
// mode, rebuilding only the bn running statistics as the cumulative average
// of the per-batch statistics (momentum 1/k on the k-th batch). Every other
// parameter is untouched bit-exact.
void bn_recalibrate(SegNet& net, const std::vector<LabeledSample>& data, int batch_size);

// Mean of n stochastic forward passes with dropout forced active and fixed
// weights. With dropout_p == 0 every pass is deterministic and the result
// equals predict_proba bit-exactly.
ProbabilisticPrediction mc_dropout_predict(const SegNet& net, const Tensor& image, int n,
                                           Rng& rng);

// softmax(logits / tau) per voxel; tau must be > 0.
ProbabilisticPrediction temperature_scale(const Tensor& logits, float tau);

// Independently initialized and trained single-cycle (poly schedule)
// models, one per seed. Seeds must be distinct; checkpoints are discarded.
std::vector<SegNet> deep_ensemble_train(const NetConfig& base_cfg, const TrainConfig& train_cfg,
                                        const std::vector<uint64_t>& seeds,
                                        const std::vector<LabeledSample>& data);

// Stream id reserved for weight initialization off a run's root seed; the
// trainer's per-epoch streams use ids 0..T-1, far below this.
inline constexpr uint64_t kInitStreamId = 0x496e6974ULL;

}  // namespace tbseg
