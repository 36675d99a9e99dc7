#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tbseg/segnet.hpp"
#include "tbseg/tensor.hpp"

namespace tbseg {

// Per-voxel Shannon entropy of the predictive distribution, in bits.
struct UncertaintyMap {
  Tensor ent;  // (H, W), values in [0, log2 C]
};

UncertaintyMap entropy_map(const ProbabilisticPrediction& pred);

// argmax over the class dim; ties resolve to the lowest class index.
ByteImage argmax_labels(const ProbabilisticPrediction& pred);

// 2|A n B| / (|A| + |B|) for the class-k masks; both-empty pairs score 1.0
// (class absent and not predicted counts as success).
float dice(const ByteImage& pred_labels, const ByteImage& gt, uint8_t cls);

// Inclusive tightest axis-aligned box around all foreground (gt > 0) voxels.
struct BBox {
  size_t y0 = 0, y1 = 0, x0 = 0, x1 = 0;
  size_t area() const { return (y1 - y0 + 1) * (x1 - x0 + 1); }
};

// Throws std::runtime_error on an all-background volume; callers exclude
// such volumes (with a warning) rather than aborting a whole split.
BBox foreground_bbox(const ByteImage& gt);

// 100 confidence buckets; bucket s (1-based) covers ((s-1)%, s%], chosen as
// s = ceil(conf * 100) clamped to [1, 100].
struct ReliabilityBins {
  std::array<uint64_t, 100> count{};
  std::array<double, 100> conf_sum{};
  std::array<uint64_t, 100> correct{};

  uint64_t total() const;
  // sum_s |B_s|/N_v * |conf(B_s) - acc(B_s)|, scaled to percent
  double ece_percent() const;
};

struct EceResult {
  float ece_percent = 0.0f;
  ReliabilityBins bins;
};

// Pooled ECE over all volumes of a split: voxels inside each volume's
// region are binned together (confidence = max class probability,
// accuracy = argmax == gt with ties toward the lowest index). Inputs run
// parallel: preds[i], gts[i], regions[i].
EceResult ece(const std::vector<ProbabilisticPrediction>& preds,
              const std::vector<ByteImage>& gts, const std::vector<BBox>& regions);

// "RV" / "MYO" / "LV" for the 4-class cardiac layout, "class<k>" otherwise.
std::string class_display_name(int num_classes, int cls);

// One (method, split) row of the comparison table.
struct MethodSplitMetrics {
  std::string method;
  std::string split;
  int num_classes = 0;
  int volumes = 0;           // volumes scored
  int excluded_volumes = 0;  // all-background volumes skipped with a warning
  std::vector<double> dice_mean;  // per foreground class 1..C-1, over volumes
  std::vector<double> dice_sd;    // sample sd (0 when volumes < 2)
  double mean_foreground_dice = 0.0;
  double ece_percent = 0.0;  // pooled over the split
  std::vector<double> per_volume_ece;
  ReliabilityBins bins;
};

// Scores one split: per-volume Dice per foreground class, pooled ECE over
// the per-volume foreground bounding boxes, per-volume ECE diagnostics.
MethodSplitMetrics evaluate_split(const std::string& method, const std::string& split,
                                  const std::vector<ProbabilisticPrediction>& preds,
                                  const std::vector<ByteImage>& gts, int num_classes);

struct EvaluationReport {
  int schema_version = 1;
  std::vector<MethodSplitMetrics> entries;

  std::string to_json() const;  // machine-readable, deterministic
  std::string to_table() const;  // human-readable summary
  static EvaluationReport from_json(const std::string& text);
};

}  // namespace tbseg
