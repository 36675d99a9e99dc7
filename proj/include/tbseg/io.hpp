#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tbseg/metrics.hpp"
#include "tbseg/posterior.hpp"
#include "tbseg/schedule.hpp"
#include "tbseg/segnet.hpp"
#include "tbseg/synthdata.hpp"
#include "tbseg/trainer.hpp"

namespace tbseg {

// Binary container formats. All integers and floats are little-endian and
// written explicitly byte-by-byte; every load validates magic (and version,
// where present) before touching any payload, and load(save(x)) == x
// bit-exact.
//
//   TBCKPT01: magic[8] "TBCKPT01", u32 version=1, u32 entry_count,
//             entries of (u32 name_len, name bytes, u32 rank,
//             u64 extents[rank], f32 payload[prod]), then metadata
//             (i32 epoch, i32 cycle, i32 in_cycle, f32 train_loss).
//   TBDATA01: magic[8] "TBDATA01", u32 sample_count, samples of
//             (image: u32 rank, u64 extents[rank], f32 data;
//              label: u32 rank, u64 extents[rank], u8 data;
//              u64 seed, u8 domain_tag).
//   TBPRED01: magic[8] "TBPRED01", u32 version=1,
//             u32 method_len + bytes, u32 meta_len + bytes (JSON),
//             u32 sample_count, samples of (probs tensor, entropy tensor)
//             each as (u32 rank, u64 extents[rank], f32 data).

void save_checkpoint(const std::string& path, const CheckpointRecord& record);
CheckpointRecord load_checkpoint(const std::string& path);

// "ckpt_t00016.bin" for epoch 16
std::string checkpoint_filename(int epoch);

void save_dataset(const std::string& path, const std::vector<LabeledSample>& samples);
std::vector<LabeledSample> load_dataset(const std::string& path);

struct PredictionSet {
  std::string method;
  std::string meta_json;  // method parameters as a JSON object
  std::vector<ProbabilisticPrediction> preds;
  std::vector<Tensor> entropy;  // (H, W) per sample, bits
};

void save_predictions(const std::string& path, const PredictionSet& set);
PredictionSet load_predictions(const std::string& path);

// Plain-text key=value run configuration ('#' starts a comment). Unknown
// keys are rejected by name; every value is range-checked at load. Throws
// std::invalid_argument on any parse or validation failure (the CLI maps
// that to exit code 2).
struct RunConfig {
  NetConfig net;
  TrainConfig train;
  Schedule schedule = Schedule::kCyclical;
  PhantomParams data;
  int train_count = 200;
  int val_count = 50;
  int ood_a_count = 50;
  int ood_b_count = 50;
  std::string method = "vanilla";
  int method_n = 30;     // ensemble member count (ckpt-single / ckpt-multi)
  int method_stride = 2; // single-modal thinning stride
  float tau = 1.5f;      // temperature for method=temp
  int mc_n = 30;         // MC-Dropout passes
  int deepens_k = 5;     // deep-ensemble member count
  std::string data_dir;
  std::string ckpt_dir;
  std::string out_dir;

  void validate() const;  // throws std::invalid_argument
};

RunConfig load_run_config(const std::string& path);

// Full key list accepted by load_run_config (for error messages and docs).
const std::vector<std::string>& run_config_keys();

// Parsed TB_SEED environment override, if set; throws std::invalid_argument
// if set but not a valid u64.
std::optional<uint64_t> tb_seed_from_env();

// One JSON object per line: {"t":..,"lr":..,"loss":..,"restart":..}
// plus "decoder_weights" when logged.
void save_trajectory(const std::string& path, const TrajectoryLog& log);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

std::string method_display_name(const std::string& method);

}  // namespace tbseg
