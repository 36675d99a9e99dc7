#pragma once

#include <cstdint>
#include <vector>

namespace tbseg {

enum class Schedule {
  kPoly,      // polynomial decay over the whole budget
  kCyclical,  // restart cycles with a constant tail per cycle
};

// Which denominator the in-cycle decay divides by. The published formula
// uses the total budget T; the cycle-length variant makes the decay span
// the full bracket within each cycle. Both are exposed; kTotalBudget is
// the default.
enum class LrDenominator { kTotalBudget, kCycleLength };

struct TrainConfig {
  int total_epochs = 1200;  // T
  int cycles = 3;           // M, cycle length T_c = T / M
  double gamma = 0.8;       // constant-lr tail starts at gamma * T_c
  double alpha0 = 0.01;     // base learning rate
  double alpha_r = 0.1;     // restart learning rate (first epoch of a cycle)
  double epsilon = 0.9;     // decay exponent
  int batch_size = 20;
  double momentum = 0.99;
  bool nesterov = true;
  double weight_decay = 3e-5;
  int ckpt_stride = 2;  // thinning stride for single-modal member selection
  uint64_t seed = 1;
  LrDenominator lr_denominator = LrDenominator::kTotalBudget;
  bool log_decoder_weights = false;

  int cycle_length() const { return total_epochs / cycles; }

  // Throws std::invalid_argument when a field is out of range or T is not
  // divisible by M.
  void validate() const;
};

// alpha0 * (1 - t/T)^epsilon for t in [0, T).
double lr_poly(int t, int total_epochs, double alpha0, double epsilon);

// Restart schedule: alpha_r at the first epoch of each cycle, then
// alpha0 * [1 - min(t_c, gamma*T_c)/D]^epsilon where t_c = t mod T_c and D
// is the configured denominator. Constant for t_c in [gamma*T_c, T_c-1].
double lr_cyclical(int t, const TrainConfig& cfg);

double lr_for_epoch(int t, const TrainConfig& cfg, Schedule schedule);

// First in-cycle epoch of the checkpoint collection window,
// ceil(gamma * T_c) with protection against representation noise in the
// product (0.8 * 400 must give 320, not 321).
int collection_window_start(const TrainConfig& cfg);

// True when epoch t falls in the window {t : gamma*T_c <= t mod T_c <= T_c-1}.
bool in_collection_window(int t, const TrainConfig& cfg);

// All collection epochs in [0, T), ascending.
std::vector<int> collection_epochs(const TrainConfig& cfg);

}  // namespace tbseg
