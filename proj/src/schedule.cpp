#include "tbseg/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tbseg {

void TrainConfig::validate() const {
  if (total_epochs <= 0) throw std::invalid_argument("total_epochs must be positive");
  if (cycles <= 0) throw std::invalid_argument("cycles must be positive");
  if (total_epochs % cycles != 0) {
    throw std::invalid_argument("total_epochs (" + std::to_string(total_epochs) +
                                ") must be divisible by cycles (" + std::to_string(cycles) + ")");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in (0,1)");
  if (!(alpha0 > 0.0)) throw std::invalid_argument("alpha0 must be positive");
  if (!(alpha_r > 0.0)) throw std::invalid_argument("alpha_r must be positive");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0,1)");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
  if (ckpt_stride <= 0) throw std::invalid_argument("ckpt_stride must be positive");
}

namespace {
void check_epoch(int t, int total) {
  if (t < 0 || t >= total) {
    throw std::invalid_argument("epoch " + std::to_string(t) + " outside [0," +
                                std::to_string(total) + ")");
  }
}
}  // namespace

double lr_poly(int t, int total_epochs, double alpha0, double epsilon) {
  check_epoch(t, total_epochs);
  return alpha0 *
         std::pow(1.0 - static_cast<double>(t) / static_cast<double>(total_epochs), epsilon);
}

double lr_cyclical(int t, const TrainConfig& cfg) {
  check_epoch(t, cfg.total_epochs);
  const int tc = t % cfg.cycle_length();
  if (tc == 0) return cfg.alpha_r;
  const double tail_start = cfg.gamma * static_cast<double>(cfg.cycle_length());
  const double denom = cfg.lr_denominator == LrDenominator::kTotalBudget
                           ? static_cast<double>(cfg.total_epochs)
                           : static_cast<double>(cfg.cycle_length());
  const double progressed = std::min(static_cast<double>(tc), tail_start);
  return cfg.alpha0 * std::pow(1.0 - progressed / denom, cfg.epsilon);
}

double lr_for_epoch(int t, const TrainConfig& cfg, Schedule schedule) {
  return schedule == Schedule::kPoly ? lr_poly(t, cfg.total_epochs, cfg.alpha0, cfg.epsilon)
                                     : lr_cyclical(t, cfg);
}

int collection_window_start(const TrainConfig& cfg) {
  const double x = cfg.gamma * static_cast<double>(cfg.cycle_length());
  const double r = std::round(x);
  const double snapped = std::fabs(x - r) < 1e-6 ? r : std::ceil(x);
  return static_cast<int>(snapped);
}

bool in_collection_window(int t, const TrainConfig& cfg) {
  check_epoch(t, cfg.total_epochs);
  return t % cfg.cycle_length() >= collection_window_start(cfg);
}

std::vector<int> collection_epochs(const TrainConfig& cfg) {
  std::vector<int> out;
  for (int t = 0; t < cfg.total_epochs; ++t) {
    if (in_collection_window(t, cfg)) out.push_back(t);
  }
  return out;
}

}  // namespace tbseg
