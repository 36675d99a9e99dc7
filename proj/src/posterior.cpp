#include "tbseg/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>

#include "tbseg/tape.hpp"

namespace tbseg {

CheckpointStore::CheckpointStore(std::vector<CheckpointRecord> records)
    : records_(std::move(records)) {
  int prev_epoch = -1;
  int prev_cycle = 1;
  for (const auto& r : records_) {
    if (r.epoch <= prev_epoch) {
      throw std::runtime_error("CheckpointStore: epochs not strictly increasing at epoch " +
                               std::to_string(r.epoch));
    }
    if (r.cycle < prev_cycle || r.cycle < 1) {
      throw std::runtime_error("CheckpointStore: cycle ids must be 1-based nondecreasing");
    }
    if (r.in_cycle < 0 || r.in_cycle > r.epoch) {
      throw std::runtime_error("CheckpointStore: inconsistent in-cycle epoch");
    }
    prev_epoch = r.epoch;
    prev_cycle = r.cycle;
  }
}

void CheckpointStore::validate_window(const TrainConfig& cfg) const {
  cfg.validate();
  const int tc = cfg.cycle_length();
  const int start = collection_window_start(cfg);
  for (const auto& r : records_) {
    if (r.epoch % tc != r.in_cycle || r.epoch / tc + 1 != r.cycle) {
      throw std::runtime_error("CheckpointStore: record at epoch " + std::to_string(r.epoch) +
                               " inconsistent with cycle length " + std::to_string(tc));
    }
    if (r.in_cycle < start) {
      throw std::runtime_error("CheckpointStore: epoch " + std::to_string(r.epoch) +
                               " lies before the collection window");
    }
  }
}

int CheckpointStore::num_cycles() const {
  int m = 0;
  for (const auto& r : records_) m = std::max(m, r.cycle);
  return m;
}

std::vector<const CheckpointRecord*> CheckpointStore::cycle(int c) const {
  std::vector<const CheckpointRecord*> out;
  for (const auto& r : records_) {
    if (r.cycle == c) out.push_back(&r);
  }
  return out;
}

void EnsembleSpec::validate() const {
  if (n < 1) throw std::runtime_error("EnsembleSpec: n must be >= 1");
  if (mode == EnsembleMode::kSingle && stride < 1) {
    throw std::runtime_error("EnsembleSpec: stride must be >= 1");
  }
}

std::vector<CheckpointRecord> select_members(const CheckpointStore& store,
                                             const EnsembleSpec& spec) {
  spec.validate();
  if (store.empty()) throw std::runtime_error("select_members: store is empty");

  std::vector<CheckpointRecord> out;
  if (spec.mode == EnsembleMode::kSingle) {
    const auto last_cycle = store.cycle(store.num_cycles());
    const int last_epoch = last_cycle.back()->epoch;
    // comb of epochs {last, last - s, ..., last - (n-1) s}, then ascending
    for (int k = spec.n - 1; k >= 0; --k) {
      const int want = last_epoch - k * spec.stride;
      const auto it = std::find_if(last_cycle.begin(), last_cycle.end(),
                                   [&](const CheckpointRecord* r) { return r->epoch == want; });
      if (it == last_cycle.end()) {
        throw std::runtime_error("select_members: insufficient checkpoints, epoch " +
                                 std::to_string(want) + " not in the last cycle's window");
      }
      out.push_back(**it);
    }
  } else {
    const int m = store.num_cycles();
    if (spec.n % m != 0) {
      throw std::runtime_error("select_members: n = " + std::to_string(spec.n) +
                               " not divisible by the store's cycle count " + std::to_string(m));
    }
    const size_t per_cycle = static_cast<size_t>(spec.n / m);
    for (int c = 1; c <= m; ++c) {
      const auto recs = store.cycle(c);
      if (recs.size() < per_cycle) {
        throw std::runtime_error("select_members: cycle " + std::to_string(c) + " holds only " +
                                 std::to_string(recs.size()) + " checkpoints, need " +
                                 std::to_string(per_cycle));
      }
      for (size_t i = recs.size() - per_cycle; i < recs.size(); ++i) out.push_back(*recs[i]);
    }
  }
  return out;
}

std::vector<ParamSet> member_params(const std::vector<CheckpointRecord>& records) {
  std::vector<ParamSet> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.params);
  return out;
}

ProbabilisticPrediction ensemble_predict(const std::vector<ParamSet>& members,
                                         const NetConfig& cfg, const Tensor& image) {
  if (members.empty()) throw std::runtime_error("ensemble_predict: no members");
  Rng unused(0);  // dropout stays inactive
  std::vector<double> acc;
  std::vector<size_t> shape;
  for (const auto& m : members) {
    ProbabilisticPrediction p = predict_proba(cfg, m, image, /*dropout_active=*/false, unused);
    if (acc.empty()) {
      shape = p.probs.shape();
      acc.assign(p.probs.size(), 0.0);
    } else if (p.probs.shape() != shape) {
      throw std::runtime_error("ensemble_predict: member output shape mismatch");
    }
    for (size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<double>(p.probs[i]);
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  ProbabilisticPrediction mean;
  mean.probs = Tensor(shape);
  for (size_t i = 0; i < acc.size(); ++i) mean.probs[i] = static_cast<float>(acc[i] * inv);
  mean.validate();
  return mean;
}

ParamSet swa_average(const std::vector<ParamSet>& members) {
  if (members.empty()) throw std::runtime_error("swa_average: no members");
  for (const auto& m : members) {
    if (!m.shape_compatible(members.front())) {
      throw std::runtime_error("swa_average: member parameter shapes differ");
    }
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  ParamSet out;
  for (const auto& [name, first] : members.front()) {
    Tensor mean(first.shape());
    if (ParamSet::is_bn_buffer(name)) {
      // stale marker; bn_recalibrate must rebuild these before deployment
      const bool is_var = name.ends_with(".running_var");
      std::fill(mean.data(), mean.data() + mean.size(), is_var ? 1.0f : 0.0f);
    } else {
      std::vector<double> acc(first.size(), 0.0);
      for (const auto& m : members) {
        const Tensor& t = m.at(name);
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<double>(t[i]);
      }
      for (size_t i = 0; i < acc.size(); ++i) mean[i] = static_cast<float>(acc[i] * inv);
    }
    out.insert(name, std::move(mean));
  }
  return out;
}

void bn_recalibrate(SegNet& net, const std::vector<LabeledSample>& data, int batch_size) {
  if (data.empty()) throw std::runtime_error("bn_recalibrate: dataset is empty");
  if (batch_size < 1) throw std::runtime_error("bn_recalibrate: batch_size must be >= 1");
  const NetConfig& cfg = net.config();
  ParamSet& params = net.params();
  for (auto& [name, value] : params) {
    if (!ParamSet::is_bn_buffer(name)) continue;
    const float reset = name.ends_with(".running_var") ? 1.0f : 0.0f;
    std::fill(value.data(), value.data() + value.size(), reset);
  }

  Rng unused(0);
  const size_t n = data.size();
  const size_t bsz = static_cast<size_t>(batch_size);
  size_t batch_index = 0;
  for (size_t start = 0; start < n; start += bsz) {
    const size_t cur = std::min(bsz, n - start);
    const Tensor& first = data[start].image;
    Tensor images({cur, first.extent(0), first.extent(1), first.extent(2)});
    for (size_t b = 0; b < cur; ++b) {
      const Tensor& img = data[start + b].image;
      if (!img.same_shape(first)) {
        throw std::runtime_error("bn_recalibrate: sample shape mismatch");
      }
      std::memcpy(images.data() + b * img.size(), img.data(), img.size() * sizeof(float));
    }
    ++batch_index;
    // momentum 1/k makes the running buffers the cumulative average of the
    // per-batch statistics; k = 1 overwrites the stale markers entirely
    const float momentum = 1.0f / static_cast<float>(batch_index);
    Tape tape;
    Tape::NodeId in = tape.input(std::move(images));
    segnet_forward(tape, cfg, params, in, /*train_mode=*/true, momentum,
                   /*dropout_active=*/false, unused);
  }
}

ProbabilisticPrediction mc_dropout_predict(const SegNet& net, const Tensor& image, int n,
                                           Rng& rng) {
  if (n < 1) throw std::runtime_error("mc_dropout_predict: n must be >= 1");
  std::vector<double> acc;
  std::vector<size_t> shape;
  for (int i = 0; i < n; ++i) {
    ProbabilisticPrediction p = net.predict_proba(image, /*dropout_active=*/true, rng);
    if (acc.empty()) {
      shape = p.probs.shape();
      acc.assign(p.probs.size(), 0.0);
    }
    for (size_t j = 0; j < acc.size(); ++j) acc[j] += static_cast<double>(p.probs[j]);
  }
  const double inv = 1.0 / static_cast<double>(n);
  ProbabilisticPrediction mean;
  mean.probs = Tensor(shape);
  for (size_t j = 0; j < acc.size(); ++j) mean.probs[j] = static_cast<float>(acc[j] * inv);
  mean.validate();
  return mean;
}

ProbabilisticPrediction temperature_scale(const Tensor& logits, float tau) {
  if (!(tau > 0.0f)) throw std::runtime_error("temperature_scale: tau must be > 0");
  Tensor scaled(logits.shape());
  for (size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / tau;
  return softmax_prediction(scaled);
}

std::vector<SegNet> deep_ensemble_train(const NetConfig& base_cfg, const TrainConfig& train_cfg,
                                        const std::vector<uint64_t>& seeds,
                                        const std::vector<LabeledSample>& data) {
  if (seeds.empty()) throw std::runtime_error("deep_ensemble_train: no seeds");
  std::set<uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) {
    throw std::runtime_error("deep_ensemble_train: seeds must be distinct");
  }
  std::vector<SegNet> members;
  members.reserve(seeds.size());
  for (uint64_t seed : seeds) {
    TrainConfig cfg = train_cfg;
    cfg.seed = seed;
    cfg.cycles = 1;  // single cycle, polynomial decay over the whole budget
    Rng init = Rng(seed).stream(kInitStreamId);
    SegNet net = SegNet::build(base_cfg, init);
    TrainResult r = train(std::move(net), data, cfg, Schedule::kPoly);
    members.push_back(std::move(r.net));
  }
  return members;
}

}  // namespace tbseg
