#include "tbseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace tbseg {

UncertaintyMap entropy_map(const ProbabilisticPrediction& pred) {
  pred.validate();
  const size_t c = pred.probs.extent(0);
  const size_t h = pred.probs.extent(1);
  const size_t w = pred.probs.extent(2);
  const double max_ent = std::log2(static_cast<double>(c));
  UncertaintyMap map;
  map.ent = Tensor({h, w});
  for (size_t v = 0; v < h * w; ++v) {
    double ent = 0.0;
    for (size_t k = 0; k < c; ++k) {
      const double p = static_cast<double>(pred.probs[k * h * w + v]);
      if (p > 0.0) ent -= p * std::log2(p);  // 0 log 0 == 0
    }
    map.ent[v] = static_cast<float>(std::clamp(ent, 0.0, max_ent));
  }
  return map;
}

ByteImage argmax_labels(const ProbabilisticPrediction& pred) {
  const size_t c = pred.probs.extent(0);
  const size_t h = pred.probs.extent(1);
  const size_t w = pred.probs.extent(2);
  ByteImage out({h, w});
  for (size_t v = 0; v < h * w; ++v) {
    size_t best = 0;
    float best_p = pred.probs[v];
    for (size_t k = 1; k < c; ++k) {
      const float p = pred.probs[k * h * w + v];
      if (p > best_p) {  // strict: ties keep the lowest class index
        best_p = p;
        best = k;
      }
    }
    out[v] = static_cast<uint8_t>(best);
  }
  return out;
}

float dice(const ByteImage& pred_labels, const ByteImage& gt, uint8_t cls) {
  if (!pred_labels.same_shape(gt)) {
    throw std::runtime_error("dice: shape mismatch " + shape_to_string(pred_labels.shape()) +
                             " vs " + shape_to_string(gt.shape()));
  }
  uint64_t a = 0, b = 0, inter = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    const bool in_a = pred_labels[i] == cls;
    const bool in_b = gt[i] == cls;
    a += in_a;
    b += in_b;
    inter += in_a && in_b;
  }
  if (a + b == 0) return 1.0f;
  return static_cast<float>(2.0 * static_cast<double>(inter) / static_cast<double>(a + b));
}

BBox foreground_bbox(const ByteImage& gt) {
  if (gt.rank() != 2) throw std::runtime_error("foreground_bbox: expected (H, W) labels");
  const size_t h = gt.extent(0);
  const size_t w = gt.extent(1);
  BBox box{h, 0, w, 0};
  bool any = false;
  for (size_t y = 0; y < h; ++y) {
    for (size_t x = 0; x < w; ++x) {
      if (gt[y * w + x] == 0) continue;
      any = true;
      box.y0 = std::min(box.y0, y);
      box.y1 = std::max(box.y1, y);
      box.x0 = std::min(box.x0, x);
      box.x1 = std::max(box.x1, x);
    }
  }
  if (!any) throw std::runtime_error("foreground_bbox: volume has no foreground voxels");
  return box;
}

uint64_t ReliabilityBins::total() const {
  uint64_t n = 0;
  for (uint64_t c : count) n += c;
  return n;
}

double ReliabilityBins::ece_percent() const {
  const uint64_t n = total();
  if (n == 0) return 0.0;
  double e = 0.0;
  for (size_t s = 0; s < 100; ++s) {
    if (count[s] == 0) continue;  // empty bins contribute 0
    const double cnt = static_cast<double>(count[s]);
    const double conf = conf_sum[s] / cnt;
    const double acc = static_cast<double>(correct[s]) / cnt;
    e += cnt / static_cast<double>(n) * std::fabs(conf - acc);
  }
  return e * 100.0;
}

EceResult ece(const std::vector<ProbabilisticPrediction>& preds,
              const std::vector<ByteImage>& gts, const std::vector<BBox>& regions) {
  if (preds.empty()) throw std::runtime_error("ece: empty region set");
  if (preds.size() != gts.size() || preds.size() != regions.size()) {
    throw std::runtime_error("ece: preds/gts/regions size mismatch");
  }
  ReliabilityBins bins;
  for (size_t v = 0; v < preds.size(); ++v) {
    const Tensor& probs = preds[v].probs;
    const ByteImage& gt = gts[v];
    const size_t c = probs.extent(0);
    const size_t h = probs.extent(1);
    const size_t w = probs.extent(2);
    if (gt.rank() != 2 || gt.extent(0) != h || gt.extent(1) != w) {
      throw std::runtime_error("ece: prediction/label shape mismatch at volume " +
                               std::to_string(v));
    }
    const BBox& box = regions[v];
    if (box.y1 >= h || box.x1 >= w || box.y0 > box.y1 || box.x0 > box.x1) {
      throw std::runtime_error("ece: region outside volume " + std::to_string(v));
    }
    for (size_t y = box.y0; y <= box.y1; ++y) {
      for (size_t x = box.x0; x <= box.x1; ++x) {
        const size_t idx = y * w + x;
        size_t best = 0;
        float conf = probs[idx];
        for (size_t k = 1; k < c; ++k) {
          const float p = probs[k * h * w + idx];
          if (p > conf) {
            conf = p;
            best = k;
          }
        }
        int s = static_cast<int>(std::ceil(static_cast<double>(conf) * 100.0));
        s = std::clamp(s, 1, 100);
        bins.count[static_cast<size_t>(s - 1)] += 1;
        bins.conf_sum[static_cast<size_t>(s - 1)] += static_cast<double>(conf);
        bins.correct[static_cast<size_t>(s - 1)] += best == gt[idx];
      }
    }
  }
  EceResult r;
  r.bins = bins;
  r.ece_percent = static_cast<float>(bins.ece_percent());
  return r;
}

std::string class_display_name(int num_classes, int cls) {
  if (num_classes == 4) {
    switch (cls) {
      case 1: return "RV";
      case 2: return "MYO";
      case 3: return "LV";
      default: break;
    }
  }
  return "class" + std::to_string(cls);
}

MethodSplitMetrics evaluate_split(const std::string& method, const std::string& split,
                                  const std::vector<ProbabilisticPrediction>& preds,
                                  const std::vector<ByteImage>& gts, int num_classes) {
  if (preds.size() != gts.size()) throw std::runtime_error("evaluate_split: size mismatch");
  if (preds.empty()) throw std::runtime_error("evaluate_split: no volumes");
  if (num_classes < 2) throw std::runtime_error("evaluate_split: num_classes must be >= 2");

  MethodSplitMetrics m;
  m.method = method;
  m.split = split;
  m.num_classes = num_classes;

  const size_t fg = static_cast<size_t>(num_classes - 1);
  std::vector<std::vector<double>> per_volume_dice(fg);
  std::vector<ProbabilisticPrediction> pooled_preds;
  std::vector<ByteImage> pooled_gts;
  std::vector<BBox> pooled_boxes;

  for (size_t v = 0; v < preds.size(); ++v) {
    if (preds[v].probs.extent(0) != static_cast<size_t>(num_classes)) {
      throw std::runtime_error("evaluate_split: prediction class count mismatch");
    }
    const ByteImage labels = argmax_labels(preds[v]);
    for (size_t k = 0; k < fg; ++k) {
      per_volume_dice[k].push_back(
          static_cast<double>(dice(labels, gts[v], static_cast<uint8_t>(k + 1))));
    }
    try {
      BBox box = foreground_bbox(gts[v]);
      pooled_preds.push_back(preds[v]);
      pooled_gts.push_back(gts[v]);
      pooled_boxes.push_back(box);
      m.per_volume_ece.push_back(ece({preds[v]}, {gts[v]}, {box}).ece_percent);
    } catch (const std::runtime_error&) {
      m.excluded_volumes += 1;  // all-background volume: no ECE region
    }
  }
  m.volumes = static_cast<int>(preds.size());

  double fg_sum = 0.0;
  for (size_t k = 0; k < fg; ++k) {
    const auto& xs = per_volume_dice[k];
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    if (xs.size() > 1) {
      for (double x : xs) var += (x - mean) * (x - mean);
      var /= static_cast<double>(xs.size() - 1);
    }
    m.dice_mean.push_back(mean);
    m.dice_sd.push_back(std::sqrt(var));
    fg_sum += mean;
  }
  m.mean_foreground_dice = fg_sum / static_cast<double>(fg);

  if (!pooled_preds.empty()) {
    EceResult pooled = ece(pooled_preds, pooled_gts, pooled_boxes);
    m.ece_percent = static_cast<double>(pooled.ece_percent);
    m.bins = pooled.bins;
  }
  return m;
}

namespace {

nlohmann::json bins_to_json(const ReliabilityBins& bins) {
  nlohmann::json j;
  j["count"] = bins.count;
  j["conf_sum"] = bins.conf_sum;
  j["correct"] = bins.correct;
  return j;
}

ReliabilityBins bins_from_json(const nlohmann::json& j) {
  ReliabilityBins bins;
  for (size_t s = 0; s < 100; ++s) {
    bins.count[s] = j.at("count").at(s).get<uint64_t>();
    bins.conf_sum[s] = j.at("conf_sum").at(s).get<double>();
    bins.correct[s] = j.at("correct").at(s).get<uint64_t>();
  }
  return bins;
}

}  // namespace

std::string EvaluationReport::to_json() const {
  nlohmann::json doc;
  doc["schema_version"] = schema_version;
  doc["entries"] = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json j;
    j["method"] = e.method;
    j["split"] = e.split;
    j["num_classes"] = e.num_classes;
    j["volumes"] = e.volumes;
    j["excluded_volumes"] = e.excluded_volumes;
    nlohmann::json dice_obj;
    for (size_t k = 0; k < e.dice_mean.size(); ++k) {
      const std::string name = class_display_name(e.num_classes, static_cast<int>(k + 1));
      dice_obj[name] = {{"mean", e.dice_mean[k]}, {"sd", e.dice_sd[k]}};
    }
    j["dice"] = dice_obj;
    j["mean_foreground_dice"] = e.mean_foreground_dice;
    j["ece_percent"] = e.ece_percent;
    j["per_volume_ece"] = e.per_volume_ece;
    j["bins"] = bins_to_json(e.bins);
    doc["entries"].push_back(j);
  }
  return doc.dump(2) + "\n";
}

EvaluationReport EvaluationReport::from_json(const std::string& text) {
  const nlohmann::json doc = nlohmann::json::parse(text);
  EvaluationReport report;
  report.schema_version = doc.at("schema_version").get<int>();
  if (report.schema_version != 1) {
    throw std::runtime_error("EvaluationReport: unsupported schema_version " +
                             std::to_string(report.schema_version));
  }
  for (const auto& j : doc.at("entries")) {
    MethodSplitMetrics e;
    e.method = j.at("method").get<std::string>();
    e.split = j.at("split").get<std::string>();
    e.num_classes = j.at("num_classes").get<int>();
    e.volumes = j.at("volumes").get<int>();
    e.excluded_volumes = j.at("excluded_volumes").get<int>();
    for (size_t k = 1; k < static_cast<size_t>(e.num_classes); ++k) {
      const std::string name = class_display_name(e.num_classes, static_cast<int>(k));
      e.dice_mean.push_back(j.at("dice").at(name).at("mean").get<double>());
      e.dice_sd.push_back(j.at("dice").at(name).at("sd").get<double>());
    }
    e.mean_foreground_dice = j.at("mean_foreground_dice").get<double>();
    e.ece_percent = j.at("ece_percent").get<double>();
    e.per_volume_ece = j.at("per_volume_ece").get<std::vector<double>>();
    e.bins = bins_from_json(j.at("bins"));
    report.entries.push_back(std::move(e));
  }
  return report;
}

std::string EvaluationReport::to_table() const {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-14s %-8s %7s", "method", "split", "ECE%");
  out += line;
  if (!entries.empty()) {
    for (size_t k = 1; k < static_cast<size_t>(entries.front().num_classes); ++k) {
      std::snprintf(line, sizeof(line), " %16s",
                    class_display_name(entries.front().num_classes, static_cast<int>(k)).c_str());
      out += line;
    }
  }
  out += "  mean-fg-dice\n";
  for (const auto& e : entries) {
    std::snprintf(line, sizeof(line), "%-14s %-8s %7.3f", e.method.c_str(), e.split.c_str(),
                  e.ece_percent);
    out += line;
    for (size_t k = 0; k < e.dice_mean.size(); ++k) {
      std::snprintf(line, sizeof(line), "    %.3f +-%.3f", e.dice_mean[k], e.dice_sd[k]);
      out += line;
    }
    std::snprintf(line, sizeof(line), "        %.4f\n", e.mean_foreground_dice);
    out += line;
  }
  return out;
}

}  // namespace tbseg
