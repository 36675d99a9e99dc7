// tb-seg: phantom data generation, trajectory training, posterior
// prediction, and evaluation, end to end.

#include <cstdio>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "tbseg/io.hpp"
#include "tbseg/metrics.hpp"
#include "tbseg/posterior.hpp"
#include "tbseg/schedule.hpp"
#include "tbseg/segnet.hpp"
#include "tbseg/synthdata.hpp"
#include "tbseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace tbseg;

namespace {

// stream ids off the run seed (trainer epochs use 0..T-1)
constexpr uint64_t kSplitStreamBase = 0xD0;  // +0 train, +1 val, +2 ood-a, +3 ood-b
constexpr uint64_t kMcStreamId = 0x4D43;     // MC-Dropout prediction passes

uint64_t effective_seed(const RunConfig& cfg) {
  if (auto env = tb_seed_from_env()) return *env;
  return cfg.train.seed;
}

struct SplitPlan {
  const char* name;
  const char* file;
  DomainTag tag;
  int count;
};

int cmd_generate_data(const std::string& config_path, const std::string& out_dir) {
  RunConfig cfg = load_run_config(config_path);
  const uint64_t seed = effective_seed(cfg);
  fs::create_directories(out_dir);

  const SplitPlan plan[] = {
      {"train", "train.bin", DomainTag::kInDomain, cfg.train_count},
      {"val_id", "val_id.bin", DomainTag::kInDomain, cfg.val_count},
      {"test_ood_a", "test_ood_a.bin", DomainTag::kOodA, cfg.ood_a_count},
      {"test_ood_b", "test_ood_b.bin", DomainTag::kOodB, cfg.ood_b_count},
  };
  nlohmann::json manifest;
  manifest["seed"] = std::to_string(seed);
  const Rng root(seed);
  for (size_t i = 0; i < 4; ++i) {
    const SplitPlan& sp = plan[i];
    const uint64_t split_seed = root.stream(kSplitStreamBase + i).seed();
    const PhantomParams params = cfg.data.shifted(sp.tag);
    const std::vector<LabeledSample> samples =
        generate_split(params, sp.count, split_seed, sp.tag);
    const std::string path = (fs::path(out_dir) / sp.file).string();
    save_dataset(path, samples);
    nlohmann::json entry;
    entry["file"] = sp.file;
    entry["count"] = sp.count;
    entry["domain"] = domain_tag_name(sp.tag);
    entry["split_seed"] = std::to_string(split_seed);
    manifest["splits"][sp.name] = entry;
    std::printf("wrote %s (%d samples, %s)\n", path.c_str(), sp.count, domain_tag_name(sp.tag));
  }
  write_text_file((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::string& schedule_flag, const std::string& data_dir_flag) {
  RunConfig cfg = load_run_config(config_path);
  cfg.train.seed = effective_seed(cfg);
  Schedule schedule = cfg.schedule;
  if (!schedule_flag.empty()) {
    if (schedule_flag == "poly") schedule = Schedule::kPoly;
    else if (schedule_flag == "cyclical") schedule = Schedule::kCyclical;
    else throw std::invalid_argument("--schedule must be poly or cyclical");
  }
  const std::string data_dir = data_dir_flag.empty() ? cfg.data_dir : data_dir_flag;
  if (data_dir.empty()) {
    throw std::invalid_argument("no dataset directory: set paths.data_dir or pass --data-dir");
  }
  const std::string train_file = (fs::path(data_dir) / "train.bin").string();
  if (!fs::exists(train_file)) {
    throw std::invalid_argument("dataset file missing: " + train_file);
  }
  const std::vector<LabeledSample> data = load_dataset(train_file);
  fs::create_directories(out_dir);

  Rng init_rng = Rng(cfg.train.seed).stream(kInitStreamId);
  SegNet net = SegNet::build(cfg.net, init_rng);
  std::printf("training: %d epochs, %d cycle(s), %zu samples, schedule=%s\n",
              cfg.train.total_epochs, cfg.train.cycles, data.size(),
              schedule == Schedule::kPoly ? "poly" : "cyclical");
  TrainResult result = train(std::move(net), data, cfg.train, schedule);

  for (const auto& ckpt : result.checkpoints) {
    save_checkpoint((fs::path(out_dir) / checkpoint_filename(ckpt.epoch)).string(), ckpt);
  }
  CheckpointRecord final_rec;
  final_rec.epoch = cfg.train.total_epochs - 1;
  final_rec.cycle = cfg.train.cycles;
  final_rec.in_cycle = (cfg.train.total_epochs - 1) % cfg.train.cycle_length();
  final_rec.params = result.net.params();
  final_rec.train_loss = static_cast<float>(result.log.epochs.back().train_loss);
  save_checkpoint((fs::path(out_dir) / "final.bin").string(), final_rec);
  save_trajectory((fs::path(out_dir) / "trajectory.jsonl").string(), result.log);
  std::printf("wrote %zu checkpoints + final.bin + trajectory.jsonl to %s\n",
              result.checkpoints.size(), out_dir.c_str());
  return 0;
}

CheckpointStore load_checkpoint_store(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("ckpt_t", 0) == 0 && name.size() == 15 && name.ends_with(".bin")) {
      files.push_back(e.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<CheckpointRecord> records;
  records.reserve(files.size());
  for (const auto& f : files) records.push_back(load_checkpoint(f));
  return CheckpointStore(std::move(records));
}

CheckpointRecord load_final(const std::string& dir) {
  const std::string path = (fs::path(dir) / "final.bin").string();
  if (!fs::exists(path)) throw std::invalid_argument("missing artifact: " + path);
  return load_checkpoint(path);
}

int cmd_predict(const std::string& method, const std::vector<std::string>& ckpt_dirs,
                const std::string& data_file, const std::string& out_file, int n, int stride,
                float tau, int mc_n, float dropout_p, const std::string& recal_data,
                uint64_t seed_flag) {
  if (ckpt_dirs.empty()) throw std::invalid_argument("--ckpts required");
  static const std::set<std::string> kMethods = {
      "vanilla", "temp", "ckpt-single", "ckpt-multi", "swa", "mcdropout", "deepens"};
  if (kMethods.count(method) == 0) throw std::invalid_argument("unknown method '" + method + "'");
  const std::vector<LabeledSample> samples = load_dataset(data_file);
  const uint64_t seed = tb_seed_from_env().value_or(seed_flag);

  nlohmann::json meta;
  meta["method"] = method;
  PredictionSet set;
  set.method = method;

  auto predict_with_members = [&](const std::vector<ParamSet>& members, const NetConfig& ncfg) {
    for (const auto& s : samples) {
      ProbabilisticPrediction p = ensemble_predict(members, ncfg, s.image);
      set.entropy.push_back(entropy_map(p).ent);
      set.preds.push_back(std::move(p));
    }
  };

  if (method == "vanilla" || method == "temp") {
    const CheckpointRecord final_rec = load_final(ckpt_dirs.front());
    const NetConfig ncfg = SegNet::infer_config(final_rec.params);
    Rng unused(0);
    if (method == "temp") meta["tau"] = tau;
    for (const auto& s : samples) {
      Tensor logits = predict_logits(ncfg, final_rec.params, s.image, false, unused);
      ProbabilisticPrediction p =
          method == "temp" ? temperature_scale(logits, tau) : softmax_prediction(logits);
      set.entropy.push_back(entropy_map(p).ent);
      set.preds.push_back(std::move(p));
    }
  } else if (method == "ckpt-single" || method == "ckpt-multi") {
    const CheckpointStore store = load_checkpoint_store(ckpt_dirs.front());
    EnsembleSpec spec;
    spec.mode = method == "ckpt-single" ? EnsembleMode::kSingle : EnsembleMode::kMulti;
    spec.n = n;
    spec.stride = stride;
    const std::vector<CheckpointRecord> members = select_members(store, spec);
    meta["n"] = spec.n;
    if (spec.mode == EnsembleMode::kSingle) meta["stride"] = spec.stride;
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& m : members) epochs.push_back(m.epoch);
    meta["member_epochs"] = epochs;
    const NetConfig ncfg = SegNet::infer_config(members.front().params);
    predict_with_members(member_params(members), ncfg);
  } else if (method == "swa") {
    if (recal_data.empty()) {
      throw std::invalid_argument("--recal-data (training split) is required for method=swa");
    }
    const CheckpointStore store = load_checkpoint_store(ckpt_dirs.front());
    if (store.empty()) throw std::invalid_argument("no checkpoints in " + ckpt_dirs.front());
    const auto last_cycle = store.cycle(store.num_cycles());
    std::vector<ParamSet> members;
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto* r : last_cycle) {
      members.push_back(r->params);
      epochs.push_back(r->epoch);
    }
    meta["member_epochs"] = epochs;
    ParamSet averaged = swa_average(members);
    const NetConfig ncfg = SegNet::infer_config(averaged);
    SegNet net(ncfg, std::move(averaged));
    const std::vector<LabeledSample> recal = load_dataset(recal_data);
    bn_recalibrate(net, recal, 20);
    meta["bn_recalibrated_on"] = fs::path(recal_data).filename().string();
    predict_with_members({net.params()}, ncfg);
  } else if (method == "mcdropout") {
    const CheckpointRecord final_rec = load_final(ckpt_dirs.front());
    const NetConfig ncfg = SegNet::infer_config(final_rec.params, dropout_p);
    SegNet net(ncfg, final_rec.params);
    meta["mc_n"] = mc_n;
    meta["dropout_p"] = dropout_p;
    meta["seed"] = std::to_string(seed);
    Rng rng = Rng(seed).stream(kMcStreamId);
    for (const auto& s : samples) {
      ProbabilisticPrediction p = mc_dropout_predict(net, s.image, mc_n, rng);
      set.entropy.push_back(entropy_map(p).ent);
      set.preds.push_back(std::move(p));
    }
  } else if (method == "deepens") {
    std::vector<ParamSet> members;
    for (const auto& dir : ckpt_dirs) members.push_back(load_final(dir).params);
    meta["k"] = ckpt_dirs.size();
    const NetConfig ncfg = SegNet::infer_config(members.front());
    predict_with_members(members, ncfg);
  } else {
    throw std::invalid_argument("unknown method '" + method + "'");
  }

  set.meta_json = meta.dump();
  save_predictions(out_file, set);
  std::printf("wrote %zu predictions (%s) to %s\n", set.preds.size(), method.c_str(),
              out_file.c_str());
  return 0;
}

int cmd_evaluate(const std::vector<std::string>& pred_files,
                 const std::vector<std::string>& data_files, const std::string& out_file) {
  if (pred_files.size() != data_files.size() || pred_files.empty()) {
    throw std::invalid_argument("--pred and --data must pair up one-to-one");
  }
  EvaluationReport report;
  for (size_t i = 0; i < pred_files.size(); ++i) {
    const PredictionSet set = load_predictions(pred_files[i]);
    const std::vector<LabeledSample> samples = load_dataset(data_files[i]);
    if (set.preds.size() != samples.size()) {
      throw std::invalid_argument("split mismatch: " + pred_files[i] + " holds " +
                                  std::to_string(set.preds.size()) + " predictions but " +
                                  data_files[i] + " holds " + std::to_string(samples.size()) +
                                  " samples");
    }
    std::vector<ByteImage> gts;
    gts.reserve(samples.size());
    for (const auto& s : samples) gts.push_back(s.label);
    const int num_classes = static_cast<int>(set.preds.front().probs.extent(0));
    const std::string split = fs::path(data_files[i]).stem().string();
    report.entries.push_back(evaluate_split(set.method, split, set.preds, gts, num_classes));
    if (report.entries.back().excluded_volumes > 0) {
      std::fprintf(stderr, "warning: %d all-background volume(s) excluded from ECE in %s\n",
                   report.entries.back().excluded_volumes, data_files[i].c_str());
    }
  }
  write_text_file(out_file, report.to_json());
  std::fputs(report.to_table().c_str(), stdout);
  std::printf("wrote report to %s\n", out_file.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SGD-trajectory Bayesian inference for phantom segmentation"};
  app.require_subcommand(1);

  std::string config_path, out_path, schedule_flag, data_dir_flag;
  auto* gen = app.add_subcommand("generate-data", "Generate the four dataset splits");
  gen->add_option("--config", config_path, "run config file")->required();
  gen->add_option("--out", out_path, "output directory")->required();

  auto* tr = app.add_subcommand("train", "Train one model, harvesting trajectory checkpoints");
  tr->add_option("--config", config_path, "run config file")->required();
  tr->add_option("--out", out_path, "checkpoint output directory")->required();
  tr->add_option("--schedule", schedule_flag, "poly|cyclical (overrides config)");
  tr->add_option("--data-dir", data_dir_flag, "dataset directory (overrides config)");

  std::string method, data_file, recal_data;
  std::vector<std::string> ckpt_dirs;
  int n = 30, stride = 2, mc_n = 30;
  float tau = 1.5f, dropout_p = 0.1f;
  uint64_t seed_flag = 1234;
  auto* pr = app.add_subcommand("predict", "Predict a split with one method");
  pr->add_option("--method", method,
                 "vanilla|temp|swa|mcdropout|deepens|ckpt-single|ckpt-multi")
      ->required();
  pr->add_option("--ckpts", ckpt_dirs, "checkpoint directory (repeat for deepens members)")
      ->required();
  pr->add_option("--data", data_file, "dataset file to predict")->required();
  pr->add_option("--out", out_path, "prediction output file")->required();
  pr->add_option("--n", n, "ensemble member count (default 30)");
  pr->add_option("--stride", stride, "single-modal thinning stride (default 2)");
  pr->add_option("--tau", tau, "temperature for method=temp (default 1.5)");
  pr->add_option("--mc-n", mc_n, "MC-Dropout passes (default 30)");
  pr->add_option("--dropout-p", dropout_p, "dropout rate the net was trained with (default 0.1)");
  pr->add_option("--recal-data", recal_data, "training split for SWA bn recalibration");
  pr->add_option("--seed", seed_flag, "rng seed for stochastic methods (default 1234)");

  std::vector<std::string> pred_files, eval_data_files;
  auto* ev = app.add_subcommand("evaluate", "Score prediction files against labels");
  ev->add_option("--pred", pred_files, "prediction file(s)")->required();
  ev->add_option("--data", eval_data_files, "matching dataset file(s)")->required();
  ev->add_option("--out", out_path, "report output file (JSON)")->required();

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_generate_data(config_path, out_path);
    if (tr->parsed()) return cmd_train(config_path, out_path, schedule_flag, data_dir_flag);
    if (pr->parsed()) {
      return cmd_predict(method, ckpt_dirs, data_file, out_path, n, stride, tau, mc_n, dropout_p,
                         recal_data, seed_flag);
    }
    if (ev->parsed()) return cmd_evaluate(pred_files, eval_data_files, out_path);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad usage is a validation error
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return 1;
  }
}
