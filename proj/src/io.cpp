#include "tbseg/io.hpp"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace tbseg {
namespace {

// ---- little-endian buffer primitives ----

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_i32(std::string& out, int32_t v) { put_u32(out, static_cast<uint32_t>(v)); }

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32(out, bits);
}

void put_f32_array(std::string& out, const float* data, size_t n) {
  for (size_t i = 0; i < n; ++i) put_f32(out, data[i]);
}

struct Cursor {
  const std::string& buf;
  size_t pos = 0;
  std::string context;

  void need(size_t n) const {
    if (pos + n > buf.size()) {
      throw std::runtime_error(context + ": truncated file (need " + std::to_string(n) +
                               " bytes at offset " + std::to_string(pos) + ")");
    }
  }
  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(buf[pos++]);
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  float f32() {
    const uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  void done() const {
    if (pos != buf.size()) {
      throw std::runtime_error(context + ": " + std::to_string(buf.size() - pos) +
                               " trailing bytes after payload");
    }
  }
};

void put_tensor(std::string& out, const Tensor& t) {
  put_u32(out, static_cast<uint32_t>(t.rank()));
  for (size_t d = 0; d < t.rank(); ++d) put_u64(out, static_cast<uint64_t>(t.extent(d)));
  put_f32_array(out, t.data(), t.size());
}

Tensor get_tensor(Cursor& c) {
  const uint32_t rank = c.u32();
  if (rank > 8) throw std::runtime_error(c.context + ": implausible tensor rank");
  std::vector<size_t> shape(rank);
  size_t total = 1;
  for (uint32_t d = 0; d < rank; ++d) {
    shape[d] = static_cast<size_t>(c.u64());
    if (shape[d] == 0 || shape[d] > (1u << 24)) {
      throw std::runtime_error(c.context + ": implausible tensor extent");
    }
    total *= shape[d];
  }
  std::vector<float> data(total);
  c.need(total * 4);
  for (size_t i = 0; i < total; ++i) data[i] = c.f32();
  return Tensor(std::move(shape), std::move(data));
}

std::string load_binary(const std::string& path, const char* context) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(std::string(context) + ": cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return buf;
}

void store_binary(const std::string& path, const std::string& buf, const char* context) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error(std::string(context) + ": cannot open " + path + " for write");
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error(std::string(context) + ": write failed for " + path);
}

void check_magic(Cursor& c, const char* magic) {
  const std::string got = c.bytes(8);
  if (got != magic) {
    throw std::runtime_error(c.context + ": bad magic, expected \"" + magic + "\"");
  }
}

}  // namespace

// ---- TBCKPT01 ----

void save_checkpoint(const std::string& path, const CheckpointRecord& record) {
  std::string out;
  out += "TBCKPT01";
  put_u32(out, 1);  // version
  put_u32(out, static_cast<uint32_t>(record.params.size()));
  for (const auto& [name, value] : record.params) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    put_tensor(out, value);
  }
  put_i32(out, record.epoch);
  put_i32(out, record.cycle);
  put_i32(out, record.in_cycle);
  put_f32(out, record.train_loss);
  store_binary(path, out, "save_checkpoint");
}

CheckpointRecord load_checkpoint(const std::string& path) {
  const std::string buf = load_binary(path, "load_checkpoint");
  Cursor c{buf, 0, "load_checkpoint(" + path + ")"};
  check_magic(c, "TBCKPT01");
  const uint32_t version = c.u32();
  if (version != 1) {
    throw std::runtime_error(c.context + ": unsupported version " + std::to_string(version));
  }
  CheckpointRecord rec;
  const uint32_t entries = c.u32();
  for (uint32_t i = 0; i < entries; ++i) {
    const uint32_t name_len = c.u32();
    if (name_len == 0 || name_len > 256) {
      throw std::runtime_error(c.context + ": implausible name length");
    }
    const std::string name = c.bytes(name_len);
    rec.params.insert(name, get_tensor(c));
  }
  rec.epoch = c.i32();
  rec.cycle = c.i32();
  rec.in_cycle = c.i32();
  rec.train_loss = c.f32();
  c.done();
  return rec;
}

std::string checkpoint_filename(int epoch) {
  char name[32];
  std::snprintf(name, sizeof(name), "ckpt_t%05d.bin", epoch);
  return name;
}

// ---- TBDATA01 ----

void save_dataset(const std::string& path, const std::vector<LabeledSample>& samples) {
  std::string out;
  out += "TBDATA01";
  put_u32(out, static_cast<uint32_t>(samples.size()));
  for (const auto& s : samples) {
    put_tensor(out, s.image);
    put_u32(out, static_cast<uint32_t>(s.label.rank()));
    for (size_t d = 0; d < s.label.rank(); ++d) put_u64(out, static_cast<uint64_t>(s.label.extent(d)));
    out.append(reinterpret_cast<const char*>(s.label.data()), s.label.size());
    put_u64(out, s.seed);
    out.push_back(static_cast<char>(static_cast<uint8_t>(s.domain)));
  }
  store_binary(path, out, "save_dataset");
}

std::vector<LabeledSample> load_dataset(const std::string& path) {
  const std::string buf = load_binary(path, "load_dataset");
  Cursor c{buf, 0, "load_dataset(" + path + ")"};
  check_magic(c, "TBDATA01");
  const uint32_t count = c.u32();
  std::vector<LabeledSample> samples;
  samples.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    LabeledSample s;
    s.image = get_tensor(c);
    const uint32_t rank = c.u32();
    if (rank != 2) throw std::runtime_error(c.context + ": label map must be rank 2");
    std::vector<size_t> shape(rank);
    size_t total = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<size_t>(c.u64());
      total *= shape[d];
    }
    const std::string raw = c.bytes(total);
    s.label = ByteImage(shape, std::vector<uint8_t>(raw.begin(), raw.end()));
    s.seed = c.u64();
    s.domain = domain_tag_from_u8(c.u8());
    samples.push_back(std::move(s));
  }
  c.done();
  return samples;
}

// ---- TBPRED01 ----

void save_predictions(const std::string& path, const PredictionSet& set) {
  if (set.preds.size() != set.entropy.size()) {
    throw std::runtime_error("save_predictions: preds/entropy size mismatch");
  }
  std::string out;
  out += "TBPRED01";
  put_u32(out, 1);
  put_u32(out, static_cast<uint32_t>(set.method.size()));
  out += set.method;
  put_u32(out, static_cast<uint32_t>(set.meta_json.size()));
  out += set.meta_json;
  put_u32(out, static_cast<uint32_t>(set.preds.size()));
  for (size_t i = 0; i < set.preds.size(); ++i) {
    put_tensor(out, set.preds[i].probs);
    put_tensor(out, set.entropy[i]);
  }
  store_binary(path, out, "save_predictions");
}

PredictionSet load_predictions(const std::string& path) {
  const std::string buf = load_binary(path, "load_predictions");
  Cursor c{buf, 0, "load_predictions(" + path + ")"};
  check_magic(c, "TBPRED01");
  const uint32_t version = c.u32();
  if (version != 1) {
    throw std::runtime_error(c.context + ": unsupported version " + std::to_string(version));
  }
  PredictionSet set;
  set.method = c.bytes(c.u32());
  set.meta_json = c.bytes(c.u32());
  const uint32_t count = c.u32();
  for (uint32_t i = 0; i < count; ++i) {
    ProbabilisticPrediction p;
    p.probs = get_tensor(c);
    set.preds.push_back(std::move(p));
    set.entropy.push_back(get_tensor(c));
  }
  c.done();
  return set;
}

// ---- RunConfig ----

namespace {

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& why) {
  throw std::invalid_argument("config key '" + key + "': bad value '" + value + "' (" + why + ")");
}

long long parse_ll(const std::string& key, const std::string& value) {
  size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &used);
  } catch (const std::exception&) {
    bad_value(key, value, "not an integer");
  }
  if (used != value.size()) bad_value(key, value, "not an integer");
  return v;
}

int parse_int(const std::string& key, const std::string& value) {
  const long long v = parse_ll(key, value);
  if (v < -2147483648LL || v > 2147483647LL) bad_value(key, value, "out of int range");
  return static_cast<int>(v);
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  size_t used = 0;
  uint64_t v = 0;
  try {
    v = std::stoull(value, &used);
  } catch (const std::exception&) {
    bad_value(key, value, "not an unsigned integer");
  }
  if (used != value.size()) bad_value(key, value, "not an unsigned integer");
  return v;
}

double parse_double(const std::string& key, const std::string& value) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    bad_value(key, value, "not a number");
  }
  if (used != value.size()) bad_value(key, value, "not a number");
  return v;
}

float parse_float(const std::string& key, const std::string& value) {
  return static_cast<float>(parse_double(key, value));
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "expected true/false/1/0");
}

const std::map<std::string, Setter>& key_table() {
  static const std::map<std::string, Setter> table = {
      {"net.in_channels", [](RunConfig& c, const std::string& k, const std::string& v) { c.net.in_channels = parse_int(k, v); }},
      {"net.num_classes", [](RunConfig& c, const std::string& k, const std::string& v) { c.net.num_classes = parse_int(k, v); }},
      {"net.base_width", [](RunConfig& c, const std::string& k, const std::string& v) { c.net.base_width = parse_int(k, v); }},
      {"net.depth", [](RunConfig& c, const std::string& k, const std::string& v) { c.net.depth = parse_int(k, v); }},
      {"net.dropout_p", [](RunConfig& c, const std::string& k, const std::string& v) { c.net.dropout_p = parse_float(k, v); }},
      {"train.total_epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.total_epochs = parse_int(k, v); }},
      {"train.cycles", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.cycles = parse_int(k, v); }},
      {"train.gamma", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.gamma = parse_double(k, v); }},
      {"train.alpha0", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.alpha0 = parse_double(k, v); }},
      {"train.alpha_r", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.alpha_r = parse_double(k, v); }},
      {"train.epsilon", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.epsilon = parse_double(k, v); }},
      {"train.batch_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.batch_size = parse_int(k, v); }},
      {"train.momentum", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.momentum = parse_double(k, v); }},
      {"train.nesterov", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.nesterov = parse_bool(k, v); }},
      {"train.weight_decay", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.weight_decay = parse_double(k, v); }},
      {"train.ckpt_stride", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.ckpt_stride = parse_int(k, v); }},
      {"train.log_decoder_weights", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.log_decoder_weights = parse_bool(k, v); }},
      {"train.lr_denominator",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "T") c.train.lr_denominator = LrDenominator::kTotalBudget;
         else if (v == "Tc") c.train.lr_denominator = LrDenominator::kCycleLength;
         else bad_value(k, v, "expected T or Tc");
       }},
      {"train.schedule",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "poly") c.schedule = Schedule::kPoly;
         else if (v == "cyclical") c.schedule = Schedule::kCyclical;
         else bad_value(k, v, "expected poly or cyclical");
       }},
      {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.seed = parse_u64(k, v); }},
      {"data.height", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.height = parse_int(k, v); }},
      {"data.width", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.width = parse_int(k, v); }},
      {"data.lv_radius_min", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.lv_radius_min = parse_float(k, v); }},
      {"data.lv_radius_max", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.lv_radius_max = parse_float(k, v); }},
      {"data.myo_thickness_min", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.myo_thickness_min = parse_float(k, v); }},
      {"data.myo_thickness_max", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.myo_thickness_max = parse_float(k, v); }},
      {"data.rv_scale_min", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.rv_scale_min = parse_float(k, v); }},
      {"data.rv_scale_max", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.rv_scale_max = parse_float(k, v); }},
      {"data.rv_ecc_min", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.rv_eccentricity_min = parse_float(k, v); }},
      {"data.rv_ecc_max", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.rv_eccentricity_max = parse_float(k, v); }},
      {"data.center_jitter", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.center_jitter = parse_float(k, v); }},
      {"data.mean_bg", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.mean_bg = parse_float(k, v); }},
      {"data.mean_rv", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.mean_rv = parse_float(k, v); }},
      {"data.mean_myo", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.mean_myo = parse_float(k, v); }},
      {"data.mean_lv", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.mean_lv = parse_float(k, v); }},
      {"data.intensity_jitter", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.intensity_jitter = parse_float(k, v); }},
      {"data.noise_sd", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.noise_sd = parse_float(k, v); }},
      {"data.bias_amplitude", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.bias_amplitude = parse_float(k, v); }},
      {"data.gamma", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.gamma = parse_float(k, v); }},
      {"data.small_rv_fraction", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.small_rv_fraction = parse_float(k, v); }},
      {"data.small_rv_area_threshold", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.small_rv_area_threshold = parse_float(k, v); }},
      {"data.train_count", [](RunConfig& c, const std::string& k, const std::string& v) { c.train_count = parse_int(k, v); }},
      {"data.val_count", [](RunConfig& c, const std::string& k, const std::string& v) { c.val_count = parse_int(k, v); }},
      {"data.ood_a_count", [](RunConfig& c, const std::string& k, const std::string& v) { c.ood_a_count = parse_int(k, v); }},
      {"data.ood_b_count", [](RunConfig& c, const std::string& k, const std::string& v) { c.ood_b_count = parse_int(k, v); }},
      {"method", [](RunConfig& c, const std::string&, const std::string& v) { c.method = v; }},
      {"method.n", [](RunConfig& c, const std::string& k, const std::string& v) { c.method_n = parse_int(k, v); }},
      {"method.stride", [](RunConfig& c, const std::string& k, const std::string& v) { c.method_stride = parse_int(k, v); }},
      {"method.tau", [](RunConfig& c, const std::string& k, const std::string& v) { c.tau = parse_float(k, v); }},
      {"method.mc_n", [](RunConfig& c, const std::string& k, const std::string& v) { c.mc_n = parse_int(k, v); }},
      {"method.deepens_k", [](RunConfig& c, const std::string& k, const std::string& v) { c.deepens_k = parse_int(k, v); }},
      {"paths.data_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.data_dir = v; }},
      {"paths.ckpt_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.ckpt_dir = v; }},
      {"paths.out_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }},
  };
  return table;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> ks;
    for (const auto& [k, _] : key_table()) ks.push_back(k);
    return ks;
  }();
  return keys;
}

void RunConfig::validate() const {
  try {
    net.validate();
    train.validate();
    data.validate();
  } catch (const std::exception& e) {
    throw std::invalid_argument(e.what());
  }
  auto positive = [](const char* key, int v) {
    if (v < 1) {
      throw std::invalid_argument(std::string("config key '") + key +
                                  "': must be >= 1, got " + std::to_string(v));
    }
  };
  positive("data.train_count", train_count);
  positive("data.val_count", val_count);
  positive("data.ood_a_count", ood_a_count);
  positive("data.ood_b_count", ood_b_count);
  positive("method.n", method_n);
  positive("method.stride", method_stride);
  positive("method.mc_n", mc_n);
  positive("method.deepens_k", deepens_k);
  if (!(tau > 0.0f)) throw std::invalid_argument("config key 'method.tau': must be > 0");
  static const char* methods[] = {"vanilla",  "temp",        "swa",       "mcdropout",
                                  "deepens",  "ckpt-single", "ckpt-multi"};
  bool ok = false;
  for (const char* m : methods) ok = ok || method == m;
  if (!ok) {
    throw std::invalid_argument("config key 'method': unknown method '" + method + "'");
  }
  const int div = 1 << net.depth;
  if (data.height % div != 0 || data.width % div != 0) {
    throw std::invalid_argument("config: data extents must be divisible by 2^net.depth = " +
                                std::to_string(div));
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("load_run_config: cannot open " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("load_run_config: line " + std::to_string(lineno) +
                                  " is not key=value: '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = key_table().find(key);
    if (it == key_table().end()) {
      throw std::invalid_argument("load_run_config: unknown key '" + key + "' at line " +
                                  std::to_string(lineno));
    }
    it->second(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

std::optional<uint64_t> tb_seed_from_env() {
  const char* raw = std::getenv("TB_SEED");
  if (raw == nullptr || raw[0] == '\0') return std::nullopt;
  return parse_u64("TB_SEED", raw);
}

void save_trajectory(const std::string& path, const TrajectoryLog& log) {
  std::string out;
  for (const auto& e : log.epochs) {
    nlohmann::json j;
    j["t"] = e.epoch;
    j["lr"] = e.lr;
    j["loss"] = e.train_loss;
    j["restart"] = e.restart;
    if (!e.decoder_weights.empty()) j["decoder_weights"] = e.decoder_weights;
    out += j.dump();
    out += "\n";
  }
  write_text_file(path, out);
}

void write_text_file(const std::string& path, const std::string& content) {
  store_binary(path, content, "write_text_file");
}

std::string read_text_file(const std::string& path) {
  return load_binary(path, "read_text_file");
}

std::string method_display_name(const std::string& method) {
  if (method == "vanilla") return "Vanilla";
  if (method == "temp") return "Temp. scaling";
  if (method == "swa") return "SWA";
  if (method == "mcdropout") return "MC-Dropout";
  if (method == "deepens") return "Deep ensemble";
  if (method == "ckpt-single") return "Ckpt (single)";
  if (method == "ckpt-multi") return "Ckpt (multi)";
  return method;
}

}  // namespace tbseg
