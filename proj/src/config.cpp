#include "dpgn/config.hpp"

#include <sstream>

#include "dpgn/io.hpp"

namespace dpgn {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

KeyValues parse_config_text(const std::string& text) {
  KeyValues kv;
  std::istringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = val;
  }
  return kv;
}

KeyValues parse_config_file(const std::string& path) {
  return parse_config_text(io::read_text_file(path));
}

std::string serialize_config(const KeyValues& kv) {
  std::ostringstream ss;
  for (const auto& [k, v] : kv) ss << k << " = " << v << "\n";
  return ss.str();
}

std::uint64_t config_hash(const KeyValues& kv) {
  const std::string s = serialize_config(kv);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string config_hash_hex(const KeyValues& kv) {
  std::ostringstream ss;
  ss << std::hex << config_hash(kv);
  return ss.str();
}

int get_int(const KeyValues& kv, const std::string& key, int def) {
  auto it = kv.find(key);
  return it == kv.end() ? def : std::stoi(it->second);
}

double get_double(const KeyValues& kv, const std::string& key, double def) {
  auto it = kv.find(key);
  return it == kv.end() ? def : std::stod(it->second);
}

bool get_bool(const KeyValues& kv, const std::string& key, bool def) {
  auto it = kv.find(key);
  if (it == kv.end()) return def;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::runtime_error("config key '" + key + "': expected boolean, got '" + v + "'");
}

std::string get_string(const KeyValues& kv, const std::string& key, const std::string& def) {
  auto it = kv.find(key);
  return it == kv.end() ? def : it->second;
}

DpgnConfig dpgn_config_from(const KeyValues& kv) {
  DpgnConfig c;
  c.n_way = get_int(kv, "n_way", c.n_way);
  c.k_shot = get_int(kv, "k_shot", c.k_shot);
  c.n_query = get_int(kv, "n_query", c.n_query);
  c.generations = static_cast<std::size_t>(get_int(kv, "generations", static_cast<int>(c.generations)));
  c.lambda_point = get_double(kv, "lambda_p", c.lambda_point);
  c.lambda_dist = get_double(kv, "lambda_d", c.lambda_dist);
  c.transductive = get_bool(kv, "transductive", c.transductive);
  c.labeled_ratio = get_double(kv, "labeled_ratio", c.labeled_ratio);
  c.balanced_queries = get_bool(kv, "balanced_queries", c.balanced_queries);
  c.loss_all_samples = get_bool(kv, "loss_all_samples", c.loss_all_samples);
  c.share_generation_params = get_bool(kv, "share_generation_params", c.share_generation_params);
  c.dist_channels = static_cast<std::size_t>(get_int(kv, "dist_channels", static_cast<int>(c.dist_channels)));
  c.backbone.arch = arch_from_string(get_string(kv, "backbone", to_string(c.backbone.arch)));
  c.backbone.emb_dim = static_cast<std::size_t>(get_int(kv, "emb_dim", static_cast<int>(c.backbone.emb_dim)));
  c.backbone.input_dim = static_cast<std::size_t>(get_int(kv, "input_dim", static_cast<int>(c.backbone.input_dim)));
  c.backbone.hidden_dim = static_cast<std::size_t>(get_int(kv, "hidden_dim", static_cast<int>(c.backbone.hidden_dim)));
  c.backbone.dropout = get_double(kv, "dropout", c.backbone.dropout);
  return c;
}

KeyValues to_kv(const DpgnConfig& c) {
  KeyValues kv;
  auto put_int = [&](const char* k, long long v) { kv[k] = std::to_string(v); };
  auto put_dbl = [&](const char* k, double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    kv[k] = ss.str();
  };
  auto put_bool = [&](const char* k, bool v) { kv[k] = v ? "true" : "false"; };
  put_int("n_way", c.n_way);
  put_int("k_shot", c.k_shot);
  put_int("n_query", c.n_query);
  put_int("generations", static_cast<long long>(c.generations));
  put_dbl("lambda_p", c.lambda_point);
  put_dbl("lambda_d", c.lambda_dist);
  put_bool("transductive", c.transductive);
  put_dbl("labeled_ratio", c.labeled_ratio);
  put_bool("balanced_queries", c.balanced_queries);
  put_bool("loss_all_samples", c.loss_all_samples);
  put_bool("share_generation_params", c.share_generation_params);
  put_int("dist_channels", static_cast<long long>(c.dist_channels));
  kv["backbone"] = to_string(c.backbone.arch);
  put_int("emb_dim", static_cast<long long>(c.backbone.emb_dim));
  put_int("input_dim", static_cast<long long>(c.backbone.input_dim));
  put_int("hidden_dim", static_cast<long long>(c.backbone.hidden_dim));
  put_dbl("dropout", c.backbone.dropout);
  return kv;
}

void TrainConfig::validate() const {
  if (episodes_per_iter < 1) throw std::invalid_argument("episodes_per_iter must be >= 1");
  if (lr <= 0.0 || lr_decay_factor <= 0.0 || weight_decay < 0.0)
    throw std::invalid_argument("learning rates and decay must be positive");
  if (lr_decay_every < 1) throw std::invalid_argument("lr_decay_every must be >= 1");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
}

TrainConfig train_config_from(const KeyValues& kv) {
  TrainConfig t;
  t.episodes_per_iter = get_int(kv, "episodes_per_iter", t.episodes_per_iter);
  t.lr = get_double(kv, "lr", t.lr);
  t.lr_decay_every = get_int(kv, "lr_decay_every", t.lr_decay_every);
  t.lr_decay_factor = get_double(kv, "lr_decay_factor", t.lr_decay_factor);
  t.weight_decay = get_double(kv, "weight_decay", t.weight_decay);
  t.max_iters = get_int(kv, "max_iters", t.max_iters);
  t.eval_interval = get_int(kv, "eval_interval", t.eval_interval);
  t.val_tasks = get_int(kv, "val_tasks", t.val_tasks);
  t.seed = static_cast<std::uint64_t>(get_int(kv, "seed", static_cast<int>(t.seed)));
  return t;
}

}  // namespace dpgn
