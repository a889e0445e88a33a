#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dpgn/backbone.hpp"

namespace dpgn {

// Plain-text key-value config: one "key = value" per line, '#' comments.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_config_text(const std::string& text);
KeyValues parse_config_file(const std::string& path);
std::string serialize_config(const KeyValues& kv);  // sorted, canonical
std::uint64_t config_hash(const KeyValues& kv);     // FNV-1a over the canonical form
std::string config_hash_hex(const KeyValues& kv);

int get_int(const KeyValues& kv, const std::string& key, int def);
double get_double(const KeyValues& kv, const std::string& key, double def);
bool get_bool(const KeyValues& kv, const std::string& key, bool def);
std::string get_string(const KeyValues& kv, const std::string& key, const std::string& def);

// Model + episode structure; defaults mirror the reference protocol
// (6 generations, loss weights 1.0/0.1, transductive).
struct DpgnConfig {
  int n_way = 5;
  int k_shot = 1;
  int n_query = 5;
  std::size_t generations = 6;
  double lambda_point = 1.0;
  double lambda_dist = 0.1;
  bool transductive = true;
  double labeled_ratio = 1.0;
  bool balanced_queries = false;
  bool loss_all_samples = false;
  bool share_generation_params = false;
  std::size_t dist_channels = 4;
  BackboneConfig backbone;
};

DpgnConfig dpgn_config_from(const KeyValues& kv);
KeyValues to_kv(const DpgnConfig& cfg);

struct TrainConfig {
  int episodes_per_iter = 28;
  double lr = 1e-3;
  int lr_decay_every = 15000;
  double lr_decay_factor = 0.1;
  double weight_decay = 1e-5;
  int max_iters = 3000;
  int eval_interval = 500;
  int val_tasks = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

TrainConfig train_config_from(const KeyValues& kv);

}  // namespace dpgn
