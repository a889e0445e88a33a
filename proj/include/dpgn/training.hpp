#pragma once

#include "dpgn/checkpoint.hpp"
#include "dpgn/model.hpp"

namespace dpgn {

// Step decay: lr * factor^(iter / every), iteration index 0-based.
double lr_at(const TrainConfig& tc, int iter);

struct AdamOptimizer {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 0.0;

  void init(const ParamRefs& params);
  // Applies one update from the accumulated gradients (L2 term folded in).
  void step(const ParamRefs& params, double lr);
  static void zero_grads(const ParamRefs& params);

  std::vector<Tensor> m_, v_;
  long steps_ = 0;
};

struct EvalOptions {
  bool transductive = true;
  std::size_t mask_keep = SIZE_MAX;
  bool parallel = false;
};

struct EvalReport {
  int num_tasks = 0;
  double mean_acc = 0.0;  // percent
  double ci95 = 0.0;      // half-width, percent
  bool transductive = true;
  double labeled_ratio = 1.0;

  std::string str() const;
};

struct MetricsRow {
  int iteration;
  double loss;
  double val_acc;  // NaN when this iteration had no validation pass
  double val_ci;
};

struct TrainResult {
  std::vector<MetricsRow> metrics;
  double best_val_acc = -1.0;
  int best_iteration = -1;
  std::string best_path, last_path;
};

EpisodeSpec episode_spec(const DpgnConfig& cfg);

// Episodic meta-training. Samples episodes_per_iter tasks per iteration,
// averages their losses, and takes one Adam step. When out_dir is nonempty,
// writes metrics.csv plus last.ckpt / best.ckpt (best by validation
// accuracy). Aborts with an error if the loss turns non-finite.
TrainResult train(const DatasetSource& src, DpgnModel& model, const TrainConfig& tc,
                  const std::string& out_dir = "");

// Mean accuracy (in %) with the 95% confidence half-width over num_tasks
// sampled episodes; per-task seeds derive from `seed`, so reports are
// reproducible regardless of --parallel.
EvalReport evaluate(const DatasetSource& src, Split split, const EpisodeSpec& spec,
                    DpgnModel& model, int num_tasks, std::uint64_t seed,
                    const EvalOptions& opt = {});

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace dpgn
