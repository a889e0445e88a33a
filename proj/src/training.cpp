#include "dpgn/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace dpgn {

double lr_at(const TrainConfig& tc, int iter) {
  return tc.lr * std::pow(tc.lr_decay_factor, iter / tc.lr_decay_every);
}

void AdamOptimizer::init(const ParamRefs& params) {
  m_.clear();
  v_.clear();
  for (const Parameter* p : params) {
    m_.push_back(Tensor::zeros(p->value.shape()));
    v_.push_back(Tensor::zeros(p->value.shape()));
  }
  steps_ = 0;
}

void AdamOptimizer::step(const ParamRefs& params, double lr) {
  if (m_.size() != params.size()) throw std::logic_error("optimizer not initialized");
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j] + weight_decay * p.value[j];
      m_[i][j] = beta1 * m_[i][j] + (1.0 - beta1) * g;
      v_[i][j] = beta2 * v_[i][j] + (1.0 - beta2) * g * g;
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      p.value[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

void AdamOptimizer::zero_grads(const ParamRefs& params) {
  for (Parameter* p : params) p->zero_grad();
}

std::string EvalReport::str() const {
  std::ostringstream ss;
  ss.precision(2);
  ss << std::fixed << "mean accuracy " << mean_acc << "% +/- " << ci95 << " (95% CI, " << num_tasks
     << " tasks, " << (transductive ? "transductive" : "non-transductive");
  if (labeled_ratio < 1.0) ss << ", labeled ratio " << labeled_ratio;
  ss << ")";
  return ss.str();
}

EpisodeSpec episode_spec(const DpgnConfig& cfg) {
  EpisodeSpec s;
  s.n_way = cfg.n_way;
  s.k_shot = cfg.k_shot;
  s.n_query = cfg.n_query;
  s.labeled_ratio = cfg.labeled_ratio;
  s.balanced_queries = cfg.balanced_queries;
  return s;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over the pair, so task streams are decorrelated.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

TrainResult train(const DatasetSource& src, DpgnModel& model, const TrainConfig& tc,
                  const std::string& out_dir) {
  tc.validate();
  const EpisodeSpec spec = episode_spec(model.cfg);
  const bool has_val = !src.classes_in(Split::val).empty() && tc.eval_interval > 0 &&
                       tc.val_tasks > 0;

  ParamRefs params = model.params();
  AdamOptimizer adam;
  adam.weight_decay = tc.weight_decay;
  adam.init(params);

  Rng rng(tc.seed);
  TrainResult result;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  std::ofstream metrics;
  if (!out_dir.empty()) {
    metrics.open(out_dir + "/metrics.csv");
    metrics << "iteration,loss,val_acc,val_ci\n";
  }

  const double inv_batch = 1.0 / static_cast<double>(tc.episodes_per_iter);
  for (int iter = 0; iter < tc.max_iters; ++iter) {
    AdamOptimizer::zero_grads(params);
    double iter_loss = 0.0;
    for (int e = 0; e < tc.episodes_per_iter; ++e) {
      Episode ep = sample_episode(src, Split::train, spec, rng);
      Tape t;
      EpisodeForwardOptions opt;
      opt.training = true;
      opt.transductive = model.cfg.transductive;
      EpisodeResult r;
      Var loss = episode_loss(model, ep, t, opt, rng, &r);
      t.backward(t.scale(loss, inv_batch));
      iter_loss += r.losses.total * inv_batch;
    }
    if (!std::isfinite(iter_loss))
      throw std::runtime_error("training diverged: non-finite loss at iteration " +
                               std::to_string(iter));
    adam.step(params, lr_at(tc, iter));

    MetricsRow row{iter, iter_loss, std::nan(""), std::nan("")};
    if (has_val && (iter + 1) % tc.eval_interval == 0) {
      EvalOptions eopt;
      eopt.transductive = model.cfg.transductive;
      EvalReport rep = evaluate(src, Split::val, spec, model, tc.val_tasks,
                                mix_seed(tc.seed, 0x7a11ull), eopt);
      row.val_acc = rep.mean_acc;
      row.val_ci = rep.ci95;
      if (rep.mean_acc > result.best_val_acc) {
        result.best_val_acc = rep.mean_acc;
        result.best_iteration = iter;
        if (!out_dir.empty()) {
          result.best_path = out_dir + "/best.ckpt";
          KeyValues extras{{"iteration", std::to_string(iter)},
                           {"val_acc", std::to_string(rep.mean_acc)}};
          save_checkpoint(model, result.best_path, extras);
        }
      }
    }
    result.metrics.push_back(row);
    if (metrics.is_open()) {
      metrics << row.iteration << "," << row.loss << ",";
      if (std::isnan(row.val_acc))
        metrics << ",";
      else
        metrics << row.val_acc << "," << row.val_ci;
      metrics << "\n";
    }
  }

  if (!out_dir.empty()) {
    result.last_path = out_dir + "/last.ckpt";
    KeyValues extras{{"iteration", std::to_string(tc.max_iters - 1)}};
    if (result.best_val_acc >= 0.0) extras["val_acc"] = std::to_string(result.best_val_acc);
    save_checkpoint(model, result.last_path, extras);
    if (result.best_path.empty()) result.best_path = result.last_path;
  }
  return result;
}

EvalReport evaluate(const DatasetSource& src, Split split, const EpisodeSpec& spec,
                    DpgnModel& model, int num_tasks, std::uint64_t seed, const EvalOptions& opt) {
  if (num_tasks < 1) throw std::invalid_argument("evaluate: num_tasks must be >= 1");
  std::vector<double> accs(static_cast<std::size_t>(num_tasks));

  EpisodeForwardOptions fopt;
  fopt.training = false;
  fopt.transductive = opt.transductive;
  fopt.mask_keep = opt.mask_keep;

#pragma omp parallel for if (opt.parallel) schedule(dynamic)
  for (std::ptrdiff_t task = 0; task < static_cast<std::ptrdiff_t>(num_tasks); ++task) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(task)));
    Episode ep = sample_episode(src, split, spec, rng);
    EpisodeResult r = forward_episode(model, ep, fopt);
    accs[static_cast<std::size_t>(task)] = episode_accuracy(r, ep);
  }

  double mean = 0.0;
  for (double a : accs) mean += a;
  mean /= static_cast<double>(num_tasks);
  double var = 0.0;
  for (double a : accs) var += (a - mean) * (a - mean);
  var = num_tasks > 1 ? var / static_cast<double>(num_tasks - 1) : 0.0;
  const double ci = 1.96 * std::sqrt(var / static_cast<double>(num_tasks));

  EvalReport rep;
  rep.num_tasks = num_tasks;
  rep.mean_acc = 100.0 * mean;
  rep.ci95 = 100.0 * ci;
  rep.transductive = opt.transductive;
  rep.labeled_ratio = spec.labeled_ratio;
  return rep;
}

}  // namespace dpgn
