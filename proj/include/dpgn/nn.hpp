#pragma once

#include <memory>
#include <utility>

#include "dpgn/autodiff.hpp"

namespace dpgn {

using ParamRefs = std::vector<Parameter*>;
// Named tensors that belong in a checkpoint: parameters plus running buffers.
using StateRefs = std::vector<std::pair<std::string, Tensor*>>;

struct LinearLayer {
  Parameter w, b;

  LinearLayer() = default;
  LinearLayer(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : w(name + ".weight", randn({in, out}, rng, std::sqrt(2.0 / static_cast<double>(in)))),
        b(name + ".bias", Tensor::zeros({out})) {}

  Var forward(Tape& t, Var x) { return t.linear(x, t.param(w), t.param(b)); }
  void collect(ParamRefs& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
  void state(StateRefs& out) {
    out.emplace_back(w.name, &w.value);
    out.emplace_back(b.name, &b.value);
  }
};

struct BatchNormLayer {
  Parameter gamma, beta;
  Tensor run_mean, run_var;
  std::string name;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNormLayer() = default;
  BatchNormLayer(const std::string& n, std::size_t channels)
      : gamma(n + ".gamma", Tensor::full({channels}, 1.0)),
        beta(n + ".beta", Tensor::zeros({channels})),
        run_mean(Tensor::zeros({channels})),
        run_var(Tensor::full({channels}, 1.0)),
        name(n) {}

  // Backbone convention: batch statistics (and EMA updates) while training,
  // frozen running statistics at evaluation.
  Var forward(Tape& t, Var x, bool training) {
    return t.batchnorm(x, t.param(gamma), t.param(beta), run_mean, run_var, training, training,
                       momentum, eps);
  }
  // Episode-graph convention: statistics always come from the episode batch.
  // Edge scores depend on the sampled task's pair population, which running
  // averages track poorly; buffers stay untouched so evaluation never
  // mutates state.
  Var forward_episodic(Tape& t, Var x) {
    return t.batchnorm(x, t.param(gamma), t.param(beta), run_mean, run_var, true, false, momentum,
                       eps);
  }
  void collect(ParamRefs& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
  void state(StateRefs& out) {
    out.emplace_back(gamma.name, &gamma.value);
    out.emplace_back(beta.name, &beta.value);
    out.emplace_back(name + ".running_mean", &run_mean);
    out.emplace_back(name + ".running_var", &run_var);
  }
};

struct ConvLayer {
  Parameter w, b;

  ConvLayer() = default;
  ConvLayer(const std::string& name, std::size_t cin, std::size_t cout, Rng& rng)
      : w(name + ".weight",
          randn({cout, cin, 3, 3}, rng, std::sqrt(2.0 / (9.0 * static_cast<double>(cin))))),
        b(name + ".bias", Tensor::zeros({cout})) {}

  Var forward(Tape& t, Var x) { return t.conv2d(x, t.param(w), t.param(b)); }
  void collect(ParamRefs& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
  void state(StateRefs& out) {
    out.emplace_back(w.name, &w.value);
    out.emplace_back(b.name, &b.value);
  }
};

}  // namespace dpgn
