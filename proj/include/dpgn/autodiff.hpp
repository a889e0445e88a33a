#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dpgn/tensor.hpp"

namespace dpgn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())) {}
  void zero_grad() { grad.fill(0.0); }
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. One tape per episode forward; creation order is the
// topological order, backward() walks it in reverse and accumulates leaf
// gradients into the bound Parameters.
class Tape {
 public:
  Var constant(Tensor v);
  Var param(Parameter& p);

  const Tensor& val(Var v) const { return nodes_[v.id].value; }
  Tensor& grad_ref(Var v) { return nodes_[v.id].grad; }

  // Seeds d(loss)/d(loss) = 1 and accumulates into every Parameter touched.
  void backward(Var loss);

  std::size_t num_nodes() const { return nodes_.size(); }

  // --- ops ---
  Var linear(Var x, Var w, Var b);            // x(n,i) * w(i,o) + b(o)
  Var matmul(Var a, Var b);                   // (n,k)*(k,m)
  Var add(Var a, Var b);                      // same shape
  Var mul(Var a, Var b);                      // elementwise
  Var scale(Var x, double c);
  Var scale_by(Var x, Var s);                 // s is a 1-element tensor
  Var add_scalar(Var x, Var s);               // broadcast 1-element tensor
  Var relu(Var x);
  Var sigmoid(Var x);
  Var pairwise_sqdiff(Var v);                 // (t,f) -> (t*t, f)
  // use_batch_stats picks batch vs running statistics; update_running writes
  // the EMA buffers (only meaningful with batch stats).
  Var batchnorm(Var x, Var gamma, Var beta, Tensor& run_mean, Tensor& run_var,
                bool use_batch_stats, bool update_running, double momentum = 0.1,
                double eps = 1e-5);
  Var row_normalize(Var x, double floor = 1e-8);
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var x, std::size_t c0, std::size_t c1);
  Var slice_rows(Var x, std::size_t r0, std::size_t r1);
  Var gather_rows(Var x, std::vector<std::size_t> rows);
  Var reshape(Var x, std::vector<std::size_t> shape);
  Var block_mean(Var x, std::size_t block);   // (b*block, c) -> (b, c)
  Var zero_cols_from(Var x, std::size_t keep);
  Var sum_all(Var x);
  Var softmax_rows(Var x);
  Var softmax_ce_mean(Var logits, std::vector<int> labels);
  Var dropout(Var x, double p, Rng& rng, bool training);
  Var conv2d(Var x, Var w, Var b);            // NCHW, 3x3, same padding
  Var maxpool2(Var x);
  Var global_avg_pool(Var x);                 // (n,c,h,w) -> (n,c)

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&, int)> back;  // empty for constants
    Parameter* bound = nullptr;
  };

  Var push(Tensor value, std::function<void(Tape&, int)> back);
  std::vector<Node> nodes_;
};

}  // namespace dpgn
