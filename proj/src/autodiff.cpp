#include "dpgn/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "dpgn/kernels.hpp"

namespace dpgn {

Var Tape::push(Tensor value, std::function<void(Tape&, int)> back) {
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(back), nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor v) { return push(std::move(v), nullptr); }

Var Tape::param(Parameter& p) {
  Var v = push(p.value, nullptr);
  nodes_[v.id].bound = &p;
  return v;
}

void Tape::backward(Var loss) {
  if (!loss.valid() || val(loss).size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar");
  for (auto& n : nodes_) n.grad = Tensor::zeros(n.value.shape());
  nodes_[loss.id].grad[0] = 1.0;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.back) n.back(*this, i);
    if (n.bound)
      for (std::size_t q = 0; q < n.grad.size(); ++q) n.bound->grad[q] += n.grad[q];
  }
}

Var Tape::linear(Var x, Var w, Var b) {
  const Tensor& xv = val(x);
  const Tensor& wv = val(w);
  const std::size_t n = xv.dim(0), in = xv.dim(1), out = wv.dim(1);
  if (wv.dim(0) != in) throw std::invalid_argument("linear: shape mismatch");
  Tensor y({n, out});
  kern::gemm_nn(xv.data(), wv.data(), y.data(), n, in, out, false);
  if (b.valid()) {
    const Tensor& bv = val(b);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out; ++j) y.at2(i, j) += bv[j];
  }
  return push(std::move(y), [x, w, b, n, in, out](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    kern::gemm_nt_acc(g.data(), t.val(w).data(), t.grad_ref(x).data(), n, out, in);
    kern::gemm_tn_acc(t.val(x).data(), g.data(), t.grad_ref(w).data(), n, in, out);
    if (b.valid()) {
      Tensor& db = t.grad_ref(b);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out; ++j) db[j] += g[i * out + j];
    }
  });
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  const std::size_t n = av.dim(0), k = av.dim(1), m = bv.dim(1);
  if (bv.dim(0) != k) throw std::invalid_argument("matmul: shape mismatch");
  Tensor y({n, m});
  kern::gemm_nn(av.data(), bv.data(), y.data(), n, k, m, false);
  return push(std::move(y), [a, b, n, k, m](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    kern::gemm_nt_acc(g.data(), t.val(b).data(), t.grad_ref(a).data(), n, m, k);
    kern::gemm_tn_acc(t.val(a).data(), g.data(), t.grad_ref(b).data(), n, k, m);
  });
}

Var Tape::add(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return push(std::move(y), [a, b](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    Tensor& da = t.grad_ref(a);
    Tensor& db = t.grad_ref(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] += g[i];
      db[i] += g[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (!av.same_shape(bv)) throw std::invalid_argument("mul: shape mismatch");
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return push(std::move(y), [a, b](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    Tensor& da = t.grad_ref(a);
    Tensor& db = t.grad_ref(b);
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] += g[i] * bv[i];
      db[i] += g[i] * av[i];
    }
  });
}

Var Tape::scale(Var x, double c) {
  Tensor y = val(x);
  for (auto& v : y.vec()) v *= c;
  return push(std::move(y), [x, c](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    Tensor& dx = t.grad_ref(x);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += c * g[i];
  });
}

Var Tape::scale_by(Var x, Var s) {
  const double sv = val(s)[0];
  Tensor y = val(x);
  for (auto& v : y.vec()) v *= sv;
  return push(std::move(y), [x, s, sv](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    Tensor& dx = t.grad_ref(x);
    Tensor& ds = t.grad_ref(s);
    const Tensor& xv = t.val(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      dx[i] += sv * g[i];
      acc += g[i] * xv[i];
    }
    ds[0] += acc;
  });
}

Var Tape::add_scalar(Var x, Var s) {
  const double sv = val(s)[0];
  Tensor y = val(x);
  for (auto& v : y.vec()) v += sv;
  return push(std::move(y), [x, s](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    Tensor& dx = t.grad_ref(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      dx[i] += g[i];
      acc += g[i];
    }
    t.grad_ref(s)[0] += acc;
  });
}

Var Tape::relu(Var x) {
  Tensor y = val(x);
  for (auto& v : y.vec()) v = v > 0.0 ? v : 0.0;
  return push(std::move(y), [x](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    const Tensor& xv = t.val(x);
    Tensor& dx = t.grad_ref(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) dx[i] += g[i];
  });
}

Var Tape::sigmoid(Var x) {
  Tensor y = val(x);
  for (auto& v : y.vec()) {
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  return push(std::move(y), [x](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    const Tensor& yv = t.val(Var{id});
    Tensor& dx = t.grad_ref(x);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * yv[i] * (1.0 - yv[i]);
  });
}

Var Tape::pairwise_sqdiff(Var v) {
  const Tensor& vv = val(v);
  const std::size_t tt = vv.dim(0), f = vv.dim(1);
  Tensor d({tt * tt, f});
  kern::pairwise_sqdiff(vv.data(), d.data(), tt, f);
  return push(std::move(d), [v, tt, f](Tape& t, int id) {
    kern::pairwise_sqdiff_back(t.val(v).data(), t.grad_ref(Var{id}).data(), t.grad_ref(v).data(),
                               tt, f);
  });
}

namespace {

// Channel layout for batchnorm: rank-2 tensors normalize per column, rank-4
// (NCHW) per channel across batch and spatial dims.
struct BnLayout {
  std::size_t channels, per_channel, chan_stride, inner;
  explicit BnLayout(const Tensor& x) {
    if (x.rank() == 2) {
      channels = x.dim(1);
      per_channel = x.dim(0);
      chan_stride = 1;
      inner = x.dim(1);
    } else if (x.rank() == 4) {
      channels = x.dim(1);
      per_channel = x.dim(0) * x.dim(2) * x.dim(3);
      chan_stride = x.dim(2) * x.dim(3);
      inner = 0;
    } else {
      throw std::invalid_argument("batchnorm: rank must be 2 or 4");
    }
  }
  // Iterates all elements of channel c.
  template <typename F>
  void each(const Tensor& x, std::size_t c, F&& f) const {
    if (inner) {
      for (std::size_t i = 0; i < per_channel; ++i) f(i * inner + c);
    } else {
      const std::size_t hw = chan_stride, cn = channels;
      const std::size_t b = x.dim(0);
      for (std::size_t n = 0; n < b; ++n)
        for (std::size_t q = 0; q < hw; ++q) f((n * cn + c) * hw + q);
    }
  }
};

}  // namespace

Var Tape::batchnorm(Var x, Var gamma, Var beta, Tensor& run_mean, Tensor& run_var,
                    bool use_batch_stats, bool update_running, double momentum, double eps) {
  const Tensor& xv = val(x);
  BnLayout lay(xv);
  const std::size_t c = lay.channels;
  if (val(gamma).size() != c || run_mean.size() != c)
    throw std::invalid_argument("batchnorm: channel mismatch");

  const bool training = use_batch_stats;
  Tensor mean({c}), var({c});
  if (use_batch_stats) {
    const double n = static_cast<double>(lay.per_channel);
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0.0;
      lay.each(xv, j, [&](std::size_t idx) { s += xv[idx]; });
      mean[j] = s / n;
      double v = 0.0;
      lay.each(xv, j, [&](std::size_t idx) {
        const double d = xv[idx] - mean[j];
        v += d * d;
      });
      var[j] = v / n;
    }
    if (update_running)
      for (std::size_t j = 0; j < c; ++j) {
        const double unbiased = lay.per_channel > 1
                                    ? var[j] * n / (n - 1.0)
                                    : var[j];
        run_mean[j] = (1.0 - momentum) * run_mean[j] + momentum * mean[j];
        run_var[j] = (1.0 - momentum) * run_var[j] + momentum * unbiased;
      }
  } else {
    mean = run_mean;
    var = run_var;
  }

  Tensor inv({c});
  for (std::size_t j = 0; j < c; ++j) inv[j] = 1.0 / std::sqrt(var[j] + eps);

  const Tensor& gv = val(gamma);
  const Tensor& bv = val(beta);
  Tensor xhat(xv.shape());
  Tensor y(xv.shape());
  for (std::size_t j = 0; j < c; ++j)
    lay.each(xv, j, [&](std::size_t idx) {
      xhat[idx] = (xv[idx] - mean[j]) * inv[j];
      y[idx] = gv[j] * xhat[idx] + bv[j];
    });

  return push(std::move(y),
              [x, gamma, beta, training, xhat = std::move(xhat), inv = std::move(inv)](
                  Tape& t, int id) {
                const Tensor& g = t.grad_ref(Var{id});
                const Tensor& xv = t.val(x);
                BnLayout lay(xv);
                const std::size_t c = lay.channels;
                const double n = static_cast<double>(lay.per_channel);
                Tensor& dx = t.grad_ref(x);
                Tensor& dgamma = t.grad_ref(gamma);
                Tensor& dbeta = t.grad_ref(beta);
                const Tensor& gv = t.val(gamma);
                for (std::size_t j = 0; j < c; ++j) {
                  double sum_g = 0.0, sum_gx = 0.0;
                  lay.each(xv, j, [&](std::size_t idx) {
                    sum_g += g[idx];
                    sum_gx += g[idx] * xhat[idx];
                  });
                  dgamma[j] += sum_gx;
                  dbeta[j] += sum_g;
                  if (training) {
                    lay.each(xv, j, [&](std::size_t idx) {
                      const double dxhat = g[idx] * gv[j];
                      dx[idx] +=
                          inv[j] * (dxhat - (gv[j] / n) * (sum_g + xhat[idx] * sum_gx));
                    });
                  } else {
                    lay.each(xv, j,
                             [&](std::size_t idx) { dx[idx] += g[idx] * gv[j] * inv[j]; });
                  }
                }
              });
}

Var Tape::row_normalize(Var x, double floor) {
  const Tensor& xv = val(x);
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  Tensor y(xv.shape());
  Tensor sums({r});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += xv.at2(i, j);
    const bool floored = s < floor;
    sums[i] = floored ? floor : s;
    for (std::size_t j = 0; j < c; ++j) y.at2(i, j) = xv.at2(i, j) / sums[i];
  }
  return push(std::move(y), [x, r, c, floor, sums = std::move(sums)](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    const Tensor& yv = t.val(Var{id});
    const Tensor& xv = t.val(x);
    Tensor& dx = t.grad_ref(x);
    for (std::size_t i = 0; i < r; ++i) {
      double raw = 0.0;
      for (std::size_t j = 0; j < c; ++j) raw += xv[i * c + j];
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * yv[i * c + j];
      const bool floored = raw < floor;
      for (std::size_t j = 0; j < c; ++j)
        dx[i * c + j] += (g[i * c + j] - (floored ? 0.0 : dot)) / sums[i];
    }
  });
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  const std::size_t n = av.dim(0), p = av.dim(1), q = bv.dim(1);
  if (bv.dim(0) != n) throw std::invalid_argument("concat_cols: row mismatch");
  Tensor y({n, p + q});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(av.data() + i * p, av.data() + (i + 1) * p, y.data() + i * (p + q));
    std::copy(bv.data() + i * q, bv.data() + (i + 1) * q, y.data() + i * (p + q) + p);
  }
  return push(std::move(y), [a, b, n, p, q](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    Tensor& da = t.grad_ref(a);
    Tensor& db = t.grad_ref(b);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j) da[i * p + j] += g[i * (p + q) + j];
      for (std::size_t j = 0; j < q; ++j) db[i * q + j] += g[i * (p + q) + p + j];
    }
  });
}

Var Tape::slice_cols(Var x, std::size_t c0, std::size_t c1) {
  const Tensor& xv = val(x);
  const std::size_t n = xv.dim(0), c = xv.dim(1), w = c1 - c0;
  if (c1 > c || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
  Tensor y({n, w});
  for (std::size_t i = 0; i < n; ++i)
    std::copy(xv.data() + i * c + c0, xv.data() + i * c + c1, y.data() + i * w);
  return push(std::move(y), [x, n, c, c0, w](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    Tensor& dx = t.grad_ref(x);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) dx[i * c + c0 + j] += g[i * w + j];
  });
}

Var Tape::slice_rows(Var x, std::size_t r0, std::size_t r1) {
  const Tensor& xv = val(x);
  const std::size_t c = xv.dim(1);
  if (r1 > xv.dim(0) || r0 >= r1) throw std::invalid_argument("slice_rows: bad range");
  Tensor y({r1 - r0, c});
  std::copy(xv.data() + r0 * c, xv.data() + r1 * c, y.data());
  return push(std::move(y), [x, r0, r1, c](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    Tensor& dx = t.grad_ref(x);
    for (std::size_t i = 0; i < (r1 - r0) * c; ++i) dx[r0 * c + i] += g[i];
  });
}

Var Tape::gather_rows(Var x, std::vector<std::size_t> rows) {
  const Tensor& xv = val(x);
  const std::size_t c = xv.dim(1);
  Tensor y({rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= xv.dim(0)) throw std::invalid_argument("gather_rows: index out of range");
    std::copy(xv.data() + rows[i] * c, xv.data() + (rows[i] + 1) * c, y.data() + i * c);
  }
  return push(std::move(y), [x, rows = std::move(rows), c](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    Tensor& dx = t.grad_ref(x);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) dx[rows[i] * c + j] += g[i * c + j];
  });
}

Var Tape::reshape(Var x, std::vector<std::size_t> shape) {
  Tensor y = val(x).reshaped(shape);
  return push(std::move(y), [x](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    Tensor& dx = t.grad_ref(x);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  });
}

Var Tape::block_mean(Var x, std::size_t block) {
  const Tensor& xv = val(x);
  const std::size_t rows = xv.dim(0), c = xv.dim(1);
  if (block == 0 || rows % block != 0) throw std::invalid_argument("block_mean: bad block");
  const std::size_t b = rows / block;
  Tensor y({b, c});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t p = 0; p < block; ++p)
      for (std::size_t j = 0; j < c; ++j) y.at2(i, j) += xv.at2(i * block + p, j);
  for (auto& v : y.vec()) v /= static_cast<double>(block);
  return push(std::move(y), [x, b, block, c](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    Tensor& dx = t.grad_ref(x);
    const double inv = 1.0 / static_cast<double>(block);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t p = 0; p < block; ++p)
        for (std::size_t j = 0; j < c; ++j) dx[(i * block + p) * c + j] += g[i * c + j] * inv;
  });
}

Var Tape::zero_cols_from(Var x, std::size_t keep) {
  const Tensor& xv = val(x);
  const std::size_t n = xv.dim(0), c = xv.dim(1);
  if (keep > c) throw std::invalid_argument("zero_cols_from: keep exceeds width");
  Tensor y = xv;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = keep; j < c; ++j) y.at2(i, j) = 0.0;
  return push(std::move(y), [x, n, c, keep](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    Tensor& dx = t.grad_ref(x);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < keep; ++j) dx[i * c + j] += g[i * c + j];
  });
}

Var Tape::sum_all(Var x) {
  const Tensor& xv = val(x);
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
  return push(Tensor::scalar(s), [x](Tape& t, int id) {
    const double g = t.grad_ref(Var{id})[0];
    Tensor& dx = t.grad_ref(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
  });
}

Var Tape::softmax_rows(Var x) {
  const Tensor& xv = val(x);
  const std::size_t n = xv.dim(0), c = xv.dim(1);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double mx = xv.at2(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xv.at2(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      y.at2(i, j) = std::exp(xv.at2(i, j) - mx);
      s += y.at2(i, j);
    }
    for (std::size_t j = 0; j < c; ++j) y.at2(i, j) /= s;
  }
  return push(std::move(y), [x, n, c](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    const Tensor& yv = t.val(Var{id});
    Tensor& dx = t.grad_ref(x);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * yv[i * c + j];
      for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += yv[i * c + j] * (g[i * c + j] - dot);
    }
  });
}

Var Tape::softmax_ce_mean(Var logits, std::vector<int> labels) {
  const Tensor& z = val(logits);
  const std::size_t n = z.dim(0), c = z.dim(1);
  if (labels.size() != n) throw std::invalid_argument("softmax_ce_mean: label count");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw std::invalid_argument("softmax_ce_mean: label out of range");
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = z.at2(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z.at2(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(z.at2(i, j) - mx);
    loss += std::log(s) + mx - z.at2(i, static_cast<std::size_t>(labels[i]));
  }
  loss /= static_cast<double>(n);
  return push(Tensor::scalar(loss), [logits, labels = std::move(labels), n, c](Tape& t, int id) {
    const double g = t.grad_ref(Var{id})[0] / static_cast<double>(n);
    const Tensor& z = t.val(logits);
    Tensor& dz = t.grad_ref(logits);
    for (std::size_t i = 0; i < n; ++i) {
      double mx = z[i * c];
      for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z[i * c + j]);
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += std::exp(z[i * c + j] - mx);
      for (std::size_t j = 0; j < c; ++j) {
        const double p = std::exp(z[i * c + j] - mx) / s;
        dz[i * c + j] += g * (p - (static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0));
      }
    }
  });
}

Var Tape::dropout(Var x, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) {
    // Inference path is the identity; keep the node so call sites are uniform.
    Tensor y = val(x);
    return push(std::move(y), [x](Tape& t, int id) {
      const Tensor& g = t.grad_ref(Var{id});
      Tensor& dx = t.grad_ref(x);
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    });
  }
  const Tensor& xv = val(x);
  Tensor mask(xv.shape());
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? scale : 0.0;
  Tensor y = xv;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
  return push(std::move(y), [x, mask = std::move(mask)](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    Tensor& dx = t.grad_ref(x);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * mask[i];
  });
}

Var Tape::conv2d(Var x, Var w, Var b) {
  const Tensor& xv = val(x);
  const Tensor& wv = val(w);
  const std::size_t bn = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
  const std::size_t cout = wv.dim(0);
  if (wv.dim(1) != cin || wv.dim(2) != 3 || wv.dim(3) != 3)
    throw std::invalid_argument("conv2d: weight shape");
  Tensor y({bn, cout, h, wd});
  kern::conv2d_3x3(xv.data(), wv.data(), b.valid() ? val(b).data() : nullptr, y.data(), bn, cin, h,
                   wd, cout);
  return push(std::move(y), [x, w, b, bn, cin, h, wd, cout](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    Tensor dbias({cout});
    kern::conv2d_3x3_back(t.val(x).data(), t.val(w).data(), g.data(), t.grad_ref(x).data(),
                          t.grad_ref(w).data(), dbias.data(), bn, cin, h, wd, cout);
    if (b.valid()) {
      Tensor& db = t.grad_ref(b);
      for (std::size_t j = 0; j < cout; ++j) db[j] += dbias[j];
    }
  });
}

Var Tape::maxpool2(Var x) {
  const Tensor& xv = val(x);
  const std::size_t n = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor y({xv.dim(0), xv.dim(1), h / 2, w / 2});
  std::vector<int> arg(y.size());
  kern::maxpool2(xv.data(), y.data(), arg.data(), n, h, w);
  return push(std::move(y), [x, n, h, w, arg = std::move(arg)](Tape& t, int id) {
    kern::maxpool2_back(t.grad_ref(Var{id}).data(), arg.data(), t.grad_ref(x).data(), n, h, w);
  });
}

Var Tape::global_avg_pool(Var x) {
  const Tensor& xv = val(x);
  const std::size_t b = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor y({b, c});
  for (std::size_t i = 0; i < b * c; ++i) {
    double s = 0.0;
    for (std::size_t q = 0; q < hw; ++q) s += xv[i * hw + q];
    y[i] = s / static_cast<double>(hw);
  }
  return push(std::move(y), [x, b, c, hw](Tape& t, int id) {
    const Tensor& g = t.grad_ref(Var{id});
    Tensor& dx = t.grad_ref(x);
    const double inv = 1.0 / static_cast<double>(hw);
    for (std::size_t i = 0; i < b * c; ++i)
      for (std::size_t q = 0; q < hw; ++q) dx[i * hw + q] += g[i] * inv;
  });
}

}  // namespace dpgn
