#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dpgn/kernels.hpp"
#include "dpgn/nn.hpp"
#include "testutil.hpp"

using namespace dpgn;

TEST_CASE("tensor shape and reshape") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  t.at2(1, 2) = 5.0;
  CHECK(t[5] == 5.0);
  CHECK_THROWS(t.reshaped({4}));
  Tensor r = t.reshaped({3, 2});
  CHECK(r.dim(0) == 3);
  CHECK(t.all_finite());
}

TEST_CASE("gemm kernels match naive loops") {
  Rng rng(1);
  const std::size_t n = 7, k = 5, m = 9;
  Tensor a = randn({n, k}, rng), b = randn({k, m}, rng);
  Tensor c({n, m});
  kern::gemm_nn(a.data(), b.data(), c.data(), n, k, m, false);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a.at2(i, p) * b.at2(p, j);
      CHECK(c.at2(i, j) == doctest::Approx(s).epsilon(1e-12));
    }

  // transposed accumulation variants
  Tensor da({n, k});
  kern::gemm_nt_acc(c.data(), b.data(), da.data(), n, m, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += c.at2(i, j) * b.at2(p, j);
      CHECK(da.at2(i, p) == doctest::Approx(s).epsilon(1e-12));
    }
  Tensor db({k, m});
  kern::gemm_tn_acc(a.data(), c.data(), db.data(), n, k, m);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += a.at2(i, p) * c.at2(i, j);
      CHECK(db.at2(p, j) == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("pairwise squared differences") {
  Rng rng(2);
  Tensor v = randn({4, 3}, rng);
  Tensor d({16, 3});
  kern::pairwise_sqdiff(v.data(), d.data(), 4, 3);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t f = 0; f < 3; ++f) {
        const double diff = v.at2(i, f) - v.at2(j, f);
        CHECK(d.at2(i * 4 + j, f) == doctest::Approx(diff * diff));
        CHECK(d.at2(i * 4 + j, f) == d.at2(j * 4 + i, f));  // symmetric pairs
      }
}

namespace {

// FD harness for a single op: inputs become parameters, the op output is
// squared and summed so every output element gets a distinct gradient.
template <typename Build>
void check_op_gradients(std::vector<Parameter>& inputs, Build&& build, double tol = 1e-6) {
  ParamRefs refs;
  for (auto& p : inputs) refs.push_back(&p);
  auto run = [&](bool with_grad) {
    if (with_grad)
      for (auto* p : refs) p->zero_grad();
    Tape t;
    std::vector<Var> vars;
    for (auto* p : refs) vars.push_back(t.param(*p));
    Var out = build(t, vars);
    Var loss = t.sum_all(t.mul(out, out));
    if (with_grad) t.backward(loss);
    return t.val(loss)[0];
  };
  Rng rng(77);
  auto rep = testutil::fd_check(refs, run, 6, 1e-5, rng);
  INFO(rep.worst);
  CHECK(rep.max_rel < tol);
}

Parameter make_param(const std::string& name, std::vector<std::size_t> shape, Rng& rng,
                     double stddev = 1.0, double offset = 0.0) {
  Tensor t = randn(std::move(shape), rng, stddev);
  for (auto& v : t.vec()) v += offset;
  return Parameter(name, std::move(t));
}

}  // namespace

TEST_CASE("op gradients match finite differences") {
  Rng rng(3);

  SUBCASE("linear") {
    std::vector<Parameter> in;
    in.push_back(make_param("x", {4, 3}, rng));
    in.push_back(make_param("w", {3, 5}, rng));
    in.push_back(make_param("b", {5}, rng));
    check_op_gradients(in, [](Tape& t, std::vector<Var>& v) {
      return t.linear(v[0], v[1], v[2]);
    });
  }
  SUBCASE("matmul+add+mul") {
    std::vector<Parameter> in;
    in.push_back(make_param("a", {3, 4}, rng));
    in.push_back(make_param("b", {4, 3}, rng));
    in.push_back(make_param("c", {3, 3}, rng));
    check_op_gradients(in, [](Tape& t, std::vector<Var>& v) {
      return t.mul(t.add(t.matmul(v[0], v[1]), v[2]), v[2]);
    });
  }
  SUBCASE("relu away from kink") {
    std::vector<Parameter> in;
    in.push_back(make_param("x", {4, 4}, rng, 1.0, 0.5));
    check_op_gradients(in, [](Tape& t, std::vector<Var>& v) { return t.relu(v[0]); });
  }
  SUBCASE("sigmoid") {
    std::vector<Parameter> in;
    in.push_back(make_param("x", {4, 4}, rng));
    check_op_gradients(in, [](Tape& t, std::vector<Var>& v) { return t.sigmoid(v[0]); });
  }
  SUBCASE("pairwise_sqdiff") {
    std::vector<Parameter> in;
    in.push_back(make_param("v", {5, 3}, rng));
    check_op_gradients(in, [](Tape& t, std::vector<Var>& v) { return t.pairwise_sqdiff(v[0]); });
  }
  SUBCASE("scale_by and add_scalar") {
    std::vector<Parameter> in;
    in.push_back(make_param("x", {3, 4}, rng));
    in.push_back(make_param("s", {1}, rng));
    in.push_back(make_param("c", {1}, rng));
    check_op_gradients(in, [](Tape& t, std::vector<Var>& v) {
      return t.add_scalar(t.scale_by(v[0], v[1]), v[2]);
    });
  }
  SUBCASE("batchnorm training mode") {
    std::vector<Parameter> in;
    in.push_back(make_param("x", {6, 3}, rng));
    in.push_back(make_param("gamma", {3}, rng, 0.3, 1.0));
    in.push_back(make_param("beta", {3}, rng, 0.3));
    Tensor rm = Tensor::zeros({3}), rv = Tensor::full({3}, 1.0);
    check_op_gradients(in, [&](Tape& t, std::vector<Var>& v) {
      return t.batchnorm(v[0], v[1], v[2], rm, rv, true, true);
    }, 5e-6);
  }
  SUBCASE("batchnorm eval mode") {
    std::vector<Parameter> in;
    in.push_back(make_param("x", {6, 3}, rng));
    in.push_back(make_param("gamma", {3}, rng, 0.3, 1.0));
    in.push_back(make_param("beta", {3}, rng, 0.3));
    Tensor rm = randn({3}, rng), rv = Tensor::full({3}, 2.0);
    check_op_gradients(in, [&](Tape& t, std::vector<Var>& v) {
      return t.batchnorm(v[0], v[1], v[2], rm, rv, false, false);
    });
  }
  SUBCASE("row_normalize") {
    std::vector<Parameter> in;
    in.push_back(make_param("x", {4, 4}, rng, 0.2, 1.0));  // positive rows
    check_op_gradients(in, [](Tape& t, std::vector<Var>& v) { return t.row_normalize(v[0]); });
  }
  SUBCASE("concat/slice/gather/reshape") {
    std::vector<Parameter> in;
    in.push_back(make_param("a", {4, 3}, rng));
    in.push_back(make_param("b", {4, 2}, rng));
    check_op_gradients(in, [](Tape& t, std::vector<Var>& v) {
      Var cat = t.concat_cols(v[0], v[1]);
      Var s = t.slice_cols(cat, 1, 4);
      Var r = t.slice_rows(s, 0, 3);
      Var g = t.gather_rows(r, {2, 0, 1, 2});
      return t.reshape(g, {6, 2});
    });
  }
  SUBCASE("block_mean and zero_cols_from") {
    std::vector<Parameter> in;
    in.push_back(make_param("x", {8, 3}, rng));
    check_op_gradients(in, [](Tape& t, std::vector<Var>& v) {
      return t.zero_cols_from(t.block_mean(v[0], 2), 2);
    });
  }
  SUBCASE("softmax_rows") {
    std::vector<Parameter> in;
    in.push_back(make_param("x", {3, 5}, rng));
    check_op_gradients(in, [](Tape& t, std::vector<Var>& v) { return t.softmax_rows(v[0]); });
  }
  SUBCASE("softmax cross entropy") {
    std::vector<Parameter> in;
    in.push_back(make_param("z", {4, 3}, rng));
    ParamRefs refs{&in[0]};
    auto run = [&](bool with_grad) {
      if (with_grad) in[0].zero_grad();
      Tape t;
      Var z = t.param(in[0]);
      Var loss = t.softmax_ce_mean(z, {0, 2, 1, 0});
      if (with_grad) t.backward(loss);
      return t.val(loss)[0];
    };
    Rng frng(9);
    auto rep = testutil::fd_check(refs, run, 12, 1e-6, frng);
    INFO(rep.worst);
    CHECK(rep.max_rel < 1e-6);
  }
  SUBCASE("conv/pool/gap") {
    std::vector<Parameter> in;
    in.push_back(make_param("x", {2, 2, 6, 6}, rng));
    in.push_back(make_param("w", {3, 2, 3, 3}, rng, 0.5));
    in.push_back(make_param("b", {3}, rng, 0.5));
    check_op_gradients(in, [](Tape& t, std::vector<Var>& v) {
      return t.global_avg_pool(t.maxpool2(t.conv2d(v[0], v[1], v[2])));
    }, 5e-6);
  }
}

TEST_CASE("gradients accumulate across reuse of a node") {
  Rng rng(4);
  Parameter x = Parameter("x", randn({3, 3}, rng));
  ParamRefs refs{&x};
  auto run = [&](bool with_grad) {
    if (with_grad) x.zero_grad();
    Tape t;
    Var v = t.param(x);
    Var both = t.add(t.mul(v, v), v);  // v used three times
    Var loss = t.sum_all(both);
    if (with_grad) t.backward(loss);
    return t.val(loss)[0];
  };
  Rng frng(5);
  auto rep = testutil::fd_check(refs, run, 9, 1e-6, frng);
  CHECK(rep.max_rel < 1e-7);
}

TEST_CASE("row_normalize output is row stochastic and floors tiny rows") {
  Tape t;
  Tensor x({2, 3}, {0.2, 0.3, 0.5, 1e-12, 1e-12, 1e-12});
  Var y = t.row_normalize(t.constant(x));
  double s0 = 0.0;
  for (std::size_t j = 0; j < 3; ++j) s0 += t.val(y).at2(0, j);
  CHECK(s0 == doctest::Approx(1.0).epsilon(1e-9));
  // floored row keeps raw scale rather than dividing by ~0
  CHECK(t.val(y).at2(1, 0) == doctest::Approx(1e-12 / 1e-8));
}

TEST_CASE("dropout") {
  Rng rng(6);
  Tape t;
  Tensor x = Tensor::full({50, 10}, 1.0);
  Var xd = t.dropout(t.constant(x), 0.3, rng, true);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < t.val(xd).size(); ++i) {
    const double v = t.val(xd)[i];
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.7)));
    if (v == 0.0) zeros++;
  }
  CHECK(zeros > 50);
  CHECK(zeros < 350);
  Rng rng2(7);
  Tape t2;
  Var same = t2.dropout(t2.constant(x), 0.0, rng2, true);
  CHECK(testutil::max_abs_diff(t2.val(same), x) == 0.0);
}

TEST_CASE("batchnorm running statistics update only in training mode") {
  Rng rng(8);
  Parameter gamma("g", Tensor::full({3}, 1.0)), beta("b", Tensor::zeros({3}));
  Tensor rm = Tensor::zeros({3}), rv = Tensor::full({3}, 1.0);
  Tensor x = randn({10, 3}, rng);
  {
    Tape t;
    t.batchnorm(t.constant(x), t.param(gamma), t.param(beta), rm, rv, false, false);
    CHECK(rm[0] == 0.0);
    CHECK(rv[1] == 1.0);
  }
  {
    Tape t;
    t.batchnorm(t.constant(x), t.param(gamma), t.param(beta), rm, rv, true, true);
    CHECK(rm[0] != 0.0);
  }
}
