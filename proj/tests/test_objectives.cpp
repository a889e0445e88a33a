#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dpgn/objectives.hpp"
#include "testutil.hpp"

using namespace dpgn;

namespace {

// 2-support row layout: edges (T, T) with supports in the first columns.
Tensor edges_from_rows(const std::vector<std::vector<double>>& rows) {
  Tensor t({rows.size(), rows[0].size()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[0].size(); ++j) t.at2(i, j) = rows[i][j];
  return t;
}

}  // namespace

TEST_CASE("prediction softmax over class votes") {
  SUBCASE("2-way 1-shot vote row [0.9, 0.1]") {
    Tape t;
    Tensor e = edges_from_rows({{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {0.9, 0.1, 0.0}});
    Var p = predict(t, t.constant(e), {0, 1}, {1, 1}, 2);
    CHECK(t.val(p).at2(2, 0) == doctest::Approx(0.6900).epsilon(1e-4));
    CHECK(t.val(p).at2(2, 1) == doctest::Approx(0.3100).epsilon(1e-4));
  }
  SUBCASE("uniform votes give uniform prediction") {
    Tape t;
    Tensor e = edges_from_rows({{0.2, 0.2, 0.2}, {0.2, 0.2, 0.2}, {0.2, 0.2, 0.2}});
    Var p = predict(t, t.constant(e), {0, 1}, {1, 1}, 2);
    CHECK(t.val(p).at2(2, 0) == doctest::Approx(0.5).epsilon(1e-12));
    double sum = t.val(p).at2(2, 0) + t.val(p).at2(2, 1);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("2-way 2-shot class-major votes sum per class") {
    Tape t;
    Tensor e = edges_from_rows({{0, 0, 0, 0, 0},
                                {0, 0, 0, 0, 0},
                                {0, 0, 0, 0, 0},
                                {0, 0, 0, 0, 0},
                                {0.4, 0.4, 0.1, 0.1, 0.0}});
    Var votes = class_votes(t, t.constant(e), {0, 0, 1, 1}, {1, 1, 1, 1}, 2);
    CHECK(t.val(votes).at2(4, 0) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(t.val(votes).at2(4, 1) == doctest::Approx(0.2).epsilon(1e-12));
    Var p = t.softmax_rows(votes);
    const double z0 = std::exp(0.8), z1 = std::exp(0.2);
    CHECK(t.val(p).at2(4, 0) == doctest::Approx(z0 / (z0 + z1)).epsilon(1e-12));
  }
  SUBCASE("unlabeled supports are silent and zero-labeled classes are an error") {
    Tape t;
    Tensor e = edges_from_rows({{0.3, 0.7, 0}, {0.3, 0.7, 0}, {0.3, 0.7, 0}});
    // Support of class 1 is unlabeled: no votes for class 1 -> error.
    CHECK_THROWS_WITH_AS(predict(t, t.constant(e), {0, 1}, {1, 0}, 2),
                         doctest::Contains("no labeled support"), std::invalid_argument);
    // With 2 shots of class 1, masking one of them just drops its edge.
    Tensor e2 = edges_from_rows(
        {{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}, {0.5, 0.2, 0.3, 0.0}});
    Var votes = class_votes(t, t.constant(e2), {0, 1, 1, 0}, {1, 1, 0, 0}, 2);
    CHECK(t.val(votes).at2(3, 0) == doctest::Approx(0.5));
    CHECK(t.val(votes).at2(3, 1) == doctest::Approx(0.2));
  }
}

TEST_CASE("shifting all votes by a constant leaves the prediction unchanged") {
  Rng rng(2);
  Tape t;
  Tensor v = randn({4, 3}, rng);
  Tensor shifted = v;
  for (auto& x : shifted.vec()) x += 1.7;
  Var p0 = t.softmax_rows(t.constant(v));
  Var p1 = t.softmax_rows(t.constant(shifted));
  CHECK(testutil::max_abs_diff(t.val(p0), t.val(p1)) < 1e-12);
}

TEST_CASE("cross entropy values") {
  SUBCASE("near-one-hot votes give near-zero loss") {
    Tape t;
    Tensor votes({1, 2}, {50.0, 0.0});
    Var l = t.softmax_ce_mean(t.constant(votes), {0});
    CHECK(t.val(l)[0] == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("uniform votes over 5 classes cost ln 5") {
    Tape t;
    Tensor votes({2, 5});
    votes.fill(0.31);
    Var l = t.softmax_ce_mean(t.constant(votes), {3, 1});
    CHECK(t.val(l)[0] == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  }
  SUBCASE("hand-computed two-query case") {
    // softmax(votes) = [[0.7,0.3],[0.4,0.6]] when votes are the log-probs.
    Tape t;
    Tensor votes({2, 2},
                 {std::log(0.7), std::log(0.3), std::log(0.4), std::log(0.6)});
    Var l = t.softmax_ce_mean(t.constant(votes), {0, 1});
    CHECK(t.val(l)[0] == doctest::Approx(-(std::log(0.7) + std::log(0.6)) / 2.0).epsilon(1e-12));
  }
  SUBCASE("loss is invariant to query ordering") {
    Tape t;
    Tensor votes({3, 2}, {1.0, 0.2, 0.4, 0.9, 0.1, 0.3});
    Var a = t.softmax_ce_mean(t.constant(votes), {0, 1, 1});
    Tensor perm({3, 2}, {0.1, 0.3, 1.0, 0.2, 0.4, 0.9});
    Var b = t.softmax_ce_mean(t.constant(perm), {1, 0, 1});
    CHECK(t.val(a)[0] == doctest::Approx(t.val(b)[0]).epsilon(1e-12));
  }
  SUBCASE("label out of range") {
    Tape t;
    Tensor votes({1, 2});
    CHECK_THROWS(t.softmax_ce_mean(t.constant(votes), {2}));
  }
}

TEST_CASE("distribution loss ordering") {
  // Concentrated same-class mass scores below the uniform ln N baseline.
  Tape t;
  Tensor uniform = edges_from_rows({{0.5, 0.5, 0}, {0.5, 0.5, 0}, {0.5, 0.5, 0}});
  Var lu = distribution_loss(t, t.constant(uniform), {0, 1}, {1, 1}, 2, 2, {0});
  CHECK(t.val(lu)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  Tensor peaked = edges_from_rows({{0.5, 0.5, 0}, {0.5, 0.5, 0}, {0.95, 0.05, 0}});
  Var lp = distribution_loss(t, t.constant(peaked), {0, 1}, {1, 1}, 2, 2, {0});
  CHECK(t.val(lp)[0] < t.val(lu)[0]);
}

TEST_CASE("total loss weighting") {
  Tape t;
  std::vector<Var> lp{t.constant(Tensor::scalar(2.0))};
  std::vector<Var> ld{t.constant(Tensor::scalar(1.0))};

  LossBundle bundle;
  Var total = total_loss(t, lp, ld, 1.0, 0.1, &bundle);
  CHECK(t.val(total)[0] == doctest::Approx(2.1).epsilon(1e-12));
  CHECK(bundle.total == doctest::Approx(2.1));
  CHECK(bundle.point_losses.size() == 1);

  // distribution term ablated
  Var no_dist = total_loss(t, lp, ld, 1.0, 0.0, nullptr);
  CHECK(t.val(no_dist)[0] == doctest::Approx(2.0).epsilon(1e-12));

  // multi-generation sum
  std::vector<Var> lp2{t.constant(Tensor::scalar(2.0)), t.constant(Tensor::scalar(1.0))};
  std::vector<Var> ld2{t.constant(Tensor::scalar(1.0)), t.constant(Tensor::scalar(0.5))};
  Var tot2 = total_loss(t, lp2, ld2, 1.0, 0.1, nullptr);
  CHECK(t.val(tot2)[0] == doctest::Approx(3.15).epsilon(1e-12));

  std::vector<Var> mismatched{t.constant(Tensor::scalar(1.0))};
  CHECK_THROWS(total_loss(t, lp2, mismatched, 1.0, 0.1, nullptr));
}

TEST_CASE("loss bundle invariant: total is the weighted generation sum") {
  Rng rng(3);
  Tape t;
  std::vector<Var> lp, ld;
  for (int l = 0; l < 4; ++l) {
    lp.push_back(t.constant(Tensor::scalar(std::abs(randn({1}, rng)[0]))));
    ld.push_back(t.constant(Tensor::scalar(std::abs(randn({1}, rng)[0]))));
  }
  LossBundle b;
  Var total = total_loss(t, lp, ld, 1.0, 0.1, &b);
  double expect = 0.0;
  for (std::size_t l = 0; l < 4; ++l)
    expect += b.lambda_point * b.point_losses[l] + b.lambda_dist * b.dist_losses[l];
  CHECK(b.total == doctest::Approx(expect).epsilon(1e-12));
  CHECK(b.total >= 0.0);
  CHECK(t.val(total)[0] == doctest::Approx(b.total));
}
