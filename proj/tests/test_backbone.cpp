#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dpgn/backbone.hpp"
#include "testutil.hpp"

using namespace dpgn;

TEST_CASE("mlp embed: shape contract and finiteness") {
  Rng rng(1);
  BackboneConfig cfg;
  cfg.arch = Arch::mlp;
  cfg.input_dim = 16;
  cfg.emb_dim = 32;
  EmbeddingNet net(cfg, rng);

  Tensor batch = randn({10, 16}, rng);
  Tensor emb = embed(net, batch);
  CHECK(emb.shape() == std::vector<std::size_t>({10, 32}));
  CHECK(emb.all_finite());

  Tensor bad = randn({10, 8}, rng);
  CHECK_THROWS(embed(net, bad));
}

TEST_CASE("constant input maps to identical rows") {
  Rng rng(2);
  BackboneConfig cfg;
  cfg.arch = Arch::mlp;
  cfg.input_dim = 6;
  cfg.emb_dim = 8;
  EmbeddingNet net(cfg, rng);
  Tensor zeros({5, 6});
  Tensor emb = embed(net, zeros);
  for (std::size_t i = 1; i < 5; ++i)
    for (std::size_t j = 0; j < 8; ++j)
      CHECK(emb.at2(i, j) == doctest::Approx(emb.at2(0, j)).epsilon(1e-12));
}

TEST_CASE("conv4 embed: shape contract") {
  Rng rng(3);
  BackboneConfig cfg;
  cfg.arch = Arch::conv4;
  cfg.emb_dim = 32;
  EmbeddingNet net(cfg, rng);
  Tensor batch = randn({10, 1, 28, 28}, rng);
  Tensor emb = embed(net, batch);
  CHECK(emb.shape() == std::vector<std::size_t>({10, 32}));
  CHECK(emb.all_finite());
  CHECK_THROWS(embed(net, randn({4, 1, 14, 14}, rng)));
}

TEST_CASE("row permutation of the batch permutes embeddings (inference stats)") {
  Rng rng(4);
  for (Arch arch : {Arch::mlp, Arch::conv4}) {
    BackboneConfig cfg;
    cfg.arch = arch;
    cfg.input_dim = 12;
    cfg.emb_dim = 16;
    cfg.img_h = cfg.img_w = 16;
    cfg.channels = {4, 4, 8, 8};
    EmbeddingNet net(cfg, rng);

    Tensor batch = arch == Arch::mlp ? randn({6, 12}, rng) : randn({6, 1, 16, 16}, rng);
    const std::size_t stride = batch.size() / 6;
    std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
    Tensor permuted(batch.shape());
    for (std::size_t i = 0; i < 6; ++i)
      std::copy(batch.data() + perm[i] * stride, batch.data() + (perm[i] + 1) * stride,
                permuted.data() + i * stride);

    Tensor e0 = embed(net, batch);
    Tensor e1 = embed(net, permuted);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 16; ++j)
        CHECK(e1.at2(i, j) == doctest::Approx(e0.at2(perm[i], j)).epsilon(1e-12));
  }
}

TEST_CASE("inference embedding is deterministic") {
  Rng rng(5);
  BackboneConfig cfg;
  cfg.arch = Arch::conv4;
  cfg.emb_dim = 8;
  cfg.img_h = cfg.img_w = 16;
  cfg.channels = {2, 3, 4, 4};
  cfg.dropout = 0.5;  // must not fire at inference
  EmbeddingNet net(cfg, rng);
  Tensor batch = randn({3, 1, 16, 16}, rng);
  CHECK(testutil::max_abs_diff(embed(net, batch), embed(net, batch)) == 0.0);
}

TEST_CASE("backbone gradients match finite differences") {
  Rng rng(6);

  SUBCASE("mlp") {
    BackboneConfig cfg;
    cfg.arch = Arch::mlp;
    cfg.input_dim = 4;
    cfg.hidden_dim = 8;
    cfg.emb_dim = 4;
    EmbeddingNet net(cfg, rng);
    Tensor batch = randn({4, 4}, rng);
    ParamRefs params;
    net.collect(params);
    auto run = [&](bool with_grad) {
      if (with_grad)
        for (auto* p : params) p->zero_grad();
      Tape t;
      Rng drng(0);
      Var emb = net.forward(t, t.constant(batch), true, drng);
      Var loss = t.sum_all(t.mul(emb, emb));
      if (with_grad) t.backward(loss);
      return t.val(loss)[0];
    };
    Rng frng(7);
    auto rep = testutil::fd_check(params, run, 5, 1e-5, frng);
    INFO(rep.worst);
    CHECK(rep.max_rel < 1e-3);
  }

  SUBCASE("conv4") {
    BackboneConfig cfg;
    cfg.arch = Arch::conv4;
    cfg.emb_dim = 4;
    cfg.img_h = cfg.img_w = 16;
    cfg.channels = {2, 3, 3, 4};
    cfg.dropout = 0.0;  // finite differences need a deterministic forward
    EmbeddingNet net(cfg, rng);
    Tensor batch = randn({4, 1, 16, 16}, rng);
    ParamRefs params;
    net.collect(params);
    auto run = [&](bool with_grad) {
      if (with_grad)
        for (auto* p : params) p->zero_grad();
      Tape t;
      Rng drng(0);
      Var emb = net.forward(t, t.constant(batch), true, drng);
      Var loss = t.sum_all(t.mul(emb, emb));
      if (with_grad) t.backward(loss);
      return t.val(loss)[0];
    };
    Rng frng(8);
    auto rep = testutil::fd_check(params, run, 4, 1e-5, frng);
    INFO(rep.worst);
    CHECK(rep.max_rel < 1e-3);
  }
}
