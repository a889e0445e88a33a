#pragma once

#include <string>

#include "dpgn/nn.hpp"

namespace dpgn {

enum class Arch { mlp, conv4 };

Arch arch_from_string(const std::string& s);
std::string to_string(Arch a);

struct BackboneConfig {
  Arch arch = Arch::mlp;
  std::size_t emb_dim = 32;
  std::size_t input_dim = 16;    // mlp
  std::size_t hidden_dim = 64;   // mlp
  std::size_t in_channels = 1;   // conv4
  std::size_t img_h = 28, img_w = 28;
  std::vector<std::size_t> channels = {8, 16, 32, 32};
  double dropout = 0.1;          // last two conv blocks
};

// Feature extractor mapping a batch of raw samples to one embedding row per
// sample. mlp: two Linear-BN-ReLU blocks then Linear+BN. conv4: four
// Conv-BN-ReLU blocks with 2x2 max pooling, dropout on the last two blocks,
// global average pooling, then Linear+BN.
struct EmbeddingNet {
  BackboneConfig cfg;

  LinearLayer fc1, fc2;
  BatchNormLayer fb1, fb2;
  ConvLayer c1, c2, c3, c4;
  BatchNormLayer cb1, cb2, cb3, cb4;
  LinearLayer head;
  BatchNormLayer head_bn;

  EmbeddingNet() = default;
  EmbeddingNet(const BackboneConfig& cfg, Rng& rng);

  // x is (T, input_dim) for mlp, (T, c, h, w) for conv4; output is (T, emb_dim).
  Var forward(Tape& t, Var x, bool training, Rng& rng);

  void collect(ParamRefs& out);
  void state(StateRefs& out);
};

// Inference-mode convenience used by tests and tools.
Tensor embed(EmbeddingNet& net, const Tensor& batch);

}  // namespace dpgn
