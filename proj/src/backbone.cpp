#include "dpgn/backbone.hpp"

namespace dpgn {

Arch arch_from_string(const std::string& s) {
  if (s == "mlp") return Arch::mlp;
  if (s == "conv4") return Arch::conv4;
  throw std::invalid_argument("unknown backbone '" + s + "' (expected mlp or conv4)");
}

std::string to_string(Arch a) { return a == Arch::mlp ? "mlp" : "conv4"; }

EmbeddingNet::EmbeddingNet(const BackboneConfig& c, Rng& rng) : cfg(c) {
  if (cfg.arch == Arch::mlp) {
    fc1 = LinearLayer("backbone.fc1", cfg.input_dim, cfg.hidden_dim, rng);
    fb1 = BatchNormLayer("backbone.fb1", cfg.hidden_dim);
    fc2 = LinearLayer("backbone.fc2", cfg.hidden_dim, cfg.hidden_dim, rng);
    fb2 = BatchNormLayer("backbone.fb2", cfg.hidden_dim);
    head = LinearLayer("backbone.head", cfg.hidden_dim, cfg.emb_dim, rng);
  } else {
    if (cfg.channels.size() != 4) throw std::invalid_argument("conv4 needs 4 channel counts");
    c1 = ConvLayer("backbone.c1", cfg.in_channels, cfg.channels[0], rng);
    cb1 = BatchNormLayer("backbone.cb1", cfg.channels[0]);
    c2 = ConvLayer("backbone.c2", cfg.channels[0], cfg.channels[1], rng);
    cb2 = BatchNormLayer("backbone.cb2", cfg.channels[1]);
    c3 = ConvLayer("backbone.c3", cfg.channels[1], cfg.channels[2], rng);
    cb3 = BatchNormLayer("backbone.cb3", cfg.channels[2]);
    c4 = ConvLayer("backbone.c4", cfg.channels[2], cfg.channels[3], rng);
    cb4 = BatchNormLayer("backbone.cb4", cfg.channels[3]);
    head = LinearLayer("backbone.head", cfg.channels[3], cfg.emb_dim, rng);
  }
  head_bn = BatchNormLayer("backbone.head_bn", cfg.emb_dim);
}

Var EmbeddingNet::forward(Tape& t, Var x, bool training, Rng& rng) {
  Var h;
  if (cfg.arch == Arch::mlp) {
    if (t.val(x).rank() != 2 || t.val(x).dim(1) != cfg.input_dim)
      throw std::invalid_argument("embed: expected batch of dim-" +
                                  std::to_string(cfg.input_dim) + " vectors, got " +
                                  shape_str(t.val(x)));
    h = t.relu(fb1.forward(t, fc1.forward(t, x), training));
    h = t.relu(fb2.forward(t, fc2.forward(t, h), training));
    h = head.forward(t, h);
  } else {
    const Tensor& xv = t.val(x);
    if (xv.rank() != 4 || xv.dim(1) != cfg.in_channels || xv.dim(2) != cfg.img_h ||
        xv.dim(3) != cfg.img_w)
      throw std::invalid_argument("embed: expected image batch, got " + shape_str(xv));
    h = t.maxpool2(t.relu(cb1.forward(t, c1.forward(t, x), training)));
    h = t.maxpool2(t.relu(cb2.forward(t, c2.forward(t, h), training)));
    h = t.maxpool2(t.relu(cb3.forward(t, c3.forward(t, h), training)));
    h = t.dropout(h, cfg.dropout, rng, training);
    h = t.maxpool2(t.relu(cb4.forward(t, c4.forward(t, h), training)));
    h = t.dropout(h, cfg.dropout, rng, training);
    h = t.global_avg_pool(h);
    h = head.forward(t, h);
  }
  return head_bn.forward(t, h, training);
}

void EmbeddingNet::collect(ParamRefs& out) {
  if (cfg.arch == Arch::mlp) {
    fc1.collect(out);
    fb1.collect(out);
    fc2.collect(out);
    fb2.collect(out);
  } else {
    c1.collect(out);
    cb1.collect(out);
    c2.collect(out);
    cb2.collect(out);
    c3.collect(out);
    cb3.collect(out);
    c4.collect(out);
    cb4.collect(out);
  }
  head.collect(out);
  head_bn.collect(out);
}

void EmbeddingNet::state(StateRefs& out) {
  if (cfg.arch == Arch::mlp) {
    fc1.state(out);
    fb1.state(out);
    fc2.state(out);
    fb2.state(out);
  } else {
    c1.state(out);
    cb1.state(out);
    c2.state(out);
    cb2.state(out);
    c3.state(out);
    cb3.state(out);
    c4.state(out);
    cb4.state(out);
  }
  head.state(out);
  head_bn.state(out);
}

Tensor embed(EmbeddingNet& net, const Tensor& batch) {
  Tape t;
  Rng rng(0);
  Var out = net.forward(t, t.constant(batch), false, rng);
  return t.val(out);
}

}  // namespace dpgn
