#include "dpgn/graph.hpp"

#include <cmath>
#include <filesystem>
#include <set>

#include "dpgn/io.hpp"

namespace dpgn {

PointEdgeEncoder::PointEdgeEncoder(const std::string& name, std::size_t feat_dim, Rng& rng)
    : l1(name + ".l1", feat_dim, feat_dim, rng),
      l2(name + ".l2", feat_dim, feat_dim, rng),
      l3(name + ".l3", feat_dim, 1, rng),
      bn1(name + ".bn1", feat_dim),
      bn2(name + ".bn2", feat_dim) {}

Var PointEdgeEncoder::forward(Tape& t, Var sqdiff) {
  Var h = t.relu(bn1.forward_episodic(t, l1.forward(t, sqdiff)));
  h = t.relu(bn2.forward_episodic(t, l2.forward(t, h)));
  return t.sigmoid(l3.forward(t, h));
}

void PointEdgeEncoder::collect(ParamRefs& out) {
  l1.collect(out);
  l2.collect(out);
  l3.collect(out);
  bn1.collect(out);
  bn2.collect(out);
}

void PointEdgeEncoder::state(StateRefs& out) {
  l1.state(out);
  l2.state(out);
  l3.state(out);
  bn1.state(out);
  bn2.state(out);
}

DistributionEdgeEncoder::DistributionEdgeEncoder(const std::string& name, std::size_t ch, Rng& rng)
    : channels(ch),
      l1(name + ".l1", 1, ch, rng),
      l2(name + ".l2", ch, ch, rng),
      l3(name + ".l3", ch, 1, rng),
      bn1(name + ".bn1", ch),
      bn2(name + ".bn2", ch) {}

Var DistributionEdgeEncoder::forward(Tape& t, Var sqdiff) {
  const std::size_t rows = t.val(sqdiff).dim(0), nk = t.val(sqdiff).dim(1);
  Var h = t.reshape(sqdiff, {rows * nk, 1});
  h = t.relu(bn1.forward_episodic(t, l1.forward(t, h)));
  h = t.block_mean(h, nk);  // pool over support positions
  h = t.relu(bn2.forward_episodic(t, l2.forward(t, h)));
  return t.sigmoid(l3.forward(t, h));
}

void DistributionEdgeEncoder::collect(ParamRefs& out) {
  l1.collect(out);
  l2.collect(out);
  l3.collect(out);
  bn1.collect(out);
  bn2.collect(out);
}

void DistributionEdgeEncoder::state(StateRefs& out) {
  l1.state(out);
  l2.state(out);
  l3.state(out);
  bn1.state(out);
  bn2.state(out);
}

PointToDistributionAgg::PointToDistributionAgg(const std::string& name)
    : w_edge(name + ".w_edge", Tensor::scalar(1.0)),
      w_prev(name + ".w_prev", Tensor::scalar(1.0)),
      bias(name + ".bias", Tensor::scalar(0.0)) {}

Var PointToDistributionAgg::forward(Tape& t, Var edge_slice, Var prev_nodes) {
  if (!t.val(edge_slice).same_shape(t.val(prev_nodes)))
    throw std::invalid_argument("p2d_aggregate: slice width must match distribution width");
  Var mix = t.add(t.scale_by(edge_slice, t.param(w_edge)), t.scale_by(prev_nodes, t.param(w_prev)));
  return t.relu(t.add_scalar(mix, t.param(bias)));
}

void PointToDistributionAgg::collect(ParamRefs& out) {
  out.push_back(&w_edge);
  out.push_back(&w_prev);
  out.push_back(&bias);
}

void PointToDistributionAgg::state(StateRefs& out) {
  out.emplace_back(w_edge.name, &w_edge.value);
  out.emplace_back(w_prev.name, &w_prev.value);
  out.emplace_back(bias.name, &bias.value);
}

DistributionToPointAgg::DistributionToPointAgg(const std::string& name, std::size_t emb_dim,
                                               Rng& rng)
    : l1(name + ".l1", 2 * emb_dim, emb_dim, rng),
      l2(name + ".l2", emb_dim, emb_dim, rng),
      bn1(name + ".bn1", emb_dim),
      bn2(name + ".bn2", emb_dim) {}

Var DistributionToPointAgg::forward(Tape& t, Var dist_edges, Var point_nodes_prev) {
  const Tensor& e = t.val(dist_edges);
  const Tensor& v = t.val(point_nodes_prev);
  if (e.rank() != 2 || e.dim(0) != e.dim(1) || e.dim(0) != v.dim(0))
    throw std::invalid_argument("d2p_aggregate: edge matrix must be TxT matching node rows");
  Var pooled = t.matmul(dist_edges, point_nodes_prev);
  Var h = t.concat_cols(pooled, point_nodes_prev);
  h = t.relu(bn1.forward_episodic(t, l1.forward(t, h)));
  return t.relu(bn2.forward_episodic(t, l2.forward(t, h)));
}

void DistributionToPointAgg::collect(ParamRefs& out) {
  l1.collect(out);
  l2.collect(out);
  bn1.collect(out);
  bn2.collect(out);
}

void DistributionToPointAgg::state(StateRefs& out) {
  l1.state(out);
  l2.state(out);
  bn1.state(out);
  bn2.state(out);
}

GenerationModules::GenerationModules(std::size_t gens, std::size_t emb, std::size_t ch,
                                     bool share, Rng& rng)
    : generations(gens), emb_dim(emb), dist_channels(ch), shared(share) {
  if (gens < 1) throw std::invalid_argument("at least one generation is required");
  point_enc.resize(gens + 1);
  dist_enc.resize(gens + 1);
  p2d.resize(gens + 1);
  d2p.resize(gens + 1);
  point_enc[0] = std::make_shared<PointEdgeEncoder>("graph.gen0.point_edge", emb, rng);
  dist_enc[0] = std::make_shared<DistributionEdgeEncoder>("graph.gen0.dist_edge", ch, rng);
  if (shared) {
    auto pe = std::make_shared<PointEdgeEncoder>("graph.shared.point_edge", emb, rng);
    auto pa = std::make_shared<PointToDistributionAgg>("graph.shared.p2d");
    auto de = std::make_shared<DistributionEdgeEncoder>("graph.shared.dist_edge", ch, rng);
    auto da = std::make_shared<DistributionToPointAgg>("graph.shared.d2p", emb, rng);
    for (std::size_t l = 1; l <= gens; ++l) {
      point_enc[l] = pe;
      p2d[l] = pa;
      dist_enc[l] = de;
      d2p[l] = da;
    }
  } else {
    for (std::size_t l = 1; l <= gens; ++l) {
      const std::string base = "graph.gen" + std::to_string(l);
      point_enc[l] = std::make_shared<PointEdgeEncoder>(base + ".point_edge", emb, rng);
      p2d[l] = std::make_shared<PointToDistributionAgg>(base + ".p2d");
      dist_enc[l] = std::make_shared<DistributionEdgeEncoder>(base + ".dist_edge", ch, rng);
      d2p[l] = std::make_shared<DistributionToPointAgg>(base + ".d2p", emb, rng);
    }
  }
}

void GenerationModules::collect(ParamRefs& out) {
  std::set<const void*> seen;
  auto once = [&](auto& mod) {
    if (mod && seen.insert(mod.get()).second) mod->collect(out);
  };
  for (std::size_t l = 0; l < point_enc.size(); ++l) {
    once(point_enc[l]);
    once(p2d[l]);
    once(dist_enc[l]);
    once(d2p[l]);
  }
}

void GenerationModules::state(StateRefs& out) {
  std::set<const void*> seen;
  auto once = [&](auto& mod) {
    if (mod && seen.insert(mod.get()).second) mod->state(out);
  };
  for (std::size_t l = 0; l < point_enc.size(); ++l) {
    once(point_enc[l]);
    once(p2d[l]);
    once(dist_enc[l]);
    once(d2p[l]);
  }
}

Var point_edge_scores(Tape& t, Var nodes, PointEdgeEncoder& enc) {
  const std::size_t total = t.val(nodes).dim(0);
  Var scores = enc.forward(t, t.pairwise_sqdiff(nodes));
  return t.reshape(scores, {total, total});
}

Var dist_edge_scores(Tape& t, Var nodes, DistributionEdgeEncoder& enc, std::size_t mask_keep) {
  // Copy the dims up front: pushing ops below may reallocate the tape.
  const std::size_t total = t.val(nodes).dim(0);
  const std::size_t width = t.val(nodes).dim(1);
  if (!t.val(nodes).all_finite())
    throw std::invalid_argument("distribution nodes contain non-finite values");
  Var in = nodes;
  if (mask_keep != SIZE_MAX && mask_keep < width) in = t.zero_cols_from(nodes, mask_keep);
  Var scores = enc.forward(t, t.pairwise_sqdiff(in));
  return t.reshape(scores, {total, total});
}

Var init_point_edges(Tape& t, Var embeddings, PointEdgeEncoder& enc) {
  if (!t.val(embeddings).all_finite())
    throw std::invalid_argument("init_point_edges: non-finite embeddings");
  return t.row_normalize(point_edge_scores(t, embeddings, enc));
}

Var update_point_edges(Tape& t, Var point_nodes_prev, Var point_edges_prev,
                       PointEdgeEncoder& enc) {
  Var scores = point_edge_scores(t, point_nodes_prev, enc);
  return t.row_normalize(t.mul(scores, point_edges_prev));
}

Tensor init_distribution_nodes(const std::vector<int>& support_labels,
                               const std::vector<std::uint8_t>& support_labeled, int n_way,
                               int k_shot, std::size_t total) {
  const std::size_t nk = static_cast<std::size_t>(n_way) * static_cast<std::size_t>(k_shot);
  if (support_labels.size() != nk || support_labeled.size() != nk)
    throw std::invalid_argument("init_distribution_nodes: label/mask length mismatch");
  if (total <= nk)
    throw std::invalid_argument("init_distribution_nodes: no query rows");
  Tensor v({total, nk});
  const double uniform = 1.0 / static_cast<double>(nk);
  for (std::size_t i = 0; i < total; ++i) {
    const bool labeled_support = i < nk && support_labeled[i];
    for (std::size_t j = 0; j < nk; ++j) {
      if (labeled_support)
        v.at2(i, j) = (support_labeled[j] && support_labels[i] == support_labels[j]) ? 1.0 : 0.0;
      else
        v.at2(i, j) = uniform;
    }
  }
  return v;
}

Var p2d_aggregate(Tape& t, Var edge_slice, Var dist_nodes_prev, PointToDistributionAgg& agg) {
  return agg.forward(t, edge_slice, dist_nodes_prev);
}

Var init_distribution_edges(Tape& t, Var dist_nodes, DistributionEdgeEncoder& enc,
                            std::size_t mask_keep) {
  return t.row_normalize(dist_edge_scores(t, dist_nodes, enc, mask_keep));
}

Var update_distribution_edges(Tape& t, Var dist_nodes, Var dist_edges_prev,
                              DistributionEdgeEncoder& enc, std::size_t mask_keep) {
  Var scores = dist_edge_scores(t, dist_nodes, enc, mask_keep);
  return t.row_normalize(t.mul(scores, dist_edges_prev));
}

Var d2p_aggregate(Tape& t, Var dist_edges, Var point_nodes_prev, DistributionToPointAgg& agg) {
  return agg.forward(t, dist_edges, point_nodes_prev);
}

GraphTrace run_generations(Tape& t, Var embeddings, const std::vector<int>& support_labels,
                           const std::vector<std::uint8_t>& support_labeled, int n_way, int k_shot,
                           GenerationModules& mods, const GraphOptions& opt) {
  if (mods.generations < 1) throw std::invalid_argument("at least one generation is required");
  const Tensor& emb = t.val(embeddings);
  const std::size_t total = emb.dim(0);
  const std::size_t nk = static_cast<std::size_t>(n_way) * static_cast<std::size_t>(k_shot);
  if (emb.dim(1) != mods.emb_dim)
    throw std::invalid_argument("run_generations: embedding dim mismatch");

  GraphTrace trace;
  Var vp = embeddings;
  Var ep = init_point_edges(t, vp, *mods.point_enc[0]);
  Var vd =
      t.constant(init_distribution_nodes(support_labels, support_labeled, n_way, k_shot, total));
  Var ed = init_distribution_edges(t, vd, *mods.dist_enc[0], opt.mask_keep);
  trace.point_edges_init = ep;
  trace.dist_edges_init = ed;

  for (std::size_t l = 1; l <= mods.generations; ++l) {
    ep = update_point_edges(t, vp, ep, *mods.point_enc[l]);
    vd = p2d_aggregate(t, t.slice_cols(ep, 0, nk), vd, *mods.p2d[l]);
    ed = update_distribution_edges(t, vd, ed, *mods.dist_enc[l], opt.mask_keep);
    vp = d2p_aggregate(t, ed, vp, *mods.d2p[l]);
    trace.point_edges.push_back(ep);
    trace.dist_edges.push_back(ed);
  }
  trace.point_nodes_final = vp;
  trace.dist_nodes_final = vd;
  return trace;
}

void export_edge_history(const Tape& t, const GraphTrace& trace, const std::string& dir,
                         const std::string& comment) {
  std::filesystem::create_directories(dir);
  for (std::size_t l = 0; l < trace.point_edges.size(); ++l) {
    const std::string gen = "gen" + std::to_string(l + 1);
    io::write_matrix_csv(dir + "/" + gen + "_ep.csv", t.val(trace.point_edges[l]), comment);
    io::write_matrix_csv(dir + "/" + gen + "_ed.csv", t.val(trace.dist_edges[l]), comment);
  }
}

}  // namespace dpgn
