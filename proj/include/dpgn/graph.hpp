#pragma once

#include <cstdint>
#include <memory>

#include "dpgn/nn.hpp"

namespace dpgn {

// Scores instance similarity per sample pair. Input is the stack of squared
// feature differences, one row per ordered pair; two Linear-BN-ReLU blocks
// (1x1 convolutions over the pair stack) and a final projection to one
// sigmoid scalar in (0,1).
struct PointEdgeEncoder {
  LinearLayer l1, l2, l3;
  BatchNormLayer bn1, bn2;

  PointEdgeEncoder() = default;
  PointEdgeEncoder(const std::string& name, std::size_t feat_dim, Rng& rng);
  Var forward(Tape& t, Var sqdiff);  // (P,f) -> (P,1)
  void collect(ParamRefs& out);
  void state(StateRefs& out);
};

// Scores similarity between distribution features. The blocks act per support
// position with shared weights (1x1 convolutions with the position axis as
// the spatial dim) and are pooled by a position mean before the projection,
// so the score is exactly invariant to permuting support positions. A dense
// first layer would break the shot-permutation invariance the predictions
// must satisfy.
struct DistributionEdgeEncoder {
  std::size_t channels = 4;
  LinearLayer l1, l2, l3;
  BatchNormLayer bn1, bn2;

  DistributionEdgeEncoder() = default;
  DistributionEdgeEncoder(const std::string& name, std::size_t channels, Rng& rng);
  Var forward(Tape& t, Var sqdiff);  // (P,nk) -> (P,1)
  void collect(ParamRefs& out);
  void state(StateRefs& out);
};

// Edge-to-node aggregation for the distribution graph: concatenates each
// sample's support-edge slice with its previous distribution feature and
// applies a fully-connected layer + ReLU. Weights are shared across the nk
// support positions (same invariance argument as above), so the layer is a
// per-position map (edge, prev) -> next.
struct PointToDistributionAgg {
  Parameter w_edge, w_prev, bias;

  PointToDistributionAgg() = default;
  explicit PointToDistributionAgg(const std::string& name);
  Var forward(Tape& t, Var edge_slice, Var prev_nodes);  // (T,nk),(T,nk) -> (T,nk)
  void collect(ParamRefs& out);
  void state(StateRefs& out);
};

// Node update for the point graph: pools point features with distribution
// edge weights, concatenates the pooled feature with the previous node
// feature, and maps back to the embedding dim with two Linear-BN-ReLU blocks.
struct DistributionToPointAgg {
  LinearLayer l1, l2;
  BatchNormLayer bn1, bn2;

  DistributionToPointAgg() = default;
  DistributionToPointAgg(const std::string& name, std::size_t emb_dim, Rng& rng);
  Var forward(Tape& t, Var dist_edges, Var point_nodes_prev);
  void collect(ParamRefs& out);
  void state(StateRefs& out);
};

// Per-generation parameter sets. Index 0 holds the edge initializers; the
// aggregators exist for generations 1..L. With `shared` one parameter set
// serves every generation >= 1 (ablation flag); generation 0 keeps its own.
struct GenerationModules {
  std::size_t generations = 6;
  std::size_t emb_dim = 32;
  std::size_t dist_channels = 4;
  bool shared = false;

  std::vector<std::shared_ptr<PointEdgeEncoder>> point_enc;          // [0..L]
  std::vector<std::shared_ptr<PointToDistributionAgg>> p2d;          // [1..L]
  std::vector<std::shared_ptr<DistributionEdgeEncoder>> dist_enc;    // [0..L]
  std::vector<std::shared_ptr<DistributionToPointAgg>> d2p;          // [1..L]

  GenerationModules() = default;
  GenerationModules(std::size_t generations, std::size_t emb_dim, std::size_t dist_channels,
                    bool shared, Rng& rng);
  void collect(ParamRefs& out);
  void state(StateRefs& out);
};

// Batch-norm inside the graph modules always normalizes over the episode
// batch (pairs or nodes); the per-task pair population is what the scores
// are calibrated against, so there is no train/eval statistics split here.
struct GraphOptions {
  // Distribution-feature dims kept when scoring distribution edges; dims
  // beyond this are zeroed (inference-time ablation). SIZE_MAX = no mask.
  std::size_t mask_keep = SIZE_MAX;
};

struct GraphTrace {
  Var point_edges_init, dist_edges_init;       // generation 0
  std::vector<Var> point_edges, dist_edges;    // generations 1..L
  Var point_nodes_final, dist_nodes_final;
};

// --- per-operation entry points (also used by run_generations) ---

// Pre-normalization pairwise scores in (0,1), as a TxT matrix.
Var point_edge_scores(Tape& t, Var nodes, PointEdgeEncoder& enc);
Var dist_edge_scores(Tape& t, Var nodes, DistributionEdgeEncoder& enc,
                     std::size_t mask_keep = SIZE_MAX);

Var init_point_edges(Tape& t, Var embeddings, PointEdgeEncoder& enc);
Var update_point_edges(Tape& t, Var point_nodes_prev, Var point_edges_prev,
                       PointEdgeEncoder& enc);

// Rows of labeled supports are indicator vectors over same-class support
// positions; unlabeled supports and queries get the uniform vector. Columns
// of unlabeled supports stay zero in labeled rows (their labels are never
// observable). Fully labeled rows therefore sum to K, uniform rows to 1.
Tensor init_distribution_nodes(const std::vector<int>& support_labels,
                               const std::vector<std::uint8_t>& support_labeled, int n_way,
                               int k_shot, std::size_t total);

Var p2d_aggregate(Tape& t, Var edge_slice, Var dist_nodes_prev, PointToDistributionAgg& agg);
Var init_distribution_edges(Tape& t, Var dist_nodes, DistributionEdgeEncoder& enc,
                            std::size_t mask_keep = SIZE_MAX);
Var update_distribution_edges(Tape& t, Var dist_nodes, Var dist_edges_prev,
                              DistributionEdgeEncoder& enc, std::size_t mask_keep = SIZE_MAX);
Var d2p_aggregate(Tape& t, Var dist_edges, Var point_nodes_prev, DistributionToPointAgg& agg);

// Full cyclic pass: edge init at generation 0, then per generation the point
// edges are rescored, aggregated into distribution features, the distribution
// edges rescored, and the point nodes refreshed. Returns the edge history
// needed for per-generation losses and heatmap export.
GraphTrace run_generations(Tape& t, Var embeddings, const std::vector<int>& support_labels,
                           const std::vector<std::uint8_t>& support_labeled, int n_way, int k_shot,
                           GenerationModules& mods, const GraphOptions& opt = {});

// CSV export of a trace (gen<l>_ep.csv / gen<l>_ed.csv for l = 1..L).
void export_edge_history(const Tape& t, const GraphTrace& trace, const std::string& dir,
                         const std::string& comment = "");

}  // namespace dpgn
