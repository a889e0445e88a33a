#pragma once

#include "dpgn/config.hpp"
#include "dpgn/episodes.hpp"
#include "dpgn/graph.hpp"
#include "dpgn/objectives.hpp"

namespace dpgn {

struct DpgnModel {
  DpgnConfig cfg;
  EmbeddingNet backbone;
  GenerationModules graph;

  DpgnModel() = default;
  DpgnModel(const DpgnConfig& c, Rng& rng)
      : cfg(c),
        backbone(c.backbone, rng),
        graph(c.generations, c.backbone.emb_dim, c.dist_channels, c.share_generation_params, rng) {}

  ParamRefs params() {
    ParamRefs out;
    backbone.collect(out);
    graph.collect(out);
    return out;
  }
  StateRefs state() {
    StateRefs out;
    backbone.state(out);
    graph.state(out);
    return out;
  }
};

struct EpisodeForwardOptions {
  bool training = false;
  bool transductive = true;
  std::size_t mask_keep = SIZE_MAX;
  bool keep_trace = false;  // per-generation vote/edge history (transductive only)
};

struct EpisodeResult {
  LossBundle losses;
  Tensor query_probs;                   // (n_query, n_way)
  std::vector<int> query_pred;          // argmax per query
  std::vector<Tensor> point_edges;      // kept when keep_trace, per generation
  std::vector<Tensor> dist_edges;
  std::vector<Tensor> vote_history;     // per generation, (n_query, n_way) pre-softmax
};

// Builds the episode forward pass on the tape and returns the scalar loss
// Var; transductive mode runs one graph over all samples, non-transductive
// builds one support+single-query graph per query and averages the losses.
Var episode_loss(DpgnModel& model, const Episode& ep, Tape& t, const EpisodeForwardOptions& opt,
                 Rng& rng, EpisodeResult* out);

// Inference convenience: forward with a throwaway tape, no gradients.
EpisodeResult forward_episode(DpgnModel& model, const Episode& ep,
                              const EpisodeForwardOptions& opt);

double episode_accuracy(const EpisodeResult& r, const Episode& ep);

// Stacks per-sample tensors (supports then queries) into one batch tensor.
Tensor stack_episode_inputs(const Episode& ep);

}  // namespace dpgn
