#include "dpgn/model.hpp"

#include <algorithm>

namespace dpgn {

Tensor stack_episode_inputs(const Episode& ep) {
  if (ep.support_x.empty()) throw std::invalid_argument("episode has no supports");
  const auto& shape = ep.support_x[0].shape();
  std::vector<std::size_t> batch_shape;
  batch_shape.push_back(static_cast<std::size_t>(ep.total()));
  for (auto d : shape) batch_shape.push_back(d);
  Tensor batch(batch_shape);
  const std::size_t stride = ep.support_x[0].size();
  std::size_t row = 0;
  for (const auto& s : ep.support_x)
    std::copy(s.data(), s.data() + stride, batch.data() + (row++) * stride);
  for (const auto& q : ep.query_x)
    std::copy(q.data(), q.data() + stride, batch.data() + (row++) * stride);
  return batch;
}

namespace {

struct GenLosses {
  std::vector<Var> point, dist;
};

GenLosses trace_losses(Tape& t, const GraphTrace& trace, const Episode& ep,
                       const DpgnConfig& cfg, std::size_t row0, const std::vector<int>& targets) {
  GenLosses out;
  for (std::size_t l = 0; l < trace.point_edges.size(); ++l) {
    out.point.push_back(point_loss(t, trace.point_edges[l], ep.support_y, ep.support_labeled,
                                   cfg.n_way, row0, targets));
    out.dist.push_back(distribution_loss(t, trace.dist_edges[l], ep.support_y, ep.support_labeled,
                                         cfg.n_way, row0, targets));
  }
  return out;
}

}  // namespace

Var episode_loss(DpgnModel& model, const Episode& ep, Tape& t, const EpisodeForwardOptions& opt,
                 Rng& rng, EpisodeResult* out) {
  const DpgnConfig& cfg = model.cfg;
  if (ep.n_way != cfg.n_way) throw std::invalid_argument("episode n_way does not match model");
  const std::size_t nk = static_cast<std::size_t>(ep.num_support());
  const std::size_t n_query = static_cast<std::size_t>(ep.n_query);

  Var emb = model.backbone.forward(t, t.constant(stack_episode_inputs(ep)), opt.training, rng);
  GraphOptions gopt{opt.mask_keep};

  Var loss;
  Tensor probs({n_query, static_cast<std::size_t>(cfg.n_way)});
  LossBundle bundle;

  if (opt.transductive) {
    GraphTrace trace = run_generations(t, emb, ep.support_y, ep.support_labeled, ep.n_way,
                                       ep.k_shot, model.graph, gopt);
    std::size_t row0 = nk;
    std::vector<int> targets = ep.query_y;
    if (cfg.loss_all_samples) {
      row0 = 0;
      targets = ep.support_y;
      targets.insert(targets.end(), ep.query_y.begin(), ep.query_y.end());
    }
    GenLosses gl = trace_losses(t, trace, ep, cfg, row0, targets);
    loss = total_loss(t, gl.point, gl.dist, cfg.lambda_point, cfg.lambda_dist, &bundle);

    Var pred = predict(t, trace.point_edges.back(), ep.support_y, ep.support_labeled, cfg.n_way);
    const Tensor& pv = t.val(pred);
    for (std::size_t q = 0; q < n_query; ++q)
      for (int c = 0; c < cfg.n_way; ++c)
        probs.at2(q, static_cast<std::size_t>(c)) = pv.at2(nk + q, static_cast<std::size_t>(c));

    if (out && opt.keep_trace) {
      for (std::size_t l = 0; l < trace.point_edges.size(); ++l) {
        out->point_edges.push_back(t.val(trace.point_edges[l]));
        out->dist_edges.push_back(t.val(trace.dist_edges[l]));
        Var votes = class_votes(t, trace.point_edges[l], ep.support_y, ep.support_labeled,
                                cfg.n_way);
        const Tensor& vv = t.val(votes);
        Tensor qvotes({n_query, static_cast<std::size_t>(cfg.n_way)});
        for (std::size_t q = 0; q < n_query; ++q)
          for (int c = 0; c < cfg.n_way; ++c)
            qvotes.at2(q, static_cast<std::size_t>(c)) = vv.at2(nk + q, static_cast<std::size_t>(c));
        out->vote_history.push_back(std::move(qvotes));
      }
    }
  } else {
    if (opt.keep_trace)
      throw std::invalid_argument("edge history requires transductive mode");
    // One graph per query: supports plus that single query, so no
    // query-query edges take part in propagation.
    std::vector<Var> acc_point, acc_dist;
    for (std::size_t q = 0; q < n_query; ++q) {
      std::vector<std::size_t> rows(nk);
      for (std::size_t i = 0; i < nk; ++i) rows[i] = i;
      rows.push_back(nk + q);
      Var sub = t.gather_rows(emb, rows);
      GraphTrace trace = run_generations(t, sub, ep.support_y, ep.support_labeled, ep.n_way,
                                         ep.k_shot, model.graph, gopt);
      const std::vector<int> target{ep.query_y[q]};
      GenLosses gl = trace_losses(t, trace, ep, cfg, nk, target);
      for (std::size_t l = 0; l < gl.point.size(); ++l) {
        acc_point.resize(gl.point.size());
        acc_dist.resize(gl.dist.size());
        acc_point[l] = q == 0 ? gl.point[l] : t.add(acc_point[l], gl.point[l]);
        acc_dist[l] = q == 0 ? gl.dist[l] : t.add(acc_dist[l], gl.dist[l]);
      }
      Var pred = predict(t, trace.point_edges.back(), ep.support_y, ep.support_labeled, cfg.n_way);
      const Tensor& pv = t.val(pred);
      for (int c = 0; c < cfg.n_way; ++c)
        probs.at2(q, static_cast<std::size_t>(c)) = pv.at2(nk, static_cast<std::size_t>(c));
    }
    const double inv = 1.0 / static_cast<double>(n_query);
    for (auto& v : acc_point) v = t.scale(v, inv);
    for (auto& v : acc_dist) v = t.scale(v, inv);
    loss = total_loss(t, acc_point, acc_dist, cfg.lambda_point, cfg.lambda_dist, &bundle);
  }

  if (out) {
    out->losses = bundle;
    out->query_probs = probs;
    out->query_pred.clear();
    for (std::size_t q = 0; q < n_query; ++q)
      out->query_pred.push_back(static_cast<int>(argmax_row(probs, q)));
  }
  return loss;
}

EpisodeResult forward_episode(DpgnModel& model, const Episode& ep,
                              const EpisodeForwardOptions& opt) {
  Tape t;
  Rng rng(0);  // inference path draws no random numbers
  EpisodeResult res;
  EpisodeForwardOptions o = opt;
  o.training = false;
  episode_loss(model, ep, t, o, rng, &res);
  return res;
}

double episode_accuracy(const EpisodeResult& r, const Episode& ep) {
  if (r.query_pred.size() != ep.query_y.size())
    throw std::invalid_argument("episode_accuracy: prediction count mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ep.query_y.size(); ++i)
    if (r.query_pred[i] == ep.query_y[i]) correct++;
  return static_cast<double>(correct) / static_cast<double>(ep.query_y.size());
}

}  // namespace dpgn
