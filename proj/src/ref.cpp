#include "dpgn/ref.hpp"

#include <cmath>
#include <stdexcept>

namespace dpgn::ref {

namespace {

LinearW extract_linear(const LinearLayer& l) {
  LinearW out;
  const Tensor& w = l.w.value;
  out.w.assign(w.dim(0), std::vector<double>(w.dim(1)));
  for (std::size_t i = 0; i < w.dim(0); ++i)
    for (std::size_t j = 0; j < w.dim(1); ++j) out.w[i][j] = w.at2(i, j);
  out.b.assign(l.b.value.data(), l.b.value.data() + l.b.value.size());
  return out;
}

BnW extract_bn(const BatchNormLayer& bn) {
  BnW out;
  out.gamma.assign(bn.gamma.value.data(), bn.gamma.value.data() + bn.gamma.value.size());
  out.beta.assign(bn.beta.value.data(), bn.beta.value.data() + bn.beta.value.size());
  out.run_mean.assign(bn.run_mean.data(), bn.run_mean.data() + bn.run_mean.size());
  out.run_var.assign(bn.run_var.data(), bn.run_var.data() + bn.run_var.size());
  out.eps = bn.eps;
  return out;
}

std::vector<double> linear_row(const std::vector<double>& x, const LinearW& w) {
  const std::size_t in = w.w.size(), out_dim = w.b.size();
  if (x.size() != in) throw std::invalid_argument("ref linear: input width");
  std::vector<double> y(out_dim);
  for (std::size_t o = 0; o < out_dim; ++o) {
    double s = w.b[o];
    for (std::size_t i = 0; i < in; ++i) s += x[i] * w.w[i][o];
    y[o] = s;
  }
  return y;
}

Mat linear(const Mat& x, const LinearW& w) {
  Mat y;
  y.reserve(x.size());
  for (const auto& row : x) y.push_back(linear_row(row, w));
  return y;
}

Mat batchnorm(const Mat& x, const BnW& w) {
  // Episode-batch statistics, like the graph modules in the main path.
  const std::size_t n = x.size(), c = x.empty() ? 0 : x[0].size();
  std::vector<double> mean(c), var(c);
  for (std::size_t j = 0; j < c; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i][j];
    mean[j] = s / static_cast<double>(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += (x[i][j] - mean[j]) * (x[i][j] - mean[j]);
    var[j] = v / static_cast<double>(n);
  }
  Mat y(n, std::vector<double>(c));
  for (std::size_t j = 0; j < c; ++j) {
    const double inv = 1.0 / std::sqrt(var[j] + w.eps);
    for (std::size_t i = 0; i < n; ++i)
      y[i][j] = w.gamma[j] * (x[i][j] - mean[j]) * inv + w.beta[j];
  }
  return y;
}

Mat relu(Mat x) {
  for (auto& row : x)
    for (auto& v : row) v = v > 0.0 ? v : 0.0;
  return x;
}

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

Mat sqdiff_pairs(const Mat& nodes) {
  const std::size_t t = nodes.size(), f = nodes[0].size();
  Mat d(t * t, std::vector<double>(f));
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t q = 0; q < f; ++q) {
        const double diff = nodes[i][q] - nodes[j][q];
        d[i * t + j][q] = diff * diff;
      }
  return d;
}

}  // namespace

PointEncW extract(const PointEdgeEncoder& enc) {
  PointEncW w;
  w.l1 = extract_linear(enc.l1);
  w.l2 = extract_linear(enc.l2);
  w.l3 = extract_linear(enc.l3);
  w.bn1 = extract_bn(enc.bn1);
  w.bn2 = extract_bn(enc.bn2);
  return w;
}

DistEncW extract(const DistributionEdgeEncoder& enc) {
  DistEncW w;
  w.channels = enc.channels;
  w.l1 = extract_linear(enc.l1);
  w.l2 = extract_linear(enc.l2);
  w.l3 = extract_linear(enc.l3);
  w.bn1 = extract_bn(enc.bn1);
  w.bn2 = extract_bn(enc.bn2);
  return w;
}

P2DW extract(const PointToDistributionAgg& agg) {
  return P2DW{agg.w_edge.value[0], agg.w_prev.value[0], agg.bias.value[0]};
}

D2PW extract(const DistributionToPointAgg& agg) {
  D2PW w;
  w.l1 = extract_linear(agg.l1);
  w.l2 = extract_linear(agg.l2);
  w.bn1 = extract_bn(agg.bn1);
  w.bn2 = extract_bn(agg.bn2);
  return w;
}

GraphW extract(const GenerationModules& mods) {
  GraphW w;
  w.generations = mods.generations;
  w.point_enc.resize(mods.generations + 1);
  w.dist_enc.resize(mods.generations + 1);
  w.p2d.resize(mods.generations + 1);
  w.d2p.resize(mods.generations + 1);
  for (std::size_t l = 0; l <= mods.generations; ++l) {
    w.point_enc[l] = extract(*mods.point_enc[l]);
    w.dist_enc[l] = extract(*mods.dist_enc[l]);
    if (l >= 1) {
      w.p2d[l] = extract(*mods.p2d[l]);
      w.d2p[l] = extract(*mods.d2p[l]);
    }
  }
  return w;
}

Mat from_tensor(const Tensor& t) {
  if (t.rank() != 2) throw std::invalid_argument("from_tensor: rank-2 expected");
  Mat out(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) out[i][j] = t.at2(i, j);
  return out;
}

Mat row_normalize(const Mat& x, double floor) {
  Mat y = x;
  for (auto& row : y) {
    double s = 0.0;
    for (double v : row) s += v;
    if (s < floor) s = floor;
    for (double& v : row) v /= s;
  }
  return y;
}

Mat point_edge_scores(const Mat& nodes, const PointEncW& w) {
  const std::size_t t = nodes.size();
  Mat h = sqdiff_pairs(nodes);
  h = relu(batchnorm(linear(h, w.l1), w.bn1));
  h = relu(batchnorm(linear(h, w.l2), w.bn2));
  Mat scores(t, std::vector<double>(t));
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < t; ++j)
      scores[i][j] = sigmoid(linear_row(h[i * t + j], w.l3)[0]);
  return scores;
}

Mat init_point_edges(const Mat& nodes, const PointEncW& w) {
  return row_normalize(point_edge_scores(nodes, w));
}

Mat update_point_edges(const Mat& nodes_prev, const Mat& edges_prev, const PointEncW& w) {
  Mat scores = point_edge_scores(nodes_prev, w);
  const std::size_t t = scores.size();
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < t; ++j) scores[i][j] *= edges_prev[i][j];
  return row_normalize(scores);
}

Mat init_distribution_nodes(const std::vector<int>& labels, const std::vector<std::uint8_t>& mask,
                            int n_way, int k_shot, std::size_t total) {
  const std::size_t nk = static_cast<std::size_t>(n_way) * static_cast<std::size_t>(k_shot);
  Mat v(total, std::vector<double>(nk, 1.0 / static_cast<double>(nk)));
  for (std::size_t i = 0; i < nk; ++i) {
    if (!mask[i]) continue;
    for (std::size_t j = 0; j < nk; ++j)
      v[i][j] = (mask[j] && labels[i] == labels[j]) ? 1.0 : 0.0;
  }
  return v;
}

Mat p2d_aggregate(const Mat& edges, const Mat& dist_prev, const P2DW& w, std::size_t nk) {
  const std::size_t t = edges.size();
  Mat y(t, std::vector<double>(nk));
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < nk; ++j) {
      const double v = w.w_edge * edges[i][j] + w.w_prev * dist_prev[i][j] + w.bias;
      y[i][j] = v > 0.0 ? v : 0.0;
    }
  return y;
}

Mat dist_edge_scores(const Mat& dist_nodes, const DistEncW& w, std::size_t mask_keep) {
  const std::size_t t = dist_nodes.size(), nk = dist_nodes[0].size();
  Mat masked = dist_nodes;
  if (mask_keep != SIZE_MAX && mask_keep < nk)
    for (auto& row : masked)
      for (std::size_t j = mask_keep; j < nk; ++j) row[j] = 0.0;

  // Shared per-position block, position mean, pairwise block, projection.
  Mat d = sqdiff_pairs(masked);
  Mat flat(t * t * nk, std::vector<double>(1));
  for (std::size_t p = 0; p < t * t; ++p)
    for (std::size_t k = 0; k < nk; ++k) flat[p * nk + k][0] = d[p][k];
  Mat h = relu(batchnorm(linear(flat, w.l1), w.bn1));
  Mat pooled(t * t, std::vector<double>(w.channels, 0.0));
  for (std::size_t p = 0; p < t * t; ++p)
    for (std::size_t k = 0; k < nk; ++k)
      for (std::size_t ch = 0; ch < w.channels; ++ch) pooled[p][ch] += h[p * nk + k][ch];
  for (auto& row : pooled)
    for (auto& v : row) v /= static_cast<double>(nk);
  Mat h2 = relu(batchnorm(linear(pooled, w.l2), w.bn2));
  Mat scores(t, std::vector<double>(t));
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < t; ++j)
      scores[i][j] = sigmoid(linear_row(h2[i * t + j], w.l3)[0]);
  return scores;
}

Mat init_distribution_edges(const Mat& dist_nodes, const DistEncW& w, std::size_t mask_keep) {
  return row_normalize(dist_edge_scores(dist_nodes, w, mask_keep));
}

Mat update_distribution_edges(const Mat& dist_nodes, const Mat& edges_prev, const DistEncW& w,
                              std::size_t mask_keep) {
  Mat scores = dist_edge_scores(dist_nodes, w, mask_keep);
  const std::size_t t = scores.size();
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < t; ++j) scores[i][j] *= edges_prev[i][j];
  return row_normalize(scores);
}

Mat d2p_aggregate(const Mat& dist_edges, const Mat& point_prev, const D2PW& w) {
  const std::size_t t = dist_edges.size(), m = point_prev[0].size();
  Mat cat(t, std::vector<double>(2 * m));
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t q = 0; q < m; ++q) {
      double s = 0.0;
      for (std::size_t j = 0; j < t; ++j) s += dist_edges[i][j] * point_prev[j][q];
      cat[i][q] = s;
      cat[i][m + q] = point_prev[i][q];
    }
  }
  Mat h = relu(batchnorm(linear(cat, w.l1), w.bn1));
  return relu(batchnorm(linear(h, w.l2), w.bn2));
}

Trace run_generations(const Mat& embeddings, const std::vector<int>& labels,
                      const std::vector<std::uint8_t>& mask, int n_way, int k_shot,
                      const GraphW& w, std::size_t mask_keep) {
  const std::size_t total = embeddings.size();
  const std::size_t nk = static_cast<std::size_t>(n_way) * static_cast<std::size_t>(k_shot);
  Trace trace;
  Mat vp = embeddings;
  Mat ep = init_point_edges(vp, w.point_enc[0]);
  Mat vd = init_distribution_nodes(labels, mask, n_way, k_shot, total);
  Mat ed = init_distribution_edges(vd, w.dist_enc[0], mask_keep);
  trace.point_edges_init = ep;
  trace.dist_edges_init = ed;
  for (std::size_t l = 1; l <= w.generations; ++l) {
    ep = update_point_edges(vp, ep, w.point_enc[l]);
    Mat slice(total, std::vector<double>(nk));
    for (std::size_t i = 0; i < total; ++i)
      for (std::size_t j = 0; j < nk; ++j) slice[i][j] = ep[i][j];
    vd = p2d_aggregate(slice, vd, w.p2d[l], nk);
    ed = update_distribution_edges(vd, ed, w.dist_enc[l], mask_keep);
    vp = d2p_aggregate(ed, vp, w.d2p[l]);
    trace.point_edges.push_back(ep);
    trace.dist_edges.push_back(ed);
  }
  trace.point_nodes_final = vp;
  trace.dist_nodes_final = vd;
  return trace;
}

Mat class_votes(const Mat& edges, const std::vector<int>& labels,
                const std::vector<std::uint8_t>& mask, int n_way) {
  const std::size_t nk = labels.size(), t = edges.size();
  Mat votes(t, std::vector<double>(static_cast<std::size_t>(n_way), 0.0));
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < nk; ++j)
      if (mask[j]) votes[i][static_cast<std::size_t>(labels[j])] += edges[i][j];
  return votes;
}

Mat softmax_rows(const Mat& votes) {
  Mat y = votes;
  for (auto& row : y) {
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double s = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      s += v;
    }
    for (double& v : row) v /= s;
  }
  return y;
}

double cross_entropy_mean(const Mat& votes, std::size_t row0, const std::vector<int>& targets) {
  double loss = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& row = votes[row0 + i];
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : row) s += std::exp(v - mx);
    loss += std::log(s) + mx - row[static_cast<std::size_t>(targets[i])];
  }
  return loss / static_cast<double>(targets.size());
}

double total_loss(const std::vector<double>& point_losses, const std::vector<double>& dist_losses,
                  double lambda_point, double lambda_dist) {
  double total = 0.0;
  for (std::size_t l = 0; l < point_losses.size(); ++l)
    total += lambda_point * point_losses[l] + lambda_dist * dist_losses[l];
  return total;
}

}  // namespace dpgn::ref
