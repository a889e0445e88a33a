#include "dpgn/objectives.hpp"

namespace dpgn {

Var class_votes(Tape& t, Var edges, const std::vector<int>& support_labels,
                const std::vector<std::uint8_t>& support_labeled, int n_way) {
  const std::size_t nk = support_labels.size();
  if (support_labeled.size() != nk) throw std::invalid_argument("class_votes: mask length");
  std::vector<int> labeled_per_class(static_cast<std::size_t>(n_way), 0);
  Tensor onehot({nk, static_cast<std::size_t>(n_way)});
  for (std::size_t j = 0; j < nk; ++j) {
    const int y = support_labels[j];
    if (y < 0 || y >= n_way) throw std::invalid_argument("class_votes: label out of range");
    if (support_labeled[j]) {
      onehot.at2(j, static_cast<std::size_t>(y)) = 1.0;
      labeled_per_class[static_cast<std::size_t>(y)]++;
    }
  }
  for (int c = 0; c < n_way; ++c)
    if (labeled_per_class[static_cast<std::size_t>(c)] == 0)
      throw std::invalid_argument("class " + std::to_string(c) + " has no labeled support");
  return t.matmul(t.slice_cols(edges, 0, nk), t.constant(std::move(onehot)));
}

Var predict(Tape& t, Var edges, const std::vector<int>& support_labels,
            const std::vector<std::uint8_t>& support_labeled, int n_way) {
  return t.softmax_rows(class_votes(t, edges, support_labels, support_labeled, n_way));
}

Var votes_cross_entropy(Tape& t, Var votes, std::size_t row0, const std::vector<int>& targets) {
  Var rows = t.slice_rows(votes, row0, row0 + targets.size());
  return t.softmax_ce_mean(rows, targets);
}

Var point_loss(Tape& t, Var point_edges, const std::vector<int>& support_labels,
               const std::vector<std::uint8_t>& support_labeled, int n_way, std::size_t row0,
               const std::vector<int>& targets) {
  Var votes = class_votes(t, point_edges, support_labels, support_labeled, n_way);
  return votes_cross_entropy(t, votes, row0, targets);
}

Var distribution_loss(Tape& t, Var dist_edges, const std::vector<int>& support_labels,
                      const std::vector<std::uint8_t>& support_labeled, int n_way,
                      std::size_t row0, const std::vector<int>& targets) {
  Var votes = class_votes(t, dist_edges, support_labels, support_labeled, n_way);
  return votes_cross_entropy(t, votes, row0, targets);
}

Var total_loss(Tape& t, const std::vector<Var>& point_losses, const std::vector<Var>& dist_losses,
               double lambda_point, double lambda_dist, LossBundle* bundle) {
  if (point_losses.size() != dist_losses.size() || point_losses.empty())
    throw std::invalid_argument("total_loss: per-generation histories must match and be nonempty");
  Var acc;
  for (std::size_t l = 0; l < point_losses.size(); ++l) {
    Var term = t.add(t.scale(point_losses[l], lambda_point), t.scale(dist_losses[l], lambda_dist));
    acc = l == 0 ? term : t.add(acc, term);
  }
  if (bundle) {
    bundle->lambda_point = lambda_point;
    bundle->lambda_dist = lambda_dist;
    bundle->point_losses.clear();
    bundle->dist_losses.clear();
    for (Var v : point_losses) bundle->point_losses.push_back(t.val(v)[0]);
    for (Var v : dist_losses) bundle->dist_losses.push_back(t.val(v)[0]);
    bundle->total = t.val(acc)[0];
  }
  return acc;
}

std::size_t argmax_row(const Tensor& m, std::size_t row) {
  const std::size_t c = m.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j)
    if (m.at2(row, j) > m.at2(row, best)) best = j;
  return best;
}

}  // namespace dpgn
