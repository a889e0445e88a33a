#pragma once

#include <cstdint>

#include "dpgn/autodiff.hpp"

namespace dpgn {

struct LossBundle {
  std::vector<double> point_losses;  // one per generation 1..L
  std::vector<double> dist_losses;
  double lambda_point = 1.0;
  double lambda_dist = 0.1;
  double total = 0.0;
};

// Class votes per sample: sum of edge weights into labeled supports of each
// class. Votes (T, n_way); unlabeled supports contribute nothing. Throws if
// some class has no labeled support to vote for.
Var class_votes(Tape& t, Var edges, const std::vector<int>& support_labels,
                const std::vector<std::uint8_t>& support_labeled, int n_way);

// Per-sample probability rows: softmax over class votes.
Var predict(Tape& t, Var edges, const std::vector<int>& support_labels,
            const std::vector<std::uint8_t>& support_labeled, int n_way);

// Mean cross-entropy of softmaxed votes for rows [row0, row0+targets) against
// the target labels. point_loss / distribution_loss are this applied to the
// respective edge matrix of one generation.
Var votes_cross_entropy(Tape& t, Var votes, std::size_t row0, const std::vector<int>& targets);

Var point_loss(Tape& t, Var point_edges, const std::vector<int>& support_labels,
               const std::vector<std::uint8_t>& support_labeled, int n_way, std::size_t row0,
               const std::vector<int>& targets);

Var distribution_loss(Tape& t, Var dist_edges, const std::vector<int>& support_labels,
                      const std::vector<std::uint8_t>& support_labeled, int n_way,
                      std::size_t row0, const std::vector<int>& targets);

// Weighted sum over generations; fills the bundle with the loss values.
Var total_loss(Tape& t, const std::vector<Var>& point_losses, const std::vector<Var>& dist_losses,
               double lambda_point, double lambda_dist, LossBundle* bundle = nullptr);

std::size_t argmax_row(const Tensor& m, std::size_t row);

}  // namespace dpgn
