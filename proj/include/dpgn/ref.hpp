#pragma once

#include <cstdint>
#include <vector>

#include "dpgn/graph.hpp"

// Serial reference implementation of the graph cycle and the objective,
// written as scalar nested loops over plain vectors. It shares no kernel or
// tape code with the main path; tests use it as the independent oracle and
// the benchmark uses it as the single-thread baseline.
namespace dpgn::ref {

using Mat = std::vector<std::vector<double>>;

struct LinearW {
  Mat w;                  // w[in][out]
  std::vector<double> b;  // [out]
};

struct BnW {
  std::vector<double> gamma, beta, run_mean, run_var;
  double eps = 1e-5;
};

struct PointEncW {
  LinearW l1, l2, l3;
  BnW bn1, bn2;
};

struct DistEncW {
  std::size_t channels = 0;
  LinearW l1, l2, l3;
  BnW bn1, bn2;
};

struct P2DW {
  double w_edge = 1.0, w_prev = 1.0, bias = 0.0;
};

struct D2PW {
  LinearW l1, l2;
  BnW bn1, bn2;
};

struct GraphW {
  std::size_t generations = 0;
  std::vector<PointEncW> point_enc;  // [0..L]
  std::vector<P2DW> p2d;             // [1..L], index 0 unused
  std::vector<DistEncW> dist_enc;    // [0..L]
  std::vector<D2PW> d2p;             // [1..L], index 0 unused
};

// Weight extraction from the trained modules (values only; the math below is
// reimplemented from scratch).
PointEncW extract(const PointEdgeEncoder& enc);
DistEncW extract(const DistributionEdgeEncoder& enc);
P2DW extract(const PointToDistributionAgg& agg);
D2PW extract(const DistributionToPointAgg& agg);
GraphW extract(const GenerationModules& mods);

Mat from_tensor(const Tensor& t);  // rank-2

// Graph batch-norm always uses statistics of the episode batch, matching
// the main path.
Mat row_normalize(const Mat& x, double floor = 1e-8);
Mat point_edge_scores(const Mat& nodes, const PointEncW& w);
Mat init_point_edges(const Mat& nodes, const PointEncW& w);
Mat update_point_edges(const Mat& nodes_prev, const Mat& edges_prev, const PointEncW& w);
Mat init_distribution_nodes(const std::vector<int>& labels, const std::vector<std::uint8_t>& mask,
                            int n_way, int k_shot, std::size_t total);
Mat p2d_aggregate(const Mat& edges, const Mat& dist_prev, const P2DW& w, std::size_t nk);
Mat dist_edge_scores(const Mat& dist_nodes, const DistEncW& w, std::size_t mask_keep);
Mat init_distribution_edges(const Mat& dist_nodes, const DistEncW& w,
                            std::size_t mask_keep = SIZE_MAX);
Mat update_distribution_edges(const Mat& dist_nodes, const Mat& edges_prev, const DistEncW& w,
                              std::size_t mask_keep = SIZE_MAX);
Mat d2p_aggregate(const Mat& dist_edges, const Mat& point_prev, const D2PW& w);

struct Trace {
  Mat point_edges_init, dist_edges_init;
  std::vector<Mat> point_edges, dist_edges;
  Mat point_nodes_final, dist_nodes_final;
};

Trace run_generations(const Mat& embeddings, const std::vector<int>& labels,
                      const std::vector<std::uint8_t>& mask, int n_way, int k_shot,
                      const GraphW& w, std::size_t mask_keep = SIZE_MAX);

Mat class_votes(const Mat& edges, const std::vector<int>& labels,
                const std::vector<std::uint8_t>& mask, int n_way);
Mat softmax_rows(const Mat& votes);
double cross_entropy_mean(const Mat& votes, std::size_t row0, const std::vector<int>& targets);
double total_loss(const std::vector<double>& point_losses, const std::vector<double>& dist_losses,
                  double lambda_point, double lambda_dist);

}  // namespace dpgn::ref
