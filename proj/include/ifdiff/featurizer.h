#pragma once

#include <Eigen/Core>
#include <array>
#include <string>
#include <vector>

#include "ifdiff/backbone.h"

namespace ifdiff {

inline constexpr int kNodeFeatWidth = 11;  // [b-factor | sasa | dihedrals(4) | surface-aware(5)]
inline constexpr int kRbfWidth = 15;
inline constexpr int kRelPosWidth = 12;
inline constexpr int kRelSeqWidth = 66;
inline constexpr int kEdgeFeatWidth = kRbfWidth + kRelPosWidth + kRelSeqWidth;  // 93
inline constexpr int kDefaultK = 30;
inline constexpr int kSeqOffsetClamp = 32;
inline constexpr double kContactThreshold = 8.0;
inline constexpr double kRbfMax = 20.0;
inline constexpr std::array<double, 5> kSurfaceLambdas = {1.0, 2.0, 5.0, 10.0, 30.0};

// Directed edge j -> i; messages flow from src into dst.
struct Edge {
    int src = 0;
    int dst = 0;
    bool operator==(const Edge&) const = default;
};

struct ResidueGraph {
    std::string id;
    int n_nodes = 0;
    int k = kDefaultK;
    std::vector<Edge> edges;
    Eigen::MatrixXd node_feats;  // N x 11
    Eigen::MatrixXd edge_feats;  // M x 93
    std::vector<int> true_types;
    std::vector<int> ss_classes;
    int n_chain_breaks = 0;
};

// For every node i: edges from its min(k, N-1) nearest nodes, ties to lower index. Sorted by
// (dst, distance, src). Squared distances closer than 1e-8 A^2 count as ties.
std::vector<Edge> knn_graph(const Eigen::MatrixX3d& ca, int k);

Eigen::MatrixX3d ca_coords(const ProteinBackbone& backbone);

// Per-node ratio |sum_j w_j (x_i - x_j)| / sum_j w_j |x_i - x_j| for each lambda, with w a
// softmax over -|x_i - x_j|^2 / lambda.
Eigen::MatrixXd surface_aware(const Eigen::MatrixX3d& ca, const std::vector<std::vector<int>>& neighbor_sets);

Eigen::VectorXd rbf_encode(double d);
Eigen::VectorXd rel_pos_features(const ProteinBackbone& backbone, int src, int dst);
Eigen::VectorXd rel_seq_encode(int i, int j, double d_ij);

// Z-normalizes a column; a constant column becomes all zeros.
Eigen::VectorXd zscore(const Eigen::VectorXd& v);

Eigen::MatrixXd node_features(const ProteinBackbone& backbone, const std::vector<Edge>& edges);

ResidueGraph featurize(const ProteinBackbone& backbone, int k = kDefaultK);

// Cached-graph JSON.
std::string graph_to_json(const ResidueGraph& graph);
ResidueGraph graph_from_json(const std::string& text);

}  // namespace ifdiff
