#include "ifdiff/featurizer.h"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "ifdiff/errors.h"

namespace ifdiff {

using nlohmann::json;

Eigen::MatrixX3d ca_coords(const ProteinBackbone& backbone) {
    Eigen::MatrixX3d ca(static_cast<Eigen::Index>(backbone.size()), 3);
    for (std::size_t i = 0; i < backbone.size(); ++i) ca.row(static_cast<Eigen::Index>(i)) = backbone.residues[i].ca_xyz;
    return ca;
}

namespace {

constexpr double kDistanceGrid = 1e8;

}  // namespace

std::vector<Edge> knn_graph(const Eigen::MatrixX3d& ca, int k) {
    const int n = static_cast<int>(ca.rows());
    if (n < 2) throw GeometryError("knn_graph needs at least 2 nodes, got " + std::to_string(n));
    if (k < 1) throw GeometryError("knn_graph needs k >= 1");
    const int per_node = std::min(k, n - 1);

    std::vector<Edge> edges;
    edges.reserve(static_cast<std::size_t>(n) * per_node);
    // Squared distances are compared on a 1e-8 A^2 grid so that rounding noise from a rigid
    // motion cannot reorder exact ties (common for bonded C-alpha pairs).
    std::vector<std::pair<long long, int>> cand;
    cand.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        cand.clear();
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            cand.emplace_back(std::llround((ca.row(j) - ca.row(i)).squaredNorm() * kDistanceGrid), j);
        }
        std::partial_sort(cand.begin(), cand.begin() + per_node, cand.end());
        for (int s = 0; s < per_node; ++s) edges.push_back({cand[static_cast<std::size_t>(s)].second, i});
    }
    return edges;
}

Eigen::MatrixXd surface_aware(const Eigen::MatrixX3d& ca, const std::vector<std::vector<int>>& neighbor_sets) {
    const auto n = ca.rows();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(kSurfaceLambdas.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& nbrs = neighbor_sets[static_cast<std::size_t>(i)];
        if (nbrs.empty()) continue;
        std::vector<Eigen::Vector3d> diff;
        std::vector<double> sq;
        for (int j : nbrs) {
            Eigen::Vector3d v = (ca.row(i) - ca.row(j)).transpose();
            diff.push_back(v);
            sq.push_back(v.squaredNorm());
        }
        const double min_sq = *std::min_element(sq.begin(), sq.end());
        for (std::size_t l = 0; l < kSurfaceLambdas.size(); ++l) {
            const double lambda = kSurfaceLambdas[l];
            Eigen::Vector3d num = Eigen::Vector3d::Zero();
            double den = 0.0;
            for (std::size_t s = 0; s < diff.size(); ++s) {
                // Shifted by the smallest distance; the softmax normalizer cancels in the ratio.
                const double w = std::exp(-(sq[s] - min_sq) / lambda);
                num += w * diff[s];
                den += w * std::sqrt(sq[s]);
            }
            out(i, static_cast<Eigen::Index>(l)) = den > 0.0 ? std::min(1.0, num.norm() / den) : 0.0;
        }
    }
    return out;
}

Eigen::VectorXd rbf_encode(double d) {
    Eigen::VectorXd out(kRbfWidth);
    const double spacing = kRbfMax / (kRbfWidth - 1);
    const double sigma = spacing;
    for (int k = 0; k < kRbfWidth; ++k) {
        const double c = spacing * k;
        out[k] = std::exp(-(d - c) * (d - c) / (2.0 * sigma * sigma));
    }
    return out;
}

Eigen::VectorXd rel_pos_features(const ProteinBackbone& backbone, int src, int dst) {
    const auto& ri = backbone.residues[static_cast<std::size_t>(dst)];
    const auto& rj = backbone.residues[static_cast<std::size_t>(src)];
    const Vec3 u = ri.c_xyz - ri.ca_xyz;
    const Vec3 v = ri.n_xyz - ri.ca_xyz;
    const double un = u.norm();
    Vec3 w;
    if (un > 0) w = v - v.dot(u / un) * (u / un);
    if (un < 1e-8 || w.norm() < 1e-8 * std::max(1.0, v.norm())) {
        throw GeometryError("degenerate local frame at residue " + std::to_string(dst) + " (collinear N, CA, C)");
    }
    Eigen::Matrix3d frame;
    frame.col(0) = u / un;
    frame.col(1) = w.normalized();
    frame.col(2) = frame.col(0).cross(frame.col(1));

    Eigen::VectorXd out(kRelPosWidth);
    const std::array<const Vec3*, 4> atoms = {&rj.n_xyz, &rj.ca_xyz, &rj.c_xyz, &rj.o_xyz};
    for (int a = 0; a < 4; ++a) {
        const Vec3 disp = *atoms[static_cast<std::size_t>(a)] - ri.ca_xyz;
        const double len = disp.norm();
        Vec3 local = Vec3::Zero();
        if (len > 1e-12) local = frame.transpose() * (disp / len);
        out.segment<3>(3 * a) = local;
    }
    return out;
}

Eigen::VectorXd rel_seq_encode(int i, int j, double d_ij) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(kRelSeqWidth);
    const int offset = std::clamp(j - i, -kSeqOffsetClamp, kSeqOffsetClamp);
    out[offset + kSeqOffsetClamp] = 1.0;
    out[kRelSeqWidth - 1] = d_ij < kContactThreshold ? 1.0 : 0.0;
    return out;
}

Eigen::VectorXd zscore(const Eigen::VectorXd& v) {
    const double n = static_cast<double>(v.size());
    if (v.size() == 0) return v;
    const double mean = v.sum() / n;
    const double var = (v.array() - mean).square().sum() / n;
    const double scale = std::max(1.0, std::abs(mean));
    if (var <= 1e-24 * scale * scale) return Eigen::VectorXd::Zero(v.size());
    return (v.array() - mean) / std::sqrt(var);
}

namespace {

std::vector<std::vector<int>> neighbor_sets(int n, const std::vector<Edge>& edges) {
    std::vector<std::vector<int>> sets(static_cast<std::size_t>(n));
    for (const auto& e : edges) sets[static_cast<std::size_t>(e.dst)].push_back(e.src);
    return sets;
}

}  // namespace

Eigen::MatrixXd node_features(const ProteinBackbone& backbone, const std::vector<Edge>& edges) {
    const auto n = static_cast<Eigen::Index>(backbone.size());
    Eigen::MatrixXd out(n, kNodeFeatWidth);

    Eigen::VectorXd bf(n);
    for (Eigen::Index i = 0; i < n; ++i) bf[i] = backbone.residues[static_cast<std::size_t>(i)].b_factor;

    bool need_sasa = std::any_of(backbone.residues.begin(), backbone.residues.end(),
                                 [](const Residue& r) { return !r.sasa.has_value(); });
    Eigen::VectorXd computed;
    if (need_sasa) computed = sasa(backbone);
    Eigen::VectorXd sa(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = backbone.residues[static_cast<std::size_t>(i)];
        sa[i] = r.sasa ? *r.sasa : computed[i];
    }

    out.col(0) = zscore(bf);
    out.col(1) = zscore(sa);
    out.block(0, 2, n, 4) = dihedrals(backbone).values;
    const auto ca = ca_coords(backbone);
    out.block(0, 6, n, 5) = surface_aware(ca, neighbor_sets(static_cast<int>(n), edges));
    return out;
}

ResidueGraph featurize(const ProteinBackbone& backbone, int k) {
    ResidueGraph g;
    g.id = backbone.id;
    g.n_nodes = static_cast<int>(backbone.size());
    g.k = k;
    const auto ca = ca_coords(backbone);
    g.edges = knn_graph(ca, k);
    g.node_feats = node_features(backbone, g.edges);

    const auto m = static_cast<Eigen::Index>(g.edges.size());
    g.edge_feats.resize(m, kEdgeFeatWidth);
    for (Eigen::Index e = 0; e < m; ++e) {
        const auto& edge = g.edges[static_cast<std::size_t>(e)];
        const double d = (ca.row(edge.src) - ca.row(edge.dst)).norm();
        g.edge_feats.row(e).segment(0, kRbfWidth) = rbf_encode(d).transpose();
        g.edge_feats.row(e).segment(kRbfWidth, kRelPosWidth) = rel_pos_features(backbone, edge.src, edge.dst).transpose();
        g.edge_feats.row(e).segment(kRbfWidth + kRelPosWidth, kRelSeqWidth) =
            rel_seq_encode(edge.dst, edge.src, d).transpose();
    }
    g.true_types = backbone.sequence();
    g.ss_classes = secondary_structure(backbone);
    g.n_chain_breaks = static_cast<int>(backbone.chain_breaks.size());
    if (!g.node_feats.allFinite() || !g.edge_feats.allFinite()) {
        throw NumericFault("non-finite features for protein " + backbone.id);
    }
    return g;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows, Eigen::Index cols, const char* name) {
    if (!rows.is_array()) throw ParseError(std::string("cached graph: ") + name + " must be an array");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (!rows[r].is_array() || static_cast<Eigen::Index>(rows[r].size()) != cols) {
            throw ParseError(std::string("cached graph: ") + name + " row " + std::to_string(r) + " has wrong width");
        }
        for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

}  // namespace

std::string graph_to_json(const ResidueGraph& graph) {
    json doc;
    doc["id"] = graph.id;
    doc["n_nodes"] = graph.n_nodes;
    doc["k"] = graph.k;
    json edges = json::array();
    for (const auto& e : graph.edges) edges.push_back(json::array({e.src, e.dst}));
    doc["edges"] = std::move(edges);
    doc["node_feats"] = matrix_to_json(graph.node_feats);
    doc["edge_feats"] = matrix_to_json(graph.edge_feats);
    doc["true_types"] = graph.true_types;
    doc["ss_classes"] = graph.ss_classes;
    doc["n_chain_breaks"] = graph.n_chain_breaks;
    return doc.dump();
}

ResidueGraph graph_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
        ResidueGraph g;
        g.id = doc.at("id").get<std::string>();
        g.n_nodes = doc.at("n_nodes").get<int>();
        g.k = doc.at("k").get<int>();
        for (const auto& e : doc.at("edges")) g.edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
        g.node_feats = matrix_from_json(doc.at("node_feats"), kNodeFeatWidth, "node_feats");
        g.edge_feats = matrix_from_json(doc.at("edge_feats"), kEdgeFeatWidth, "edge_feats");
        g.true_types = doc.at("true_types").get<std::vector<int>>();
        g.ss_classes = doc.at("ss_classes").get<std::vector<int>>();
        g.n_chain_breaks = doc.value("n_chain_breaks", 0);
        if (g.node_feats.rows() != g.n_nodes || g.edge_feats.rows() != static_cast<Eigen::Index>(g.edges.size()) ||
            static_cast<int>(g.true_types.size()) != g.n_nodes || static_cast<int>(g.ss_classes.size()) != g.n_nodes) {
            throw ParseError("cached graph: inconsistent sizes");
        }
        return g;
    } catch (const json::exception& e) {
        throw ParseError(std::string("cached graph: ") + e.what());
    }
}

}  // namespace ifdiff
