// Synthetic backbones for tests: NeRF-built helices with jittered torsions, random B-factors
// and random sequences, plus rigid-motion and relabeling helpers.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "ifdiff/amino.h"
#include "ifdiff/backbone.h"
#include "ifdiff/featurizer.h"
#include "ifdiff/rng.h"

namespace ifdiff::fixtures {

inline double deg(double d) { return d * std::numbers::pi / 180.0; }

// Places d so that |cd| = bond, angle(b, c, d) = angle and torsion(a, b, c, d) = torsion.
inline Vec3 place_atom(const Vec3& a, const Vec3& b, const Vec3& c, double bond, double angle, double torsion) {
    const Vec3 bc = (c - b).normalized();
    const Vec3 n = (b - a).cross(bc).normalized();
    const Vec3 m = n.cross(bc);
    const Vec3 d2(-bond * std::cos(angle), bond * std::sin(angle) * std::cos(torsion), bond * std::sin(angle) * std::sin(torsion));
    return c + d2.x() * bc + d2.y() * m + d2.z() * n;
}

struct HelixOptions {
    double phi = -57.0;
    double psi = -47.0;
    double jitter_deg = 8.0;
    std::vector<int> breaks;
    bool random_sequence = true;
};

inline ProteinBackbone make_helix(const std::string& id, int n, std::uint64_t seed, const HelixOptions& opt = {}) {
    Rng rng(seed);
    ProteinBackbone p;
    p.id = id;
    p.chain_breaks = opt.breaks;
    // Seed frame: three reference points, then walk the chain.
    Vec3 a = Vec3(-1.2, 1.0, 0.4), b = Vec3(-0.6, 0.0, 0.0), c = Vec3(0.8, 0.0, 0.0);
    double psi_prev = opt.psi;
    for (int i = 0; i < n; ++i) {
        const double phi = opt.phi + opt.jitter_deg * (2.0 * rng.uniform() - 1.0);
        const double psi = opt.psi + opt.jitter_deg * (2.0 * rng.uniform() - 1.0);
        Residue r;
        // c is the previous carbonyl carbon, b the previous CA, a the previous N.
        r.n_xyz = place_atom(a, b, c, 1.329, deg(116.2), deg(psi_prev));
        r.ca_xyz = place_atom(b, c, r.n_xyz, 1.458, deg(121.7), deg(180.0));
        r.c_xyz = place_atom(c, r.n_xyz, r.ca_xyz, 1.525, deg(111.2), deg(phi));
        r.o_xyz = place_atom(r.n_xyz, r.ca_xyz, r.c_xyz, 1.231, deg(120.5), deg(psi + 180.0));
        r.b_factor = 5.0 + 40.0 * rng.uniform();
        r.aa_type = opt.random_sequence ? static_cast<int>(rng.uniform_int(0, kNumTypes - 1)) : i % kNumTypes;
        a = r.n_xyz;
        b = r.ca_xyz;
        c = r.c_xyz;
        psi_prev = psi;
        p.residues.push_back(r);
    }
    return p;
}

inline Eigen::Matrix3d random_rotation(Rng& rng) {
    Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    return q.toRotationMatrix();
}

inline ProteinBackbone rigid_motion(const ProteinBackbone& p, const Eigen::Matrix3d& R, const Vec3& v) {
    ProteinBackbone out = p;
    for (auto& r : out.residues) {
        r.n_xyz = R * r.n_xyz + v;
        r.ca_xyz = R * r.ca_xyz + v;
        r.c_xyz = R * r.c_xyz + v;
        r.o_xyz = R * r.o_xyz + v;
    }
    return out;
}

inline ProteinBackbone random_rigid_motion(const ProteinBackbone& p, std::uint64_t seed) {
    Rng rng(seed);
    const Eigen::Matrix3d R = random_rotation(rng);
    const Vec3 v(50.0 * rng.normal(), 50.0 * rng.normal(), 50.0 * rng.normal());
    return rigid_motion(p, R, v);
}

// Relabels nodes so that old node i becomes node perm[i]; edge rows keep their features.
inline ResidueGraph permute_graph(const ResidueGraph& g, const std::vector<int>& perm) {
    ResidueGraph out = g;
    for (int i = 0; i < g.n_nodes; ++i) {
        out.node_feats.row(perm[i]) = g.node_feats.row(i);
        out.true_types[perm[i]] = g.true_types[i];
        out.ss_classes[perm[i]] = g.ss_classes[i];
    }
    // Reverse edge order as well so aggregation order changes.
    const std::size_t m = g.edges.size();
    for (std::size_t e = 0; e < m; ++e) {
        const std::size_t ne = m - 1 - e;
        out.edges[ne] = Edge{perm[g.edges[e].src], perm[g.edges[e].dst]};
        out.edge_feats.row(static_cast<Eigen::Index>(ne)) = g.edge_feats.row(static_cast<Eigen::Index>(e));
    }
    return out;
}

inline std::vector<int> random_permutation(int n, std::uint64_t seed) {
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    return perm;
}

// Five helices of 20..40 residues used by the overfit experiment.
inline std::vector<ProteinBackbone> overfit_set() {
    const int lengths[5] = {20, 25, 30, 35, 40};
    std::vector<ProteinBackbone> set;
    for (int i = 0; i < 5; ++i) set.push_back(make_helix("helix" + std::to_string(i), lengths[i], 1000 + i));
    return set;
}

}  // namespace ifdiff::fixtures
