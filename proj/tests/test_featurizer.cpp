#include <doctest.h>

#include <cmath>
#include <set>

#include "fixtures/helix.h"
#include "ifdiff/errors.h"
#include "ifdiff/featurizer.h"

using namespace ifdiff;

namespace {

Eigen::MatrixX3d points(const std::vector<Vec3>& pts) {
    Eigen::MatrixX3d m(static_cast<Eigen::Index>(pts.size()), 3);
    for (std::size_t i = 0; i < pts.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = pts[i];
    return m;
}

double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_SUITE("featurizer") {
    TEST_CASE("nearest neighbors on a line") {
        const auto edges = knn_graph(points({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(3, 0, 0)}), 1);
        REQUIRE(edges.size() == 3);
        CHECK(edges[0] == Edge{1, 0});
        CHECK(edges[1] == Edge{0, 1});
        CHECK(edges[2] == Edge{1, 2});
    }

    TEST_CASE("k at least N-1 gives the complete digraph") {
        const auto p = fixtures::make_helix("c", 9, 2);
        for (int k : {8, 9, 30}) {
            const auto edges = knn_graph(ca_coords(p), k);
            CHECK(edges.size() == 72);
            std::set<std::pair<int, int>> seen;
            for (const auto& e : edges) {
                CHECK(e.src != e.dst);
                seen.insert({e.src, e.dst});
            }
            CHECK(seen.size() == 72);
        }
    }

    TEST_CASE("equidistant candidates resolve to the lower index") {
        std::vector<Vec3> pts(8);
        for (int i = 0; i < 8; ++i) pts[i] = Vec3(50.0 + 10.0 * i, 40.0, 0.0);
        pts[0] = Vec3(0, 0, 0);
        pts[2] = Vec3(1, 0, 0);
        pts[7] = Vec3(-1, 0, 0);
        const auto edges = knn_graph(points(pts), 1);
        CHECK(edges[0] == Edge{2, 0});
    }

    TEST_CASE("edges are sorted by destination, distance, then source, with fixed in-degree") {
        const auto p = fixtures::make_helix("s", 25, 3);
        const auto ca = ca_coords(p);
        const int k = 6;
        const auto edges = knn_graph(ca, k);
        CHECK(edges.size() == 25u * k);
        std::vector<int> indeg(25, 0);
        for (std::size_t e = 0; e < edges.size(); ++e) {
            indeg[edges[e].dst]++;
            CHECK(edges[e].src != edges[e].dst);
            if (e == 0) continue;
            const auto& a = edges[e - 1];
            const auto& b = edges[e];
            const double da = (ca.row(a.src) - ca.row(a.dst)).squaredNorm();
            const double db = (ca.row(b.src) - ca.row(b.dst)).squaredNorm();
            const bool tied = std::abs(da - db) < 1e-8;
            const bool ordered = a.dst < b.dst || (a.dst == b.dst && (tied ? a.src < b.src : da < db));
            CHECK(ordered);
        }
        for (int d : indeg) CHECK(d == k);
        // Every chosen neighbor is no farther than any unchosen node.
        for (int i = 0; i < 25; ++i) {
            double worst_in = 0.0;
            std::set<int> chosen;
            for (const auto& e : edges) {
                if (e.dst != i) continue;
                chosen.insert(e.src);
                worst_in = std::max(worst_in, (ca.row(e.src) - ca.row(i)).squaredNorm());
            }
            for (int j = 0; j < 25; ++j) {
                if (j != i && !chosen.count(j)) CHECK((ca.row(j) - ca.row(i)).squaredNorm() >= worst_in);
            }
        }
    }

    TEST_CASE("knn rejects tiny inputs") {
        CHECK_THROWS_AS(knn_graph(points({Vec3(0, 0, 0)}), 3), GeometryError);
        CHECK_THROWS_AS(knn_graph(points({Vec3(0, 0, 0), Vec3(1, 0, 0)}), 0), GeometryError);
    }

    TEST_CASE("constant B-factor column becomes zeros") {
        auto p = fixtures::make_helix("b", 12, 4);
        for (auto& r : p.residues) r.b_factor = 10.0;
        const auto g = featurize(p, 5);
        CHECK(g.node_feats.col(0).cwiseAbs().maxCoeff() == 0.0);
        CHECK(g.node_feats.cols() == kNodeFeatWidth);
    }

    TEST_CASE("z-scored columns have zero mean and unit variance") {
        const auto g = featurize(fixtures::make_helix("z", 20, 5), 8);
        for (int c : {0, 1}) {
            const Eigen::VectorXd col = g.node_feats.col(c);
            CHECK(std::abs(col.mean()) < 1e-12);
            CHECK((col.array() - col.mean()).square().mean() == doctest::Approx(1.0).epsilon(1e-12));
        }
    }

    TEST_CASE("file-supplied SASA replaces the estimate") {
        auto p = fixtures::make_helix("sa", 10, 6);
        for (std::size_t i = 0; i < p.size(); ++i) p.residues[i].sasa = static_cast<double>(i * i);
        const auto g = featurize(p, 4);
        Eigen::VectorXd raw(10);
        for (int i = 0; i < 10; ++i) raw[i] = i * i;
        CHECK(max_abs_diff(g.node_feats.col(1), zscore(raw)) < 1e-15);
    }

    TEST_CASE("surface-aware ratios") {
        const auto ca = points({Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(-2, 0, 0), Vec3(0, 5, 1)});
        // Node 0 sits between two opposite neighbors; node 3 has a single neighbor.
        const auto out = surface_aware(ca, {{1, 2}, {0}, {0, 1}, {0}});
        for (int l = 0; l < 5; ++l) {
            CHECK(std::abs(out(0, l)) < 1e-15);
            CHECK(out(1, l) == doctest::Approx(1.0).epsilon(1e-15));
            CHECK(out(3, l) == doctest::Approx(1.0).epsilon(1e-15));
        }
        const auto g = featurize(fixtures::make_helix("sa", 30, 7), 10);
        const Eigen::MatrixXd block = g.node_feats.block(0, 6, 30, 5);
        CHECK(block.minCoeff() >= 0.0);
        CHECK(block.maxCoeff() <= 1.0);
    }

    TEST_CASE("radial basis encoding") {
        const auto at0 = rbf_encode(0.0);
        CHECK(at0[0] == 1.0);
        for (int k = 1; k < kRbfWidth; ++k) CHECK(at0[k] < at0[k - 1]);
        const double c7 = 7.0 * 20.0 / 14.0;
        CHECK(rbf_encode(c7)[7] == doctest::Approx(1.0).epsilon(1e-15));
        const auto far = rbf_encode(1000.0);
        CHECK(far.allFinite());
        CHECK(far.maxCoeff() < 1e-300);
    }

    TEST_CASE("relative positions are unit blocks, invariant, and direction-dependent") {
        const auto p = fixtures::make_helix("rp", 6, 8);
        const auto moved = fixtures::random_rigid_motion(p, 9);
        for (int i = 0; i < 6; ++i) {
            for (int j = 0; j < 6; ++j) {
                if (i == j) continue;
                const auto v = rel_pos_features(p, j, i);
                for (int b = 0; b < 4; ++b) CHECK(v.segment<3>(3 * b).norm() == doctest::Approx(1.0).epsilon(1e-12));
                CHECK((rel_pos_features(moved, j, i) - v).cwiseAbs().maxCoeff() < 1e-8);
            }
        }
        Rng rng(31);
        ProteinBackbone two;
        for (int r = 0; r < 2; ++r) {
            Residue res;
            res.n_xyz = Vec3(rng.normal(), rng.normal(), rng.normal()) * 3.0;
            res.ca_xyz = Vec3(rng.normal(), rng.normal(), rng.normal()) * 3.0;
            res.c_xyz = Vec3(rng.normal(), rng.normal(), rng.normal()) * 3.0;
            res.o_xyz = Vec3(rng.normal(), rng.normal(), rng.normal()) * 3.0;
            two.residues.push_back(res);
        }
        CHECK((rel_pos_features(two, 0, 1) - rel_pos_features(two, 1, 0)).cwiseAbs().maxCoeff() > 1e-3);
    }

    TEST_CASE("degenerate local frame names the residue") {
        auto p = fixtures::make_helix("dg", 5, 10);
        p.residues[3].c_xyz = p.residues[3].ca_xyz + (p.residues[3].ca_xyz - p.residues[3].n_xyz);
        try {
            rel_pos_features(p, 1, 3);
            FAIL("expected a geometry error");
        } catch (const GeometryError& e) {
            CHECK(std::string(e.what()).find("residue 3") != std::string::npos);
        }
    }

    TEST_CASE("relative sequence encoding") {
        auto v = rel_seq_encode(10, 11, 3.8);
        CHECK(v[33] == 1.0);
        CHECK(v[65] == 1.0);
        v = rel_seq_encode(150, 50, 30.0);
        CHECK(v[0] == 1.0);
        CHECK(v[65] == 0.0);
        CHECK(rel_seq_encode(0, 40, 9.0)[64] == 1.0);
        CHECK(rel_seq_encode(0, 1, 8.0)[65] == 0.0);
        for (int i = 0; i < 80; i += 7) {
            for (int j = 0; j < 80; j += 3) {
                if (i == j) continue;
                const auto e = rel_seq_encode(i, j, 5.0);
                CHECK(e.head(65).sum() == 1.0);
                CHECK((e.head(65).array() != 0.0).count() == 1);
            }
        }
    }

    TEST_CASE("graph shape contract, determinism and rigid-motion invariance") {
        const auto p = fixtures::make_helix("g", 35, 11);
        const auto g = featurize(p, kDefaultK);
        CHECK(g.n_nodes == 35);
        CHECK(g.edges.size() == 35u * 30u);
        CHECK(g.node_feats.rows() == 35);
        CHECK(g.node_feats.cols() == 11);
        CHECK(g.edge_feats.rows() == 35 * 30);
        CHECK(g.edge_feats.cols() == 93);
        CHECK(g.node_feats.allFinite());
        CHECK(g.edge_feats.allFinite());
        CHECK(g.true_types == p.sequence());

        const auto again = featurize(p, kDefaultK);
        CHECK(again.edges == g.edges);
        CHECK(again.node_feats == g.node_feats);
        CHECK(again.edge_feats == g.edge_feats);

        for (std::uint64_t s = 0; s < 5; ++s) {
            const auto m = featurize(fixtures::random_rigid_motion(p, 500 + s), kDefaultK);
            CHECK(m.edges == g.edges);
            CHECK(max_abs_diff(m.node_feats, g.node_feats) < 1e-8);
            CHECK(max_abs_diff(m.edge_feats, g.edge_feats) < 1e-8);
        }
    }

    TEST_CASE("cached graph JSON round-trips bit-exactly") {
        auto p = fixtures::make_helix("j", 14, 12);
        p.chain_breaks = {6};
        const auto g = featurize(p, 7);
        const auto back = graph_from_json(graph_to_json(g));
        CHECK(back.id == g.id);
        CHECK(back.k == 7);
        CHECK(back.edges == g.edges);
        CHECK(back.node_feats == g.node_feats);
        CHECK(back.edge_feats == g.edge_feats);
        CHECK(back.true_types == g.true_types);
        CHECK(back.ss_classes == g.ss_classes);
        CHECK(back.n_chain_breaks == 1);
        CHECK_THROWS_AS(graph_from_json("{\"id\": 3}"), ParseError);
    }
}
