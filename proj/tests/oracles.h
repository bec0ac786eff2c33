// Independent reference computations used to check the library against first principles.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <vector>

#include "ifdiff/backbone.h"

namespace ifdiff::oracle {

// Single-step kernel built entry by entry.
inline Eigen::MatrixXd step_kernel(double alpha, int d) {
    Eigen::MatrixXd q(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) q(i, j) = (i == j ? alpha : 0.0) + (1.0 - alpha) / d;
    }
    return q;
}

// Q_1 Q_2 ... Q_t by explicit multiplication.
inline Eigen::MatrixXd cumulative_by_product(const std::vector<double>& alphas, int t, int d) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Identity(d, d);
    for (int s = 1; s <= t; ++s) acc = acc * step_kernel(alphas[static_cast<std::size_t>(s - 1)], d);
    return acc;
}

// q(s_{t-1} = k | s0_hat, s_t) by enumerating the hidden clean state x0 and the intermediate k:
//   sum_x0 s0_hat(x0) q(k | x0) q(s_t | k) / sum_x0 s0_hat(x0) q(s_t | x0).
inline std::vector<double> bayes_posterior(const std::vector<double>& alphas, int t, int d,
                                           const std::vector<double>& s0_hat, int st) {
    const Eigen::MatrixXd prev = cumulative_by_product(alphas, t - 1, d);
    const Eigen::MatrixXd full = cumulative_by_product(alphas, t, d);
    const Eigen::MatrixXd step = step_kernel(alphas[static_cast<std::size_t>(t - 1)], d);
    double evidence = 0.0;
    for (int x0 = 0; x0 < d; ++x0) evidence += s0_hat[static_cast<std::size_t>(x0)] * full(x0, st);
    std::vector<double> out(static_cast<std::size_t>(d), 0.0);
    for (int k = 0; k < d; ++k) {
        double joint = 0.0;
        for (int x0 = 0; x0 < d; ++x0) joint += s0_hat[static_cast<std::size_t>(x0)] * prev(x0, k) * step(k, st);
        out[static_cast<std::size_t>(k)] = joint / evidence;
    }
    return out;
}

struct SasaAtom {
    Vec3 center;
    double radius;  // van der Waals radius plus probe
};

// Plain Shrake-Rupley with a globally oriented golden spiral. Returns per-atom exposed area.
inline std::vector<double> brute_force_sasa(const std::vector<SasaAtom>& atoms, int n_points) {
    std::vector<Vec3> pts;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < n_points; ++k) {
        const double z = 1.0 - (2.0 * k + 1.0) / n_points;
        const double r = std::sqrt(1.0 - z * z);
        pts.emplace_back(r * std::cos(golden * k), r * std::sin(golden * k), z);
    }
    std::vector<double> out;
    for (std::size_t a = 0; a < atoms.size(); ++a) {
        int exposed = 0;
        for (const auto& u : pts) {
            const Vec3 p = atoms[a].center + atoms[a].radius * u;
            bool buried = false;
            for (std::size_t b = 0; b < atoms.size() && !buried; ++b) {
                if (b != a && (p - atoms[b].center).norm() < atoms[b].radius) buried = true;
            }
            if (!buried) ++exposed;
        }
        out.push_back(4.0 * std::numbers::pi * atoms[a].radius * atoms[a].radius * exposed / n_points);
    }
    return out;
}

}  // namespace ifdiff::oracle
