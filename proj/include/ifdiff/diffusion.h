#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "ifdiff/amino.h"

namespace ifdiff {

enum class ScheduleKind { kCosine, kLinear };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

// Uniform-kernel schedule: Q_t = alpha_t I + (1 - alpha_t) 11^T / d.
struct TransitionSchedule {
    int T = 0;
    int d = kNumTypes;
    ScheduleKind kind = ScheduleKind::kCosine;
    std::vector<double> alpha;      // alpha[t-1] for t = 1..T
    std::vector<double> alpha_bar;  // cumulative products, same indexing

    double alpha_at(int t) const;
    // alpha_bar(0) = 1.
    double alpha_bar_at(int t) const;

    Eigen::MatrixXd step_matrix(int t) const;
    Eigen::MatrixXd cumulative_matrix(int t) const;
};

// alpha I + (1 - alpha) 11^T / d
Eigen::MatrixXd uniform_kernel(double retention, int d);

TransitionSchedule make_schedule(int T, ScheduleKind kind = ScheduleKind::kCosine, int d = kNumTypes);

// N x d; rows are categorical distributions. A hard state has one-hot rows.
struct TypeState {
    Eigen::MatrixXd probs;

    Eigen::Index rows() const { return probs.rows(); }
    static TypeState one_hot(const std::vector<int>& types, int d = kNumTypes);
    static TypeState uniform(Eigen::Index n, int d = kNumTypes);
    bool is_hard(double tol = 0.0) const;
    // Argmax per row, ties to the lower index.
    std::vector<int> argmax() const;
};

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

TypeState forward_marginal(const TypeState& s0, int t, const TransitionSchedule& schedule);

TypeState forward_sample(const TypeState& s0_hard, int t, const TransitionSchedule& schedule, std::uint64_t seed);

// q(S_{t-1} | s0_hat, s_t), normalized by s0_hat Qbar_t s_t^T.
TypeState posterior(const TypeState& s0_hat, const TypeState& st_hard, int t, const TransitionSchedule& schedule);

// Skip-step form: the t_prev -> t kernel is the uniform kernel with retention
// alpha_bar(t) / alpha_bar(t_prev). Requires 1 <= t_prev < t.
TypeState posterior_bridge(const TypeState& s0_hat, const TypeState& st_hard, int t, int t_prev,
                           const TransitionSchedule& schedule);

// One reverse move t -> t_prev. t_prev = 0 samples directly from softmax(s0_logits).
TypeState reverse_step(const Eigen::MatrixXd& s0_logits, const TypeState& st_hard, int t, int t_prev,
                       const TransitionSchedule& schedule, std::uint64_t seed);

}  // namespace ifdiff
