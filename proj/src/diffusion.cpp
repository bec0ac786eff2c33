#include "ifdiff/diffusion.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ifdiff/errors.h"
#include "ifdiff/rng.h"

namespace ifdiff {

namespace {

constexpr double kPosteriorEps = 1e-30;
constexpr double kMinAlpha = 0.001;
constexpr double kCosineOffset = 0.008;

int sample_row(const Eigen::Ref<const Eigen::RowVectorXd>& probs, Rng& rng) {
    const double u = rng.uniform() * probs.sum();
    double acc = 0.0;
    int last_positive = 0;
    for (Eigen::Index j = 0; j < probs.size(); ++j) {
        if (probs[j] <= 0.0) continue;
        acc += probs[j];
        last_positive = static_cast<int>(j);
        if (u < acc) return static_cast<int>(j);
    }
    return last_positive;
}

void check_t(int t, const TransitionSchedule& s, int lo) {
    if (t < lo || t > s.T) {
        throw Error("E_RANGE", "timestep " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                                   std::to_string(s.T) + "]");
    }
}

int hard_type(const Eigen::Ref<const Eigen::RowVectorXd>& row, Eigen::Index r) {
    Eigen::Index k = 0;
    const double mx = row.maxCoeff(&k);
    if (mx != 1.0 || row.sum() != 1.0) throw Error("E_STATE", "row " + std::to_string(r) + " is not one-hot");
    return static_cast<int>(k);
}

}  // namespace

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::kCosine ? "cosine" : "linear"; }

ScheduleKind schedule_kind_from_string(const std::string& name) {
    if (name == "cosine") return ScheduleKind::kCosine;
    if (name == "linear") return ScheduleKind::kLinear;
    throw ConfigError("unknown schedule kind: " + name);
}

double TransitionSchedule::alpha_at(int t) const {
    check_t(t, *this, 1);
    return alpha[static_cast<std::size_t>(t - 1)];
}

double TransitionSchedule::alpha_bar_at(int t) const {
    check_t(t, *this, 0);
    return t == 0 ? 1.0 : alpha_bar[static_cast<std::size_t>(t - 1)];
}

Eigen::MatrixXd TransitionSchedule::step_matrix(int t) const { return uniform_kernel(alpha_at(t), d); }

Eigen::MatrixXd TransitionSchedule::cumulative_matrix(int t) const { return uniform_kernel(alpha_bar_at(t), d); }

Eigen::MatrixXd uniform_kernel(double retention, int d) {
    Eigen::MatrixXd q = Eigen::MatrixXd::Constant(d, d, (1.0 - retention) / d);
    q.diagonal().array() += retention;
    return q;
}

TransitionSchedule make_schedule(int T, ScheduleKind kind, int d) {
    if (T < 1) throw ConfigError("schedule needs T >= 1, got " + std::to_string(T));
    if (d < 2) throw ConfigError("schedule needs d >= 2");
    TransitionSchedule s;
    s.T = T;
    s.d = d;
    s.kind = kind;
    s.alpha.resize(static_cast<std::size_t>(T));

    if (kind == ScheduleKind::kCosine) {
        auto f = [&](int t) {
            const double x = (static_cast<double>(t) / T + kCosineOffset) / (1.0 + kCosineOffset) * std::numbers::pi / 2.0;
            return std::cos(x) * std::cos(x);
        };
        const double f0 = f(0);
        double prev = 1.0;
        for (int t = 1; t <= T; ++t) {
            const double bar = f(t) / f0;
            s.alpha[static_cast<std::size_t>(t - 1)] = std::clamp(bar / prev, kMinAlpha, 1.0);
            prev = bar;
        }
    } else {
        // alpha_t = 1 - beta_max * t / T with beta_max chosen so alpha_bar_T = 1/d.
        auto product = [&](double beta_max) {
            double p = 1.0;
            for (int t = 1; t <= T; ++t) p *= std::clamp(1.0 - beta_max * t / T, kMinAlpha, 1.0);
            return p;
        };
        const double target = 1.0 / d;
        double lo = 0.0;
        double hi = 1.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (product(mid) > target ? lo : hi) = mid;
        }
        for (int t = 1; t <= T; ++t) {
            s.alpha[static_cast<std::size_t>(t - 1)] = std::clamp(1.0 - hi * t / T, kMinAlpha, 1.0);
        }
    }

    s.alpha_bar.resize(s.alpha.size());
    double acc = 1.0;
    for (std::size_t i = 0; i < s.alpha.size(); ++i) {
        acc *= s.alpha[i];
        s.alpha_bar[i] = acc;
    }
    return s;
}

TypeState TypeState::one_hot(const std::vector<int>& types, int d) {
    TypeState s;
    s.probs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(types.size()), d);
    for (std::size_t i = 0; i < types.size(); ++i) {
        if (types[i] < 0 || types[i] >= d) throw Error("E_STATE", "type index out of range at row " + std::to_string(i));
        s.probs(static_cast<Eigen::Index>(i), types[i]) = 1.0;
    }
    return s;
}

TypeState TypeState::uniform(Eigen::Index n, int d) {
    return TypeState{Eigen::MatrixXd::Constant(n, d, 1.0 / d)};
}

bool TypeState::is_hard(double tol) const {
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        int ones = 0;
        for (Eigen::Index c = 0; c < probs.cols(); ++c) {
            const double v = probs(r, c);
            if (std::abs(v - 1.0) <= tol) {
                ++ones;
            } else if (std::abs(v) > tol) {
                return false;
            }
        }
        if (ones != 1) return false;
    }
    return true;
}

std::vector<int> TypeState::argmax() const {
    std::vector<int> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < probs.cols(); ++c) {
            if (probs(r, c) > probs(r, best)) best = c;
        }
        out[static_cast<std::size_t>(r)] = static_cast<int>(best);
    }
    return out;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double mx = logits.row(r).maxCoeff();
        out.row(r) = (logits.row(r).array() - mx).exp();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

TypeState forward_marginal(const TypeState& s0, int t, const TransitionSchedule& schedule) {
    check_t(t, schedule, 1);
    if (s0.probs.cols() != schedule.d) throw ShapeError("state width does not match schedule alphabet size");
    const double ab = schedule.alpha_bar_at(t);
    // s0 Qbar_t for rows that sum to one.
    Eigen::MatrixXd out = ab * s0.probs;
    const Eigen::VectorXd mass = s0.probs.rowwise().sum();
    out.colwise() += (1.0 - ab) / schedule.d * mass;
    return TypeState{std::move(out)};
}

TypeState forward_sample(const TypeState& s0_hard, int t, const TransitionSchedule& schedule, std::uint64_t seed) {
    if (!s0_hard.is_hard()) throw Error("E_STATE", "forward_sample requires one-hot rows");
    const auto marginal = forward_marginal(s0_hard, t, schedule);
    Rng rng(seed);
    TypeState out{Eigen::MatrixXd::Zero(marginal.rows(), schedule.d)};
    for (Eigen::Index r = 0; r < marginal.rows(); ++r) out.probs(r, sample_row(marginal.probs.row(r), rng)) = 1.0;
    return out;
}

TypeState posterior_bridge(const TypeState& s0_hat, const TypeState& st_hard, int t, int t_prev,
                           const TransitionSchedule& schedule) {
    check_t(t, schedule, 2);
    if (t_prev < 1 || t_prev >= t) {
        throw Error("E_RANGE", "posterior needs 1 <= t_prev < t, got t=" + std::to_string(t) + " t_prev=" +
                                   std::to_string(t_prev));
    }
    if (s0_hat.probs.rows() != st_hard.probs.rows() || s0_hat.probs.cols() != schedule.d ||
        st_hard.probs.cols() != schedule.d) {
        throw ShapeError("posterior state shapes disagree");
    }
    const int d = schedule.d;
    const double ab_t = schedule.alpha_bar_at(t);
    const double ab_prev = schedule.alpha_bar_at(t_prev);
    const double retention = ab_t / ab_prev;

    TypeState out{Eigen::MatrixXd(st_hard.rows(), d)};
    for (Eigen::Index r = 0; r < st_hard.rows(); ++r) {
        const int k = hard_type(st_hard.probs.row(r), r);
        const auto s0 = s0_hat.probs.row(r);
        const double mass = s0.sum();
        const double norm = std::max(ab_t * s0[k] + (1.0 - ab_t) / d * mass, kPosteriorEps);
        for (int j = 0; j < d; ++j) {
            const double lik = (j == k ? retention : 0.0) + (1.0 - retention) / d;  // (s_t Q^T)_j
            const double prior = ab_prev * s0[j] + (1.0 - ab_prev) / d * mass;      // (s0 Qbar_{t_prev})_j
            out.probs(r, j) = lik * prior / norm;
        }
    }
    return out;
}

TypeState posterior(const TypeState& s0_hat, const TypeState& st_hard, int t, const TransitionSchedule& schedule) {
    return posterior_bridge(s0_hat, st_hard, t, t - 1, schedule);
}

TypeState reverse_step(const Eigen::MatrixXd& s0_logits, const TypeState& st_hard, int t, int t_prev,
                       const TransitionSchedule& schedule, std::uint64_t seed) {
    check_t(t, schedule, 1);
    if (t_prev < 0 || t_prev >= t) {
        throw Error("E_RANGE", "reverse_step needs 0 <= t_prev < t, got t=" + std::to_string(t) + " t_prev=" +
                                   std::to_string(t_prev));
    }
    TypeState s0_hat{softmax_rows(s0_logits)};
    const TypeState dist = t_prev == 0 ? s0_hat : posterior_bridge(s0_hat, st_hard, t, t_prev, schedule);
    Rng rng(seed);
    TypeState out{Eigen::MatrixXd::Zero(dist.rows(), schedule.d)};
    for (Eigen::Index r = 0; r < dist.rows(); ++r) out.probs(r, sample_row(dist.probs.row(r), rng)) = 1.0;
    return out;
}

}  // namespace ifdiff
