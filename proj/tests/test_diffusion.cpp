#include <doctest.h>

#include <cmath>

#include "ifdiff/diffusion.h"
#include "ifdiff/errors.h"
#include "ifdiff/rng.h"
#include "oracles.h"

using namespace ifdiff;

namespace {

TransitionSchedule custom_schedule(const std::vector<double>& alphas, int d) {
    TransitionSchedule s;
    s.T = static_cast<int>(alphas.size());
    s.d = d;
    s.alpha = alphas;
    double acc = 1.0;
    for (double a : alphas) {
        acc *= a;
        s.alpha_bar.push_back(acc);
    }
    return s;
}

std::vector<double> random_distribution(Rng& rng, int d) {
    std::vector<double> p(static_cast<std::size_t>(d));
    double sum = 0.0;
    for (auto& v : p) {
        v = rng.uniform() + 1e-3;
        sum += v;
    }
    for (auto& v : p) v /= sum;
    return p;
}

TypeState row_state(const std::vector<double>& p) {
    TypeState s{Eigen::MatrixXd(1, static_cast<Eigen::Index>(p.size()))};
    for (std::size_t j = 0; j < p.size(); ++j) s.probs(0, static_cast<Eigen::Index>(j)) = p[j];
    return s;
}

void check_rows_stochastic(const Eigen::MatrixXd& m, double tol = 1e-9) {
    CHECK(m.minCoeff() >= 0.0);
    for (Eigen::Index r = 0; r < m.rows(); ++r) CHECK(std::abs(m.row(r).sum() - 1.0) < tol);
}

}  // namespace

TEST_SUITE("diffusion-kernel") {
    TEST_CASE("cosine schedule is strictly decreasing and cumulative") {
        for (int T : {1, 2, 10, 500}) {
            const auto s = make_schedule(T);
            double acc = 1.0;
            for (int t = 1; t <= T; ++t) {
                acc *= s.alpha_at(t);
                CHECK(s.alpha_at(t) > 0.0);
                CHECK(s.alpha_at(t) <= 1.0);
                CHECK(std::abs(s.alpha_bar_at(t) - acc) < 1e-12);
                CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
            }
        }
        CHECK(make_schedule(500).alpha_bar_at(0) == 1.0);
    }

    TEST_CASE("linear schedule ends at the uniform retention") {
        const auto s = make_schedule(100, ScheduleKind::kLinear);
        CHECK(std::abs(s.alpha_bar_at(100) - 1.0 / 20.0) < 1e-9);
        for (int t = 2; t <= 100; ++t) CHECK(s.alpha_at(t) <= s.alpha_at(t - 1));
        CHECK(schedule_kind_from_string("linear") == ScheduleKind::kLinear);
        CHECK(to_string(ScheduleKind::kCosine) == "cosine");
        CHECK_THROWS_AS(schedule_kind_from_string("sigmoid"), ConfigError);
    }

    TEST_CASE("invalid horizons are rejected") {
        CHECK_THROWS_AS(make_schedule(0), ConfigError);
        const auto s = make_schedule(5);
        CHECK_THROWS(s.alpha_at(0));
        CHECK_THROWS(s.alpha_at(6));
        CHECK_THROWS(forward_marginal(TypeState::uniform(2), 0, s));
    }

    TEST_CASE("every step and cumulative kernel is row-stochastic") {
        for (auto kind : {ScheduleKind::kCosine, ScheduleKind::kLinear}) {
            const auto s = make_schedule(50, kind);
            for (int t = 1; t <= 50; ++t) {
                const auto q = s.step_matrix(t);
                const auto qb = s.cumulative_matrix(t);
                CHECK(q.minCoeff() >= 0.0);
                CHECK((q.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
                CHECK((qb.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
            }
        }
    }

    TEST_CASE("cumulative kernel equals the product of step kernels") {
        for (int d : {4, 20}) {
            const auto s = make_schedule(10, ScheduleKind::kCosine, d);
            for (int t = 1; t <= 10; ++t) {
                const auto product = oracle::cumulative_by_product(s.alpha, t, d);
                CHECK((product - s.cumulative_matrix(t)).cwiseAbs().maxCoeff() < 1e-10);
            }
        }
    }

    TEST_CASE("forward marginal closed forms") {
        const auto identity = custom_schedule({1.0, 1.0}, 4);
        Rng rng(1);
        TypeState s0{Eigen::MatrixXd(3, 4)};
        for (int r = 0; r < 3; ++r) s0.probs.row(r) = row_state(random_distribution(rng, 4)).probs;
        CHECK((forward_marginal(s0, 2, identity).probs - s0.probs).cwiseAbs().maxCoeff() == 0.0);

        const auto s = make_schedule(30);
        for (int t : {1, 7, 30}) {
            const auto u = forward_marginal(TypeState::uniform(5), t, s).probs;
            CHECK((u.array() - 1.0 / 20.0).abs().maxCoeff() < 1e-15);
        }

        const auto half = custom_schedule({0.5}, 4);
        const auto m = forward_marginal(TypeState::one_hot({2}, 4), 1, half).probs;
        CHECK(m(0, 2) == doctest::Approx(0.625).epsilon(1e-15));
        for (int j : {0, 1, 3}) CHECK(m(0, j) == doctest::Approx(0.125).epsilon(1e-15));
    }

    TEST_CASE("semigroup: one more step after t-1 reaches t") {
        const auto s = make_schedule(40);
        Rng rng(2);
        TypeState s0{Eigen::MatrixXd(4, 20)};
        for (int r = 0; r < 4; ++r) s0.probs.row(r) = row_state(random_distribution(rng, 20)).probs;
        for (int t = 2; t <= 40; ++t) {
            const Eigen::MatrixXd two_stage = forward_marginal(s0, t - 1, s).probs * s.step_matrix(t);
            CHECK((two_stage - forward_marginal(s0, t, s).probs).cwiseAbs().maxCoeff() < 1e-10);
        }
    }

    TEST_CASE("uniform distribution is a fixed point of every step") {
        const auto s = make_schedule(20);
        const Eigen::RowVectorXd u = Eigen::RowVectorXd::Constant(20, 1.0 / 20.0);
        for (int t = 1; t <= 20; ++t) CHECK((u * s.step_matrix(t) - u).cwiseAbs().maxCoeff() < 1e-15);
    }

    TEST_CASE("forward sampling is seeded, exact without noise, and matches the marginal") {
        const auto s = make_schedule(100);
        std::vector<int> types;
        for (int i = 0; i < 50; ++i) types.push_back(i % 20);
        const auto s0 = TypeState::one_hot(types);
        const auto a = forward_sample(s0, 60, s, 42);
        const auto b = forward_sample(s0, 60, s, 42);
        CHECK(a.probs == b.probs);
        CHECK(a.is_hard());
        CHECK(forward_sample(s0, 60, s, 43).probs != a.probs);

        const auto identity = custom_schedule({1.0}, 20);
        CHECK(forward_sample(s0, 1, identity, 9).probs == s0.probs);

        const auto half = custom_schedule({0.5}, 4);
        const int draws = 100000;
        const auto many = forward_sample(TypeState::one_hot(std::vector<int>(draws, 1), 4), 1, half, 7);
        const double freq = many.probs.col(1).sum() / draws;
        CHECK(std::abs(freq - 0.625) < 0.005);

        CHECK_THROWS(forward_sample(TypeState::uniform(2, 20), 3, s, 1));
    }

    TEST_CASE("posterior matches Bayes enumeration on the worked case") {
        const auto s = custom_schedule({0.9, 0.8}, 4);
        const auto post = posterior(TypeState::one_hot({0}, 4), TypeState::one_hot({0}, 4), 2, s);
        const auto ref = oracle::bayes_posterior(s.alpha, 2, 4, {1.0, 0.0, 0.0, 0.0}, 0);
        for (int k = 0; k < 4; ++k) CHECK(std::abs(post.probs(0, k) - ref[static_cast<std::size_t>(k)]) < 1e-12);
        check_rows_stochastic(post.probs, 1e-12);
    }

    TEST_CASE("posterior matches Bayes enumeration on random small cases") {
        Rng rng(2024);
        int cases = 0;
        for (int d : {3, 4, 5}) {
            for (int T : {2, 3, 4}) {
                for (int rep = 0; rep < 12; ++rep) {
                    std::vector<double> alphas;
                    for (int t = 0; t < T; ++t) alphas.push_back(0.05 + 0.9 * rng.uniform());
                    const auto s = custom_schedule(alphas, d);
                    const int t = static_cast<int>(rng.uniform_int(2, T));
                    const auto s0 = random_distribution(rng, d);
                    const int st = static_cast<int>(rng.uniform_int(0, d - 1));
                    const auto post = posterior(row_state(s0), TypeState::one_hot({st}, d), t, s);
                    const auto ref = oracle::bayes_posterior(alphas, t, d, s0, st);
                    for (int k = 0; k < d; ++k) CHECK(std::abs(post.probs(0, k) - ref[static_cast<std::size_t>(k)]) < 1e-12);
                    ++cases;
                }
            }
        }
        CHECK(cases >= 100);
    }

    TEST_CASE("posterior with a uniform estimate follows the direct formula") {
        const auto s = make_schedule(10, ScheduleKind::kCosine, 5);
        const std::vector<double> u(5, 0.2);
        const auto post = posterior(row_state(u), TypeState::one_hot({3}, 5), 6, s);
        const Eigen::RowVectorXd st = TypeState::one_hot({3}, 5).probs.row(0);
        const Eigen::RowVectorXd u_row = row_state(u).probs.row(0);
        const Eigen::RowVectorXd lik = st * s.step_matrix(6).transpose();
        const Eigen::RowVectorXd prior = u_row * s.cumulative_matrix(5);
        const double norm = u_row * s.cumulative_matrix(6) * st.transpose();
        const Eigen::RowVectorXd direct = lik.cwiseProduct(prior) / norm;
        CHECK((post.probs.row(0) - direct).cwiseAbs().maxCoeff() < 1e-12);
    }

    TEST_CASE("noise-free step makes the posterior one-hot at s_t") {
        const auto s = custom_schedule({0.7, 1.0}, 4);
        Rng rng(5);
        const auto post = posterior(row_state(random_distribution(rng, 4)), TypeState::one_hot({2}, 4), 2, s);
        for (int k = 0; k < 4; ++k) CHECK(post.probs(0, k) == doctest::Approx(k == 2 ? 1.0 : 0.0));
    }

    TEST_CASE("skip-step bridge equals Bayes enumeration with the composed kernel") {
        const auto s = make_schedule(12, ScheduleKind::kCosine, 5);
        Rng rng(8);
        for (int rep = 0; rep < 20; ++rep) {
            const int t = static_cast<int>(rng.uniform_int(2, 12));
            const int tp = static_cast<int>(rng.uniform_int(1, t - 1));
            const auto s0 = random_distribution(rng, 5);
            const int st = static_cast<int>(rng.uniform_int(0, 4));
            const Eigen::MatrixXd before = oracle::cumulative_by_product(s.alpha, tp, 5);
            Eigen::MatrixXd bridge = Eigen::MatrixXd::Identity(5, 5);
            for (int u = tp + 1; u <= t; ++u) bridge = bridge * oracle::step_kernel(s.alpha[static_cast<std::size_t>(u - 1)], 5);
            std::vector<double> ref(5);
            double evidence = 0.0;
            for (int k = 0; k < 5; ++k) {
                for (int x0 = 0; x0 < 5; ++x0) ref[static_cast<std::size_t>(k)] += s0[static_cast<std::size_t>(x0)] * before(x0, k) * bridge(k, st);
                evidence += ref[static_cast<std::size_t>(k)];
            }
            const auto post = posterior_bridge(row_state(s0), TypeState::one_hot({st}, 5), t, tp, s);
            for (int k = 0; k < 5; ++k) CHECK(std::abs(post.probs(0, k) - ref[static_cast<std::size_t>(k)] / evidence) < 1e-12);
        }
        CHECK_THROWS(posterior_bridge(TypeState::uniform(1, 5), TypeState::one_hot({0}, 5), 5, 5, s));
        CHECK_THROWS(posterior(TypeState::uniform(1, 5), TypeState::one_hot({0}, 5), 1, s));
    }

    TEST_CASE("posterior rows are distributions across a full schedule") {
        const auto s = make_schedule(500);
        Rng rng(10);
        TypeState s0{Eigen::MatrixXd(20, 20)};
        std::vector<int> st;
        for (int r = 0; r < 20; ++r) {
            s0.probs.row(r) = row_state(random_distribution(rng, 20)).probs;
            st.push_back(r);
        }
        for (int t = 2; t <= 500; t += 11) check_rows_stochastic(posterior(s0, TypeState::one_hot(st), t, s).probs);
    }

    TEST_CASE("reverse step to zero draws from the softmax") {
        const auto s = make_schedule(500);
        Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(6, 20);
        for (int r = 0; r < 6; ++r) logits(r, (3 * r) % 20) = 50.0;
        const auto st = TypeState::one_hot({0, 1, 2, 3, 4, 5});
        const auto out = reverse_step(logits, st, 500, 0, s, 3);
        for (int r = 0; r < 6; ++r) CHECK(out.argmax()[static_cast<std::size_t>(r)] == (3 * r) % 20);

        Rng rng(4);
        Eigen::MatrixXd soft(30, 20);
        for (Eigen::Index i = 0; i < soft.size(); ++i) soft.data()[i] = rng.normal();
        std::vector<int> types(30, 7);
        const auto one = reverse_step(soft, TypeState::one_hot(types), 1, 0, s, 11);
        const auto skip = reverse_step(soft, TypeState::one_hot(types), 500, 0, s, 11);
        CHECK(one.probs == skip.probs);
        CHECK(one.is_hard());
        CHECK_THROWS(reverse_step(soft, TypeState::one_hot(types), 5, 5, s, 1));
        CHECK_THROWS(reverse_step(soft, TypeState::one_hot(types), 5, -1, s, 1));
    }

    TEST_CASE("softmax rows and argmax ties") {
        Eigen::MatrixXd x(2, 4);
        x << 1.0, 3.0, 3.0, -2.0, 1000.0, 1000.0, 0.0, 999.0;
        const auto p = softmax_rows(x);
        check_rows_stochastic(p, 1e-12);
        Eigen::MatrixXd shifted = x.array() + 17.5;
        CHECK((softmax_rows(shifted) - p).cwiseAbs().maxCoeff() < 1e-15);
        CHECK(TypeState{p}.argmax() == std::vector<int>{1, 0});
    }
}
