#include "ifdiff/analysis.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "ifdiff/amino.h"
#include "ifdiff/errors.h"
#include "ifdiff/rng.h"

namespace ifdiff {

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw ShapeError("kl_divergence: histogram sizes differ");
    double kl = 0.0;
    for (std::size_t b = 0; b < p.size(); ++b) {
        if (p[b] > 0.0) kl += p[b] * std::log(p[b] / q[b]);
    }
    return std::max(kl, 0.0);
}

std::pair<std::vector<double>, std::vector<double>> paired_histograms(const Eigen::Ref<const Eigen::VectorXd>& a,
                                                                      const Eigen::Ref<const Eigen::VectorXd>& b,
                                                                      int bins, double eps) {
    const double lo0 = std::min(a.minCoeff(), b.minCoeff());
    const double hi0 = std::max(a.maxCoeff(), b.maxCoeff());
    double pad = 0.01 * (hi0 - lo0);
    if (pad <= 0.0) pad = 0.01 * std::max(1.0, std::abs(lo0));
    const double lo = lo0 - pad;
    const double width = (hi0 + pad - lo) / bins;

    auto hist = [&](const Eigen::Ref<const Eigen::VectorXd>& x) {
        std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const int bin = std::clamp(static_cast<int>((x[i] - lo) / width), 0, bins - 1);
            h[static_cast<std::size_t>(bin)] += 1.0;
        }
        const double total = static_cast<double>(x.size()) + eps * bins;
        for (auto& v : h) v = (v + eps) / total;
        return h;
    };
    return {hist(a), hist(b)};
}

LayerKl layer_kl(const std::vector<LayerTrace>& trace, int bins, double eps) {
    if (trace.size() < 2) throw ShapeError("layer_kl needs at least 2 layers");
    LayerKl out;
    if (trace.front().node_repr.rows() < 2) {
        out.degenerate = true;
        return out;
    }
    for (std::size_t l = 0; l + 1 < trace.size(); ++l) {
        const auto& a = trace[l].node_repr;
        const auto& b = trace[l + 1].node_repr;
        if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("layer_kl: layer shapes differ");
        double total = 0.0;
        for (Eigen::Index c = 0; c < a.cols(); ++c) {
            const Eigen::VectorXd ca = a.col(c);
            const Eigen::VectorXd cb = b.col(c);
            auto [p, q] = paired_histograms(ca, cb, bins, eps);
            total += kl_divergence(p, q);
        }
        const double mean = total / static_cast<double>(a.cols());
        out.log_kl.push_back(std::log(std::max(mean, eps)));
    }
    return out;
}

void write_kl_csv(std::ostream& out, const LayerKl& kl) {
    out << "layer_pair,log_kl\n";
    if (kl.degenerate) {
        out << "# degenerate: single-node trace\n";
        return;
    }
    out << std::setprecision(12);
    for (std::size_t l = 0; l < kl.log_kl.size(); ++l) out << l << ',' << kl.log_kl[l] << '\n';
}

void export_alignment_attention(std::ostream& out, const std::vector<LayerTrace>& trace, const std::vector<int>& true_types,
                                const std::vector<int>& predicted) {
    out << "layer,residue_index,true_type,predicted_type";
    for (char c : kAlphabet) out << ",w_" << c;
    out << '\n';
    out << std::setprecision(17);
    for (std::size_t l = 0; l < trace.size(); ++l) {
        const auto& attn = trace[l].align_attn;
        if (attn.rows() != static_cast<Eigen::Index>(true_types.size()) ||
            attn.rows() != static_cast<Eigen::Index>(predicted.size())) {
            throw ShapeError("export_alignment_attention: residue count mismatch at layer " + std::to_string(l));
        }
        for (Eigen::Index i = 0; i < attn.rows(); ++i) {
            out << l << ',' << i << ',' << type_letter(true_types[static_cast<std::size_t>(i)]) << ','
                << type_letter(predicted[static_cast<std::size_t>(i)]);
            for (Eigen::Index c = 0; c < attn.cols(); ++c) out << ',' << attn(i, c);
            out << '\n';
        }
    }
}

double alignment_top1(const std::vector<LayerTrace>& trace, const std::vector<int>& true_types) {
    if (trace.empty()) throw ShapeError("alignment_top1: empty trace");
    const auto& attn = trace.back().align_attn;
    if (attn.rows() == 0) return 0.0;
    int hits = 0;
    for (Eigen::Index i = 0; i < attn.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < attn.cols(); ++c) {
            if (attn(i, c) > attn(i, best)) best = c;
        }
        hits += best == true_types[static_cast<std::size_t>(i)];
    }
    return static_cast<double>(hits) / static_cast<double>(attn.rows());
}

std::vector<AblationRow> compare_sc_ablation(const std::vector<ResidueGraph>& graphs, const Denoiser& with_sc,
                                             const Denoiser& without_sc, std::uint64_t seed) {
    auto a = with_sc.config();
    auto b = without_sc.config();
    b.use_shared_center = a.use_shared_center;
    if (!(a == b)) throw ConfigError("sc-ablation checkpoints differ in more than the shared-center flag");
    if (graphs.empty()) throw DatasetError("E_EMPTY_DATASET", "sc-ablation needs at least one protein");

    const auto schedule = make_schedule(a.T, a.schedule);
    std::vector<AblationRow> rows;
    for (const auto* model : {&with_sc, &without_sc}) {
        std::vector<double> sums(static_cast<std::size_t>(a.n_layers - 1), 0.0);
        int used = 0;
        for (std::size_t i = 0; i < graphs.size(); ++i) {
            const auto& g = graphs[i];
            const auto s0 = TypeState::one_hot(g.true_types);
            const auto st = forward_sample(s0, schedule.T, schedule, derive_seed({seed, i}));
            ad::Tape tape(false);
            auto fwd = model->forward(tape, st, schedule.T, g, true);
            const auto kl = layer_kl(fwd.trace);
            if (kl.degenerate) continue;
            for (std::size_t l = 0; l < kl.log_kl.size(); ++l) sums[l] += kl.log_kl[l];
            ++used;
        }
        for (std::size_t l = 0; l < sums.size(); ++l) {
            rows.push_back({model == &with_sc ? "with_sc" : "without_sc", static_cast<int>(l),
                            used ? sums[l] / used : std::log(kKlSmoothing)});
        }
    }
    return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
    out << "model,layer_pair,log_kl\n" << std::setprecision(12);
    for (const auto& r : rows) out << r.model << ',' << r.layer_pair << ',' << r.log_kl << '\n';
}

void write_schedule_csv(std::ostream& out, const TransitionSchedule& schedule) {
    out << "t,alpha,alpha_bar\n" << std::setprecision(17);
    for (int t = 1; t <= schedule.T; ++t) out << t << ',' << schedule.alpha_at(t) << ',' << schedule.alpha_bar_at(t) << '\n';
}

}  // namespace ifdiff
