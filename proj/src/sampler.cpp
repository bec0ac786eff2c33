#include "ifdiff/sampler.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <thread>

#include "ifdiff/dataset.h"
#include "ifdiff/errors.h"
#include "ifdiff/rng.h"

namespace ifdiff {

std::vector<std::pair<int, int>> stride_schedule(int T, int stride) {
    if (stride < 1) throw ConfigError("stride must be >= 1");
    if (T < 1) throw ConfigError("T must be >= 1");
    std::vector<std::pair<int, int>> steps;
    for (int t = T; t > 0; t -= stride) steps.emplace_back(t, std::max(t - stride, 0));
    return steps;
}

SampleResult sample_sequence(const ResidueGraph& graph, const Denoiser& model, const TransitionSchedule& schedule,
                             int stride, std::uint64_t seed) {
    SampleResult out;
    out.trace.steps = stride_schedule(schedule.T, stride);

    Rng prior(derive_seed({seed, 0x9e10}));
    std::vector<int> init(static_cast<std::size_t>(graph.n_nodes));
    for (auto& x : init) x = static_cast<int>(prior.uniform_int(0, schedule.d - 1));
    TypeState state = TypeState::one_hot(init, schedule.d);

    for (const auto& [t, t_prev] : out.trace.steps) {
        ad::Tape tape(false);
        const bool last = t_prev == 0;
        auto fwd = model.forward(tape, state, t, graph, last);
        ++out.trace.denoiser_calls;
        if (!fwd.logits.value().allFinite()) throw NumericFault("non-finite logits at t=" + std::to_string(t));
        state = reverse_step(fwd.logits.value(), state, t, t_prev, schedule, derive_seed({seed, static_cast<std::uint64_t>(t)}));
        out.trace.states.push_back(state.argmax());
        if (last) {
            out.trace.final_logits = fwd.logits.value();
            out.trace.layers = std::move(fwd.trace);
        }
    }
    out.types = TypeState{out.trace.final_logits}.argmax();
    return out;
}

double recovery(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size()) {
        throw ShapeError("recovery: predicted length " + std::to_string(pred.size()) + " != true length " +
                         std::to_string(truth.size()));
    }
    if (pred.empty()) return 0.0;
    std::size_t same = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) same += pred[i] == truth[i];
    return static_cast<double>(same) / static_cast<double>(pred.size());
}

double cross_entropy_sum(const ad::Matrix& logits, const std::vector<int>& truth) {
    if (static_cast<Eigen::Index>(truth.size()) != logits.rows()) throw ShapeError("cross_entropy_sum: length mismatch");
    double total = 0.0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double mx = logits.row(r).maxCoeff();
        const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
        total += lse - logits(r, truth[static_cast<std::size_t>(r)]);
    }
    return total;
}

double perplexity(const ad::Matrix& logits, const std::vector<int>& truth) {
    if (truth.empty()) return 1.0;
    return std::exp(cross_entropy_sum(logits, truth) / static_cast<double>(truth.size()));
}

Split split_from_string(const std::string& name) {
    if (name == "short") return Split::kShort;
    if (name == "single") return Split::kSingle;
    if (name == "all") return Split::kAll;
    throw ConfigError("unknown split: " + name + " (expected short, single or all)");
}

std::string to_string(Split split) {
    switch (split) {
        case Split::kShort: return "short";
        case Split::kSingle: return "single";
        case Split::kAll: return "all";
    }
    return "all";
}

bool in_split(int n_residues, int n_chain_breaks, Split split) {
    switch (split) {
        case Split::kShort: return n_residues < 100;
        case Split::kSingle: return n_chain_breaks == 0;
        case Split::kAll: return true;
    }
    return true;
}

std::string split_flags(int n_residues, int n_chain_breaks) {
    std::string flags = "all";
    if (in_split(n_residues, n_chain_breaks, Split::kShort)) flags += "|short";
    if (in_split(n_residues, n_chain_breaks, Split::kSingle)) flags += "|single";
    return flags;
}

EvalReport evaluate_graphs(const std::vector<ResidueGraph>& graphs, Split split, const Denoiser& model,
                           const TransitionSchedule& schedule, const EvalOptions& options) {
    EvalReport report;
    report.split = split;
    std::vector<const ResidueGraph*> selected;
    for (const auto& g : graphs) {
        if (in_split(g.n_nodes, g.n_chain_breaks, split)) selected.push_back(&g);
    }
    report.proteins.resize(selected.size());
    std::vector<double> ce_sums(selected.size(), 0.0);

    auto run = [&](std::size_t i) {
        const auto& g = *selected[i];
        auto res = sample_sequence(g, model, schedule, options.stride, derive_seed({options.seed, i}));
        auto& pe = report.proteins[i];
        pe.id = g.id;
        pe.n_residues = g.n_nodes;
        pe.flags = split_flags(g.n_nodes, g.n_chain_breaks);
        pe.recovery = recovery(res.types, g.true_types);
        ce_sums[i] = cross_entropy_sum(res.trace.final_logits, g.true_types);
        pe.perplexity = std::exp(ce_sums[i] / std::max(1, g.n_nodes));
        pe.predicted = std::move(res.types);
    };

    const std::size_t n_threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(options.jobs, 1)), 1,
                                                          std::max<std::size_t>(selected.size(), 1));
    if (n_threads == 1) {
        for (std::size_t i = 0; i < selected.size(); ++i) run(i);
    } else {
        std::vector<std::exception_ptr> errors(n_threads);
        std::vector<std::thread> workers;
        for (std::size_t w = 0; w < n_threads; ++w) {
            workers.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < selected.size(); i += n_threads) run(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : workers) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    if (report.proteins.empty()) return report;
    std::vector<double> recs;
    double ce_total = 0.0;
    for (std::size_t i = 0; i < report.proteins.size(); ++i) {
        recs.push_back(report.proteins[i].recovery);
        report.total_residues += report.proteins[i].n_residues;
        ce_total += ce_sums[i];
    }
    std::sort(recs.begin(), recs.end());
    const auto n = recs.size();
    report.median_recovery = n % 2 ? recs[n / 2] : 0.5 * (recs[n / 2 - 1] + recs[n / 2]);
    double sum = 0.0;
    for (double r : recs) sum += r;
    report.mean_recovery = sum / static_cast<double>(n);
    report.pooled_perplexity = std::exp(ce_total / static_cast<double>(std::max(1L, report.total_residues)));
    return report;
}

EvalReport evaluate_split(const std::string& dataset_dir, Split split, const Denoiser& model,
                          const TransitionSchedule& schedule, const EvalOptions& options) {
    auto data = load_dataset(dataset_dir);
    auto graphs = featurize_all(data.proteins, model.config().k, "", options.jobs, nullptr);
    return evaluate_graphs(graphs, split, model, schedule, options);
}

void write_report_csv(std::ostream& out, const EvalReport& report) {
    out << "protein_id,n_residues,split_flags,recovery,perplexity\n";
    out << std::setprecision(10);
    for (const auto& p : report.proteins) {
        out << p.id << ',' << p.n_residues << ',' << p.flags << ',' << p.recovery << ',' << p.perplexity << '\n';
    }
    const auto split = to_string(report.split);
    out << "SUMMARY_MEDIAN," << report.total_residues << ',' << split << ',' << report.median_recovery << ','
        << report.pooled_perplexity << '\n';
    out << "SUMMARY_MEAN," << report.total_residues << ',' << split << ',' << report.mean_recovery << ','
        << report.pooled_perplexity << '\n';
}

}  // namespace ifdiff
