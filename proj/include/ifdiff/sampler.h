#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ifdiff/denoiser.h"
#include "ifdiff/diffusion.h"
#include "ifdiff/featurizer.h"

namespace ifdiff {

struct SampleTrace {
    std::vector<std::pair<int, int>> steps;  // (t, t_prev), strictly decreasing, ending at 0
    std::vector<std::vector<int>> states;    // hard state after every step
    ad::Matrix final_logits;                 // N x 20 from the last denoiser call
    std::vector<LayerTrace> layers;          // from the last denoiser call
    int denoiser_calls = 0;
};

struct SampleResult {
    std::vector<int> types;
    SampleTrace trace;
};

// t = T, T - stride, ..., 0. stride = T gives a single denoising step.
std::vector<std::pair<int, int>> stride_schedule(int T, int stride);

SampleResult sample_sequence(const ResidueGraph& graph, const Denoiser& model, const TransitionSchedule& schedule,
                             int stride, std::uint64_t seed);

double recovery(const std::vector<int>& pred, const std::vector<int>& truth);
// Sum over rows of -log softmax(logits)[truth]; pooled perplexity is exp(total / residues).
double cross_entropy_sum(const ad::Matrix& logits, const std::vector<int>& truth);
double perplexity(const ad::Matrix& logits, const std::vector<int>& truth);

enum class Split { kShort, kSingle, kAll };
Split split_from_string(const std::string& name);
std::string to_string(Split split);
bool in_split(int n_residues, int n_chain_breaks, Split split);
std::string split_flags(int n_residues, int n_chain_breaks);

struct ProteinEval {
    std::string id;
    int n_residues = 0;
    std::string flags;
    double recovery = 0.0;
    double perplexity = 0.0;
    std::vector<int> predicted;
};

struct EvalReport {
    Split split = Split::kAll;
    std::vector<ProteinEval> proteins;
    double median_recovery = 0.0;
    double mean_recovery = 0.0;
    double pooled_perplexity = 0.0;
    long total_residues = 0;
};

struct EvalOptions {
    int stride = 500;
    std::uint64_t seed = 0;
    int jobs = 1;
};

EvalReport evaluate_graphs(const std::vector<ResidueGraph>& graphs, Split split, const Denoiser& model,
                           const TransitionSchedule& schedule, const EvalOptions& options);

// Loads, featurizes and evaluates every parseable backbone file in dataset_dir.
EvalReport evaluate_split(const std::string& dataset_dir, Split split, const Denoiser& model,
                          const TransitionSchedule& schedule, const EvalOptions& options);

// protein_id,n_residues,split_flags,recovery,perplexity then SUMMARY_MEDIAN and SUMMARY_MEAN rows.
void write_report_csv(std::ostream& out, const EvalReport& report);

}  // namespace ifdiff
