#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ifdiff/denoiser.h"
#include "ifdiff/diffusion.h"
#include "ifdiff/featurizer.h"

namespace ifdiff {

inline constexpr int kKlBins = 64;
inline constexpr double kKlSmoothing = 1e-9;

// sum_b p_b ln(p_b / q_b)
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

// Smoothed histograms of two samples over a shared range padded by 1% on each side.
std::pair<std::vector<double>, std::vector<double>> paired_histograms(const Eigen::Ref<const Eigen::VectorXd>& a,
                                                                      const Eigen::Ref<const Eigen::VectorXd>& b,
                                                                      int bins = kKlBins, double eps = kKlSmoothing);

struct LayerKl {
    std::vector<double> log_kl;  // entry l compares layer l with layer l + 1
    bool degenerate = false;     // single-node traces cannot support a histogram
};

// For each adjacent layer pair: mean over feature dimensions of KL(P_l || P_{l+1}) between
// per-dimension node-value histograms, reported as ln(max(mean, eps)).
LayerKl layer_kl(const std::vector<LayerTrace>& trace, int bins = kKlBins, double eps = kKlSmoothing);

void write_kl_csv(std::ostream& out, const LayerKl& kl);

// Rows: layer,residue_index,true_type,predicted_type,w_A..w_Y.
void export_alignment_attention(std::ostream& out, const std::vector<LayerTrace>& trace, const std::vector<int>& true_types,
                                const std::vector<int>& predicted);

// Fraction of residues whose final-layer alignment attention peaks at the true type.
double alignment_top1(const std::vector<LayerTrace>& trace, const std::vector<int>& true_types);

struct AblationRow {
    std::string model;  // "with_sc" or "without_sc"
    int layer_pair = 0;
    double log_kl = 0.0;
};

// Paired log-KL series for two checkpoints whose configs agree apart from the shared-center flag,
// averaged over the given proteins. Each protein is probed at t = T with a seeded noisy state.
std::vector<AblationRow> compare_sc_ablation(const std::vector<ResidueGraph>& graphs, const Denoiser& with_sc,
                                             const Denoiser& without_sc, std::uint64_t seed);

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

// t,alpha,alpha_bar
void write_schedule_csv(std::ostream& out, const TransitionSchedule& schedule);

}  // namespace ifdiff
