#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

#include "ifdiff/checkpoint.h"
#include "ifdiff/config.h"
#include "ifdiff/denoiser.h"
#include "ifdiff/diffusion.h"

namespace ifdiff {

// -(1/N) sum_i log p_i[true_i], log floored at 1e-12.
ad::Var attention_loss(const ad::Var& probs, const std::vector<int>& truth);
// Mean cross-entropy of softmax(logits) against the true types.
ad::Var prediction_loss(const ad::Var& logits, const std::vector<int>& truth);
double total_loss(double l_pred, double l_attn, double alpha, double lambda);
ad::Var total_loss(const ad::Var& l_pred, const ad::Var& l_attn, double alpha, double lambda);

struct LossTerms {
    ad::Var pred;
    ad::Var attn;
    ad::Var total;
};

// Loss for one forward pass; the alignment term uses the deepest layer unless
// attn_all_layers averages over every layer.
LossTerms compute_losses(const ForwardResult& fwd, const std::vector<int>& truth, const TrainConfig& config);

struct StepMetrics {
    std::uint64_t step = 0;
    double l_pred = 0.0;
    double l_attn = 0.0;
    double total = 0.0;
    double grad_norm = 0.0;
    bool updated = false;
};

// Protein indices for micro-batch `step`: consecutive slices of per-epoch seeded permutations.
std::vector<std::size_t> batch_indices(std::size_t n_proteins, int batch_size, std::uint64_t step, std::uint64_t seed);

class Trainer {
public:
    Trainer(const DenoiserConfig& model, const TrainConfig& train);
    explicit Trainer(const Checkpoint& ckpt);

    // One micro-batch. Gradients accumulate; the adaptive-moment update (decoupled weight decay,
    // global-norm clipping) fires every grad_accum_steps calls.
    StepMetrics train_step(const std::vector<const ResidueGraph*>& batch);
    // Picks the micro-batch for the current step from the dataset.
    StepMetrics step_on(const std::vector<ResidueGraph>& dataset);

    Checkpoint checkpoint() const;

    Denoiser& model() { return *model_; }
    const Denoiser& model() const { return *model_; }
    const TrainConfig& config() const { return train_; }
    TrainConfig& config() { return train_; }
    const TransitionSchedule& schedule() const { return schedule_; }
    std::uint64_t step() const { return step_; }
    std::uint64_t n_updates() const { return n_updates_; }

private:
    void apply_update(double grad_norm);

    std::unique_ptr<Denoiser> model_;
    TrainConfig train_;
    TransitionSchedule schedule_;
    std::vector<ad::Matrix> m_;
    std::vector<ad::Matrix> v_;
    std::uint64_t step_ = 0;
    std::uint64_t n_updates_ = 0;
};

void restore_params(ParamStore& params, const Checkpoint& ckpt);
std::unique_ptr<Denoiser> model_from_checkpoint(const Checkpoint& ckpt);

// Runs `steps` micro-batches, writing one CSV row per step
// (step,l_pred,l_attn,total,grad_norm,wallclock). The callback may stop training early by
// returning false.
void train_loop(Trainer& trainer, const std::vector<ResidueGraph>& dataset, long steps, std::ostream* log,
                const std::function<bool(const StepMetrics&)>& on_step = {});

void write_log_header(std::ostream& log);

}  // namespace ifdiff
