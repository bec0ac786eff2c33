#include "ifdiff/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include "ifdiff/errors.h"
#include "ifdiff/rng.h"

namespace ifdiff {

using ad::Matrix;
using ad::Var;

ad::Var attention_loss(const Var& probs, const std::vector<int>& truth) { return ad::nll_probs(probs, truth, 1e-12); }

ad::Var prediction_loss(const Var& logits, const std::vector<int>& truth) { return ad::cross_entropy(logits, truth); }

double total_loss(double l_pred, double l_attn, double alpha, double lambda) { return alpha * l_pred + lambda * l_attn; }

ad::Var total_loss(const Var& l_pred, const Var& l_attn, double alpha, double lambda) {
    return ad::add(ad::scale(l_pred, alpha), ad::scale(l_attn, lambda));
}

LossTerms compute_losses(const ForwardResult& fwd, const std::vector<int>& truth, const TrainConfig& config) {
    LossTerms out;
    out.pred = prediction_loss(fwd.logits, truth);
    if (config.attn_all_layers) {
        Var acc = attention_loss(fwd.align.front(), truth);
        for (std::size_t l = 1; l < fwd.align.size(); ++l) acc = ad::add(acc, attention_loss(fwd.align[l], truth));
        out.attn = ad::scale(acc, 1.0 / static_cast<double>(fwd.align.size()));
    } else {
        out.attn = attention_loss(fwd.align.back(), truth);
    }
    out.total = total_loss(out.pred, out.attn, config.alpha, config.lambda);
    return out;
}

std::vector<std::size_t> batch_indices(std::size_t n_proteins, int batch_size, std::uint64_t step, std::uint64_t seed) {
    if (n_proteins == 0) throw DatasetError("E_EMPTY_DATASET", "no proteins to train on");
    const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(batch_size), n_proteins);
    std::vector<std::size_t> out;
    out.reserve(b);
    std::uint64_t cached_epoch = UINT64_MAX;
    std::vector<std::size_t> perm(n_proteins);
    for (std::size_t s = 0; s < b; ++s) {
        const std::uint64_t pos = step * b + s;
        const std::uint64_t epoch = pos / n_proteins;
        if (epoch != cached_epoch) {
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            Rng rng(derive_seed({seed, epoch, 0xba7c4}));
            for (std::size_t i = n_proteins; i > 1; --i) {
                const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
                std::swap(perm[i - 1], perm[j]);
            }
            cached_epoch = epoch;
        }
        out.push_back(perm[pos % n_proteins]);
    }
    return out;
}

Trainer::Trainer(const DenoiserConfig& model, const TrainConfig& train)
    : model_(std::make_unique<Denoiser>(model)), train_(train), schedule_(make_schedule(model.T, model.schedule)) {
    validate(train_);
    for (const auto* p : model_->params().all()) {
        m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
}

Trainer::Trainer(const Checkpoint& ckpt) : Trainer(ckpt.model, ckpt.train) {
    restore_params(model_->params(), ckpt);
    for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
        model_->params().all()[i]->grad = ckpt.tensors[i].grad;
        m_[i] = ckpt.tensors[i].m;
        v_[i] = ckpt.tensors[i].v;
    }
    step_ = ckpt.step;
    n_updates_ = ckpt.n_updates;
}

StepMetrics Trainer::train_step(const std::vector<const ResidueGraph*>& batch) {
    if (batch.empty()) throw DatasetError("E_EMPTY_DATASET", "empty micro-batch");
    const double weight = 1.0 / (static_cast<double>(batch.size()) * train_.grad_accum_steps);
    StepMetrics metrics;
    metrics.step = step_;
    for (std::size_t slot = 0; slot < batch.size(); ++slot) {
        const ResidueGraph& g = *batch[slot];
        try {
            Rng rng(derive_seed({train_.seed, step_, slot, 1}));
            const int t = static_cast<int>(rng.uniform_int(1, schedule_.T));
            const auto s0 = TypeState::one_hot(g.true_types);
            const auto st = forward_sample(s0, t, schedule_, derive_seed({train_.seed, step_, slot, 2}));
            ad::Tape tape;
            auto fwd = model_->forward(tape, st, t, g);
            auto losses = compute_losses(fwd, g.true_types, train_);
            metrics.l_pred += losses.pred.scalar() / static_cast<double>(batch.size());
            metrics.l_attn += losses.attn.scalar() / static_cast<double>(batch.size());
            metrics.total += losses.total.scalar() / static_cast<double>(batch.size());
            tape.backward(ad::scale(losses.total, weight));
        } catch (const NumericFault& e) {
            model_->params().zero_grad();
            throw NumericFault("protein " + g.id + ": " + e.what());
        }
    }

    double sq = 0.0;
    for (const auto* p : model_->params().all()) {
        if (p->trainable) sq += p->grad.squaredNorm();
    }
    metrics.grad_norm = std::sqrt(sq);
    if (!std::isfinite(metrics.grad_norm)) {
        model_->params().zero_grad();
        throw NumericFault("non-finite gradient norm at step " + std::to_string(step_));
    }
    ++step_;
    if (step_ % static_cast<std::uint64_t>(train_.grad_accum_steps) == 0) {
        apply_update(metrics.grad_norm);
        metrics.updated = true;
    }
    return metrics;
}

StepMetrics Trainer::step_on(const std::vector<ResidueGraph>& dataset) {
    const auto idx = batch_indices(dataset.size(), train_.batch_size, step_, train_.seed);
    std::vector<const ResidueGraph*> batch;
    batch.reserve(idx.size());
    for (auto i : idx) batch.push_back(&dataset[i]);
    return train_step(batch);
}

void Trainer::apply_update(double grad_norm) {
    ++n_updates_;
    const double clip = grad_norm > train_.clip_norm ? train_.clip_norm / grad_norm : 1.0;
    const double bc1 = 1.0 - std::pow(train_.beta1, static_cast<double>(n_updates_));
    const double bc2 = 1.0 - std::pow(train_.beta2, static_cast<double>(n_updates_));
    auto params = model_->params().all();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto* p = params[i];
        if (p->trainable) {
            const Matrix g = p->grad * clip;
            m_[i] = train_.beta1 * m_[i] + (1.0 - train_.beta1) * g;
            v_[i] = train_.beta2 * v_[i] + (1.0 - train_.beta2) * g.cwiseProduct(g);
            const auto mhat = m_[i].array() / bc1;
            const auto vhat = v_[i].array() / bc2;
            p->value.array() -= train_.lr * (mhat / (vhat.sqrt() + train_.adam_eps) + train_.weight_decay * p->value.array());
        }
        p->zero_grad();
    }
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint ckpt;
    ckpt.model = model_->config();
    ckpt.train = train_;
    ckpt.step = step_;
    ckpt.n_updates = n_updates_;
    const auto params = model_->params().all();
    for (std::size_t i = 0; i < params.size(); ++i) {
        ckpt.tensors.push_back({params[i]->name, params[i]->value, params[i]->grad, m_[i], v_[i]});
    }
    return ckpt;
}

void restore_params(ParamStore& params, const Checkpoint& ckpt) {
    auto all = params.all();
    if (all.size() != ckpt.tensors.size()) {
        throw CheckpointError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                              std::to_string(all.size()));
    }
    for (std::size_t i = 0; i < all.size(); ++i) {
        const auto& rec = ckpt.tensors[i];
        auto* p = all[i];
        if (rec.name != p->name) throw CheckpointError("tensor " + std::to_string(i) + " is '" + rec.name + "', expected '" + p->name + "'");
        if (rec.value.rows() != p->value.rows() || rec.value.cols() != p->value.cols()) {
            throw ShapeError("checkpoint tensor '" + rec.name + "' has shape " + std::to_string(rec.value.rows()) + "x" +
                             std::to_string(rec.value.cols()) + ", model expects " + std::to_string(p->value.rows()) + "x" +
                             std::to_string(p->value.cols()));
        }
        p->value = rec.value;
    }
}

std::unique_ptr<Denoiser> model_from_checkpoint(const Checkpoint& ckpt) {
    auto model = std::make_unique<Denoiser>(ckpt.model);
    restore_params(model->params(), ckpt);
    return model;
}

void write_log_header(std::ostream& log) { log << "step,l_pred,l_attn,total,grad_norm,wallclock\n"; }

void train_loop(Trainer& trainer, const std::vector<ResidueGraph>& dataset, long steps, std::ostream* log,
                const std::function<bool(const StepMetrics&)>& on_step) {
    const auto start = std::chrono::steady_clock::now();
    for (long i = 0; i < steps; ++i) {
        const auto m = trainer.step_on(dataset);
        if (log) {
            const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            (*log) << m.step << ',' << m.l_pred << ',' << m.l_attn << ',' << m.total << ',' << m.grad_norm << ',' << wall
                   << '\n';
        }
        if (on_step && !on_step(m)) break;
    }
    if (log) log->flush();
}

}  // namespace ifdiff
