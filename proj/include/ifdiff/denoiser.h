#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ifdiff/diffusion.h"
#include "ifdiff/featurizer.h"
#include "ifdiff/tensor.h"

namespace ifdiff {

struct DenoiserConfig {
    int hidden = 128;
    int n_layers = 6;
    ad::Activation act = ad::Activation::kGelu;
    bool use_shared_center = true;
    bool freeze_type_emb = false;
    int k = kDefaultK;
    int T = 500;
    ScheduleKind schedule = ScheduleKind::kCosine;
    std::uint64_t init_seed = 0;

    bool operator==(const DenoiserConfig&) const = default;
};

// Owns every learnable tensor in a fixed registration order; the order defines the checkpoint layout.
class ParamStore {
public:
    ad::Parameter& add(std::string name, ad::Matrix value, bool trainable = true);
    ad::Parameter& get(const std::string& name);
    const ad::Parameter& get(const std::string& name) const;
    std::vector<ad::Parameter*> all();
    std::vector<const ad::Parameter*> all() const;
    std::size_t count() const { return params_.size(); }
    std::size_t n_scalars() const;
    void zero_grad();

private:
    std::vector<std::unique_ptr<ad::Parameter>> params_;
};

struct Linear {
    ad::Parameter* weight = nullptr;  // in x out
    ad::Parameter* bias = nullptr;    // 1 x out, optional

    ad::Var operator()(ad::Tape& tape, const ad::Var& x) const;
};

struct LayerNormParams {
    ad::Parameter* gain = nullptr;
    ad::Parameter* bias = nullptr;

    ad::Var operator()(ad::Tape& tape, const ad::Var& x) const;
};

// Gated fusion of a primary stream a with a conditioning stream b:
//   g1 = sigmoid(L1[b; a]), g2 = sigmoid(L2[b; a])
//   n = Act(Lb(b) + g1 * La(a)),  out = g2 * a + (1 - g2) * n
struct CellParams {
    Linear gate1;
    Linear gate2;
    Linear lin_b;
    Linear lin_a;
};

struct MessagePassingParams {
    Linear edge_proj;
    LayerNormParams norm;
    CellParams cell;
    Linear update1;
    Linear update2;
};

struct SharedCenterParams {
    LayerNormParams norm;
    ad::Parameter* seed = nullptr;  // 1 x d virtual shared node
    ad::Parameter* w_q = nullptr;
    ad::Parameter* w_k = nullptr;
    ad::Parameter* w_v = nullptr;
    CellParams cell;
};

struct AlignmentParams {
    LayerNormParams norm;
    ad::Parameter* type_emb = nullptr;  // 20 x d
    ad::Parameter* w_q = nullptr;
    ad::Parameter* w_k = nullptr;
    ad::Parameter* w_v = nullptr;
};

struct TimeParams {
    Linear hidden;
    Linear out;  // d -> 2d, split into (gamma, beta)
};

struct LayerParams {
    MessagePassingParams mp;
    SharedCenterParams sc;
    AlignmentParams ra;
    TimeParams time;
};

struct HeadParams {
    Linear ss_embed;  // 8 -> d
    Linear hidden;
    Linear out;  // d -> 20
};

struct LayerTrace {
    ad::Matrix node_repr;   // N x d after time conditioning
    ad::Matrix align_attn;  // N x 20
    ad::Matrix sc_attn;     // 1 x N, empty when the shared center is disabled
};

struct ForwardResult {
    ad::Var logits;                 // N x 20
    std::vector<ad::Var> align;     // per layer, N x 20
    std::vector<LayerTrace> trace;  // filled when requested
};

ad::Var cell(ad::Tape& tape, const ad::Var& a, const ad::Var& b, const CellParams& p, ad::Activation act);

// h' = h + MLP([LN(h); sum_j cell([LN(h)_i; LN(h)_j], e_ij)])
ad::Var message_passing_layer(ad::Tape& tape, const ad::Var& h, const ad::Var& edge_feats, const std::vector<Edge>& edges,
                              const MessagePassingParams& p, ad::Activation act);

struct SharedCenterOut {
    ad::Var h;
    ad::Var attn;  // 1 x N
};
SharedCenterOut shared_center(ad::Tape& tape, const ad::Var& h, const SharedCenterParams& p, ad::Activation act);

struct AlignmentOut {
    ad::Var h;        // input plus aligned representation
    ad::Var aligned;  // p * V_c
    ad::Var attn;     // N x 20
};
AlignmentOut representation_alignment(ad::Tape& tape, const ad::Var& h, const AlignmentParams& p);

ad::Matrix timestep_embedding(int t, int width);
ad::Var time_condition(ad::Tape& tape, const ad::Var& h, int t, const TimeParams& p, ad::Activation act);

ad::Var output_head(ad::Tape& tape, const ad::Var& h, const std::vector<int>& ss_classes, const HeadParams& p,
                    ad::Activation act);

class Denoiser {
public:
    explicit Denoiser(const DenoiserConfig& config);
    Denoiser(const Denoiser&) = delete;
    Denoiser& operator=(const Denoiser&) = delete;

    const DenoiserConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const std::vector<LayerParams>& layers() const { return layers_; }
    const HeadParams& head() const { return head_; }

    // st_hard: N x 20 noisy state; logits predict the clean types.
    ForwardResult forward(ad::Tape& tape, const TypeState& st_hard, int t, const ResidueGraph& graph,
                          bool keep_trace = false) const;

private:
    DenoiserConfig config_;
    ParamStore params_;
    Linear input_proj_;
    std::vector<LayerParams> layers_;
    HeadParams head_;
};

}  // namespace ifdiff
