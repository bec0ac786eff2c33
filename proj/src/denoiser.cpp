#include "ifdiff/denoiser.h"

#include <cmath>

#include "ifdiff/errors.h"
#include "ifdiff/rng.h"

namespace ifdiff {

using ad::Matrix;
using ad::Tape;
using ad::Var;

ad::Parameter& ParamStore::add(std::string name, Matrix value, bool trainable) {
    auto p = std::make_unique<ad::Parameter>();
    p->name = std::move(name);
    p->value = std::move(value);
    p->trainable = trainable;
    p->zero_grad();
    params_.push_back(std::move(p));
    return *params_.back();
}

ad::Parameter& ParamStore::get(const std::string& name) {
    for (auto& p : params_) {
        if (p->name == name) return *p;
    }
    throw ConfigError("no parameter named " + name);
}

const ad::Parameter& ParamStore::get(const std::string& name) const {
    return const_cast<ParamStore*>(this)->get(name);
}

std::vector<ad::Parameter*> ParamStore::all() {
    std::vector<ad::Parameter*> out;
    for (auto& p : params_) out.push_back(p.get());
    return out;
}

std::vector<const ad::Parameter*> ParamStore::all() const {
    std::vector<const ad::Parameter*> out;
    for (const auto& p : params_) out.push_back(p.get());
    return out;
}

std::size_t ParamStore::n_scalars() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p->zero_grad();
}

Var Linear::operator()(Tape& tape, const Var& x) const {
    Var y = ad::matmul(x, tape.param(*weight));
    return bias ? ad::add_row(y, tape.param(*bias)) : y;
}

Var LayerNormParams::operator()(Tape& tape, const Var& x) const {
    return ad::layer_norm(x, tape.param(*gain), tape.param(*bias));
}

Var cell(Tape& tape, const Var& a, const Var& b, const CellParams& p, ad::Activation act) {
    if (a.rows() != b.rows()) throw ShapeError("cell: stream row counts differ");
    Var ba = ad::concat_cols({b, a});
    Var g1 = ad::sigmoid(p.gate1(tape, ba));
    Var g2 = ad::sigmoid(p.gate2(tape, ba));
    Var n = ad::activate(ad::add(p.lin_b(tape, b), ad::mul(g1, p.lin_a(tape, a))), act);
    return ad::add(ad::mul(g2, a), ad::mul(ad::one_minus(g2), n));
}

Var message_passing_layer(Tape& tape, const Var& h, const Var& edge_feats, const std::vector<Edge>& edges,
                          const MessagePassingParams& p, ad::Activation act) {
    std::vector<int> src(edges.size());
    std::vector<int> dst(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
        src[e] = edges[e].src;
        dst[e] = edges[e].dst;
    }
    Var hn = p.norm(tape, h);
    Var e = p.edge_proj(tape, edge_feats);
    Var m = ad::concat_cols({ad::gather_rows(hn, dst), ad::gather_rows(hn, src)});
    Var m_fused = cell(tape, m, e, p.cell, act);
    Var agg = ad::scatter_sum(m_fused, dst, h.rows());
    Var upd = p.update2(tape, ad::activate(p.update1(tape, ad::concat_cols({hn, agg})), act));
    return ad::add(h, upd);
}

SharedCenterOut shared_center(Tape& tape, const Var& h, const SharedCenterParams& p, ad::Activation act) {
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(h.cols()));
    Var hn = p.norm(tape, h);
    Var q = ad::matmul(tape.param(*p.seed), tape.param(*p.w_q));
    Var k = ad::matmul(hn, tape.param(*p.w_k));
    Var v = ad::matmul(hn, tape.param(*p.w_v));
    Var attn = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), inv_sqrt_d));
    Var context = ad::matmul(attn, v);
    Var broadcast = ad::gather_rows(context, std::vector<int>(static_cast<std::size_t>(h.rows()), 0));
    Var fused = cell(tape, broadcast, hn, p.cell, act);
    return {ad::add(h, fused), attn};
}

AlignmentOut representation_alignment(Tape& tape, const Var& h, const AlignmentParams& p) {
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(h.cols()));
    Var hn = p.norm(tape, h);
    Var types = tape.param(*p.type_emb);
    Var q = ad::matmul(hn, tape.param(*p.w_q));
    Var k = ad::matmul(types, tape.param(*p.w_k));
    Var v = ad::matmul(types, tape.param(*p.w_v));
    Var attn = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), inv_sqrt_d));
    Var aligned = ad::matmul(attn, v);
    return {ad::add(h, aligned), aligned, attn};
}

Matrix timestep_embedding(int t, int width) {
    Matrix out = Matrix::Zero(1, width);
    const int half = width / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half));
        out(0, i) = std::sin(t * freq);
        out(0, half + i) = std::cos(t * freq);
    }
    return out;
}

Var time_condition(Tape& tape, const Var& h, int t, const TimeParams& p, ad::Activation act) {
    const auto d = h.cols();
    Var emb = tape.constant(timestep_embedding(t, static_cast<int>(d)));
    Var gb = p.out(tape, ad::activate(p.hidden(tape, emb), act));
    return ad::scale_shift(h, ad::slice_cols(gb, 0, d), ad::slice_cols(gb, d, d));
}

Var output_head(Tape& tape, const Var& h, const std::vector<int>& ss_classes, const HeadParams& p, ad::Activation act) {
    if (static_cast<Eigen::Index>(ss_classes.size()) != h.rows()) throw ShapeError("output_head: ss length mismatch");
    Matrix ss = Matrix::Zero(h.rows(), kNumSsClasses);
    for (std::size_t i = 0; i < ss_classes.size(); ++i) {
        const int c = ss_classes[i];
        if (c < 0 || c >= kNumSsClasses) throw ShapeError("output_head: ss class out of range at residue " + std::to_string(i));
        ss(static_cast<Eigen::Index>(i), c) = 1.0;
    }
    Var z = ad::add(h, p.ss_embed(tape, tape.constant(std::move(ss))));
    return p.out(tape, ad::activate(p.hidden(tape, z), act));
}

namespace {

Matrix gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
    return m;
}

class Builder {
public:
    Builder(ParamStore& store, Rng& rng) : store_(store), rng_(rng) {}

    ad::Parameter* weight(const std::string& name, Eigen::Index in, Eigen::Index out, double gain = 1.0) {
        return &store_.add(name, gaussian(rng_, in, out, gain / std::sqrt(static_cast<double>(in))));
    }

    Linear linear(const std::string& name, Eigen::Index in, Eigen::Index out, double gain = 1.0) {
        Linear l;
        l.weight = weight(name + ".w", in, out, gain);
        l.bias = &store_.add(name + ".b", Matrix::Zero(1, out));
        return l;
    }

    LayerNormParams norm(const std::string& name, Eigen::Index d) {
        return {&store_.add(name + ".gain", Matrix::Ones(1, d)), &store_.add(name + ".bias", Matrix::Zero(1, d))};
    }

    CellParams cell(const std::string& name, Eigen::Index a_width, Eigen::Index b_width) {
        return {linear(name + ".gate1", a_width + b_width, a_width), linear(name + ".gate2", a_width + b_width, a_width),
                linear(name + ".lin_b", b_width, a_width), linear(name + ".lin_a", a_width, a_width)};
    }

    ad::Parameter* embedding(const std::string& name, Eigen::Index rows, Eigen::Index cols, bool trainable = true) {
        return &store_.add(name, gaussian(rng_, rows, cols, 1.0), trainable);
    }

private:
    ParamStore& store_;
    Rng& rng_;
};

}  // namespace

Denoiser::Denoiser(const DenoiserConfig& config) : config_(config) {
    if (config.hidden < 2 || config.n_layers < 1) throw ConfigError("denoiser needs hidden >= 2 and n_layers >= 1");
    const Eigen::Index d = config.hidden;
    Rng rng(derive_seed({config.init_seed, 0x1e1d}));
    Builder b(params_, rng);
    input_proj_ = b.linear("input_proj", kNumTypes + kNodeFeatWidth, d);
    for (int l = 0; l < config.n_layers; ++l) {
        const std::string pre = "layer" + std::to_string(l);
        LayerParams lp;
        lp.mp.edge_proj = b.linear(pre + ".mp.edge_proj", kEdgeFeatWidth, d);
        lp.mp.norm = b.norm(pre + ".mp.norm", d);
        lp.mp.cell = b.cell(pre + ".mp.cell", 2 * d, d);
        lp.mp.update1 = b.linear(pre + ".mp.update1", 3 * d, d);
        lp.mp.update2 = b.linear(pre + ".mp.update2", d, d);
        if (config.use_shared_center) {
            lp.sc.norm = b.norm(pre + ".sc.norm", d);
            lp.sc.seed = b.embedding(pre + ".sc.seed", 1, d);
            lp.sc.w_q = b.weight(pre + ".sc.w_q", d, d);
            lp.sc.w_k = b.weight(pre + ".sc.w_k", d, d);
            lp.sc.w_v = b.weight(pre + ".sc.w_v", d, d);
            lp.sc.cell = b.cell(pre + ".sc.cell", d, d);
        }
        lp.ra.norm = b.norm(pre + ".ra.norm", d);
        lp.ra.type_emb = b.embedding(pre + ".ra.type_emb", kNumTypes, d, !config.freeze_type_emb);
        lp.ra.w_q = b.weight(pre + ".ra.w_q", d, d);
        lp.ra.w_k = b.weight(pre + ".ra.w_k", d, d);
        lp.ra.w_v = b.weight(pre + ".ra.w_v", d, d);
        lp.time.hidden = b.linear(pre + ".time.hidden", d, d);
        lp.time.out = b.linear(pre + ".time.out", d, 2 * d);
        layers_.push_back(lp);
    }
    head_.ss_embed = b.linear("head.ss_embed", kNumSsClasses, d);
    head_.hidden = b.linear("head.hidden", d, d);
    // output projection at a tenth of the usual gain
    head_.out = b.linear("head.out", d, kNumTypes, 0.1);
}

ForwardResult Denoiser::forward(Tape& tape, const TypeState& st_hard, int t, const ResidueGraph& graph,
                                bool keep_trace) const {
    const auto n = static_cast<Eigen::Index>(graph.n_nodes);
    if (st_hard.probs.rows() != n || st_hard.probs.cols() != kNumTypes) {
        throw ShapeError("denoiser: state is " + std::to_string(st_hard.probs.rows()) + "x" +
                         std::to_string(st_hard.probs.cols()) + " but graph has " + std::to_string(n) + " nodes");
    }
    if (graph.node_feats.rows() != n || graph.node_feats.cols() != kNodeFeatWidth ||
        graph.edge_feats.rows() != static_cast<Eigen::Index>(graph.edges.size()) ||
        graph.edge_feats.cols() != kEdgeFeatWidth) {
        throw ShapeError("denoiser: graph feature shapes are inconsistent");
    }

    Matrix input(n, kNumTypes + kNodeFeatWidth);
    input.leftCols(kNumTypes) = st_hard.probs;
    input.rightCols(kNodeFeatWidth) = graph.node_feats;
    Var edge_feats = tape.constant(graph.edge_feats);

    ForwardResult out;
    Var h = input_proj_(tape, tape.constant(std::move(input)));
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& lp = layers_[l];
        try {
            h = message_passing_layer(tape, h, edge_feats, graph.edges, lp.mp, config_.act);
            Var sc_attn;
            if (config_.use_shared_center) {
                auto sc = shared_center(tape, h, lp.sc, config_.act);
                h = sc.h;
                sc_attn = sc.attn;
            }
            auto ra = representation_alignment(tape, h, lp.ra);
            h = time_condition(tape, ra.h, t, lp.time, config_.act);
            out.align.push_back(ra.attn);
            if (keep_trace) {
                out.trace.push_back({h.value(), ra.attn.value(), sc_attn.valid() ? sc_attn.value() : Matrix()});
            }
        } catch (const NumericFault& e) {
            throw NumericFault("layer " + std::to_string(l) + ": " + e.what());
        }
    }
    try {
        out.logits = output_head(tape, h, graph.ss_classes, head_, config_.act);
    } catch (const NumericFault& e) {
        throw NumericFault(std::string("output head: ") + e.what());
    }
    return out;
}

}  // namespace ifdiff
