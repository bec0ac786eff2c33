#include "ifdiff/tensor.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include "ifdiff/errors.h"

namespace ifdiff::ad {

namespace {

std::string shape_of(const Matrix& m) {
    std::ostringstream os;
    os << "(" << m.rows() << "x" << m.cols() << ")";
    return os.str();
}

[[noreturn]] void shape_fail(const char* op, const Var& a, const Var& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_of(a.value()) + " and " + shape_of(b.value()));
}

template <typename Expr>
void accumulate(Node* n, const Expr& g) {
    if (!n->requires_grad) return;
    if (n->grad.size() == 0) {
        n->grad = g;
    } else {
        n->grad += g;
    }
}

bool any_requires(std::initializer_list<Var> vars) {
    for (const auto& v : vars) {
        if (v.requires_grad()) return true;
    }
    return false;
}

Matrix column_sums(const Matrix& m) { return m.colwise().sum(); }

}  // namespace

std::string to_string(Activation act) { return act == Activation::kGelu ? "gelu" : "relu"; }

Activation activation_from_string(const std::string& name) {
    if (name == "gelu") return Activation::kGelu;
    if (name == "relu") return Activation::kRelu;
    throw ConfigError("unknown activation: " + name);
}

Var Tape::record(Matrix value, const char* op, bool requires_grad, std::function<void(const Matrix&)> backward_fn) {
    if (!value.allFinite()) throw NumericFault(std::string("non-finite value produced by op '") + op + "'");
    auto node = std::make_unique<Node>();
    node->value = std::move(value);
    node->op = op;
    node->requires_grad = grad_enabled_ && requires_grad;
    if (node->requires_grad) node->backward = std::move(backward_fn);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.back().get());
}

Var Tape::constant(Matrix value) { return record(std::move(value), "constant", false, nullptr); }

Var Tape::leaf(Matrix value) { return record(std::move(value), "leaf", true, nullptr); }

Var Tape::param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var(this, it->second);
    Var v = record(p.value, "param", p.trainable, nullptr);
    v.node()->param = &p;
    param_nodes_.emplace(&p, v.node());
    return v;
}

void Tape::backward(const Var& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) throw ShapeError("backward needs a 1x1 loss, got " + shape_of(loss.value()));
    if (!loss.requires_grad()) return;
    Node* root = loss.node();
    root->grad = Matrix::Constant(1, 1, 1.0);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node* n = it->get();
        if (n->grad.size() == 0) continue;
        if (n->backward) n->backward(n->grad);
        if (n->param != nullptr) {
            auto& g = n->param->grad;
            if (g.rows() != n->grad.rows() || g.cols() != n->grad.cols()) {
                g = n->grad;
            } else {
                g += n->grad;
            }
        }
    }
}

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) shape_fail("matmul", a, b);
    Node* na = a.node();
    Node* nb = b.node();
    Matrix out = na->value * nb->value;
    return a.tape().record(std::move(out), "matmul", any_requires({a, b}), [na, nb](const Matrix& g) {
        if (na->requires_grad) accumulate(na, g * nb->value.transpose());
        if (nb->requires_grad) accumulate(nb, na->value.transpose() * g);
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    if (a.cols() != b.cols()) shape_fail("matmul_nt", a, b);
    Node* na = a.node();
    Node* nb = b.node();
    Matrix out = na->value * nb->value.transpose();
    return a.tape().record(std::move(out), "matmul_nt", any_requires({a, b}), [na, nb](const Matrix& g) {
        if (na->requires_grad) accumulate(na, g * nb->value);
        if (nb->requires_grad) accumulate(nb, g.transpose() * na->value);
    });
}

Var add(const Var& a, const Var& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("add", a, b);
    Node* na = a.node();
    Node* nb = b.node();
    return a.tape().record(na->value + nb->value, "add", any_requires({a, b}), [na, nb](const Matrix& g) {
        accumulate(na, g);
        accumulate(nb, g);
    });
}

Var sub(const Var& a, const Var& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("sub", a, b);
    Node* na = a.node();
    Node* nb = b.node();
    return a.tape().record(na->value - nb->value, "sub", any_requires({a, b}), [na, nb](const Matrix& g) {
        accumulate(na, g);
        accumulate(nb, -g);
    });
}

Var add_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) shape_fail("add_row", a, row);
    Node* na = a.node();
    Node* nr = row.node();
    Matrix out = na->value;
    out.rowwise() += nr->value.row(0);
    return a.tape().record(std::move(out), "add_row", any_requires({a, row}), [na, nr](const Matrix& g) {
        accumulate(na, g);
        if (nr->requires_grad) accumulate(nr, column_sums(g));
    });
}

Var mul(const Var& a, const Var& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("mul", a, b);
    Node* na = a.node();
    Node* nb = b.node();
    Matrix out = na->value.cwiseProduct(nb->value);
    return a.tape().record(std::move(out), "mul", any_requires({a, b}), [na, nb](const Matrix& g) {
        if (na->requires_grad) accumulate(na, g.cwiseProduct(nb->value));
        if (nb->requires_grad) accumulate(nb, g.cwiseProduct(na->value));
    });
}

Var scale(const Var& a, double c) {
    Node* na = a.node();
    return a.tape().record(na->value * c, "scale", a.requires_grad(), [na, c](const Matrix& g) { accumulate(na, g * c); });
}

Var one_minus(const Var& a) {
    Node* na = a.node();
    Matrix out = (1.0 - na->value.array()).matrix();
    return a.tape().record(std::move(out), "one_minus", a.requires_grad(), [na](const Matrix& g) { accumulate(na, -g); });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    bool needs = false;
    for (const auto& p : parts) {
        if (p.rows() != rows) shape_fail("concat_cols", parts.front(), p);
        cols += p.cols();
        needs = needs || p.requires_grad();
    }
    Matrix out(rows, cols);
    std::vector<Node*> nodes;
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        at += p.cols();
        nodes.push_back(p.node());
    }
    return parts.front().tape().record(std::move(out), "concat_cols", needs, [nodes](const Matrix& g) {
        Eigen::Index off = 0;
        for (Node* n : nodes) {
            const auto w = n->value.cols();
            if (n->requires_grad) accumulate(n, g.middleCols(off, w));
            off += w;
        }
    });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index width) {
    if (start < 0 || width < 0 || start + width > a.cols()) {
        throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " + std::to_string(start + width) +
                         ") outside " + shape_of(a.value()));
    }
    Node* na = a.node();
    Matrix out = na->value.middleCols(start, width);
    return a.tape().record(std::move(out), "slice_cols", a.requires_grad(), [na, start, width](const Matrix& g) {
        if (na->grad.size() == 0) na->grad = Matrix::Zero(na->value.rows(), na->value.cols());
        na->grad.middleCols(start, width) += g;
    });
}

Var gather_rows(const Var& a, const std::vector<int>& index) {
    Node* na = a.node();
    const auto n = static_cast<Eigen::Index>(index.size());
    Matrix out(n, a.cols());
    for (Eigen::Index r = 0; r < n; ++r) {
        const int src = index[static_cast<std::size_t>(r)];
        if (src < 0 || src >= a.rows()) throw ShapeError("gather_rows: index " + std::to_string(src) + " out of range");
        out.row(r) = na->value.row(src);
    }
    return a.tape().record(std::move(out), "gather_rows", a.requires_grad(), [na, index](const Matrix& g) {
        if (na->grad.size() == 0) na->grad = Matrix::Zero(na->value.rows(), na->value.cols());
        for (std::size_t r = 0; r < index.size(); ++r) na->grad.row(index[r]) += g.row(static_cast<Eigen::Index>(r));
    });
}

Var scatter_sum(const Var& a, const std::vector<int>& dst, Eigen::Index n_out) {
    if (static_cast<Eigen::Index>(dst.size()) != a.rows()) {
        throw ShapeError("scatter_sum: " + std::to_string(dst.size()) + " destinations for " + shape_of(a.value()));
    }
    Node* na = a.node();
    Matrix out = Matrix::Zero(n_out, a.cols());
    for (std::size_t e = 0; e < dst.size(); ++e) {
        if (dst[e] < 0 || dst[e] >= n_out) throw ShapeError("scatter_sum: destination out of range");
        out.row(dst[e]) += na->value.row(static_cast<Eigen::Index>(e));
    }
    return a.tape().record(std::move(out), "scatter_sum", a.requires_grad(), [na, dst](const Matrix& g) {
        Matrix back(static_cast<Eigen::Index>(dst.size()), g.cols());
        for (std::size_t e = 0; e < dst.size(); ++e) back.row(static_cast<Eigen::Index>(e)) = g.row(dst[e]);
        accumulate(na, back);
    });
}

Var sigmoid(const Var& a) {
    Node* na = a.node();
    Matrix out = na->value.unaryExpr([](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
    });
    auto r = a.tape().record(std::move(out), "sigmoid", a.requires_grad(), nullptr);
    if (r.requires_grad()) {
        Node* self = r.node();
        self->backward = [na, self](const Matrix& g) {
            accumulate(na, g.cwiseProduct(self->value.cwiseProduct((1.0 - self->value.array()).matrix())));
        };
    }
    return r;
}

Var relu(const Var& a) {
    Node* na = a.node();
    Matrix out = na->value.cwiseMax(0.0);
    return a.tape().record(std::move(out), "relu", a.requires_grad(), [na](const Matrix& g) {
        accumulate(na, g.cwiseProduct(na->value.unaryExpr([](double x) { return x > 0 ? 1.0 : 0.0; })));
    });
}

Var gelu(const Var& a) {
    Node* na = a.node();
    Matrix out = na->value.unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); });
    return a.tape().record(std::move(out), "gelu", a.requires_grad(), [na](const Matrix& g) {
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        Matrix dx = na->value.unaryExpr([inv_sqrt_2pi](double x) {
            return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
        });
        accumulate(na, g.cwiseProduct(dx));
    });
}

Var activate(const Var& a, Activation act) { return act == Activation::kGelu ? gelu(a) : relu(a); }

Var softmax_rows(const Var& a) {
    Node* na = a.node();
    Matrix out(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        const double mx = na->value.row(r).maxCoeff();
        out.row(r) = (na->value.row(r).array() - mx).exp();
        out.row(r) /= out.row(r).sum();
    }
    auto res = a.tape().record(std::move(out), "softmax_rows", a.requires_grad(), nullptr);
    if (res.requires_grad()) {
        Node* self = res.node();
        self->backward = [na, self](const Matrix& g) {
            const Matrix& y = self->value;
            Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
            Matrix dx = g;
            dx.colwise() -= dots;
            accumulate(na, dx.cwiseProduct(y));
        };
    }
    return res;
}

Var layer_norm(const Var& a, const Var& gain, const Var& bias, double eps) {
    if (gain.rows() != 1 || gain.cols() != a.cols()) shape_fail("layer_norm(gain)", a, gain);
    if (bias.rows() != 1 || bias.cols() != a.cols()) shape_fail("layer_norm(bias)", a, bias);
    Node* na = a.node();
    Node* ng = gain.node();
    Node* nb = bias.node();
    const auto rows = a.rows();
    const auto width = a.cols();
    Matrix xhat(rows, width);
    Eigen::VectorXd inv_std(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double mu = na->value.row(r).mean();
        const double var = (na->value.row(r).array() - mu).square().mean();
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (na->value.row(r).array() - mu) * inv_std[r];
    }
    Matrix out = xhat.array().rowwise() * ng->value.row(0).array();
    out.rowwise() += nb->value.row(0);
    return a.tape().record(
        std::move(out), "layer_norm", any_requires({a, gain, bias}),
        [na, ng, nb, xhat = std::move(xhat), inv_std = std::move(inv_std), width](const Matrix& g) {
            if (ng->requires_grad) accumulate(ng, column_sums(g.cwiseProduct(xhat)));
            if (nb->requires_grad) accumulate(nb, column_sums(g));
            if (!na->requires_grad) return;
            Matrix dxhat = g.array().rowwise() * ng->value.row(0).array();
            Matrix dx(dxhat.rows(), dxhat.cols());
            const double n = static_cast<double>(width);
            for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                const double s1 = dxhat.row(r).sum();
                const double s2 = dxhat.row(r).dot(xhat.row(r));
                dx.row(r) = (inv_std[r] / n) * (n * dxhat.row(r).array() - s1 - xhat.row(r).array() * s2);
            }
            accumulate(na, dx);
        });
}

Var cross_entropy(const Var& logits, const std::vector<int>& targets) {
    if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) {
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + shape_of(logits.value()));
    }
    Node* nl = logits.node();
    const auto rows = logits.rows();
    Matrix probs(rows, logits.cols());
    double total = 0.0;
    for (Eigen::Index r = 0; r < rows; ++r) {
        const int t = targets[static_cast<std::size_t>(r)];
        if (t < 0 || t >= logits.cols()) throw ShapeError("cross_entropy: target out of range");
        const double mx = nl->value.row(r).maxCoeff();
        probs.row(r) = (nl->value.row(r).array() - mx).exp();
        const double z = probs.row(r).sum();
        probs.row(r) /= z;
        total += -(nl->value(r, t) - mx - std::log(z));
    }
    const double n = static_cast<double>(rows);
    return logits.tape().record(Matrix::Constant(1, 1, total / n), "cross_entropy", logits.requires_grad(),
                                [nl, probs = std::move(probs), targets, n](const Matrix& g) {
                                    Matrix dx = probs;
                                    for (std::size_t r = 0; r < targets.size(); ++r) {
                                        dx(static_cast<Eigen::Index>(r), targets[r]) -= 1.0;
                                    }
                                    accumulate(nl, dx * (g(0, 0) / n));
                                });
}

Var nll_probs(const Var& probs, const std::vector<int>& targets, double floor) {
    if (static_cast<Eigen::Index>(targets.size()) != probs.rows()) {
        throw ShapeError("nll_probs: " + std::to_string(targets.size()) + " targets for " + shape_of(probs.value()));
    }
    Node* np = probs.node();
    double total = 0.0;
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        const int t = targets[static_cast<std::size_t>(r)];
        if (t < 0 || t >= probs.cols()) throw ShapeError("nll_probs: target out of range");
        total += -std::log(std::max(np->value(r, t), floor));
    }
    const double n = static_cast<double>(probs.rows());
    return probs.tape().record(Matrix::Constant(1, 1, total / n), "nll_probs", probs.requires_grad(),
                               [np, targets, n, floor](const Matrix& g) {
                                   Matrix dx = Matrix::Zero(np->value.rows(), np->value.cols());
                                   for (std::size_t r = 0; r < targets.size(); ++r) {
                                       const auto row = static_cast<Eigen::Index>(r);
                                       const double p = np->value(row, targets[r]);
                                       if (p > floor) dx(row, targets[r]) = -g(0, 0) / (n * p);
                                   }
                                   accumulate(np, dx);
                               });
}

Var scale_shift(const Var& h, const Var& gamma, const Var& beta) {
    if (gamma.rows() != 1 || gamma.cols() != h.cols()) shape_fail("scale_shift(gamma)", h, gamma);
    if (beta.rows() != 1 || beta.cols() != h.cols()) shape_fail("scale_shift(beta)", h, beta);
    Node* nh = h.node();
    Node* ng = gamma.node();
    Node* nb = beta.node();
    Matrix out = nh->value.array().rowwise() * (ng->value.row(0).array() + 1.0);
    out.rowwise() += nb->value.row(0);
    return h.tape().record(std::move(out), "scale_shift", any_requires({h, gamma, beta}), [nh, ng, nb](const Matrix& g) {
        if (nh->requires_grad) {
            Matrix dh = g.array().rowwise() * (ng->value.row(0).array() + 1.0);
            accumulate(nh, dh);
        }
        if (ng->requires_grad) accumulate(ng, column_sums(g.cwiseProduct(nh->value)));
        if (nb->requires_grad) accumulate(nb, column_sums(g));
    });
}

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
}

double grad_check(const std::function<Var(Tape&, const Var&)>& f, const Matrix& x, double eps) {
    Matrix analytic;
    {
        Tape tape;
        Var in = tape.leaf(x);
        Var out = f(tape, in);
        tape.backward(out);
        analytic = in.grad().size() ? in.grad() : Matrix::Zero(x.rows(), x.cols());
    }
    auto eval = [&](const Matrix& at) {
        Tape tape(false);
        Var in = tape.constant(at);
        return f(tape, in).scalar();
    };
    double worst = 0.0;
    Matrix probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double orig = probe.data()[i];
        probe.data()[i] = orig + eps;
        const double fp = eval(probe);
        probe.data()[i] = orig - eps;
        const double fm = eval(probe);
        probe.data()[i] = orig;
        worst = std::max(worst, relative_error(analytic.data()[i], (fp - fm) / (2.0 * eps)));
    }
    return worst;
}

GradCheckReport grad_check_params(const std::function<Var(Tape&)>& loss_fn, const std::vector<Parameter*>& params,
                                  double eps, Difference scheme) {
    for (auto* p : params) p->zero_grad();
    {
        Tape tape;
        Var loss = loss_fn(tape);
        tape.backward(loss);
    }
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (auto* p : params) analytic.push_back(p->grad);

    auto eval = [&] {
        Tape tape(false);
        return loss_fn(tape).scalar();
    };
    GradCheckReport report;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto* p = params[k];
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            const double orig = p->value.data()[i];
            auto central = [&](double h) {
                p->value.data()[i] = orig + h;
                const double fp = eval();
                p->value.data()[i] = orig - h;
                const double fm = eval();
                p->value.data()[i] = orig;
                return (fp - fm) / (2.0 * h);
            };
            const double numeric = scheme == Difference::kCentral ? central(eps)
                                                                  : (4.0 * central(0.5 * eps) - central(eps)) / 3.0;
            const double a = analytic[k].data()[i];
            const double err = relative_error(a, numeric);
            ++report.n_checked;
            if (err > report.max_rel_error) {
                report.max_rel_error = err;
                report.worst_param = p->name;
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace ifdiff::ad
