#pragma once

// Minimal reverse-mode differentiation over dense row-major double matrices.
//
// A Tape records every op in creation order, which is already a topological order, so
// backward is a single reverse sweep. Parameters live outside the tape; their gradients
// are accumulated into Parameter::grad when Tape::backward runs.

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace ifdiff::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
    bool trainable = true;

    void zero_grad() { grad = Matrix::Zero(value.rows(), value.cols()); }
};

struct Node {
    Matrix value;
    Matrix grad;  // empty until something flows into it
    bool requires_grad = false;
    const char* op = "leaf";
    Parameter* param = nullptr;
    std::function<void(const Matrix& grad)> backward;
};

class Tape;

// Lightweight handle to a node on a tape. Valid while the tape is alive.
class Var {
public:
    Var() = default;
    Var(Tape* tape, Node* node) : tape_(tape), node_(node) {}

    const Matrix& value() const { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    bool requires_grad() const { return node_->requires_grad; }
    double scalar() const { return node_->value(0, 0); }
    Tape& tape() const { return *tape_; }
    Node* node() const { return node_; }
    bool valid() const { return node_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    Node* node_ = nullptr;
};

class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    Var leaf(Matrix value);
    // One node per parameter per tape; gradients flow back into the parameter on backward().
    Var param(Parameter& p);

    // Seeds d(loss)/d(loss) = 1 for a 1x1 loss and sweeps the tape in reverse.
    void backward(const Var& loss);

    bool grad_enabled() const { return grad_enabled_; }
    std::size_t size() const { return nodes_.size(); }

    Var record(Matrix value, const char* op, bool requires_grad, std::function<void(const Matrix&)> backward_fn);

private:
    bool grad_enabled_;
    std::vector<std::unique_ptr<Node>> nodes_;
    std::unordered_map<Parameter*, Node*> param_nodes_;
};

enum class Activation { kGelu, kRelu };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& row);  // row (1 x m) broadcast over every row of a
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var one_minus(const Var& a);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index width);
Var gather_rows(const Var& a, const std::vector<int>& index);
// Row i of the result is the sum of the rows e of a with dst[e] == i.
Var scatter_sum(const Var& a, const std::vector<int>& dst, Eigen::Index n_out);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var gelu(const Var& a);
Var activate(const Var& a, Activation act);
Var softmax_rows(const Var& a);
Var layer_norm(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5);
// Mean over rows of -log softmax(logits)[target].
Var cross_entropy(const Var& logits, const std::vector<int>& targets);
// Mean over rows of -log max(p[target], floor), for rows that are already probabilities.
Var nll_probs(const Var& probs, const std::vector<int>& targets, double floor = 1e-12);
// h * (gamma + 1) + beta with gamma, beta 1 x d.
Var scale_shift(const Var& h, const Var& gamma, const Var& beta);

// Central-difference check of a scalar function of one input matrix. Returns the max of
// |a - n| / (|a| + |n| + 1e-12) over coordinates.
double grad_check(const std::function<Var(Tape&, const Var&)>& f, const Matrix& x, double eps = 1e-5);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    Eigen::Index worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t n_checked = 0;
};

enum class Difference {
    kCentral,     // (f(x+e) - f(x-e)) / 2e
    kRichardson,  // (4 D(e/2) - D(e)) / 3 over central differences D, fourth order
};

// Checks d(loss)/d(p) for every element of every listed parameter.
GradCheckReport grad_check_params(const std::function<Var(Tape&)>& loss_fn, const std::vector<Parameter*>& params,
                                  double eps = 1e-5, Difference scheme = Difference::kCentral);

double relative_error(double analytic, double numeric);

}  // namespace ifdiff::ad
