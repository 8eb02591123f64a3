#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hscat/error.hpp"

namespace hscat::ad {

// Dense row-major tensor of doubles.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> shape, double fill = 0.0);
    Tensor(std::vector<int> shape, std::vector<double> data);

    std::size_t size() const { return data.size(); }
    int dim(std::size_t axis) const { return shape.at(axis); }
    std::size_t rank() const { return shape.size(); }
    friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t element_count(const std::vector<int>& shape);
std::string shape_string(const std::vector<int>& shape);

// A trainable tensor living outside any tape; backward() accumulates into grad.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string name, Tensor value);
    void zero_grad();
};

class Tape;

// Handle to a node on a tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    const Tensor& grad() const;
    const std::vector<int>& shape() const { return value().shape; }
    Tape* tape() const { return tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    int id_ = -1;
};

// Records one forward pass. A tape is single-threaded and supports one
// backward per forward; reset() clears it for reuse.
class Tape {
public:
    Var constant(Tensor value);
    Var leaf(Tensor value);  // requires grad, gradient readable after backward
    Var param(Parameter& p);

    // Reverse-topological accumulation from a scalar loss. Parameters
    // receive their gradients added to Parameter::grad.
    void backward(Var loss);
    void reset();
    std::size_t size() const { return nodes_.size(); }

    // Used by op implementations.
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        Parameter* param = nullptr;
        std::function<void(Tape&, Node&)> backward;
    };
    Var push(Tensor value, bool requires_grad, std::function<void(Tape&, Node&)> backward);
    Node& node(int id) { return *nodes_.at(std::size_t(id)); }
    const Node& node(int id) const { return *nodes_.at(std::size_t(id)); }
    // Gradient slot of a node, allocated on first use.
    Tensor& grad_of(int id);
    bool requires_grad(int id) const { return node(id).requires_grad; }

private:
    std::vector<std::unique_ptr<Node>> nodes_;
    bool backward_done_ = false;
};

// ---- Ops ----------------------------------------------------------------
// Image tensors are [C, H, W].

struct Conv2dOptions {
    int stride = 1;
    int pad_h = 0;
    int pad_w = 0;
};

// x [C, H, W], weight [O, C, kh, kw], bias [O] -> [O, Ho, Wo]; zero padding.
Var conv2d(Var x, Var weight, Var bias, Conv2dOptions opt = {});
// Reference direct-loop forward, no tape.
Tensor conv2d_direct(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions opt = {});

Var relu(Var x);
// x (any shape, flattened) -> weight [out, in] * x + bias [out].
Var dense(Var x, Var weight, Var bias);
// Concatenation along axis 0.
Var concat(const std::vector<Var>& xs);
Var sum(Var x);
Var mean(Var x);
// Mean over one axis, kept with extent 1.
Var mean_axis(Var x, int axis);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double c);
Var reshape(Var x, std::vector<int> shape);
// Rows [begin, end) along axis 0.
Var slice(Var x, int begin, int end);
// [C * ry * rx, H, W] -> [C, H * ry, W * rx].
Var depth_to_space(Var x, int ry, int rx);
// Sum over r of the outer product of v [R, A] with m [R, P, Q], with the
// vector placed on `axis` (0, 1 or 2) of the [I, J, K] result. The matrix
// covers the remaining two axes in order.
Var outer3(Var v, Var m, int axis);
// sum(|pred - target| * mask) / sum(mask); target and mask are constants.
Var masked_l1(Var pred, const Tensor& target, const Tensor& mask);
// mean((pred - target)^2), target treated as constant.
Var mse(Var pred, const Tensor& target);
// mean((a - b)^2), differentiable in both.
Var mse(Var a, Var b);

// ---- Optimizer ------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam over flat double arrays.
class AdamState {
public:
    explicit AdamState(std::size_t n = 0) : m_(n, 0.0), v_(n, 0.0) {}
    void step(const AdamConfig& cfg, double* values, const double* grads, std::size_t n);
    long steps() const { return t_; }

private:
    std::vector<double> m_, v_;
    long t_ = 0;
};

class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig cfg);
    void step();
    void zero_grad();
    AdamConfig& config() { return cfg_; }

private:
    std::vector<Parameter*> params_;
    std::vector<AdamState> state_;
    AdamConfig cfg_;
};

}  // namespace hscat::ad
