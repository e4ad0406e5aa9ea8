#pragma once

// Tape-based reverse-mode differentiation over Tensor values.
//
// Every op records its output value and a closure that maps the output
// gradient to its parents' gradients. Nodes are appended in evaluation order,
// so a single reverse sweep over the tape is a valid topological order.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "entprune/numerics/tensor.hpp"

namespace entprune {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
  public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

  private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

using GradientMap = std::map<std::string, Tensor>;

class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value, std::string op = "constant") {
        check_finite(value, op);
        nodes_.push_back(Node{std::move(value), {}, false, std::move(op), {}});
        return Var(this, nodes_.size() - 1);
    }

    // Registers a trainable leaf. Identifiers must be unique per tape.
    Var parameter(const std::string& name, Tensor value) {
        for (const auto& [n, id] : params_)
            if (n == name) throw PreconditionError("parameter '" + name + "' registered twice");
        check_finite(value, "parameter " + name);
        nodes_.push_back(Node{std::move(value), {}, true, "parameter", {}});
        params_.emplace_back(name, nodes_.size() - 1);
        return Var(this, nodes_.size() - 1);
    }

    // Records an op output. `parents` decide whether the node participates in backward.
    Var record(std::string op, Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
        check_finite(value, op);
        bool needs = false;
        for (const Var& p : parents) needs = needs || nodes_[p.id()].needs_grad;
        nodes_.push_back(Node{std::move(value), {}, needs, std::move(op), needs ? std::move(fn) : BackwardFn{}});
        return Var(this, nodes_.size() - 1);
    }

    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }

    // Gradient buffer of a node, allocated on first touch. Only valid during backward().
    Tensor& grad(std::size_t id) {
        Node& n = nodes_[id];
        if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape(), 0.0);
        return n.grad;
    }

    // Reverse sweep from a scalar loss. Returns one gradient per registered
    // parameter (zero-filled when the loss does not depend on it).
    GradientMap backward(Var loss) {
        if (consumed_) throw PreconditionError("gradient tape already consumed by a previous backward()");
        if (loss.value().size() != 1)
            throw PreconditionError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
        consumed_ = true;
        grad(loss.id())[0] = 1.0;
        for (std::size_t i = loss.id() + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.needs_grad || !n.backward || n.grad.size() == 0) continue;
            check_finite(n.grad, n.op + " (backward)");
            n.backward(*this, n.grad);
        }
        GradientMap out;
        for (const auto& [name, id] : params_) {
            Node& n = nodes_[id];
            if (n.grad.size() == 0) n.grad = Tensor(n.value.shape(), 0.0);
            check_finite(n.grad, "gradient of " + name);
            out.emplace(name, std::move(n.grad));
        }
        return out;
    }

    const std::vector<std::pair<std::string, std::size_t>>& parameters() const noexcept { return params_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Multiply-accumulate count of the matrix products recorded so far.
    std::uint64_t macs() const noexcept { return macs_; }
    void add_macs(std::uint64_t n) noexcept { macs_ += n; }

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad;
        std::string op;
        BackwardFn backward;
    };

    static void check_finite(const Tensor& t, const std::string& op) {
        if (!t.all_finite()) throw NumericError("non-finite value produced by op '" + op + "'");
    }

    std::deque<Node> nodes_;
    std::vector<std::pair<std::string, std::size_t>> params_;
    bool consumed_ = false;
    std::uint64_t macs_ = 0;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

} // namespace entprune
