// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tli {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major f64 array. Copies share storage; use clone() for a deep
/// copy. A tensor whose requires_grad flag is set participates in the active
/// Tape and receives gradients from backward().
class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape);
    static Tensor filled(Shape shape, double value);
    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    /// Trainable leaf.
    static Tensor parameter(Shape shape, std::vector<double> data);

    const Shape& shape() const noexcept;
    std::size_t rank() const noexcept { return shape().size(); }
    std::size_t size() const noexcept;
    std::size_t rows() const;
    std::size_t cols() const;
    bool is_scalar() const noexcept { return size() == 1; }

    std::span<const double> data() const noexcept;
    std::span<double> mutable_data() noexcept;
    double operator[](std::size_t i) const { return data()[i]; }
    double at(std::size_t row, std::size_t col) const;
    double item() const;
    std::vector<double> to_vector() const;
    std::span<const double> row(std::size_t r) const;

    bool requires_grad() const noexcept;
    void set_requires_grad(bool value) noexcept;

    bool has_grad() const noexcept;
    std::span<const double> grad() const noexcept;
    /// Allocates a zero gradient buffer on first use. Tensors are shared
    /// handles, so this is available on const handles too.
    std::span<double> grad_buffer() const;
    void zero_grad();
    void clear_grad();

    Tensor clone() const;
    /// Same values, fresh storage, not tracked.
    Tensor detach() const { return clone(); }

    bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }
    bool defined() const noexcept { return impl_ != nullptr; }

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
};

/// Ordered record of differentiable operations. Nodes are appended in
/// creation order, which is a topological order of the computation.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    struct Node {
        std::vector<Tensor> inputs;
        Tensor output;
        BackwardFn backward;
    };

    void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);
    std::size_t size() const noexcept { return nodes_.size(); }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    void clear() noexcept { nodes_.clear(); }

private:
    std::vector<Node> nodes_;
};

/// Installs a tape as the thread's recording target for its lifetime.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

/// Temporarily disables recording (inference mode).
class NoGradScope {
public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape* previous_;
};

Tape* active_tape() noexcept;

/// Records `output` as produced from `inputs` when a tape is active and any
/// input requires grad. Returns true if recorded; the output then requires
/// grad. `backward` reads output.grad() and accumulates into input grads.
bool record_op(std::vector<Tensor> inputs, Tensor& output, Tape::BackwardFn backward);

/// Adds `delta` into t's gradient if t requires grad.
void accumulate_grad(const Tensor& t, std::span<const double> delta);

/// Reverse accumulation over `tape` from a scalar loss.
void backward(const Tensor& loss, Tape& tape);

} // namespace tli
