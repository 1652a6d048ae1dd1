// SPDX-License-Identifier: Apache-2.0
#include "tli/numcore/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "tli/numcore/error.hpp"

namespace tli {

struct Tensor::Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
};

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out << 'x';
        }
        out << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_{std::make_shared<Impl>()} {
    for (const std::size_t dim : shape) {
        if (dim == 0) {
            throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape));
        }
    }
    if (shape_size(shape) != data.size()) {
        throw DimensionError("tensor shape " + shape_to_string(shape) + " needs " +
                             std::to_string(shape_size(shape)) + " values, got " +
                             std::to_string(data.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::filled(Shape shape, double value) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) {
    return Tensor(Shape{}, std::vector<double>{value});
}

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::vector<double> values;
    std::size_t cols = rows.size() == 0 ? 0 : rows.begin()->size();
    for (const auto& r : rows) {
        if (r.size() != cols) {
            throw DimensionError("ragged matrix literal");
        }
        values.insert(values.end(), r.begin(), r.end());
    }
    return Tensor(Shape{rows.size(), cols}, std::move(values));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
    return Tensor(std::move(shape), std::move(data), true);
}

const Shape& Tensor::shape() const noexcept { return impl_->shape; }
std::size_t Tensor::size() const noexcept { return impl_->data.size(); }

std::size_t Tensor::rows() const {
    if (rank() != 2) {
        throw DimensionError("rows() needs a matrix, got " + shape_to_string(shape()));
    }
    return shape()[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) {
        throw DimensionError("cols() needs a matrix, got " + shape_to_string(shape()));
    }
    return shape()[1];
}

std::span<const double> Tensor::data() const noexcept { return impl_->data; }
std::span<double> Tensor::mutable_data() noexcept { return impl_->data; }

double Tensor::at(std::size_t row, std::size_t col) const {
    return impl_->data[row * cols() + col];
}

double Tensor::item() const {
    if (size() != 1) {
        throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
    }
    return impl_->data[0];
}

std::vector<double> Tensor::to_vector() const { return impl_->data; }

std::span<const double> Tensor::row(std::size_t r) const {
    const std::size_t c = cols();
    return data().subspan(r * c, c);
}

bool Tensor::requires_grad() const noexcept { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool value) noexcept { impl_->requires_grad = value; }

bool Tensor::has_grad() const noexcept { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const noexcept { return impl_->grad; }

std::span<double> Tensor::grad_buffer() const {
    if (impl_->grad.empty()) {
        impl_->grad.assign(impl_->data.size(), 0.0);
    }
    return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }
void Tensor::clear_grad() { impl_->grad.clear(); }

Tensor Tensor::clone() const {
    return Tensor(impl_->shape, impl_->data);
}

// ---------------------------------------------------------------- tape

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() noexcept { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_{g_active_tape} { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_{g_active_tape} { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
    nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
}

bool record_op(std::vector<Tensor> inputs, Tensor& output, Tape::BackwardFn backward) {
    Tape* tape = g_active_tape;
    if (tape == nullptr) {
        return false;
    }
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (!any) {
        return false;
    }
    output.set_requires_grad(true);
    tape->record(std::move(inputs), output, std::move(backward));
    return true;
}

void accumulate_grad(const Tensor& t, std::span<const double> delta) {
    if (!t.requires_grad()) {
        return;
    }
    auto g = t.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += delta[i];
    }
}

void backward(const Tensor& loss, Tape& tape) {
    if (loss.size() != 1) {
        throw ContractError("backward() needs a scalar loss, got shape " +
                            shape_to_string(loss.shape()));
    }
    if (!loss.requires_grad()) {
        throw ContractError("backward() on a loss that was not recorded on the tape");
    }
    const auto& nodes = tape.nodes();
    // Intermediate gradients from any earlier pass are stale.
    for (const auto& node : nodes) {
        Tensor out = node.output;
        out.clear_grad();
    }
    Tensor root = loss;
    root.grad_buffer()[0] = 1.0;
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        if (it->output.has_grad()) {
            it->backward();
        }
    }
}

} // namespace tli
