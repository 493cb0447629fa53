#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace diffaug {

using Shape = std::vector<size_t>;

size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated lazily on backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // adds into parents' grads

    std::vector<double>& ensure_grad();
};

}  // namespace detail

// Dense row-major tensor of 64-bit floats with reverse-mode autodiff.
// Copying a Tensor copies the handle, not the storage.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data,
                       bool requires_grad = false);
    // Scalar convenience.
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    size_t size() const;
    size_t dim(size_t i) const;

    std::vector<double>& value();
    const std::vector<double>& value() const;
    double item() const;  // requires size() == 1

    bool requires_grad() const;
    std::vector<double>& grad();  // requires requires_grad()
    void zero_grad();

    // Leaf copy of the current value, detached from the graph.
    Tensor detach(bool requires_grad = false) const;

    detail::Node* node() const { return node_.get(); }
    std::shared_ptr<detail::Node> node_ptr() const { return node_; }
    static Tensor wrap(std::shared_ptr<detail::Node> n);

private:
    std::shared_ptr<detail::Node> node_;
};

// Runs reverse-mode accumulation from a scalar loss. Each reachable node is
// visited exactly once, in reverse topological order.
void backward(const Tensor& loss);

// While a guard is alive, ops do not record tape entries; outputs are leaves.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

}  // namespace diffaug
