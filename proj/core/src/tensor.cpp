#include "diffaug/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "diffaug/errors.hpp"

namespace diffaug {

size_t shape_size(const Shape& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

namespace detail {

std::vector<double>& Node::ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
}

}  // namespace detail

namespace {
thread_local int no_grad_depth = 0;
}

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }

bool grad_enabled() { return no_grad_depth == 0; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = std::make_shared<detail::Node>();
    n->value.assign(shape_size(shape), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad && grad_enabled();
    return wrap(std::move(n));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& x : t.value()) x = v;
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_size(shape) != data.size()) {
        throw DimensionError("Tensor::from: shape " + shape_str(shape) +
                             " does not match data length " +
                             std::to_string(data.size()));
    }
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad && grad_enabled();
    return wrap(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from({1}, {v}, requires_grad);
}

Tensor Tensor::wrap(std::shared_ptr<detail::Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
}

const Shape& Tensor::shape() const { return node_->shape; }
size_t Tensor::size() const { return node_->value.size(); }
size_t Tensor::dim(size_t i) const { return node_->shape.at(i); }

std::vector<double>& Tensor::value() { return node_->value; }
const std::vector<double>& Tensor::value() const { return node_->value; }

double Tensor::item() const {
    if (size() != 1) {
        throw ContractError("Tensor::item: tensor has " +
                            std::to_string(size()) + " elements");
    }
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

std::vector<double>& Tensor::grad() {
    if (!requires_grad()) {
        throw ContractError("Tensor::grad: tensor does not require grad");
    }
    return node_->ensure_grad();
}

void Tensor::zero_grad() {
    if (node_) node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::detach(bool requires_grad) const {
    return Tensor::from(node_->shape, node_->value, requires_grad);
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward: loss must be a defined scalar tensor");
    }
    detail::Node* root = loss.node();
    if (!root->requires_grad) {
        throw ContractError("backward: loss does not depend on any parameter");
    }

    // Iterative post-order DFS; the resulting order is topological.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            detail::Node* p = node->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

}  // namespace diffaug
