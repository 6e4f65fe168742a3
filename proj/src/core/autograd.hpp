#pragma once

#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "core/exec.hpp"
#include "core/tensor.hpp"

namespace gcnet {

// Dynamic reverse-mode tape over the tensor primitives. Values are node
// indices; creation order is a topological order, so backward is a single
// reverse sweep. Batch norm runs in train mode here (batch statistics,
// running-stat EMA update). With record=false the tape only carries values,
// which is how train-mode forward passes without gradients run.
//
// Parameter gradients accumulate in buffers keyed by the parameter
// storage's data pointer; parameter vectors must not reallocate while a
// tape referencing them is alive.
template <typename T>
class TapeExec {
public:
    using Value = int;

    explicit TapeExec(bool record = true) : record_(record) {}

    Value input(Tensor4<T> x);
    Value conv(Value x, ConvKernel<T>& k);
    Value bn(Value x, BatchNormStats<T>& s);
    Value relu(Value x);
    Value add(Value a, Value b);
    Value resize(Value x, int h, int w);
    Value avg_pool(Value x, int kernel, int stride, int padding);
    Value global_pool(Value x);
    Value concat(const std::vector<Value>& parts);

    Dims dims(Value v) const {
        const Tensor4<T>& t = nodes_[v].value;
        return Dims{t.n, t.c, t.h, t.w};
    }
    const Tensor4<T>& value(Value v) const { return nodes_[v].value; }

    // Runs the reverse sweep from the given seed cotangents.
    void backward(std::vector<std::pair<Value, Tensor4<T>>> seeds);

    // Accumulated gradient for a weight/bias/gamma/beta buffer; null if the
    // parameter never took part in the recorded graph.
    const std::vector<T>* param_grad(const T* key) const {
        auto it = param_grads_.find(key);
        return it == param_grads_.end() ? nullptr : &it->second;
    }

    // Gradient w.r.t. a node value (available after backward).
    const Tensor4<T>* node_grad(Value v) const {
        return nodes_[v].has_grad ? &nodes_[v].grad : nullptr;
    }

    bool recording() const { return record_; }

private:
    struct Node {
        Tensor4<T> value;
        Tensor4<T> grad;
        bool has_grad = false;
        std::function<void()> back;  // empty for leaves / unrecorded nodes
    };

    Value push(Tensor4<T> v) {
        nodes_.push_back(Node{std::move(v), {}, false, {}});
        return static_cast<Value>(nodes_.size() - 1);
    }

    Tensor4<T>& grad_buf(Value v) {
        Node& n = nodes_[v];
        if (!n.has_grad) {
            n.grad = Tensor4<T>(n.value.n, n.value.c, n.value.h, n.value.w);
            n.has_grad = true;
        }
        return n.grad;
    }

    std::vector<T>& param_buf(const std::vector<T>& param) {
        auto [it, inserted] = param_grads_.try_emplace(param.data());
        if (inserted) it->second.assign(param.size(), T(0));
        return it->second;
    }

    std::vector<Node> nodes_;
    std::unordered_map<const T*, std::vector<T>> param_grads_;
    bool record_;
};

}  // namespace gcnet
