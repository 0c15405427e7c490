#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dallmi/tensor.hpp"

namespace dallmi {

enum class OpKind : std::uint8_t {
    Leaf,
    Add,
    Sub,
    Scale,          // c * x
    AddRowVec,      // (T x d) + broadcast (d)
    MatMul,         // (m x k) * (k x n)
    MatMulBT,       // (m x k) * (n x k)^T
    GatherRows,     // table rows by saved ids
    Sigmoid,
    Tanh,
    Relu,
    Gelu,           // x * Phi(x), exact erf form
    Log,            // log(max(x, 1e-12))
    Abs,
    Square,
    Lerp,           // mu * a + (1 - mu) * b, mu saved
    SoftmaxRowsMasked,
    LayerNormRows,  // x, gain, bias
    MaskedMeanRows, // mean over rows with mask != 0 -> (1 x d)
    MeanOf,         // mean of n scalar inputs
    Pick,           // single element by flat index -> scalar
    BceWithLogits,  // mean over elements of stable BCE vs saved 0/1 targets
};

const char* op_name(OpKind k);

using NodeId = int;

// Define-by-run reverse-mode tape. One tape per training step; nodes are
// appended in topological order, so backward is a single reverse sweep.
class Tape {
public:
    struct Node {
        OpKind kind;
        std::vector<NodeId> inputs;
        Tensor value;
        // saved auxiliaries (only the relevant one is populated per kind)
        std::vector<int> ids;               // GatherRows, Pick
        std::vector<unsigned char> mask;    // SoftmaxRowsMasked, MaskedMeanRows
        double c = 0.0;                     // Scale factor / Lerp mu
        std::vector<double> targets;        // BceWithLogits
    };

    NodeId leaf(Tensor value);
    NodeId constant(Tensor value) { return leaf(std::move(value)); }

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId add_rowvec(NodeId a, NodeId v);
    NodeId matmul(NodeId a, NodeId b);
    NodeId matmul_bt(NodeId a, NodeId b);
    NodeId gather_rows(NodeId table, const std::vector<int>& ids);
    NodeId sigmoid(NodeId a);
    NodeId tanh_(NodeId a);
    NodeId relu(NodeId a);
    NodeId gelu(NodeId a);
    NodeId log_(NodeId a);
    NodeId abs_(NodeId a);
    NodeId square(NodeId a);
    NodeId lerp(NodeId a, NodeId b, double mu);
    NodeId softmax_rows_masked(NodeId a, const std::vector<unsigned char>& key_mask);
    NodeId layernorm_rows(NodeId x, NodeId gain, NodeId bias);
    NodeId masked_mean_rows(NodeId a, const std::vector<unsigned char>& row_mask);
    NodeId mean_of(const std::vector<NodeId>& scalars);
    NodeId pick(NodeId a, int flat_index);
    NodeId bce_with_logits(NodeId logits, const std::vector<double>& targets);

    const Tensor& value(NodeId id) const { return nodes_[check(id)].value; }
    double scalar_value(NodeId id) const { return value(id).item(); }
    std::size_t size() const { return nodes_.size(); }

    // Reverse sweep from a scalar seed. Gradients of all nodes (leaves
    // included) are available through grad() afterwards; untouched leaves
    // hold zeros.
    void backward(NodeId seed);
    const Tensor& grad(NodeId id) const;

private:
    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;

    int check(NodeId id) const;
    NodeId push(Node n);
    void accumulate(NodeId id, const Tensor& g);
};

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar-valued tape function of one tensor input. Throws if f evaluates
// non-finite, naming the offending coordinate.
double grad_check(const std::function<NodeId(Tape&, NodeId)>& f, const Tensor& point,
                  double h);

namespace detail {
inline constexpr double kLayerNormEps = 1e-5;
}

}  // namespace dallmi
