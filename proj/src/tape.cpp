#include "dallmi/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dallmi {

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Scale: return "scale";
        case OpKind::AddRowVec: return "add_rowvec";
        case OpKind::MatMul: return "matmul";
        case OpKind::MatMulBT: return "matmul_bt";
        case OpKind::GatherRows: return "gather_rows";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Tanh: return "tanh";
        case OpKind::Relu: return "relu";
        case OpKind::Gelu: return "gelu";
        case OpKind::Log: return "log";
        case OpKind::Abs: return "abs";
        case OpKind::Square: return "square";
        case OpKind::Lerp: return "lerp";
        case OpKind::SoftmaxRowsMasked: return "softmax_rows_masked";
        case OpKind::LayerNormRows: return "layernorm_rows";
        case OpKind::MaskedMeanRows: return "masked_mean_rows";
        case OpKind::MeanOf: return "mean_of";
        case OpKind::Pick: return "pick";
        case OpKind::BceWithLogits: return "bce_with_logits";
    }
    return "?";
}

namespace {
[[noreturn]] void shape_error(OpKind k, const std::string& detail) {
    throw std::invalid_argument(std::string(op_name(k)) + ": " + detail);
}
}  // namespace

int Tape::check(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw std::out_of_range("Tape: bad node id " + std::to_string(id));
    return id;
}

NodeId Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Tensor value) {
    return push({OpKind::Leaf, {}, std::move(value), {}, {}, 0.0, {}});
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (!x.same_shape(y))
        shape_error(OpKind::Add, "shape mismatch " + x.shape_str() + " vs " + y.shape_str());
    Tensor out = x;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += y[i];
    return push({OpKind::Add, {a, b}, std::move(out), {}, {}, 0.0, {}});
}

NodeId Tape::sub(NodeId a, NodeId b) {
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (!x.same_shape(y))
        shape_error(OpKind::Sub, "shape mismatch " + x.shape_str() + " vs " + y.shape_str());
    Tensor out = x;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= y[i];
    return push({OpKind::Sub, {a, b}, std::move(out), {}, {}, 0.0, {}});
}

NodeId Tape::scale(NodeId a, double c) {
    Tensor out = value(a);
    for (double& v : out.data) v *= c;
    return push({OpKind::Scale, {a}, std::move(out), {}, {}, c, {}});
}

NodeId Tape::add_rowvec(NodeId a, NodeId v) {
    const Tensor& x = value(a);
    const Tensor& b = value(v);
    if (b.numel() != x.cols())
        shape_error(OpKind::AddRowVec,
                    "vector length " + b.shape_str() + " vs row width " + x.shape_str());
    Tensor out = x;
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c) += b[c];
    return push({OpKind::AddRowVec, {a, v}, std::move(out), {}, {}, 0.0, {}});
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (x.cols() != y.rows())
        shape_error(OpKind::MatMul, "inner dims " + x.shape_str() + " * " + y.shape_str());
    std::size_t m = x.rows(), k = x.cols(), n = y.cols();
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            double xv = x.at(i, p);
            if (xv == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) += xv * y.at(p, j);
        }
    return push({OpKind::MatMul, {a, b}, std::move(out), {}, {}, 0.0, {}});
}

NodeId Tape::matmul_bt(NodeId a, NodeId b) {
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (x.cols() != y.cols())
        shape_error(OpKind::MatMulBT, "inner dims " + x.shape_str() + " * " + y.shape_str() + "^T");
    std::size_t m = x.rows(), k = x.cols(), n = y.rows();
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += x.at(i, p) * y.at(j, p);
            out.at(i, j) = s;
        }
    return push({OpKind::MatMulBT, {a, b}, std::move(out), {}, {}, 0.0, {}});
}

NodeId Tape::gather_rows(NodeId table, const std::vector<int>& ids) {
    const Tensor& t = value(table);
    if (t.shape.size() != 2) shape_error(OpKind::GatherRows, "table must be rank 2, got " + t.shape_str());
    for (int id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= t.rows())
            shape_error(OpKind::GatherRows,
                        "row id " + std::to_string(id) + " out of range " + t.shape_str());
    Tensor out = Tensor::zeros({ids.size(), t.cols()});
    for (std::size_t r = 0; r < ids.size(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c)
            out.at(r, c) = t.at(static_cast<std::size_t>(ids[r]), c);
    return push({OpKind::GatherRows, {table}, std::move(out), ids, {}, 0.0, {}});
}

NodeId Tape::sigmoid(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data) v = stable_sigmoid(v);
    return push({OpKind::Sigmoid, {a}, std::move(out), {}, {}, 0.0, {}});
}

NodeId Tape::tanh_(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data) v = std::tanh(v);
    return push({OpKind::Tanh, {a}, std::move(out), {}, {}, 0.0, {}});
}

NodeId Tape::relu(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return push({OpKind::Relu, {a}, std::move(out), {}, {}, 0.0, {}});
}

namespace {
double norm_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)); }
}  // namespace

NodeId Tape::gelu(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data) v = v * norm_cdf(v);
    return push({OpKind::Gelu, {a}, std::move(out), {}, {}, 0.0, {}});
}

NodeId Tape::log_(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data) v = guarded_log(v);
    return push({OpKind::Log, {a}, std::move(out), {}, {}, 0.0, {}});
}

NodeId Tape::abs_(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data) v = std::fabs(v);
    return push({OpKind::Abs, {a}, std::move(out), {}, {}, 0.0, {}});
}

NodeId Tape::square(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data) v *= v;
    return push({OpKind::Square, {a}, std::move(out), {}, {}, 0.0, {}});
}

NodeId Tape::lerp(NodeId a, NodeId b, double mu) {
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (!x.same_shape(y))
        shape_error(OpKind::Lerp, "shape mismatch " + x.shape_str() + " vs " + y.shape_str());
    Tensor out = x;
    // mu == 0 and mu == 1 reproduce the endpoints bit-exactly
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = mu * x[i] + (1.0 - mu) * y[i];
    return push({OpKind::Lerp, {a, b}, std::move(out), {}, {}, mu, {}});
}

NodeId Tape::softmax_rows_masked(NodeId a, const std::vector<unsigned char>& key_mask) {
    const Tensor& x = value(a);
    if (key_mask.size() != x.cols())
        shape_error(OpKind::SoftmaxRowsMasked,
                    "mask length " + std::to_string(key_mask.size()) + " vs " + x.shape_str());
    Tensor out = Tensor::zeros(x.shape);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double mx = -HUGE_VAL;
        for (std::size_t c = 0; c < x.cols(); ++c)
            if (key_mask[c] && x.at(r, c) > mx) mx = x.at(r, c);
        if (mx == -HUGE_VAL) continue;  // fully masked row stays zero
        double z = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c)
            if (key_mask[c]) {
                double e = std::exp(x.at(r, c) - mx);
                out.at(r, c) = e;
                z += e;
            }
        for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c) /= z;
    }
    return push({OpKind::SoftmaxRowsMasked, {a}, std::move(out), {}, key_mask, 0.0, {}});
}

NodeId Tape::layernorm_rows(NodeId x, NodeId gain, NodeId bias) {
    const Tensor& v = value(x);
    const Tensor& g = value(gain);
    const Tensor& b = value(bias);
    if (g.numel() != v.cols() || b.numel() != v.cols())
        shape_error(OpKind::LayerNormRows,
                    "gain/bias length vs row width " + v.shape_str());
    std::size_t d = v.cols();
    Tensor out = Tensor::zeros(v.shape);
    for (std::size_t r = 0; r < v.rows(); ++r) {
        double m = 0.0;
        for (std::size_t c = 0; c < d; ++c) m += v.at(r, c);
        m /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            double t = v.at(r, c) - m;
            var += t * t;
        }
        var /= static_cast<double>(d);
        double inv = 1.0 / std::sqrt(var + detail::kLayerNormEps);
        for (std::size_t c = 0; c < d; ++c)
            out.at(r, c) = (v.at(r, c) - m) * inv * g[c] + b[c];
    }
    return push({OpKind::LayerNormRows, {x, gain, bias}, std::move(out), {}, {}, 0.0, {}});
}

NodeId Tape::masked_mean_rows(NodeId a, const std::vector<unsigned char>& row_mask) {
    const Tensor& x = value(a);
    if (row_mask.size() != x.rows())
        shape_error(OpKind::MaskedMeanRows,
                    "mask length " + std::to_string(row_mask.size()) + " vs " + x.shape_str());
    std::size_t count = 0;
    for (auto m : row_mask) count += m ? 1 : 0;
    if (count == 0) shape_error(OpKind::MaskedMeanRows, "no unmasked rows");
    Tensor out = Tensor::zeros({1, x.cols()});
    for (std::size_t r = 0; r < x.rows(); ++r)
        if (row_mask[r])
            for (std::size_t c = 0; c < x.cols(); ++c) out.at(0, c) += x.at(r, c);
    for (double& v : out.data) v /= static_cast<double>(count);
    return push({OpKind::MaskedMeanRows, {a}, std::move(out), {}, row_mask, 0.0, {}});
}

NodeId Tape::mean_of(const std::vector<NodeId>& scalars) {
    if (scalars.empty()) shape_error(OpKind::MeanOf, "empty input set");
    double s = 0.0;
    for (NodeId id : scalars) {
        if (!value(id).is_scalar())
            shape_error(OpKind::MeanOf, "non-scalar input " + value(id).shape_str());
        s += scalar_value(id);
    }
    s /= static_cast<double>(scalars.size());
    return push({OpKind::MeanOf, scalars, Tensor::scalar(s), {}, {}, 0.0, {}});
}

NodeId Tape::pick(NodeId a, int flat_index) {
    const Tensor& x = value(a);
    if (flat_index < 0 || static_cast<std::size_t>(flat_index) >= x.numel())
        shape_error(OpKind::Pick,
                    "index " + std::to_string(flat_index) + " out of " + x.shape_str());
    return push({OpKind::Pick, {a}, Tensor::scalar(x[static_cast<std::size_t>(flat_index)]),
                 {flat_index}, {}, 0.0, {}});
}

NodeId Tape::bce_with_logits(NodeId logits, const std::vector<double>& targets) {
    const Tensor& x = value(logits);
    if (targets.size() != x.numel())
        shape_error(OpKind::BceWithLogits,
                    "targets length " + std::to_string(targets.size()) + " vs " + x.shape_str());
    double s = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        double y = targets[i];
        if (y != 0.0 && y != 1.0)
            shape_error(OpKind::BceWithLogits, "target not in {0,1}: " + std::to_string(y));
        double v = x[i];
        // max(x,0) - x*y + log(1 + exp(-|x|))
        s += std::max(v, 0.0) - v * y + std::log1p(std::exp(-std::fabs(v)));
    }
    s /= static_cast<double>(x.numel());
    return push({OpKind::BceWithLogits, {logits}, Tensor::scalar(s), {}, {}, 0.0, targets});
}

const Tensor& Tape::grad(NodeId id) const {
    check(id);
    if (grads_.size() != nodes_.size())
        throw std::logic_error("Tape::grad before backward");
    return grads_[static_cast<std::size_t>(id)];
}

void Tape::accumulate(NodeId id, const Tensor& g) {
    Tensor& dst = grads_[static_cast<std::size_t>(id)];
    for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += g[i];
}

void Tape::backward(NodeId seed) {
    check(seed);
    if (!nodes_[static_cast<std::size_t>(seed)].value.is_scalar())
        throw std::invalid_argument("backward: seed node must be scalar, got " +
                                    nodes_[static_cast<std::size_t>(seed)].value.shape_str());
    grads_.clear();
    grads_.reserve(nodes_.size());
    for (const Node& n : nodes_) grads_.push_back(Tensor::zeros(n.value.shape));
    grads_[static_cast<std::size_t>(seed)][0] = 1.0;

    for (int i = seed; i >= 0; --i) {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        const Tensor& g = grads_[static_cast<std::size_t>(i)];
        bool any = false;
        for (double v : g.data)
            if (v != 0.0) { any = true; break; }
        if (!any || n.kind == OpKind::Leaf) continue;

        switch (n.kind) {
            case OpKind::Add: {
                accumulate(n.inputs[0], g);
                accumulate(n.inputs[1], g);
                break;
            }
            case OpKind::Sub: {
                accumulate(n.inputs[0], g);
                Tensor neg = g;
                for (double& v : neg.data) v = -v;
                accumulate(n.inputs[1], neg);
                break;
            }
            case OpKind::Scale: {
                Tensor gx = g;
                for (double& v : gx.data) v *= n.c;
                accumulate(n.inputs[0], gx);
                break;
            }
            case OpKind::AddRowVec: {
                accumulate(n.inputs[0], g);
                const Tensor& bval = nodes_[static_cast<std::size_t>(n.inputs[1])].value;
                Tensor gb = Tensor::zeros(bval.shape);
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
                accumulate(n.inputs[1], gb);
                break;
            }
            case OpKind::MatMul: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                const Tensor& y = nodes_[static_cast<std::size_t>(n.inputs[1])].value;
                Tensor gx = Tensor::zeros(x.shape);
                Tensor gy = Tensor::zeros(y.shape);
                // gx = g * y^T ; gy = x^T * g
                for (std::size_t i2 = 0; i2 < x.rows(); ++i2)
                    for (std::size_t j = 0; j < y.cols(); ++j) {
                        double gv = g.at(i2, j);
                        if (gv == 0.0) continue;
                        for (std::size_t p = 0; p < x.cols(); ++p) {
                            gx.at(i2, p) += gv * y.at(p, j);
                            gy.at(p, j) += x.at(i2, p) * gv;
                        }
                    }
                accumulate(n.inputs[0], gx);
                accumulate(n.inputs[1], gy);
                break;
            }
            case OpKind::MatMulBT: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                const Tensor& y = nodes_[static_cast<std::size_t>(n.inputs[1])].value;
                Tensor gx = Tensor::zeros(x.shape);
                Tensor gy = Tensor::zeros(y.shape);
                // out = x y^T ; gx = g * y ; gy = g^T * x
                for (std::size_t i2 = 0; i2 < x.rows(); ++i2)
                    for (std::size_t j = 0; j < y.rows(); ++j) {
                        double gv = g.at(i2, j);
                        if (gv == 0.0) continue;
                        for (std::size_t p = 0; p < x.cols(); ++p) {
                            gx.at(i2, p) += gv * y.at(j, p);
                            gy.at(j, p) += gv * x.at(i2, p);
                        }
                    }
                accumulate(n.inputs[0], gx);
                accumulate(n.inputs[1], gy);
                break;
            }
            case OpKind::GatherRows: {
                const Tensor& t = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                Tensor gt = Tensor::zeros(t.shape);
                for (std::size_t r = 0; r < n.ids.size(); ++r)
                    for (std::size_t c = 0; c < t.cols(); ++c)
                        gt.at(static_cast<std::size_t>(n.ids[r]), c) += g.at(r, c);
                accumulate(n.inputs[0], gt);
                break;
            }
            case OpKind::Sigmoid: {
                Tensor gx = g;
                for (std::size_t k = 0; k < gx.numel(); ++k) {
                    double s = n.value[k];
                    gx[k] *= s * (1.0 - s);
                }
                accumulate(n.inputs[0], gx);
                break;
            }
            case OpKind::Tanh: {
                Tensor gx = g;
                for (std::size_t k = 0; k < gx.numel(); ++k)
                    gx[k] *= 1.0 - n.value[k] * n.value[k];
                accumulate(n.inputs[0], gx);
                break;
            }
            case OpKind::Relu: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                Tensor gx = g;
                for (std::size_t k = 0; k < gx.numel(); ++k)
                    if (x[k] <= 0.0) gx[k] = 0.0;
                accumulate(n.inputs[0], gx);
                break;
            }
            case OpKind::Gelu: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                Tensor gx = g;
                for (std::size_t k = 0; k < gx.numel(); ++k) {
                    double pdf = std::exp(-0.5 * x[k] * x[k]) / std::sqrt(2.0 * std::numbers::pi);
                    gx[k] *= norm_cdf(x[k]) + x[k] * pdf;
                }
                accumulate(n.inputs[0], gx);
                break;
            }
            case OpKind::Log: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                Tensor gx = g;
                for (std::size_t k = 0; k < gx.numel(); ++k)
                    gx[k] = x[k] > kLogFloor ? gx[k] / x[k] : 0.0;  // clamped region is flat
                accumulate(n.inputs[0], gx);
                break;
            }
            case OpKind::Abs: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                Tensor gx = g;
                for (std::size_t k = 0; k < gx.numel(); ++k)
                    gx[k] *= x[k] >= 0.0 ? 1.0 : -1.0;
                accumulate(n.inputs[0], gx);
                break;
            }
            case OpKind::Square: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                Tensor gx = g;
                for (std::size_t k = 0; k < gx.numel(); ++k) gx[k] *= 2.0 * x[k];
                accumulate(n.inputs[0], gx);
                break;
            }
            case OpKind::Lerp: {
                Tensor ga = g;
                for (double& v : ga.data) v *= n.c;
                Tensor gb = g;
                for (double& v : gb.data) v *= 1.0 - n.c;
                accumulate(n.inputs[0], ga);
                accumulate(n.inputs[1], gb);
                break;
            }
            case OpKind::SoftmaxRowsMasked: {
                const Tensor& y = n.value;
                Tensor gx = Tensor::zeros(y.shape);
                for (std::size_t r = 0; r < y.rows(); ++r) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < y.cols(); ++c) dot += g.at(r, c) * y.at(r, c);
                    for (std::size_t c = 0; c < y.cols(); ++c)
                        if (n.mask[c]) gx.at(r, c) = y.at(r, c) * (g.at(r, c) - dot);
                }
                accumulate(n.inputs[0], gx);
                break;
            }
            case OpKind::LayerNormRows: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                const Tensor& gain = nodes_[static_cast<std::size_t>(n.inputs[1])].value;
                std::size_t d = x.cols();
                Tensor gx = Tensor::zeros(x.shape);
                Tensor gg = Tensor::zeros(gain.shape);
                Tensor gb = Tensor::zeros(gain.shape);
                for (std::size_t r = 0; r < x.rows(); ++r) {
                    double m = 0.0;
                    for (std::size_t c = 0; c < d; ++c) m += x.at(r, c);
                    m /= static_cast<double>(d);
                    double var = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                        double t = x.at(r, c) - m;
                        var += t * t;
                    }
                    var /= static_cast<double>(d);
                    double inv = 1.0 / std::sqrt(var + detail::kLayerNormEps);
                    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                    std::vector<double> xhat(d), dxhat(d);
                    for (std::size_t c = 0; c < d; ++c) {
                        xhat[c] = (x.at(r, c) - m) * inv;
                        dxhat[c] = g.at(r, c) * gain[c];
                        mean_dxhat += dxhat[c];
                        mean_dxhat_xhat += dxhat[c] * xhat[c];
                        gg[c] += g.at(r, c) * xhat[c];
                        gb[c] += g.at(r, c);
                    }
                    mean_dxhat /= static_cast<double>(d);
                    mean_dxhat_xhat /= static_cast<double>(d);
                    for (std::size_t c = 0; c < d; ++c)
                        gx.at(r, c) = inv * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
                }
                accumulate(n.inputs[0], gx);
                accumulate(n.inputs[1], gg);
                accumulate(n.inputs[2], gb);
                break;
            }
            case OpKind::MaskedMeanRows: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                std::size_t count = 0;
                for (auto m : n.mask) count += m ? 1 : 0;
                Tensor gx = Tensor::zeros(x.shape);
                for (std::size_t r = 0; r < x.rows(); ++r)
                    if (n.mask[r])
                        for (std::size_t c = 0; c < x.cols(); ++c)
                            gx.at(r, c) = g.at(0, c) / static_cast<double>(count);
                accumulate(n.inputs[0], gx);
                break;
            }
            case OpKind::MeanOf: {
                double gv = g[0] / static_cast<double>(n.inputs.size());
                Tensor gs = Tensor::scalar(gv);
                for (NodeId in : n.inputs) accumulate(in, gs);
                break;
            }
            case OpKind::Pick: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                Tensor gx = Tensor::zeros(x.shape);
                gx[static_cast<std::size_t>(n.ids[0])] = g[0];
                accumulate(n.inputs[0], gx);
                break;
            }
            case OpKind::BceWithLogits: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                Tensor gx = Tensor::zeros(x.shape);
                double inv_n = 1.0 / static_cast<double>(x.numel());
                for (std::size_t k = 0; k < x.numel(); ++k)
                    gx[k] = g[0] * (stable_sigmoid(x[k]) - n.targets[k]) * inv_n;
                accumulate(n.inputs[0], gx);
                break;
            }
            case OpKind::Leaf:
                break;
        }
    }
}

double grad_check(const std::function<NodeId(Tape&, NodeId)>& f, const Tensor& point,
                  double h) {
    auto eval = [&](const Tensor& p) {
        Tape t;
        NodeId x = t.leaf(p);
        NodeId out = f(t, x);
        return t.scalar_value(out);
    };

    Tape tape;
    NodeId x = tape.leaf(point);
    NodeId out = f(tape, x);
    tape.backward(out);
    Tensor analytic = tape.grad(x);

    double max_err = 0.0;
    for (std::size_t i = 0; i < point.numel(); ++i) {
        Tensor plus = point, minus = point;
        plus[i] += h;
        minus[i] -= h;
        double fp = eval(plus);
        double fm = eval(minus);
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("grad_check: non-finite evaluation at coordinate " +
                                     std::to_string(i));
        double numeric = (fp - fm) / (2.0 * h);
        double err = std::fabs(analytic[i] - numeric) /
                     std::max(1.0, std::fabs(analytic[i]));
        if (err > max_err) max_err = err;
    }
    return max_err;
}

}  // namespace dallmi
