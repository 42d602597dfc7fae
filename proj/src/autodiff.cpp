#include "stgraph/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace stgraph::ad {

namespace {

Tensor transpose(const Tensor& a) {
    Tensor out({a.cols(), a.rows()});
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out.at(c, r) = a.at(r, c);
    return out;
}

// C = op(A) * op(B) with optional transposes.
Tensor matmul_raw(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    const std::size_t m = ta ? a.cols() : a.rows();
    const std::size_t k = ta ? a.rows() : a.cols();
    const std::size_t kb = tb ? b.cols() : b.rows();
    const std::size_t n = tb ? b.rows() : b.cols();
    if (k != kb) {
        throw std::invalid_argument("matmul: inner dimensions do not match: " + a.shape_str() +
                                    (ta ? "^T" : "") + " * " + b.shape_str() + (tb ? "^T" : ""));
    }
    Tensor out({m, n});
    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& od = out.data();
    const std::size_t a_rs = ta ? 1 : k;        // stride between rows of op(A)
    const std::size_t a_cs = ta ? a.cols() : 1; // stride between cols of op(A)
    const std::size_t b_rs = tb ? 1 : n;
    const std::size_t b_cs = tb ? b.cols() : 1;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * a_rs + p * a_cs];
            if (av == 0.0) continue;
            const std::size_t bo = p * b_rs;
            double* orow = od.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * bd[bo + j * b_cs];
        }
    }
    return out;
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::AddScalar: return "add_scalar";
        case Op::Matmul: return "matmul";
        case Op::ConcatCols: return "concat_cols";
        case Op::ConcatRows: return "concat_rows";
        case Op::SumRows: return "sum_rows";
        case Op::SumAll: return "sum_all";
        case Op::LeakyRelu: return "leaky_relu";
        case Op::Relu: return "relu";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Sigmoid: return "sigmoid";
        case Op::Softplus: return "softplus";
        case Op::GatherRows: return "gather_rows";
        case Op::ScatterAddRows: return "scatter_add_rows";
        case Op::SegmentSoftmax: return "segment_softmax";
        case Op::SoftmaxRows: return "softmax_rows";
        case Op::ScaleRows: return "scale_rows";
        case Op::Dropout: return "dropout";
        case Op::CeRows: return "ce_rows";
        case Op::Reshape: return "reshape";
    }
    return "?";
}

void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() +
                                " and " + b.shape_str());
}

void shape_error(const char* op, const Tensor& a) {
    throw std::invalid_argument(std::string(op) + ": unsupported shape " + a.shape_str());
}

bool GradientTape::touched(Var v) const {
    return v.id >= 0 && static_cast<std::size_t>(v.id) < adjoints_.size() &&
           !adjoints_[v.id].shape().empty();
}

Tensor GradientTape::grad(Var v, const ExprGraph& g) const {
    if (touched(v)) return adjoints_[v.id];
    return Tensor::zeros(g.value(v).shape());
}

int ExprGraph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

const Tensor& ExprGraph::value(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
        throw std::logic_error("expr graph: invalid var");
    return nodes_[v.id].value;
}

Var ExprGraph::leaf(Tensor value) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    return {push(std::move(n))};
}

void ExprGraph::check_same_or_broadcast(const char* op, Var a, Var b) const {
    const Tensor& ta = val(a.id);
    const Tensor& tb = val(b.id);
    if (ta.same_shape(tb)) return;
    // Broadcast of b across the leading dimension of a only.
    if (ta.rank() == tb.rank() + 1) {
        bool ok = true;
        for (std::size_t i = 0; i < tb.rank(); ++i)
            if (ta.shape()[i + 1] != tb.shape()[i]) ok = false;
        if (ok) return;
    }
    shape_error(op, ta, tb);
}

Var ExprGraph::add(Var a, Var b) {
    check_same_or_broadcast("add", a, b);
    const Tensor& x = val(a.id);
    const Tensor& y = val(b.id);
    Node n;
    n.op = Op::Add;
    n.in = {a.id, b.id};
    n.value = Tensor(x.shape());
    const std::size_t inner = y.numel();
    for (std::size_t i = 0; i < x.numel(); ++i)
        n.value[i] = x[i] + y[inner ? i % inner : 0];
    return {push(std::move(n))};
}

Var ExprGraph::sub(Var a, Var b) {
    check_same_or_broadcast("sub", a, b);
    const Tensor& x = val(a.id);
    const Tensor& y = val(b.id);
    Node n;
    n.op = Op::Sub;
    n.in = {a.id, b.id};
    n.value = Tensor(x.shape());
    const std::size_t inner = y.numel();
    for (std::size_t i = 0; i < x.numel(); ++i)
        n.value[i] = x[i] - y[inner ? i % inner : 0];
    return {push(std::move(n))};
}

Var ExprGraph::mul(Var a, Var b) {
    check_same_or_broadcast("mul", a, b);
    const Tensor& x = val(a.id);
    const Tensor& y = val(b.id);
    Node n;
    n.op = Op::Mul;
    n.in = {a.id, b.id};
    n.value = Tensor(x.shape());
    const std::size_t inner = y.numel();
    for (std::size_t i = 0; i < x.numel(); ++i)
        n.value[i] = x[i] * y[inner ? i % inner : 0];
    return {push(std::move(n))};
}

Var ExprGraph::scale(Var a, double factor) {
    const Tensor& x = val(a.id);
    Node n;
    n.op = Op::Scale;
    n.in = {a.id, -1};
    n.alpha = factor;
    n.value = Tensor(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = x[i] * factor;
    return {push(std::move(n))};
}

Var ExprGraph::add_scalar(Var a, double value) {
    const Tensor& x = val(a.id);
    Node n;
    n.op = Op::AddScalar;
    n.in = {a.id, -1};
    n.alpha = value;
    n.value = Tensor(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = x[i] + value;
    return {push(std::move(n))};
}

Var ExprGraph::matmul(Var a, Var b, bool trans_a, bool trans_b) {
    const Tensor& x = val(a.id);
    const Tensor& y = val(b.id);
    if (x.rank() != 2 || y.rank() != 2) shape_error("matmul", x, y);
    Node n;
    n.op = Op::Matmul;
    n.in = {a.id, b.id};
    n.trans_a = trans_a;
    n.trans_b = trans_b;
    n.value = matmul_raw(x, y, trans_a, trans_b);
    return {push(std::move(n))};
}

Var ExprGraph::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const std::size_t rank = val(parts[0].id).rank();
    Node n;
    n.op = Op::ConcatCols;
    n.in = {-1, -1};
    if (rank == 1) {
        std::size_t total = 0;
        for (Var p : parts) {
            if (val(p.id).rank() != 1) shape_error("concat", val(parts[0].id), val(p.id));
            total += val(p.id).numel();
            n.extra_in.push_back(p.id);
        }
        n.value = Tensor({total});
        std::size_t o = 0;
        for (Var p : parts)
            for (double v : val(p.id).data()) n.value[o++] = v;
    } else if (rank == 2) {
        const std::size_t rows = val(parts[0].id).rows();
        std::size_t total_cols = 0;
        for (Var p : parts) {
            const Tensor& t = val(p.id);
            if (t.rank() != 2 || t.rows() != rows) shape_error("concat", val(parts[0].id), t);
            total_cols += t.cols();
            n.extra_in.push_back(p.id);
        }
        n.value = Tensor({rows, total_cols});
        for (std::size_t r = 0; r < rows; ++r) {
            std::size_t o = 0;
            for (Var p : parts) {
                const Tensor& t = val(p.id);
                for (std::size_t c = 0; c < t.cols(); ++c) n.value.at(r, o++) = t.at(r, c);
            }
        }
    } else {
        shape_error("concat", val(parts[0].id));
    }
    return {push(std::move(n))};
}

Var ExprGraph::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    const std::size_t cols = val(parts[0].id).cols();
    Node n;
    n.op = Op::ConcatRows;
    n.in = {-1, -1};
    std::size_t total_rows = 0;
    for (Var p : parts) {
        const Tensor& t = val(p.id);
        if (t.rank() != 2 || t.cols() != cols) shape_error("concat_rows", val(parts[0].id), t);
        total_rows += t.rows();
        n.extra_in.push_back(p.id);
    }
    n.value = Tensor({total_rows, cols});
    std::size_t o = 0;
    for (Var p : parts)
        for (double v : val(p.id).data()) n.value[o++] = v;
    return {push(std::move(n))};
}

Var ExprGraph::concat(const std::vector<Var>& parts) { return concat_cols(parts); }

Var ExprGraph::sum_rows(Var a) {
    const Tensor& x = val(a.id);
    if (x.rank() != 2) shape_error("sum_rows", x);
    Node n;
    n.op = Op::SumRows;
    n.in = {a.id, -1};
    n.value = Tensor({x.rows()});
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) s += x.at(r, c);
        n.value[r] = s;
    }
    return {push(std::move(n))};
}

Var ExprGraph::sum_all(Var a) {
    const Tensor& x = val(a.id);
    Node n;
    n.op = Op::SumAll;
    n.in = {a.id, -1};
    double s = 0.0;
    for (double v : x.data()) s += v;
    n.value = Tensor::scalar(s);
    return {push(std::move(n))};
}

Var ExprGraph::mean_all(Var a) {
    const Tensor& x = val(a.id);
    if (x.numel() == 0) throw std::invalid_argument("mean_all: empty tensor");
    return scale(sum_all(a), 1.0 / static_cast<double>(x.numel()));
}

Var ExprGraph::leaky_relu(Var a, double slope) {
    const Tensor& x = val(a.id);
    Node n;
    n.op = Op::LeakyRelu;
    n.in = {a.id, -1};
    n.alpha = slope;
    n.value = Tensor(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
        n.value[i] = x[i] > 0.0 ? x[i] : slope * x[i];
    return {push(std::move(n))};
}

Var ExprGraph::relu(Var a) {
    const Tensor& x = val(a.id);
    Node n;
    n.op = Op::Relu;
    n.in = {a.id, -1};
    n.value = Tensor(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = x[i] > 0.0 ? x[i] : 0.0;
    return {push(std::move(n))};
}

Var ExprGraph::exp(Var a) {
    const Tensor& x = val(a.id);
    Node n;
    n.op = Op::Exp;
    n.in = {a.id, -1};
    n.value = Tensor(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = std::exp(x[i]);
    return {push(std::move(n))};
}

Var ExprGraph::log(Var a) {
    const Tensor& x = val(a.id);
    Node n;
    n.op = Op::Log;
    n.in = {a.id, -1};
    n.value = Tensor(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = std::log(x[i]);
    return {push(std::move(n))};
}

Var ExprGraph::sigmoid(Var a) {
    const Tensor& x = val(a.id);
    Node n;
    n.op = Op::Sigmoid;
    n.in = {a.id, -1};
    n.value = Tensor(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = stable_sigmoid(x[i]);
    return {push(std::move(n))};
}

Var ExprGraph::softplus(Var a) {
    const Tensor& x = val(a.id);
    Node n;
    n.op = Op::Softplus;
    n.in = {a.id, -1};
    n.value = Tensor(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
        n.value[i] = std::max(x[i], 0.0) + std::log1p(std::exp(-std::abs(x[i])));
    return {push(std::move(n))};
}

Var ExprGraph::gather_rows(Var a, std::vector<std::int64_t> rows) {
    const Tensor& x = val(a.id);
    if (x.rank() != 2) shape_error("gather_rows", x);
    for (std::int64_t r : rows) {
        if (r < 0 || static_cast<std::size_t>(r) >= x.rows())
            throw std::out_of_range("gather_rows: index " + std::to_string(r) +
                                    " out of range for " + x.shape_str());
    }
    Node n;
    n.op = Op::GatherRows;
    n.in = {a.id, -1};
    n.value = Tensor({rows.size(), x.cols()});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < x.cols(); ++c) n.value.at(i, c) = x.at(rows[i], c);
    n.index = std::move(rows);
    return {push(std::move(n))};
}

Var ExprGraph::scatter_add_rows(Var a, std::vector<std::int64_t> rows, std::size_t out_rows) {
    const Tensor& x = val(a.id);
    if (x.rank() != 2) shape_error("scatter_add_rows", x);
    if (rows.size() != x.rows())
        throw std::invalid_argument("scatter_add_rows: " + std::to_string(rows.size()) +
                                    " indices for " + x.shape_str());
    for (std::int64_t r : rows) {
        if (r < 0 || static_cast<std::size_t>(r) >= out_rows)
            throw std::out_of_range("scatter_add_rows: index " + std::to_string(r) +
                                    " out of range for " + std::to_string(out_rows) + " rows");
    }
    Node n;
    n.op = Op::ScatterAddRows;
    n.in = {a.id, -1};
    n.value = Tensor({out_rows, x.cols()});
    // Ascending input order; this is the documented deterministic reduction.
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < x.cols(); ++c) n.value.at(rows[i], c) += x.at(i, c);
    n.index = std::move(rows);
    return {push(std::move(n))};
}

Var ExprGraph::segment_softmax(Var logits, std::vector<std::int64_t> segment_ids) {
    const Tensor& x = val(logits.id);
    if (x.rank() != 1) shape_error("segment_softmax", x);
    if (segment_ids.size() != x.numel())
        throw std::invalid_argument("segment_softmax: " + std::to_string(segment_ids.size()) +
                                    " segment ids for " + x.shape_str());
    Node n;
    n.op = Op::SegmentSoftmax;
    n.in = {logits.id, -1};
    n.value = Tensor({x.numel()});
    std::unordered_map<std::int64_t, double> seg_max;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        auto [it, fresh] = seg_max.try_emplace(segment_ids[i], x[i]);
        if (!fresh && x[i] > it->second) it->second = x[i];
    }
    std::unordered_map<std::int64_t, double> seg_sum;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double e = std::exp(x[i] - seg_max[segment_ids[i]]);
        n.value[i] = e;
        seg_sum[segment_ids[i]] += e;
    }
    for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] /= seg_sum[segment_ids[i]];
    n.index = std::move(segment_ids);
    return {push(std::move(n))};
}

Var ExprGraph::softmax_rows(Var a) {
    const Tensor& x = val(a.id);
    if (x.rank() != 2) shape_error("softmax_rows", x);
    Node n;
    n.op = Op::SoftmaxRows;
    n.in = {a.id, -1};
    n.value = Tensor(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double m = x.at(r, 0);
        for (std::size_t c = 1; c < x.cols(); ++c) m = std::max(m, x.at(r, c));
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
            const double e = std::exp(x.at(r, c) - m);
            n.value.at(r, c) = e;
            s += e;
        }
        for (std::size_t c = 0; c < x.cols(); ++c) n.value.at(r, c) /= s;
    }
    return {push(std::move(n))};
}

Var ExprGraph::scale_rows(Var matrix, Var scales) {
    const Tensor& x = val(matrix.id);
    const Tensor& s = val(scales.id);
    if (x.rank() != 2 || s.rank() != 1 || s.numel() != x.rows()) shape_error("scale_rows", x, s);
    Node n;
    n.op = Op::ScaleRows;
    n.in = {matrix.id, scales.id};
    n.value = Tensor(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) n.value.at(r, c) = x.at(r, c) * s[r];
    return {push(std::move(n))};
}

Var ExprGraph::dropout(Var a, double rate, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
    if (rate == 0.0) return a;
    const Tensor& x = val(a.id);
    Node n;
    n.op = Op::Dropout;
    n.in = {a.id, -1};
    const double keep = 1.0 - rate;
    n.mask.resize(x.numel());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& m : n.mask) m = (u(rng) < keep) ? 1.0 / keep : 0.0;
    n.value = Tensor(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = x[i] * n.mask[i];
    return {push(std::move(n))};
}

Var ExprGraph::ce_rows(Var logits, std::vector<std::int64_t> labels) {
    const Tensor& x = val(logits.id);
    if (x.rank() != 2) shape_error("ce_rows", x);
    if (labels.size() != x.rows())
        throw std::invalid_argument("ce_rows: " + std::to_string(labels.size()) +
                                    " labels for " + x.shape_str());
    for (std::int64_t l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= x.cols())
            throw std::out_of_range("ce_rows: label " + std::to_string(l) +
                                    " out of range for " + std::to_string(x.cols()) + " classes");
    }
    Node n;
    n.op = Op::CeRows;
    n.in = {logits.id, -1};
    n.value = Tensor({x.rows()});
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double m = x.at(r, 0);
        for (std::size_t c = 1; c < x.cols(); ++c) m = std::max(m, x.at(r, c));
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) s += std::exp(x.at(r, c) - m);
        n.value[r] = m + std::log(s) - x.at(r, labels[r]);
    }
    n.index = std::move(labels);
    return {push(std::move(n))};
}

Var ExprGraph::reshape(Var a, std::vector<std::size_t> shape) {
    const Tensor& x = val(a.id);
    std::size_t prod = 1;
    for (std::size_t d : shape) prod *= d;
    if (prod != x.numel())
        throw std::invalid_argument("reshape: cannot view " + x.shape_str() + " as " +
                                    shape_to_string(shape));
    Node n;
    n.op = Op::Reshape;
    n.in = {a.id, -1};
    n.prev_shape = x.shape();
    n.value = Tensor::from(std::move(shape), x.data());
    return {push(std::move(n))};
}

int ExprGraph::first_non_finite() const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (!nodes_[i].value.all_finite()) return static_cast<int>(i);
    return -1;
}

GradientTape ExprGraph::gradient(Var loss) const {
    if (!loss.valid() || static_cast<std::size_t>(loss.id) >= nodes_.size())
        throw std::logic_error("gradient: invalid loss var");
    if (val(loss.id).numel() != 1)
        throw std::invalid_argument("gradient: loss must be a scalar, got " +
                                    val(loss.id).shape_str());

    std::vector<bool> reachable(nodes_.size(), false);
    reachable[loss.id] = true;
    for (int id = loss.id; id >= 0; --id) {
        if (!reachable[id]) continue;
        const Node& n = nodes_[id];
        for (int in : n.in)
            if (in >= 0) reachable[in] = true;
        for (int in : n.extra_in) reachable[in] = true;
    }

    std::vector<Tensor> adj(nodes_.size());
    adj[loss.id] = Tensor::full(val(loss.id).shape(), 1.0);

    auto accum = [&](int id, const Tensor& delta) {
        if (adj[id].shape().empty()) {
            adj[id] = delta;
        } else {
            for (std::size_t i = 0; i < delta.numel(); ++i) adj[id][i] += delta[i];
        }
    };

    for (int id = loss.id; id >= 0; --id) {
        if (!reachable[id] || adj[id].shape().empty()) continue;
        const Node& n = nodes_[id];
        const Tensor& g = adj[id];
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Add:
            case Op::Sub: {
                const double sign = n.op == Op::Sub ? -1.0 : 1.0;
                accum(n.in[0], g);
                const Tensor& rhs = val(n.in[1]);
                Tensor db(rhs.shape());
                const std::size_t inner = rhs.numel();
                for (std::size_t i = 0; i < g.numel(); ++i) db[i % inner] += sign * g[i];
                accum(n.in[1], db);
                break;
            }
            case Op::Mul: {
                const Tensor& x = val(n.in[0]);
                const Tensor& y = val(n.in[1]);
                const std::size_t inner = y.numel();
                Tensor da(x.shape());
                Tensor db(y.shape());
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    da[i] = g[i] * y[i % inner];
                    db[i % inner] += g[i] * x[i];
                }
                accum(n.in[0], da);
                accum(n.in[1], db);
                break;
            }
            case Op::Scale: {
                Tensor da(g.shape());
                for (std::size_t i = 0; i < g.numel(); ++i) da[i] = g[i] * n.alpha;
                accum(n.in[0], da);
                break;
            }
            case Op::AddScalar:
                accum(n.in[0], g);
                break;
            case Op::Matmul: {
                const Tensor& a = val(n.in[0]);
                const Tensor& b = val(n.in[1]);
                Tensor da = matmul_raw(g, b, false, !n.trans_b);
                if (n.trans_a) da = transpose(da);
                Tensor db = matmul_raw(a, g, !n.trans_a, false);
                if (n.trans_b) db = transpose(db);
                accum(n.in[0], da);
                accum(n.in[1], db);
                break;
            }
            case Op::ConcatCols: {
                if (n.value.rank() == 1) {
                    std::size_t o = 0;
                    for (int in : n.extra_in) {
                        const Tensor& part = val(in);
                        Tensor dp(part.shape());
                        for (std::size_t i = 0; i < part.numel(); ++i) dp[i] = g[o + i];
                        o += part.numel();
                        accum(in, dp);
                    }
                } else {
                    std::size_t col0 = 0;
                    for (int in : n.extra_in) {
                        const Tensor& part = val(in);
                        Tensor dp(part.shape());
                        for (std::size_t r = 0; r < part.rows(); ++r)
                            for (std::size_t c = 0; c < part.cols(); ++c)
                                dp.at(r, c) = g.at(r, col0 + c);
                        col0 += part.cols();
                        accum(in, dp);
                    }
                }
                break;
            }
            case Op::ConcatRows: {
                std::size_t o = 0;
                for (int in : n.extra_in) {
                    const Tensor& part = val(in);
                    Tensor dp(part.shape());
                    for (std::size_t i = 0; i < part.numel(); ++i) dp[i] = g.data()[o + i];
                    o += part.numel();
                    accum(in, dp);
                }
                break;
            }
            case Op::SumRows: {
                const Tensor& x = val(n.in[0]);
                Tensor da(x.shape());
                for (std::size_t r = 0; r < x.rows(); ++r)
                    for (std::size_t c = 0; c < x.cols(); ++c) da.at(r, c) = g[r];
                accum(n.in[0], da);
                break;
            }
            case Op::SumAll: {
                const Tensor& x = val(n.in[0]);
                accum(n.in[0], Tensor::full(x.shape(), g[0]));
                break;
            }
            case Op::LeakyRelu: {
                const Tensor& x = val(n.in[0]);
                Tensor da(x.shape());
                for (std::size_t i = 0; i < x.numel(); ++i)
                    da[i] = g[i] * (x[i] > 0.0 ? 1.0 : n.alpha);
                accum(n.in[0], da);
                break;
            }
            case Op::Relu: {
                const Tensor& x = val(n.in[0]);
                Tensor da(x.shape());
                for (std::size_t i = 0; i < x.numel(); ++i) da[i] = x[i] > 0.0 ? g[i] : 0.0;
                accum(n.in[0], da);
                break;
            }
            case Op::Exp: {
                Tensor da(g.shape());
                for (std::size_t i = 0; i < g.numel(); ++i) da[i] = g[i] * n.value[i];
                accum(n.in[0], da);
                break;
            }
            case Op::Log: {
                const Tensor& x = val(n.in[0]);
                Tensor da(x.shape());
                for (std::size_t i = 0; i < x.numel(); ++i) da[i] = g[i] / x[i];
                accum(n.in[0], da);
                break;
            }
            case Op::Sigmoid: {
                Tensor da(g.shape());
                for (std::size_t i = 0; i < g.numel(); ++i)
                    da[i] = g[i] * n.value[i] * (1.0 - n.value[i]);
                accum(n.in[0], da);
                break;
            }
            case Op::Softplus: {
                const Tensor& x = val(n.in[0]);
                Tensor da(x.shape());
                for (std::size_t i = 0; i < x.numel(); ++i) da[i] = g[i] * stable_sigmoid(x[i]);
                accum(n.in[0], da);
                break;
            }
            case Op::GatherRows: {
                const Tensor& x = val(n.in[0]);
                Tensor da(x.shape());
                for (std::size_t i = 0; i < n.index.size(); ++i)
                    for (std::size_t c = 0; c < x.cols(); ++c)
                        da.at(n.index[i], c) += g.at(i, c);
                accum(n.in[0], da);
                break;
            }
            case Op::ScatterAddRows: {
                const Tensor& x = val(n.in[0]);
                Tensor da(x.shape());
                for (std::size_t i = 0; i < n.index.size(); ++i)
                    for (std::size_t c = 0; c < x.cols(); ++c)
                        da.at(i, c) = g.at(n.index[i], c);
                accum(n.in[0], da);
                break;
            }
            case Op::SegmentSoftmax: {
                // dx_i = y_i * (g_i - sum_{j in segment} g_j y_j)
                std::unordered_map<std::int64_t, double> seg_dot;
                for (std::size_t i = 0; i < n.index.size(); ++i)
                    seg_dot[n.index[i]] += g[i] * n.value[i];
                Tensor da({n.index.size()});
                for (std::size_t i = 0; i < n.index.size(); ++i)
                    da[i] = n.value[i] * (g[i] - seg_dot[n.index[i]]);
                accum(n.in[0], da);
                break;
            }
            case Op::SoftmaxRows: {
                const Tensor& y = n.value;
                Tensor da(y.shape());
                for (std::size_t r = 0; r < y.rows(); ++r) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < y.cols(); ++c) dot += g.at(r, c) * y.at(r, c);
                    for (std::size_t c = 0; c < y.cols(); ++c)
                        da.at(r, c) = y.at(r, c) * (g.at(r, c) - dot);
                }
                accum(n.in[0], da);
                break;
            }
            case Op::ScaleRows: {
                const Tensor& x = val(n.in[0]);
                const Tensor& s = val(n.in[1]);
                Tensor da(x.shape());
                Tensor ds(s.shape());
                for (std::size_t r = 0; r < x.rows(); ++r) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < x.cols(); ++c) {
                        da.at(r, c) = g.at(r, c) * s[r];
                        dot += g.at(r, c) * x.at(r, c);
                    }
                    ds[r] = dot;
                }
                accum(n.in[0], da);
                accum(n.in[1], ds);
                break;
            }
            case Op::Dropout: {
                Tensor da(g.shape());
                for (std::size_t i = 0; i < g.numel(); ++i) da[i] = g[i] * n.mask[i];
                accum(n.in[0], da);
                break;
            }
            case Op::CeRows: {
                const Tensor& x = val(n.in[0]);
                Tensor da(x.shape());
                for (std::size_t r = 0; r < x.rows(); ++r) {
                    double m = x.at(r, 0);
                    for (std::size_t c = 1; c < x.cols(); ++c) m = std::max(m, x.at(r, c));
                    double s = 0.0;
                    for (std::size_t c = 0; c < x.cols(); ++c) s += std::exp(x.at(r, c) - m);
                    for (std::size_t c = 0; c < x.cols(); ++c) {
                        const double p = std::exp(x.at(r, c) - m) / s;
                        const double ind = (static_cast<std::int64_t>(c) == n.index[r]) ? 1.0 : 0.0;
                        da.at(r, c) = g[r] * (p - ind);
                    }
                }
                accum(n.in[0], da);
                break;
            }
            case Op::Reshape: {
                Tensor da = Tensor::from(n.prev_shape, g.data());
                accum(n.in[0], da);
                break;
            }
        }
    }
    return GradientTape(std::move(adj));
}

}  // namespace stgraph::ad
