#include "stgraph/visual.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_map>

namespace stgraph {

using ad::Var;

GraphIndex::GraphIndex(const VisualSTGraph& g, const TypeRegistry& reg) {
    nodes_of_type.resize(reg.node_types.size());
    local_row.assign(g.nodes.size(), -1);
    for (const VisualNode& n : g.nodes) {
        local_row[n.id] = static_cast<int>(nodes_of_type[n.type].size());
        nodes_of_type[n.type].push_back(n.id);
    }
    batches.resize(reg.edge_types.size());
    const VisualEdge* prev = nullptr;
    for (std::size_t k = 0; k < g.edges.size(); ++k) {
        const VisualEdge& e = g.edges[k];
        if (prev) {
            const bool ordered = prev->receiver < e.receiver ||
                                 (prev->receiver == e.receiver &&
                                  (prev->type < e.type ||
                                   (prev->type == e.type && prev->sender < e.sender)));
            if (!ordered)
                throw std::logic_error("graph index: edge list not sorted by (receiver, type, sender)");
        }
        prev = &e;
        EdgeBatch& b = batches[e.type];
        b.edge_pos.push_back(static_cast<int>(k));
        b.sender_local.push_back(local_row[e.sender]);
        b.receiver_local.push_back(local_row[e.receiver]);
        b.receiver_id.push_back(e.receiver);
    }
}

std::size_t visual_node_in_dim(const TypeRegistry& reg, const std::vector<std::size_t>& dims,
                               int layer, int node_type) {
    return layer == 1 ? reg.node_types[node_type].attr_dim : dims[layer - 2];
}

std::size_t visual_edge_in_dim(const TypeRegistry& reg, const std::vector<std::size_t>& dims,
                               int layer, int edge_type) {
    return layer == 1 ? reg.edge_types[edge_type].attr_dim : dims[layer - 2];
}

std::string visual_node_param(int layer, const std::string& type_name, const std::string& role) {
    return "visual.l" + std::to_string(layer) + ".node." + type_name + "." + role;
}

std::string visual_edge_param(int layer, const std::string& type_name, const std::string& role) {
    return "visual.l" + std::to_string(layer) + ".edge." + type_name + "." + role;
}

void add_visual_params(ParameterBank& bank, const TypeRegistry& reg,
                       const std::vector<std::size_t>& layer_dims, std::mt19937_64& rng) {
    for (std::size_t l = 1; l <= layer_dims.size(); ++l) {
        const std::size_t d = layer_dims[l - 1];
        for (std::size_t t = 0; t < reg.node_types.size(); ++t) {
            const std::size_t in = visual_node_in_dim(reg, layer_dims, static_cast<int>(l),
                                                      static_cast<int>(t));
            const std::string& name = reg.node_types[t].name;
            bank.add(visual_node_param(l, name, "Wr"), init_fan_in({d, in}, in, rng));
            bank.add(visual_node_param(l, name, "Ws"), init_fan_in({d, in}, in, rng));
        }
        for (std::size_t t = 0; t < reg.edge_types.size(); ++t) {
            const std::size_t in = visual_edge_in_dim(reg, layer_dims, static_cast<int>(l),
                                                      static_cast<int>(t));
            const std::string& name = reg.edge_types[t].name;
            bank.add(visual_edge_param(l, name, "We"), init_fan_in({d, in}, in, rng));
            bank.add(visual_edge_param(l, name, "va"), ad::Tensor({3 * d}));
        }
    }
}

RefinedState initial_state(ad::ExprGraph& g, const VisualSTGraph& graph, const GraphIndex& idx,
                           const TypeRegistry& reg) {
    RefinedState s;
    for (std::size_t t = 0; t < reg.node_types.size(); ++t) {
        const auto& ids = idx.nodes_of_type[t];
        ad::Tensor m({ids.size(), reg.node_types[t].attr_dim});
        for (std::size_t r = 0; r < ids.size(); ++r)
            for (std::size_t c = 0; c < m.cols(); ++c) m.at(r, c) = graph.nodes[ids[r]].attr[c];
        s.node_feats.push_back(g.leaf(std::move(m)));
    }
    for (std::size_t t = 0; t < reg.edge_types.size(); ++t) {
        const auto& pos = idx.batches[t].edge_pos;
        ad::Tensor m({pos.size(), reg.edge_types[t].attr_dim});
        for (std::size_t r = 0; r < pos.size(); ++r)
            for (std::size_t c = 0; c < m.cols(); ++c) m.at(r, c) = graph.edges[pos[r]].attr[c];
        s.edge_feats.push_back(g.leaf(std::move(m)));
    }
    return s;
}

namespace {

struct LayerParts {
    std::vector<Var> proj_r, proj_s;      // per node type, (n_t x d)
    std::vector<Var> edge_proj;           // per edge type, (E_e x d)
    std::vector<Var> send_rows, recv_rows;  // per edge type, gathered projections
};

LayerParts compute_parts(const VisualLayerOps& ops, const RefinedState& state,
                         std::mt19937_64* dropout_rng) {
    LayerParts parts;
    auto& g = ops.g;
    const double rate = dropout_rng ? ops.cfg.dropout : 0.0;
    for (std::size_t t = 0; t < ops.reg.node_types.size(); ++t) {
        const std::string& name = ops.reg.node_types[t].name;
        Var wr = ops.params[visual_node_param(ops.layer, name, "Wr")];
        Var ws = ops.params[visual_node_param(ops.layer, name, "Ws")];
        Var pr = g.matmul(state.node_feats[t], wr, false, true);
        Var ps = g.matmul(state.node_feats[t], ws, false, true);
        if (rate > 0.0) {
            pr = g.dropout(pr, rate, *dropout_rng);
            ps = g.dropout(ps, rate, *dropout_rng);
        }
        parts.proj_r.push_back(pr);
        parts.proj_s.push_back(ps);
    }
    for (std::size_t t = 0; t < ops.reg.edge_types.size(); ++t) {
        const auto& et = ops.reg.edge_types[t];
        Var we = ops.params[visual_edge_param(ops.layer, et.name, "We")];
        Var pe = g.matmul(state.edge_feats[t], we, false, true);
        if (rate > 0.0) pe = g.dropout(pe, rate, *dropout_rng);
        parts.edge_proj.push_back(pe);
        parts.send_rows.push_back(g.gather_rows(parts.proj_s[et.sender],
                                                ops.idx.batches[t].sender_local));
        parts.recv_rows.push_back(g.gather_rows(parts.proj_r[et.receiver],
                                                ops.idx.batches[t].receiver_local));
    }
    return parts;
}

std::vector<Var> attention_from_parts(const VisualLayerOps& ops, const LayerParts& parts) {
    auto& g = ops.g;
    const std::size_t d = ops.layer_dims[ops.layer - 1];
    std::vector<Var> out;
    for (std::size_t t = 0; t < ops.reg.edge_types.size(); ++t) {
        const auto& batch = ops.idx.batches[t];
        const std::size_t n_edges = batch.edge_pos.size();
        if (!ops.cfg.attention) {
            // Uniform over each typed neighborhood.
            std::unordered_map<std::int64_t, double> count;
            for (std::int64_t r : batch.receiver_id) count[r] += 1.0;
            ad::Tensor w({n_edges});
            for (std::size_t k = 0; k < n_edges; ++k) w[k] = 1.0 / count[batch.receiver_id[k]];
            out.push_back(g.leaf(std::move(w)));
            continue;
        }
        Var edge_part = ops.cfg.beta
                            ? parts.edge_proj[t]
                            : g.leaf(ad::Tensor({n_edges, d}));
        Var cat = g.concat_cols({parts.recv_rows[t], parts.send_rows[t], edge_part});
        Var va = ops.params[visual_edge_param(ops.layer, ops.reg.edge_types[t].name, "va")];
        Var logits = g.reshape(g.matmul(cat, g.reshape(va, {3 * d, 1})), {n_edges});
        Var gamma = g.leaky_relu(logits, ops.cfg.leaky_slope);
        out.push_back(g.segment_softmax(gamma, batch.receiver_id));
    }
    return out;
}

std::vector<Var> messages_from_parts(const VisualLayerOps& ops, const LayerParts& parts,
                                     const std::vector<Var>& attention) {
    auto& g = ops.g;
    const std::size_t d = ops.layer_dims[ops.layer - 1];
    std::vector<Var> out;
    for (std::size_t t = 0; t < ops.reg.edge_types.size(); ++t) {
        const std::size_t n_edges = ops.idx.batches[t].edge_pos.size();
        Var base;
        if (ops.cfg.lambda_v && ops.cfg.lambda_e)
            base = g.add(parts.send_rows[t], parts.edge_proj[t]);
        else if (ops.cfg.lambda_v)
            base = parts.send_rows[t];
        else if (ops.cfg.lambda_e)
            base = parts.edge_proj[t];
        else
            base = g.leaf(ad::Tensor({n_edges, d}));
        out.push_back(g.scale_rows(base, attention[t]));
    }
    return out;
}

RefinedState update_from_messages(const VisualLayerOps& ops, const RefinedState& base,
                                  const std::vector<Var>& msgs) {
    auto& g = ops.g;
    std::vector<Var> agg(ops.reg.node_types.size());
    for (std::size_t t = 0; t < ops.reg.edge_types.size(); ++t) {
        const int recv = ops.reg.edge_types[t].receiver;
        Var scattered = g.scatter_add_rows(msgs[t], ops.idx.batches[t].receiver_local,
                                           ops.idx.nodes_of_type[recv].size());
        agg[recv] = agg[recv].valid() ? g.add(agg[recv], scattered) : scattered;
    }
    RefinedState next;
    for (std::size_t t = 0; t < ops.reg.node_types.size(); ++t) {
        next.node_feats.push_back(agg[t].valid() ? g.add(base.node_feats[t], g.relu(agg[t]))
                                                 : base.node_feats[t]);
    }
    next.edge_feats = msgs;
    return next;
}

}  // namespace

std::vector<Var> attention_coefficients(const VisualLayerOps& ops, const RefinedState& state) {
    return attention_from_parts(ops, compute_parts(ops, state, nullptr));
}

std::vector<Var> messages(const VisualLayerOps& ops, const RefinedState& state,
                          const std::vector<Var>& attention) {
    return messages_from_parts(ops, compute_parts(ops, state, nullptr), attention);
}

RefinedState layer_update(const VisualLayerOps& ops, const RefinedState& base,
                          const std::vector<Var>& msgs) {
    return update_from_messages(ops, base, msgs);
}

RefinedState visual_forward(ad::ExprGraph& g, const VisualSTGraph& graph, const GraphIndex& idx,
                            const TypeRegistry& reg, ParamBinding& params,
                            const VisualForwardConfig& cfg,
                            const std::vector<std::size_t>& layer_dims,
                            std::mt19937_64* dropout_rng, std::vector<AttentionTrace>* trace) {
    if (cfg.layers < 0) throw std::invalid_argument("visual_forward: negative layer count");
    if (static_cast<std::size_t>(cfg.layers) > layer_dims.size())
        throw std::invalid_argument("visual_forward: " + std::to_string(cfg.layers) +
                                    " layers but only " + std::to_string(layer_dims.size()) +
                                    " layer dims");
    RefinedState state = initial_state(g, graph, idx, reg);
    for (int l = 1; l <= cfg.layers; ++l) {
        VisualLayerOps ops{g, graph, idx, reg, params, cfg, layer_dims, l};
        LayerParts parts = compute_parts(ops, state, dropout_rng);
        std::vector<Var> att = attention_from_parts(ops, parts);
        std::vector<Var> msgs = messages_from_parts(ops, parts, att);
        if (trace) trace->push_back({att});
        RefinedState base = state;
        if (l == 1) base.node_feats = parts.proj_r;  // residual in message space
        state = update_from_messages(ops, base, msgs);
    }
    return state;
}

namespace {

// W is (d_out x d_in) row-major.
std::vector<double> matvec(const ad::Tensor& w, const std::vector<double>& x) {
    std::vector<double> out(w.rows(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < w.cols(); ++c) s += w.at(r, c) * x[c];
        out[r] = s;
    }
    return out;
}

}  // namespace

NaiveVisualState visual_forward_naive(const VisualSTGraph& graph, const TypeRegistry& reg,
                                      const ParameterBank& bank, const VisualForwardConfig& cfg,
                                      const std::vector<std::size_t>& layer_dims) {
    const std::size_t n_nodes = graph.nodes.size();
    const std::size_t n_edges = graph.edges.size();
    std::vector<std::vector<double>> h(n_nodes), he(n_edges);
    for (std::size_t i = 0; i < n_nodes; ++i) h[i] = graph.nodes[i].attr;
    for (std::size_t k = 0; k < n_edges; ++k) he[k] = graph.edges[k].attr;

    NaiveVisualState result;
    for (int l = 1; l <= cfg.layers; ++l) {
        const std::size_t d = layer_dims[l - 1];
        std::vector<std::vector<double>> pr(n_nodes), ps(n_nodes), pe(n_edges);
        for (std::size_t i = 0; i < n_nodes; ++i) {
            const std::string& tname = reg.node_types[graph.nodes[i].type].name;
            pr[i] = matvec(bank.at(visual_node_param(l, tname, "Wr")), h[i]);
            ps[i] = matvec(bank.at(visual_node_param(l, tname, "Ws")), h[i]);
        }
        for (std::size_t k = 0; k < n_edges; ++k) {
            const std::string& tname = reg.edge_types[graph.edges[k].type].name;
            pe[k] = matvec(bank.at(visual_edge_param(l, tname, "We")), he[k]);
        }

        // Attention per (receiver, edge type) neighborhood.
        std::vector<double> a(n_edges, 0.0);
        if (cfg.attention) {
            std::vector<double> gamma(n_edges, 0.0);
            for (std::size_t k = 0; k < n_edges; ++k) {
                const VisualEdge& e = graph.edges[k];
                const ad::Tensor& va =
                    bank.at(visual_edge_param(l, reg.edge_types[e.type].name, "va"));
                double dot = 0.0;
                for (std::size_t c = 0; c < d; ++c) dot += va[c] * pr[e.receiver][c];
                for (std::size_t c = 0; c < d; ++c) dot += va[d + c] * ps[e.sender][c];
                if (cfg.beta)
                    for (std::size_t c = 0; c < d; ++c) dot += va[2 * d + c] * pe[k][c];
                gamma[k] = dot > 0.0 ? dot : cfg.leaky_slope * dot;
            }
            std::map<std::pair<int, int>, double> seg_max, seg_sum;
            for (std::size_t k = 0; k < n_edges; ++k) {
                const auto key = std::make_pair(graph.edges[k].receiver, graph.edges[k].type);
                auto [it, fresh] = seg_max.try_emplace(key, gamma[k]);
                if (!fresh && gamma[k] > it->second) it->second = gamma[k];
            }
            for (std::size_t k = 0; k < n_edges; ++k) {
                const auto key = std::make_pair(graph.edges[k].receiver, graph.edges[k].type);
                a[k] = std::exp(gamma[k] - seg_max[key]);
                seg_sum[key] += a[k];
            }
            for (std::size_t k = 0; k < n_edges; ++k)
                a[k] /= seg_sum[{graph.edges[k].receiver, graph.edges[k].type}];
        } else {
            std::map<std::pair<int, int>, double> count;
            for (const VisualEdge& e : graph.edges) count[{e.receiver, e.type}] += 1.0;
            for (std::size_t k = 0; k < n_edges; ++k)
                a[k] = 1.0 / count[{graph.edges[k].receiver, graph.edges[k].type}];
        }

        std::vector<std::vector<double>> m(n_edges);
        for (std::size_t k = 0; k < n_edges; ++k) {
            m[k].assign(d, 0.0);
            for (std::size_t c = 0; c < d; ++c) {
                double v = 0.0;
                if (cfg.lambda_v) v += ps[graph.edges[k].sender][c];
                if (cfg.lambda_e) v += pe[k][c];
                m[k][c] = a[k] * v;
            }
        }

        // Aggregate in sorted edge order, then residual update.
        std::vector<std::vector<double>> agg(n_nodes);
        std::vector<bool> has_in(n_nodes, false);
        for (std::size_t k = 0; k < n_edges; ++k) {
            const int r = graph.edges[k].receiver;
            if (!has_in[r]) {
                agg[r].assign(d, 0.0);
                has_in[r] = true;
            }
            for (std::size_t c = 0; c < d; ++c) agg[r][c] += m[k][c];
        }
        for (std::size_t i = 0; i < n_nodes; ++i) {
            std::vector<double> upd = (l == 1) ? pr[i] : h[i];
            if (has_in[i])
                for (std::size_t c = 0; c < d; ++c)
                    upd[c] += agg[i][c] > 0.0 ? agg[i][c] : 0.0;
            h[i] = std::move(upd);
        }
        he = m;

        std::vector<std::vector<double>> layer_att(reg.edge_types.size());
        for (std::size_t k = 0; k < n_edges; ++k) layer_att[graph.edges[k].type].push_back(a[k]);
        result.attention.push_back(std::move(layer_att));
    }

    // Pack into per-type matrices in ascending id order.
    GraphIndex idx(graph, reg);
    for (std::size_t t = 0; t < reg.node_types.size(); ++t) {
        const auto& ids = idx.nodes_of_type[t];
        const std::size_t dim = ids.empty() ? (cfg.layers ? layer_dims[cfg.layers - 1]
                                                          : reg.node_types[t].attr_dim)
                                            : h[ids[0]].size();
        ad::Tensor mt({ids.size(), dim});
        for (std::size_t r = 0; r < ids.size(); ++r)
            for (std::size_t c = 0; c < dim; ++c) mt.at(r, c) = h[ids[r]][c];
        result.node_feats.push_back(std::move(mt));
    }
    for (std::size_t t = 0; t < reg.edge_types.size(); ++t) {
        const auto& pos = idx.batches[t].edge_pos;
        const std::size_t dim = pos.empty() ? (cfg.layers ? layer_dims[cfg.layers - 1]
                                                          : reg.edge_types[t].attr_dim)
                                            : he[pos[0]].size();
        ad::Tensor mt({pos.size(), dim});
        for (std::size_t r = 0; r < pos.size(); ++r)
            for (std::size_t c = 0; c < dim; ++c) mt.at(r, c) = he[pos[r]][c];
        result.edge_feats.push_back(std::move(mt));
    }
    return result;
}

}  // namespace stgraph
