#pragma once

#include <random>
#include <string>
#include <vector>

#include "stgraph/autodiff.hpp"
#include "stgraph/graph.hpp"
#include "stgraph/params.hpp"

namespace stgraph {

/// Switches of the visual message-passing layers. beta gates edge features
/// in attention, lambda_v / lambda_e gate sender and edge features in
/// messages; attention=false replaces learned weights with uniform ones over
/// each typed neighborhood.
struct VisualForwardConfig {
    int layers = 2;
    bool beta = true;
    bool lambda_v = true;
    bool lambda_e = true;
    bool attention = true;
    double leaky_slope = 0.2;
    double dropout = 0.0;  // projection outputs, training only
};

/// Precomputed per-type indexing of one graph. Node features are held as one
/// matrix per node type, edge features as one matrix per edge type; rows
/// follow ascending node id / the sorted edge order.
struct GraphIndex {
    std::vector<std::vector<int>> nodes_of_type;  // node ids, ascending
    std::vector<int> local_row;                   // node id -> row within its type

    struct EdgeBatch {
        std::vector<int> edge_pos;                 // indices into graph.edges, ascending
        std::vector<std::int64_t> sender_local;    // rows into sender-type matrix
        std::vector<std::int64_t> receiver_local;  // rows into receiver-type matrix
        std::vector<std::int64_t> receiver_id;     // segment key for attention
    };
    std::vector<EdgeBatch> batches;  // per edge type

    GraphIndex(const VisualSTGraph& g, const TypeRegistry& reg);
};

/// Node/edge features at one layer, one matrix per type.
struct RefinedState {
    std::vector<ad::Var> node_feats;
    std::vector<ad::Var> edge_feats;
};

/// Attention weights per edge type for one layer (used by inspect dumps).
struct AttentionTrace {
    std::vector<ad::Var> per_edge_type;
};

/// Layer dimensions: d_l for l = 1..L. Input dims at layer 1 come from the
/// registry; later layers consume d_{l-1}.
std::size_t visual_node_in_dim(const TypeRegistry& reg, const std::vector<std::size_t>& dims,
                               int layer, int node_type);
std::size_t visual_edge_in_dim(const TypeRegistry& reg, const std::vector<std::size_t>& dims,
                               int layer, int edge_type);

std::string visual_node_param(int layer, const std::string& type_name, const std::string& role);
std::string visual_edge_param(int layer, const std::string& type_name, const std::string& role);

/// Adds W_r/W_s per node type, W_e/v_a per edge type for every layer.
/// Attention vectors start at zero so initial attention is uniform.
void add_visual_params(ParameterBank& bank, const TypeRegistry& reg,
                       const std::vector<std::size_t>& layer_dims, std::mt19937_64& rng);

/// Leaves holding the raw node/edge attributes, one matrix per type.
RefinedState initial_state(ad::ExprGraph& g, const VisualSTGraph& graph, const GraphIndex& idx,
                           const TypeRegistry& reg);

/// Context for evaluating one layer.
struct VisualLayerOps {
    ad::ExprGraph& g;
    const VisualSTGraph& graph;
    const GraphIndex& idx;
    const TypeRegistry& reg;
    ParamBinding& params;
    const VisualForwardConfig& cfg;
    const std::vector<std::size_t>& layer_dims;
    int layer;  // 1-based
};

/// Per-edge attention weights a_ij, one vector per edge type. Weights within
/// each (receiver, edge type) neighborhood sum to one.
std::vector<ad::Var> attention_coefficients(const VisualLayerOps& ops, const RefinedState& state);

/// Messages m_ij = a_ij (lambda_v W_s h_j + lambda_e W_e h_ij), one matrix
/// per edge type.
std::vector<ad::Var> messages(const VisualLayerOps& ops, const RefinedState& state,
                              const std::vector<ad::Var>& attention);

/// h_i <- h_i + relu(sum of incoming messages); edge features become the
/// messages. `base` must already be in message space (visual_forward projects
/// through W_r before the first layer's update).
RefinedState layer_update(const VisualLayerOps& ops, const RefinedState& base,
                          const std::vector<ad::Var>& msgs);

/// L rounds of (attention, messages, update). L = 0 returns the inputs
/// unchanged. `dropout_rng` enables training-mode dropout on projection
/// outputs; pass nullptr for evaluation. `trace` collects per-layer
/// attention when non-null.
RefinedState visual_forward(ad::ExprGraph& g, const VisualSTGraph& graph, const GraphIndex& idx,
                            const TypeRegistry& reg, ParamBinding& params,
                            const VisualForwardConfig& cfg,
                            const std::vector<std::size_t>& layer_dims,
                            std::mt19937_64* dropout_rng = nullptr,
                            std::vector<AttentionTrace>* trace = nullptr);

/// Plain-tensor result of the naive reference path.
struct NaiveVisualState {
    std::vector<ad::Tensor> node_feats;
    std::vector<ad::Tensor> edge_feats;
    std::vector<std::vector<std::vector<double>>> attention;  // [layer][edge type][edge]
};

/// Per-edge scalar-loop oracle with the same contract as visual_forward in
/// evaluation mode. Kept free of the expression-graph machinery on purpose.
NaiveVisualState visual_forward_naive(const VisualSTGraph& graph, const TypeRegistry& reg,
                                      const ParameterBank& bank, const VisualForwardConfig& cfg,
                                      const std::vector<std::size_t>& layer_dims);

}  // namespace stgraph
