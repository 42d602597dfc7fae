#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stgraph/tensor.hpp"

namespace stgraph {

/// Declares node types, edge types and per-type attribute dimensionalities.
/// Edge types carry their (sender type, receiver type, temporal) signature;
/// temporal edges always span frame t-1 -> t.
struct TypeRegistry {
    struct NodeType {
        std::string name;
        std::size_t attr_dim = 0;
    };
    struct EdgeType {
        std::string name;
        int sender = -1;
        int receiver = -1;
        bool temporal = false;
        std::size_t attr_dim = 0;
    };

    std::vector<NodeType> node_types;
    std::vector<EdgeType> edge_types;

    int node_type_id(const std::string& name) const;
    int edge_type_id(const std::string& name) const;

    /// Throws when names collide or an edge type references unknown node types.
    void check() const;

    /// actor/object nodes with the five standard edge types:
    /// obj-act-s, act-obj-s, obj-obj-s, act-act-t, obj-obj-t.
    static TypeRegistry standard(std::size_t actor_dim, std::size_t object_dim,
                                 std::size_t edge_dim);
    /// The reduced interaction set: obj-act-s, act-obj-s, act-act-t.
    static TypeRegistry reduced(std::size_t actor_dim, std::size_t object_dim,
                                std::size_t edge_dim);
    /// `standard` minus temporal object edges plus nothing else; used by the
    /// two-hop task: obj-act-s, act-obj-s, obj-obj-s, act-act-t.
    static TypeRegistry spatial_chain(std::size_t actor_dim, std::size_t object_dim,
                                      std::size_t edge_dim);
};

struct VisualNode {
    int id = -1;
    int type = -1;
    int frame = -1;
    std::vector<double> attr;
};

struct VisualEdge {
    int sender = -1;
    int receiver = -1;
    int type = -1;
    std::vector<double> attr;
};

/// Typed spatio-temporal graph. Node ids equal their index; the edge list is
/// kept sorted by (receiver, type, sender), which fixes every reduction order
/// downstream.
struct VisualSTGraph {
    int frames = 0;
    std::vector<VisualNode> nodes;
    std::vector<VisualEdge> edges;

    void sort_edges();
};

struct Violation {
    std::string what;
    int node_id = -1;
    int edge_index = -1;
};

/// Every invariant violation of `g` against `registry`; empty means ok.
std::vector<Violation> validate(const VisualSTGraph& g, const TypeRegistry& registry);

/// One detected region prior to graph construction.
struct Detection {
    int type = -1;
    int frame = -1;
    std::vector<double> attr;
    /// Optional box (cx, cy, w, h) in normalized [0,1] coordinates.
    std::optional<std::array<double, 4>> box;
};

/// Relative-position edge feature for boxes j -> i:
/// [(xj-xi)/wi, (yj-yi)/hi, log(wj/wi), log(hj/hi)].
std::vector<double> box_relation(const std::array<double, 4>& sender,
                                 const std::array<double, 4>& receiver);

/// Instantiates every edge the registry permits: spatial edges fully connect
/// permitted type pairs within a frame, temporal edges fully connect nodes of
/// the permitted sender type at frame t-1 to receivers at frame t. Node ids
/// are assigned in (frame, input order) order.
VisualSTGraph build_connectivity(const std::vector<Detection>& detections,
                                 const TypeRegistry& registry);

struct SymbolicNode {
    int id = -1;
    std::string label;
    std::vector<double> embedding;
};

/// Label graph: symbols with embedding attributes, a nonnegative weighted
/// adjacency, and the permitted visual-type -> symbol connections.
struct SymbolicGraph {
    std::vector<SymbolicNode> symbols;
    ad::Tensor adjacency;                              // |V^s| x |V^s|
    std::vector<std::vector<std::int64_t>> connections;  // per visual node type

    std::size_t count() const { return symbols.size(); }
    std::size_t embed_dim() const { return symbols.empty() ? 0 : symbols[0].embedding.size(); }
    void check() const;
};

/// Off-diagonal co-occurrence counts over per-frame label sets; diagonal is
/// zero. Throws when a label id has no embedding row.
SymbolicGraph build_cooccurrence_symbolic_graph(
    const std::vector<std::vector<std::int64_t>>& frame_labels,
    const std::vector<std::vector<double>>& embeddings,
    const std::vector<std::string>& labels,
    std::vector<std::vector<std::int64_t>> connections);

enum class AdjacencyScheme { Sym, Row, None };

AdjacencyScheme adjacency_scheme_from_string(const std::string& s);
std::string to_string(AdjacencyScheme scheme);

/// "sym": D^(-1/2) (A + I) D^(-1/2) with D the degree of A + I.
/// "row": row-stochastic A; zero-degree rows become unit self-loops.
/// "none": identity pass-through.
ad::Tensor normalize_adjacency(const ad::Tensor& adjacency, AdjacencyScheme scheme);

}  // namespace stgraph
