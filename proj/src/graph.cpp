#include "stgraph/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace stgraph {

int TypeRegistry::node_type_id(const std::string& name) const {
    for (std::size_t i = 0; i < node_types.size(); ++i)
        if (node_types[i].name == name) return static_cast<int>(i);
    return -1;
}

int TypeRegistry::edge_type_id(const std::string& name) const {
    for (std::size_t i = 0; i < edge_types.size(); ++i)
        if (edge_types[i].name == name) return static_cast<int>(i);
    return -1;
}

void TypeRegistry::check() const {
    std::set<std::string> names;
    for (const auto& nt : node_types) {
        if (!names.insert(nt.name).second)
            throw std::invalid_argument("registry: duplicate node type '" + nt.name + "'");
    }
    names.clear();
    for (const auto& et : edge_types) {
        if (!names.insert(et.name).second)
            throw std::invalid_argument("registry: duplicate edge type '" + et.name + "'");
        if (et.sender < 0 || et.sender >= static_cast<int>(node_types.size()) ||
            et.receiver < 0 || et.receiver >= static_cast<int>(node_types.size()))
            throw std::invalid_argument("registry: edge type '" + et.name +
                                        "' references an undeclared node type");
    }
}

namespace {

TypeRegistry make_registry(std::size_t actor_dim, std::size_t object_dim, std::size_t edge_dim,
                           const std::vector<const char*>& edge_names) {
    TypeRegistry r;
    r.node_types = {{"actor", actor_dim}, {"object", object_dim}};
    const int actor = 0, object = 1;
    for (const char* name : edge_names) {
        const std::string n = name;
        TypeRegistry::EdgeType et;
        if (n == "obj-act-s") et = {n, object, actor, false, edge_dim};
        else if (n == "act-obj-s") et = {n, actor, object, false, edge_dim};
        else if (n == "obj-obj-s") et = {n, object, object, false, edge_dim};
        else if (n == "act-act-t") et = {n, actor, actor, true, edge_dim};
        else if (n == "obj-obj-t") et = {n, object, object, true, edge_dim};
        else throw std::invalid_argument("registry: unknown preset edge type '" + n + "'");
        r.edge_types.push_back(et);
    }
    r.check();
    return r;
}

}  // namespace

TypeRegistry TypeRegistry::standard(std::size_t actor_dim, std::size_t object_dim,
                                    std::size_t edge_dim) {
    return make_registry(actor_dim, object_dim, edge_dim,
                         {"obj-act-s", "act-obj-s", "obj-obj-s", "act-act-t", "obj-obj-t"});
}

TypeRegistry TypeRegistry::reduced(std::size_t actor_dim, std::size_t object_dim,
                                   std::size_t edge_dim) {
    return make_registry(actor_dim, object_dim, edge_dim, {"obj-act-s", "act-obj-s", "act-act-t"});
}

TypeRegistry TypeRegistry::spatial_chain(std::size_t actor_dim, std::size_t object_dim,
                                         std::size_t edge_dim) {
    return make_registry(actor_dim, object_dim, edge_dim,
                         {"obj-act-s", "act-obj-s", "obj-obj-s", "act-act-t"});
}

void VisualSTGraph::sort_edges() {
    std::sort(edges.begin(), edges.end(), [](const VisualEdge& a, const VisualEdge& b) {
        if (a.receiver != b.receiver) return a.receiver < b.receiver;
        if (a.type != b.type) return a.type < b.type;
        return a.sender < b.sender;
    });
}

std::vector<Violation> validate(const VisualSTGraph& g, const TypeRegistry& registry) {
    std::vector<Violation> out;
    const int n_nodes = static_cast<int>(g.nodes.size());
    for (int i = 0; i < n_nodes; ++i) {
        const VisualNode& node = g.nodes[i];
        if (node.id != i)
            out.push_back({"node id does not equal its index", i, -1});
        if (node.type < 0 || node.type >= static_cast<int>(registry.node_types.size())) {
            out.push_back({"undeclared node type", i, -1});
            continue;
        }
        if (node.frame < 0 || node.frame >= g.frames)
            out.push_back({"frame index outside [0, T)", i, -1});
        if (node.attr.size() != registry.node_types[node.type].attr_dim)
            out.push_back({"node attribute dim " + std::to_string(node.attr.size()) +
                               " does not match registry dim " +
                               std::to_string(registry.node_types[node.type].attr_dim),
                           i, -1});
    }
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        const VisualEdge& edge = g.edges[e];
        const int ei = static_cast<int>(e);
        if (edge.type < 0 || edge.type >= static_cast<int>(registry.edge_types.size())) {
            out.push_back({"undeclared edge type", -1, ei});
            continue;
        }
        if (edge.sender < 0 || edge.sender >= n_nodes || edge.receiver < 0 ||
            edge.receiver >= n_nodes) {
            out.push_back({"edge endpoint does not exist", -1, ei});
            continue;
        }
        const auto& et = registry.edge_types[edge.type];
        const VisualNode& s = g.nodes[edge.sender];
        const VisualNode& r = g.nodes[edge.receiver];
        if (s.type != et.sender)
            out.push_back({"sender type mismatch for edge type '" + et.name + "'", -1, ei});
        if (r.type != et.receiver)
            out.push_back({"receiver type mismatch for edge type '" + et.name + "'", -1, ei});
        if (et.temporal) {
            if (r.frame != s.frame + 1)
                out.push_back({"temporal edge must span frame t-1 to t", -1, ei});
        } else if (s.frame != r.frame) {
            out.push_back({"temporal span on spatial edge", -1, ei});
        }
        if (edge.attr.size() != et.attr_dim)
            out.push_back({"edge attribute dim " + std::to_string(edge.attr.size()) +
                               " does not match registry dim " + std::to_string(et.attr_dim),
                           -1, ei});
    }
    return out;
}

std::vector<double> box_relation(const std::array<double, 4>& sender,
                                 const std::array<double, 4>& receiver) {
    const auto [xj, yj, wj, hj] = sender;
    const auto [xi, yi, wi, hi] = receiver;
    return {(xj - xi) / wi, (yj - yi) / hi, std::log(wj / wi), std::log(hj / hi)};
}

VisualSTGraph build_connectivity(const std::vector<Detection>& detections,
                                 const TypeRegistry& registry) {
    registry.check();
    VisualSTGraph g;
    int max_frame = -1;
    for (const Detection& d : detections) {
        if (d.type < 0 || d.type >= static_cast<int>(registry.node_types.size()))
            throw std::invalid_argument("build_connectivity: unknown node type " +
                                        std::to_string(d.type));
        if (d.frame < 0) throw std::invalid_argument("build_connectivity: negative frame index");
        max_frame = std::max(max_frame, d.frame);
    }
    g.frames = max_frame + 1;

    // Ids in (frame, input order) order.
    std::vector<std::size_t> order(detections.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return detections[a].frame < detections[b].frame;
    });
    std::vector<std::optional<std::array<double, 4>>> boxes;
    for (std::size_t i : order) {
        VisualNode node;
        node.id = static_cast<int>(g.nodes.size());
        node.type = detections[i].type;
        node.frame = detections[i].frame;
        node.attr = detections[i].attr;
        g.nodes.push_back(std::move(node));
        boxes.push_back(detections[i].box);
    }

    std::vector<std::vector<int>> per_frame(g.frames);
    for (const VisualNode& n : g.nodes) per_frame[n.frame].push_back(n.id);

    for (std::size_t t = 0; t < registry.edge_types.size(); ++t) {
        const auto& et = registry.edge_types[t];
        for (int f = et.temporal ? 1 : 0; f < g.frames; ++f) {
            const auto& senders = per_frame[et.temporal ? f - 1 : f];
            for (int r : per_frame[f]) {
                if (g.nodes[r].type != et.receiver) continue;
                for (int s : senders) {
                    if (g.nodes[s].type != et.sender) continue;
                    if (s == r) continue;
                    VisualEdge e;
                    e.sender = s;
                    e.receiver = r;
                    e.type = static_cast<int>(t);
                    if (boxes[s] && boxes[r]) {
                        e.attr = box_relation(*boxes[s], *boxes[r]);
                        e.attr.resize(et.attr_dim, 0.0);
                    } else {
                        e.attr.assign(et.attr_dim, 0.0);
                    }
                    g.edges.push_back(std::move(e));
                }
            }
        }
    }
    g.sort_edges();
    return g;
}

void SymbolicGraph::check() const {
    const std::size_t c = symbols.size();
    if (adjacency.rank() != 2 || adjacency.rows() != c || adjacency.cols() != c)
        throw std::invalid_argument("symbolic graph: adjacency shape " + adjacency.shape_str() +
                                    " does not match " + std::to_string(c) + " symbols");
    for (double v : adjacency.data()) {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument("symbolic graph: adjacency must be nonnegative and finite");
    }
    const std::size_t k = embed_dim();
    for (const auto& s : symbols) {
        if (s.embedding.size() != k)
            throw std::invalid_argument("symbolic graph: embedding dims must all equal " +
                                        std::to_string(k));
    }
    for (const auto& conn : connections) {
        for (std::int64_t c_id : conn) {
            if (c_id < 0 || static_cast<std::size_t>(c_id) >= c)
                throw std::invalid_argument("symbolic graph: connection references symbol " +
                                            std::to_string(c_id) + " of " + std::to_string(c));
        }
    }
}

SymbolicGraph build_cooccurrence_symbolic_graph(
    const std::vector<std::vector<std::int64_t>>& frame_labels,
    const std::vector<std::vector<double>>& embeddings,
    const std::vector<std::string>& labels,
    std::vector<std::vector<std::int64_t>> connections) {
    if (labels.size() != embeddings.size())
        throw std::invalid_argument("cooccurrence: " + std::to_string(labels.size()) +
                                    " labels but " + std::to_string(embeddings.size()) +
                                    " embeddings");
    const std::size_t c = labels.size();
    SymbolicGraph g;
    for (std::size_t i = 0; i < c; ++i)
        g.symbols.push_back({static_cast<int>(i), labels[i], embeddings[i]});
    g.adjacency = ad::Tensor({c, c});
    for (const auto& frame : frame_labels) {
        std::set<std::int64_t> active(frame.begin(), frame.end());
        for (std::int64_t a : active) {
            if (a < 0 || static_cast<std::size_t>(a) >= c)
                throw std::invalid_argument("cooccurrence: label " + std::to_string(a) +
                                            " has no embedding");
            for (std::int64_t b : active) {
                if (a == b) continue;  // diagonal excluded before normalization
                g.adjacency.at(a, b) += 1.0;
            }
        }
    }
    g.connections = std::move(connections);
    g.check();
    return g;
}

AdjacencyScheme adjacency_scheme_from_string(const std::string& s) {
    if (s == "sym") return AdjacencyScheme::Sym;
    if (s == "row") return AdjacencyScheme::Row;
    if (s == "none") return AdjacencyScheme::None;
    throw std::invalid_argument("unknown adjacency scheme '" + s + "'");
}

std::string to_string(AdjacencyScheme scheme) {
    switch (scheme) {
        case AdjacencyScheme::Sym: return "sym";
        case AdjacencyScheme::Row: return "row";
        case AdjacencyScheme::None: return "none";
    }
    return "?";
}

ad::Tensor normalize_adjacency(const ad::Tensor& adjacency, AdjacencyScheme scheme) {
    if (adjacency.rank() != 2 || adjacency.rows() != adjacency.cols())
        throw std::invalid_argument("normalize_adjacency: matrix must be square, got " +
                                    adjacency.shape_str());
    for (double v : adjacency.data())
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument("normalize_adjacency: entries must be nonnegative");
    const std::size_t n = adjacency.rows();
    if (scheme == AdjacencyScheme::None) return adjacency;
    ad::Tensor out({n, n});
    if (scheme == AdjacencyScheme::Sym) {
        std::vector<double> degree(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) degree[i] += adjacency.at(i, j);
            degree[i] += 1.0;  // self-loop
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double a = adjacency.at(i, j) + (i == j ? 1.0 : 0.0);
                out.at(i, j) = a / std::sqrt(degree[i] * degree[j]);
            }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            double degree = 0.0;
            for (std::size_t j = 0; j < n; ++j) degree += adjacency.at(i, j);
            if (degree == 0.0) {
                out.at(i, i) = 1.0;  // unit self-loop row
            } else {
                for (std::size_t j = 0; j < n; ++j) out.at(i, j) = adjacency.at(i, j) / degree;
            }
        }
    }
    return out;
}

}  // namespace stgraph
