#pragma once

#include <random>
#include <vector>

#include "stgraph/autodiff.hpp"
#include "stgraph/graph.hpp"
#include "stgraph/params.hpp"
#include "stgraph/visual.hpp"

namespace stgraph {

/// Dimensions and switches of the semantic context module. d_vis is the
/// visual feature width the module consumes (d_L after the visual layers).
struct SemanticConfig {
    bool enabled = true;
    int gcn_rounds = 1;   // R
    std::size_t ds = 16;  // D_s
    AdjacencyScheme scheme = AdjacencyScheme::Sym;
    double dropout = 0.0;
};

/// Association weights and per-symbol visual evidence of one forward pass,
/// exposed for inspection. Rows follow the per-type node matrices; weights
/// are over each node's allowed symbols.
struct SemanticTrace {
    std::vector<ad::Var> phi_vs;  // per node type, (n_t x |allowed|); invalid when skipped
    std::vector<ad::Var> phi_sv;
    ad::Var evidence;             // f_c, (C x D_s)
    ad::Var evolved;              // S^(R), (C x D_s)
};

std::string semantic_param(const std::string& role);
std::string gcn_param(int round);

void add_semantic_params(ParameterBank& bank, const SymbolicGraph& sym, const SemanticConfig& cfg,
                         std::size_t d_vis, std::mt19937_64& rng);

/// phi^vs softmax association and per-symbol evidence f_c. Node types with
/// an empty allowed-symbol set contribute to no symbol.
struct AssociationResult {
    std::vector<ad::Var> phi;  // per node type
    ad::Var evidence;          // (C x D_s), relu applied
};
AssociationResult associate_visual_to_symbolic(ad::ExprGraph& g, const std::vector<ad::Var>& visual,
                                               const SymbolicGraph& sym, ParamBinding& params,
                                               const SemanticConfig& cfg,
                                               std::mt19937_64* dropout_rng = nullptr);

/// S^(0): row c = [s_c ; f_c].
ad::Var assemble_symbolic_input(ad::ExprGraph& g, const SymbolicGraph& sym, ad::Var evidence);

/// R rounds of S <- relu(A_hat S W). R = 0 is rejected because the input
/// width K + D_s cannot equal the required output width D_s.
ad::Var symbolic_gcn(ad::ExprGraph& g, ad::Var s0, const ad::Tensor& a_hat, ParamBinding& params,
                     const SemanticConfig& cfg);

/// phi^sv attention from evolved symbols to visual nodes and the residual
/// final update. Nodes with empty neighborhoods pass through unchanged.
struct MapBackResult {
    std::vector<ad::Var> node_feats;
    std::vector<ad::Var> phi;
};
MapBackResult map_symbolic_to_visual(ad::ExprGraph& g, const std::vector<ad::Var>& visual,
                                     ad::Var evolved, const SymbolicGraph& sym,
                                     ParamBinding& params, const SemanticConfig& cfg);

/// Composition of the four steps; identity on node features when disabled.
std::vector<ad::Var> semantic_forward(ad::ExprGraph& g, const std::vector<ad::Var>& visual,
                                      const SymbolicGraph& sym, const ad::Tensor& a_hat,
                                      ParamBinding& params, const SemanticConfig& cfg,
                                      std::mt19937_64* dropout_rng = nullptr,
                                      SemanticTrace* trace = nullptr);

/// Scalar-loop oracle for the whole module (evaluation mode).
struct NaiveSemanticState {
    std::vector<ad::Tensor> node_feats;
    std::vector<ad::Tensor> phi_vs;  // (n_t x |allowed|)
    std::vector<ad::Tensor> phi_sv;
    ad::Tensor evidence;
    ad::Tensor evolved;
};
NaiveSemanticState semantic_forward_naive(const std::vector<ad::Tensor>& visual,
                                          const SymbolicGraph& sym, const ad::Tensor& a_hat,
                                          const ParameterBank& bank, const SemanticConfig& cfg);

}  // namespace stgraph
