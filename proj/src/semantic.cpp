#include "stgraph/semantic.hpp"

#include <cmath>
#include <stdexcept>

namespace stgraph {

using ad::Var;

std::string semantic_param(const std::string& role) { return "semantic." + role; }

std::string gcn_param(int round) { return "semantic.gcn.r" + std::to_string(round); }

void add_semantic_params(ParameterBank& bank, const SymbolicGraph& sym, const SemanticConfig& cfg,
                         std::size_t d_vis, std::mt19937_64& rng) {
    const std::size_t c = sym.count();
    const std::size_t k = sym.embed_dim();
    // Association vectors start at zero: uniform assignment over each
    // neighborhood until trained.
    bank.add(semantic_param("wvs"), ad::Tensor({c, d_vis}));
    bank.add(semantic_param("Wpvs"), init_fan_in({cfg.ds, d_vis}, d_vis, rng));
    for (int r = 1; r <= cfg.gcn_rounds; ++r) {
        const std::size_t in = r == 1 ? k + cfg.ds : cfg.ds;
        bank.add(gcn_param(r), init_fan_in({cfg.ds, in}, in, rng));
    }
    bank.add(semantic_param("vasv"), ad::Tensor({cfg.ds + d_vis}));
    bank.add(semantic_param("Wpsv"), init_fan_in({d_vis, cfg.ds}, cfg.ds, rng));
}

AssociationResult associate_visual_to_symbolic(ad::ExprGraph& g, const std::vector<Var>& visual,
                                               const SymbolicGraph& sym, ParamBinding& params,
                                               const SemanticConfig& cfg,
                                               std::mt19937_64* dropout_rng) {
    const std::size_t c = sym.count();
    AssociationResult out;
    Var wvs = params[semantic_param("wvs")];
    Var wpvs = params[semantic_param("Wpvs")];
    Var acc;
    for (std::size_t t = 0; t < visual.size(); ++t) {
        const auto& allowed = sym.connections.size() > t ? sym.connections[t]
                                                         : std::vector<std::int64_t>{};
        if (allowed.empty()) {
            out.phi.push_back(Var{});
            continue;
        }
        Var w_rows = g.gather_rows(wvs, allowed);
        Var logits = g.matmul(visual[t], w_rows, false, true);
        Var phi = g.softmax_rows(logits);
        out.phi.push_back(phi);
        Var proj = g.matmul(visual[t], wpvs, false, true);
        if (dropout_rng && cfg.dropout > 0.0) proj = g.dropout(proj, cfg.dropout, *dropout_rng);
        Var contrib = g.matmul(phi, proj, true, false);
        Var scattered = g.scatter_add_rows(contrib, allowed, c);
        acc = acc.valid() ? g.add(acc, scattered) : scattered;
    }
    if (!acc.valid()) acc = g.leaf(ad::Tensor({c, cfg.ds}));
    out.evidence = g.relu(acc);
    return out;
}

Var assemble_symbolic_input(ad::ExprGraph& g, const SymbolicGraph& sym, Var evidence) {
    const std::size_t c = sym.count();
    const std::size_t k = sym.embed_dim();
    ad::Tensor emb({c, k});
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < k; ++j) emb.at(i, j) = sym.symbols[i].embedding[j];
    return g.concat_cols({g.leaf(std::move(emb)), evidence});
}

Var symbolic_gcn(ad::ExprGraph& g, Var s0, const ad::Tensor& a_hat, ParamBinding& params,
                 const SemanticConfig& cfg) {
    const std::size_t in_dim = g.value(s0).cols();
    if (cfg.gcn_rounds == 0) {
        if (in_dim != cfg.ds)
            throw std::invalid_argument(
                "symbolic_gcn: R=0 requires input width " + std::to_string(in_dim) +
                " to equal D_s=" + std::to_string(cfg.ds));
        return s0;
    }
    Var a = g.leaf(a_hat);
    Var s = s0;
    for (int r = 1; r <= cfg.gcn_rounds; ++r)
        s = g.relu(g.matmul(g.matmul(a, s), params[gcn_param(r)], false, true));
    return s;
}

MapBackResult map_symbolic_to_visual(ad::ExprGraph& g, const std::vector<Var>& visual,
                                     Var evolved, const SymbolicGraph& sym, ParamBinding& params,
                                     const SemanticConfig& cfg) {
    MapBackResult out;
    Var vasv = params[semantic_param("vasv")];
    Var wpsv = params[semantic_param("Wpsv")];
    for (std::size_t t = 0; t < visual.size(); ++t) {
        const auto& allowed = sym.connections.size() > t ? sym.connections[t]
                                                         : std::vector<std::int64_t>{};
        const std::size_t n = g.value(visual[t]).rows();
        if (allowed.empty() || n == 0) {
            out.node_feats.push_back(visual[t]);
            out.phi.push_back(Var{});
            continue;
        }
        const std::size_t m = allowed.size();
        Var s_rows = g.gather_rows(evolved, allowed);
        // All (node, symbol) pairs, node-major, per Eq. "[s_c ; h_i]".
        std::vector<std::int64_t> tile_s(n * m), tile_h(n * m);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                tile_s[i * m + j] = static_cast<std::int64_t>(j);
                tile_h[i * m + j] = static_cast<std::int64_t>(i);
            }
        Var cat = g.concat_cols({g.gather_rows(s_rows, tile_s), g.gather_rows(visual[t], tile_h)});
        const std::size_t width = g.value(cat).cols();
        Var logits = g.reshape(g.matmul(cat, g.reshape(vasv, {width, 1})), {n, m});
        Var phi = g.softmax_rows(logits);
        out.phi.push_back(phi);
        Var proj = g.matmul(s_rows, wpsv, false, true);
        Var incr = g.relu(g.matmul(phi, proj));
        out.node_feats.push_back(g.add(visual[t], incr));
    }
    return out;
}

std::vector<Var> semantic_forward(ad::ExprGraph& g, const std::vector<Var>& visual,
                                  const SymbolicGraph& sym, const ad::Tensor& a_hat,
                                  ParamBinding& params, const SemanticConfig& cfg,
                                  std::mt19937_64* dropout_rng, SemanticTrace* trace) {
    if (!cfg.enabled) return visual;
    AssociationResult assoc = associate_visual_to_symbolic(g, visual, sym, params, cfg, dropout_rng);
    Var s0 = assemble_symbolic_input(g, sym, assoc.evidence);
    Var evolved = symbolic_gcn(g, s0, a_hat, params, cfg);
    MapBackResult mapped = map_symbolic_to_visual(g, visual, evolved, sym, params, cfg);
    if (trace) {
        trace->phi_vs = assoc.phi;
        trace->phi_sv = mapped.phi;
        trace->evidence = assoc.evidence;
        trace->evolved = evolved;
    }
    return mapped.node_feats;
}

namespace {

std::vector<double> matvec(const ad::Tensor& w, const std::vector<double>& x) {
    std::vector<double> out(w.rows(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < w.cols(); ++c) s += w.at(r, c) * x[c];
        out[r] = s;
    }
    return out;
}

std::vector<double> row_of(const ad::Tensor& m, std::size_t r) {
    std::vector<double> out(m.cols());
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] = m.at(r, c);
    return out;
}

void softmax_inplace(std::vector<double>& v) {
    double m = v[0];
    for (double x : v) m = std::max(m, x);
    double s = 0.0;
    for (double& x : v) {
        x = std::exp(x - m);
        s += x;
    }
    for (double& x : v) x /= s;
}

}  // namespace

NaiveSemanticState semantic_forward_naive(const std::vector<ad::Tensor>& visual,
                                          const SymbolicGraph& sym, const ad::Tensor& a_hat,
                                          const ParameterBank& bank, const SemanticConfig& cfg) {
    NaiveSemanticState out;
    if (!cfg.enabled) {
        out.node_feats = visual;
        return out;
    }
    const std::size_t c = sym.count();
    const std::size_t k = sym.embed_dim();
    const ad::Tensor& wvs = bank.at(semantic_param("wvs"));
    const ad::Tensor& wpvs = bank.at(semantic_param("Wpvs"));
    const ad::Tensor& vasv = bank.at(semantic_param("vasv"));
    const ad::Tensor& wpsv = bank.at(semantic_param("Wpsv"));

    // phi^vs and evidence.
    ad::Tensor evidence({c, cfg.ds});
    out.phi_vs.resize(visual.size());
    for (std::size_t t = 0; t < visual.size(); ++t) {
        const auto& allowed = sym.connections.size() > t ? sym.connections[t]
                                                         : std::vector<std::int64_t>{};
        if (allowed.empty()) continue;
        const std::size_t n = visual[t].rows();
        ad::Tensor phi({n, allowed.size()});
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> h = row_of(visual[t], i);
            std::vector<double> logits(allowed.size());
            for (std::size_t j = 0; j < allowed.size(); ++j) {
                double dot = 0.0;
                for (std::size_t d = 0; d < wvs.cols(); ++d) dot += wvs.at(allowed[j], d) * h[d];
                logits[j] = dot;
            }
            softmax_inplace(logits);
            std::vector<double> proj = matvec(wpvs, h);
            for (std::size_t j = 0; j < allowed.size(); ++j) {
                phi.at(i, j) = logits[j];
                for (std::size_t d = 0; d < cfg.ds; ++d)
                    evidence.at(allowed[j], d) += logits[j] * proj[d];
            }
        }
        out.phi_vs[t] = std::move(phi);
    }
    for (double& v : evidence.data()) v = v > 0.0 ? v : 0.0;
    out.evidence = evidence;

    // S^(0) and GCN rounds.
    ad::Tensor s({c, k + cfg.ds});
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = 0; j < k; ++j) s.at(i, j) = sym.symbols[i].embedding[j];
        for (std::size_t j = 0; j < cfg.ds; ++j) s.at(i, k + j) = evidence.at(i, j);
    }
    if (cfg.gcn_rounds == 0 && s.cols() != cfg.ds)
        throw std::invalid_argument("symbolic_gcn: R=0 requires input width to equal D_s");
    for (int r = 1; r <= cfg.gcn_rounds; ++r) {
        const ad::Tensor& w = bank.at(gcn_param(r));
        ad::Tensor mixed({c, s.cols()});
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = 0; j < c; ++j)
                for (std::size_t d = 0; d < s.cols(); ++d)
                    mixed.at(i, d) += a_hat.at(i, j) * s.at(j, d);
        ad::Tensor next({c, cfg.ds});
        for (std::size_t i = 0; i < c; ++i) {
            std::vector<double> o = matvec(w, row_of(mixed, i));
            for (std::size_t d = 0; d < cfg.ds; ++d) next.at(i, d) = o[d] > 0.0 ? o[d] : 0.0;
        }
        s = std::move(next);
    }
    out.evolved = s;

    // phi^sv and residual update.
    out.phi_sv.resize(visual.size());
    for (std::size_t t = 0; t < visual.size(); ++t) {
        const auto& allowed = sym.connections.size() > t ? sym.connections[t]
                                                         : std::vector<std::int64_t>{};
        const std::size_t n = visual[t].rows();
        if (allowed.empty() || n == 0) {
            out.node_feats.push_back(visual[t]);
            continue;
        }
        const std::size_t d_vis = visual[t].cols();
        ad::Tensor phi({n, allowed.size()});
        ad::Tensor final_feats({n, d_vis});
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> h = row_of(visual[t], i);
            std::vector<double> logits(allowed.size());
            for (std::size_t j = 0; j < allowed.size(); ++j) {
                double dot = 0.0;
                for (std::size_t d = 0; d < cfg.ds; ++d)
                    dot += vasv[d] * s.at(allowed[j], d);
                for (std::size_t d = 0; d < d_vis; ++d) dot += vasv[cfg.ds + d] * h[d];
                logits[j] = dot;
            }
            softmax_inplace(logits);
            std::vector<double> incr(d_vis, 0.0);
            for (std::size_t j = 0; j < allowed.size(); ++j) {
                phi.at(i, j) = logits[j];
                std::vector<double> proj = matvec(wpsv, row_of(s, allowed[j]));
                for (std::size_t d = 0; d < d_vis; ++d) incr[d] += logits[j] * proj[d];
            }
            for (std::size_t d = 0; d < d_vis; ++d)
                final_feats.at(i, d) = h[d] + (incr[d] > 0.0 ? incr[d] : 0.0);
        }
        out.phi_sv[t] = std::move(phi);
        out.node_feats.push_back(std::move(final_feats));
    }
    return out;
}

}  // namespace stgraph
