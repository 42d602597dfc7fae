#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stgraph/graph.hpp"
#include "stgraph/params.hpp"

namespace stgraph::dataio {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kSchemaVersion = 1;

// ---- registry ----------------------------------------------------------

nlohmann::json registry_to_json(const TypeRegistry& reg);
TypeRegistry registry_from_json(const nlohmann::json& j);
void save_registry(const TypeRegistry& reg, const std::string& path);
TypeRegistry load_registry(const std::string& path);

// ---- graphs ------------------------------------------------------------

void save_graph(const VisualSTGraph& g, const TypeRegistry& reg, const std::string& path);
/// Parses, checks the schema version and validates against the registry;
/// each failure mode raises its own error type.
VisualSTGraph load_graph(const std::string& path, const TypeRegistry& reg);

// ---- symbolic graphs ---------------------------------------------------

void save_symbolic(const SymbolicGraph& sym, const std::string& path);
SymbolicGraph load_symbolic(const std::string& path);

// ---- manifests ---------------------------------------------------------

struct SampleRecord {
    std::string graph_path;  // relative to the manifest directory
    std::map<std::int64_t, std::int64_t> node_labels;        // per-node task
    std::vector<std::vector<std::int64_t>> frame_labels;     // per-frame task
};

struct DatasetManifest {
    std::string split;
    std::string task;  // "per_node" | "per_frame"
    std::string registry_path;
    std::string symbolic_path;
    std::int64_t classes = 0;
    std::vector<std::int64_t> rare_classes;
    std::vector<SampleRecord> samples;
    std::string base_dir;  // directory of the manifest file; not serialized
};

void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

/// Manifest plus everything it references, with every graph validated and
/// label ids checked against the declared class count.
struct Dataset {
    DatasetManifest manifest;
    TypeRegistry registry;
    SymbolicGraph symbolic;
    std::vector<VisualSTGraph> graphs;
};

Dataset load_dataset(const std::string& manifest_path);

// ---- checkpoints -------------------------------------------------------

/// Flat little-endian doubles with a JSON header mapping parameter names to
/// offsets and shapes; `meta` travels in the header.
void save_checkpoint(const ParameterBank& bank, const nlohmann::json& meta,
                     const std::string& path);
std::pair<ParameterBank, nlohmann::json> load_checkpoint(const std::string& path);

// ---- synthetic tasks ---------------------------------------------------

/// Desk-scale stand-ins for the per-node and per-frame protocols. The
/// per-node rule routes each actor's class through the edge attributes of
/// its highest-affinity object neighbor (one or two hops); the per-frame
/// task draws label sets from a themed co-occurrence model in which rare
/// classes carry no direct visual evidence.
struct SyntheticTaskConfig {
    std::string task = "per_node";
    int frames = 2;
    int actors = 1;
    int objects = 3;
    std::int64_t classes = 4;
    std::size_t actor_dim = 8;
    std::size_t object_dim = 8;
    std::size_t edge_dim = 4;
    std::size_t embed_dim = 12;
    std::string edge_policy = "reduced";  // standard | reduced | spatial-chain
    int hops = 1;
    double affinity_gap = 0.5;
    double signal = 1.0;
    double noise = 0.0;  // train-split label noise
    // per-frame fields
    std::int64_t rare_classes = 3;
    int theme_size = 2;
    double cooccurrence = 0.75;
    double base_rate = 0.02;
    double evidence_noise = 0.3;
    int train_graphs = 500;
    int test_graphs = 200;
    std::uint64_t seed = 1;

    void check() const;
    nlohmann::json to_json() const;
    static SyntheticTaskConfig from_json(const nlohmann::json& j);
    /// Named task presets used by the shipped experiments: node-basic,
    /// node-distractor, node-twohop, frame-cooccur.
    static SyntheticTaskConfig preset(const std::string& name);
};

struct GeneratedDataset {
    std::string train_manifest;
    std::string test_manifest;
    std::string symbolic_path;
    std::string registry_path;
};

TypeRegistry synthetic_registry(const SyntheticTaskConfig& cfg);

/// Writes registry, symbolic graph, graphs and both manifests under
/// `out_dir`. Deterministic for a fixed config.
GeneratedDataset generate_synthetic(const SyntheticTaskConfig& cfg, const std::string& out_dir);

}  // namespace stgraph::dataio
