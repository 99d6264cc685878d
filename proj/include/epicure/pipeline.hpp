#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "epicure/config.hpp"
#include "epicure/factors.hpp"
#include "epicure/geometry.hpp"
#include "epicure/graph.hpp"
#include "epicure/probes.hpp"
#include "epicure/trainer.hpp"
#include "epicure/walker.hpp"

namespace epicure {

// Experiment config, e.g.
//
//   [inputs]
//   vocab = vocab.csv
//   recipes = [recipes/*.jsonl]
//   compounds = compounds.csv
//   [output]
//   dir = runs/toy
//   [variants]
//   train = [cooc, core, chem]
//   [walk]
//   walks_per_node = 10
//   [train]
//   dim = 32
//
// Relative paths resolve against the config file's directory.
struct PipelineConfig {
    std::filesystem::path vocab;
    std::vector<std::string> recipes;  // globs
    std::filesystem::path compounds;
    std::filesystem::path out_dir;
    std::optional<std::filesystem::path> labels;

    unsigned ingest_workers = 1;
    unsigned walk_workers = 1;
    NpmiOptions npmi;
    std::size_t min_compound_degree = 2;
    std::size_t walks_per_node = 100;
    std::size_t walk_length = 50;
    std::uint64_t walk_seed = 42;
    std::size_t core_ii_repeat = 10;
    TrainConfig train;
    GeometryOptions geometry;
    ProbeOptions probes;
    AtlasOptions atlas;
    std::vector<Variant> variants{Variant::Cooc, Variant::Core, Variant::Chem};
    std::string bind = "127.0.0.1:8080";
    std::string cors_origin;

    static PipelineConfig from_config(const ConfigFile& cfg);
    static PipelineConfig load(const std::filesystem::path& path);

    WalkSchema schema_for(Variant v) const;
};

struct RunOptions {
    bool strict = false;
    std::optional<std::vector<Variant>> variants;  // overrides the config's list
    bool force = false;                            // rerun every stage
};

struct StageOutcome {
    std::string stage;
    bool skipped = false;
    double seconds = 0.0;
};

/// One directory per stage, each with manifest.json (stage, tool version, config
/// hash, input and output sha256) and timing.json (wall time). A stage is skipped
/// when its manifest matches the current config, inputs and outputs. With
/// `strict`, an output that no longer matches its manifest aborts the run.
std::vector<StageOutcome> run_pipeline(const PipelineConfig& cfg, const RunOptions& opts);

/// Stage directory layout under the output root.
struct RunLayout {
    std::filesystem::path root;
    std::filesystem::path ingest() const { return root / "ingest"; }
    std::filesystem::path graph() const { return root / "graph"; }
    std::filesystem::path variant(Variant v) const { return root / std::string(variant_name(v)); }
    std::filesystem::path walks(Variant v) const { return variant(v) / "walks"; }
    std::filesystem::path model(Variant v) const { return variant(v) / "model"; }
    std::filesystem::path geometry(Variant v) const { return variant(v) / "geometry"; }
    std::filesystem::path probes(Variant v) const { return variant(v) / "probes"; }
    std::filesystem::path atlas(Variant v) const { return variant(v) / "atlas"; }
    std::filesystem::path bundle(Variant v) const { return variant(v) / "bundle"; }
    std::filesystem::path registry() const { return root / "registry.cfg"; }
};

}  // namespace epicure
