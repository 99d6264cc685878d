#pragma once

// Shared fixtures and independent oracles for the test binaries.

#include <filesystem>
#include <string>
#include <vector>

#include "epicure/factors.hpp"
#include "epicure/graph.hpp"
#include "epicure/ingest.hpp"
#include "epicure/trainer.hpp"

namespace epicure::testsupport {

std::filesystem::path toy_dir();
std::filesystem::path golden_dir();
/// Fresh empty directory under the build tree.
std::filesystem::path scratch_dir(const std::string& name);

/// Vocabulary "i0".."i{V-1}" with no labels.
CanonicalVocabulary numbered_vocab(std::size_t V);

/// Recipes with Bernoulli-per-ingredient membership; popularity varies by id.
MatchedCorpus random_corpus(Rng& rng, std::size_t V, std::size_t R);

struct OracleEdge {
    std::size_t i = 0, j = 0;
    double w = 0.0;
};

/// Double loop over ingredient pairs, each pair counted by rescanning every recipe.
std::vector<OracleEdge> brute_force_npmi(const MatchedCorpus& corpus, std::size_t V, std::size_t min_recipe_count,
                                         bool count_pairless);

/// Embedding whose ingredient rows are the given vectors, under vocab names.
EmbeddingMatrix embedding_from_rows(const RowMatrixD& X, const CanonicalVocabulary& vocab, std::string variant);

/// Atlas from explicit member index groups, poles and scores computed from `X`.
ModeAtlas atlas_from_groups(const RowMatrixD& X, const CanonicalVocabulary& vocab,
                            const std::vector<std::vector<std::size_t>>& groups, const std::string& model);

/// Standard Laplace draw via inverse CDF.
double laplace(Rng& rng);

}  // namespace epicure::testsupport
