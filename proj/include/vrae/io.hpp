#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vrae/clustering.hpp"
#include "vrae/dataset.hpp"
#include "vrae/model.hpp"
#include "vrae/projection.hpp"
#include "vrae/scoring.hpp"

// Versioned JSON artifacts. Every file is an object whose first two keys are
// "format" (e.g. "vrae.checkpoint") and "version". Matrices are stored as
// {"rows", "cols", "data"} with data in row-major order. Doubles are written
// in shortest round-trip form, so a save/load cycle is bit-exact.
namespace vrae::io {

inline constexpr int kArtifactVersion = 1;

/// Test windows plus their labels and provenance, as encoded by the model.
struct LatentSet {
  Matrix latents;  // N x Z
  std::vector<data::ClassLabel> labels;
  std::vector<std::string> sim_ids;
};

/// 2D coordinates with the labels they inherited from the latents.
struct EmbeddingSet {
  projection::Embedding2D<double> embedding;
  std::vector<data::ClassLabel> labels;
};

void save_dataset(const data::WindowedDataset& dataset, const std::filesystem::path& path);
data::WindowedDataset load_dataset(const std::filesystem::path& path);

void save_checkpoint(const model::Checkpoint& checkpoint, const std::filesystem::path& path);
/// Validates the version and every tensor shape against the stored config.
model::Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_latents(const LatentSet& latents, const std::filesystem::path& path);
LatentSet load_latents(const std::filesystem::path& path);

void save_embedding(const EmbeddingSet& embedding, const std::filesystem::path& path);
EmbeddingSet load_embedding(const std::filesystem::path& path);

void save_assignment(const clustering::ClusterAssignment<double>& assignment,
                     const std::filesystem::path& path);
clustering::ClusterAssignment<double> load_assignment(const std::filesystem::path& path);

void save_score_reports(const std::vector<scoring::ScoreReport>& reports,
                        const std::filesystem::path& path);
std::vector<scoring::ScoreReport> load_score_reports(const std::filesystem::path& path);

/// 64-bit FNV-1a of the file bytes, as 16 lowercase hex digits.
std::string file_hash(const std::filesystem::path& path);

/// Writes `text` to `path`, creating parent directories. Throws DataError.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace vrae::io
