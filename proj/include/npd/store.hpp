#pragma once

// On-disk dataset store. Layout under a dataset directory:
//
//   manifest.json              schema, simulation config, one entry per sequence
//   sequences/<id>.f32         positions, little-endian float32, (N_obs, M_t, 3)
//   diagrams/<id>.dgm          persistence diagrams, see encode_diagrams
//   crocker/<id>.stk           cached crocker stacks
//   vectorizers/split<k>.json  vectorizer fitted on the train part of split k
//   runs/<variant>/split<k>_rate<r>/{checkpoint.bin,history.csv,scores.json}
//   reports/                   scores.csv and summary.txt
//
// Every file is written to a temporary name and renamed into place, so a
// reader sees either the previous version or the complete new one.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "npd/crocker.hpp"
#include "npd/latent.hpp"
#include "npd/ph.hpp"
#include "npd/swarm.hpp"

namespace npd::store {

namespace fs = std::filesystem;

inline constexpr int kManifestSchema = 1;
inline constexpr int kDiagramSchema = 1;
inline constexpr int kCheckpointSchema = 1;
inline constexpr int kStackSchema = 1;

// Raised for problems the caller can fix (missing stage, stale artifact).
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::uint32_t crc32(const std::string& bytes);
std::string read_file(const fs::path& path);
// Write to <path>.tmp, flush, rename over <path>.
void atomic_write(const fs::path& path, const std::string& bytes);

struct SequenceEntry {
    std::size_t id = 0;
    std::uint64_t seed = 0;
    swarm::SimParams params;
    std::vector<double> targets;
    std::size_t n_obs = 0;
    std::vector<std::uint32_t> counts;  // points per observation
    std::string file;                   // relative to the dataset directory
    std::uint64_t offset = 0;
    std::uint64_t bytes = 0;
    std::uint32_t crc = 0;
};

struct GenerateConfig {
    std::string model = "dorsogna-1k";
    std::size_t sequences = 10000;
    int points = 200;
    int steps = 1000;
    double dt = 0.01;
    int stride = 10;
    std::optional<swarm::Window> window;
    double beta = 0.5;
    std::uint64_t seed = 0;

    std::string to_json() const;
    static GenerateConfig from_json(const std::string& text);
    std::string hash() const;  // FNV-1a over to_json()
};

struct Manifest {
    int schema = kManifestSchema;
    GenerateConfig config;
    std::vector<std::string> target_names;
    std::vector<SequenceEntry> sequences;
    std::map<int, std::string> vectorizer_fingerprints;  // split -> fingerprint

    std::string to_json() const;
    static Manifest from_json(const std::string& text);
};

fs::path manifest_path(const fs::path& dir);
// Throws UsageError when absent or of an unknown schema.
Manifest load_manifest(const fs::path& dir);
void save_manifest(const fs::path& dir, const Manifest& manifest);

// Per-sequence seed derived from the master seed.
std::uint64_t sequence_seed(std::uint64_t master, std::size_t id);

// Draws parameters and simulates from the sequence seed alone, resampling
// parameters when a volex population exceeds its cap.
swarm::ObservationSequence simulate_sequence(const GenerateConfig& config, std::uint64_t seed);

std::string encode_positions(const std::vector<Cloud>& clouds);
std::vector<Cloud> decode_positions(const std::string& bytes, const std::vector<std::uint32_t>& counts);
// Reads and verifies length and checksum against the manifest entry.
std::vector<Cloud> load_positions(const fs::path& dir, const SequenceEntry& entry);

// Diagram codec, little-endian:
//   "NPDDGM01", u32 schema, u32 max_dim, u32 n_obs,
//   then per observation and dim: u32 n_pairs, n_pairs x (f32 birth, f32 death),
//   with an infinite death stored as -1.
using DiagramSequence = std::vector<std::vector<ph::PersistenceDiagram>>;  // [t][k]
std::string encode_diagrams(const DiagramSequence& seq, int max_dim);
DiagramSequence decode_diagrams(const std::string& bytes, int* max_dim = nullptr);
fs::path diagram_path(const fs::path& dir, std::size_t id);
// Diagrams restricted to dims 0..max_dim; throws UsageError if missing or
// computed with a smaller max_dim.
DiagramSequence load_diagrams(const fs::path& dir, std::size_t id, int max_dim);

// Crocker stack codec: "NPDSTK01", u32 schema, i32 eps, n_obs, alpha, u32 dims,
// per dim f64 max_persistence then u16 counts.
std::string encode_stack(const crocker::CrockerStack& stack);
crocker::CrockerStack decode_stack(const std::string& bytes);
fs::path stack_path(const fs::path& dir, std::size_t id);

fs::path vectorizer_path(const fs::path& dir, int split);

// Everything needed to rebuild and resume a trained model.
struct CheckpointMeta {
    std::string variant;  // "v1" or "baseline"
    int split = 0;
    double rate = 1.0;
    int max_dim = 1;
    std::uint64_t protocol_seed = 0;
    std::string vectorizer_fingerprint;
    latent::LatentConfig model;
    latent::TrainConfig train;
    std::vector<double> feature_mean, feature_std;
    std::vector<double> target_mean, target_std;
};

// Checkpoint layout, little-endian:
//   "NPDCKPT1", u32 schema, u32 meta_len, meta JSON,
//   u64 adam_steps, u32 n_params,
//   per parameter: u32 name_len, name, u64 numel, f64 values, f64 m, f64 v,
//   u32 crc32 of all preceding bytes.
void save_checkpoint(const fs::path& path, const CheckpointMeta& meta, const latent::LatentModel& model,
                     const ad::Adam& optimizer);
struct LoadedCheckpoint {
    CheckpointMeta meta;
    latent::LatentModel model;
    std::uint64_t adam_steps = 0;
    std::vector<std::vector<double>> first_moments, second_moments;  // aligned with model.parameters()
};
LoadedCheckpoint load_checkpoint(const fs::path& path);

std::string history_csv(const std::vector<latent::EpochStats>& history);

std::string run_name(int split, double rate);

}  // namespace npd::store
