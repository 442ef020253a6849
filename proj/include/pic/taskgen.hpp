#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pic/geometry.hpp"

namespace pic {

enum class Task { Reconstruction, Denoising, Registration, Segmentation };

std::string task_name(Task t);
Task task_from_name(const std::string& name);

// An index-aligned input/target pair: slot i of the input corresponds to
// slot i of the target, which is what lets patch sequences share center
// indices downstream.
struct TaskSample {
    Points input;
    Points target;
    Task task = Task::Reconstruction;
    int level = 0;  // 1..5, segmentation uses 0
    std::string class_label;
    std::vector<int> labels;  // per-point part ids, segmentation only
    std::string sample_id;
    std::optional<Rotation> rotation;  // input rotation, registration only
};

// Fixed map from part labels to discrete 3D points: the first L sites of the
// 4x4x4 lattice over [-1,1]^3, x-major. Decoding is nearest entry, ties by
// lowest id.
struct LabelCodebook {
    Points entries;

    static LabelCodebook build(int L);
    int size() const { return static_cast<int>(entries.rows()); }
    Vec3 encode(int label) const;
    int decode(const Vec3& p) const;
};

// The fixed "upside-down" target map used by the registration task.
Rotation registration_flip();

int reconstruction_seed_count(int level);   // 512, 256, 128, 64, 32
int denoising_noise_count(int level);       // 100 * level
double registration_max_angle(int level);   // level * 36 degrees, radians

// Input is the clean cloud quantized onto its own FPS seed set, so every
// slot stays aligned with the target. The seed argument is unused (FPS is
// deterministic) and kept for generator-signature uniformity.
TaskSample gen_reconstruction(const Points& clean, int level, uint64_t seed);

// Input replaces a seeded choice of slots with clipped Gaussian noise
// (std 0.5, clipped to [-1,1]^3); target is the clean cloud.
TaskSample gen_denoising(const Points& clean, int level, uint64_t seed);

// Input is the clean cloud under a random rotation (angle up to the level
// bound, seeded axis), target is the flipped clean cloud. The override is
// used when a prompt must share the query's rotation.
TaskSample gen_registration(const Points& clean, int level, uint64_t seed,
                            const std::optional<Rotation>& rotation_override = std::nullopt);

TaskSample gen_segmentation(const Points& points, const std::vector<int>& labels,
                            const LabelCodebook& codebook);

struct AugmentParams {
    double jitter_sigma = 0.01;
    double max_rotation = 15.0 * M_PI / 180.0;
    double scale_lo = 0.8;
    double scale_hi = 1.2;
};

// Rotation, isotropic scale, then per-point jitter. Labels are untouched by
// construction (geometry only).
Points augment_points(const Points& pc, const AugmentParams& params, uint64_t seed);

// -- dataset ---------------------------------------------------------------

struct ManifestEntry {
    std::string sample_id;
    Task task = Task::Reconstruction;
    int level = 0;
    std::string class_label;
    std::string input_path;   // relative to the manifest's directory
    std::string target_path;
    std::optional<std::string> labels_path;
    std::optional<Rotation> rotation;
    std::string split;  // train / val / test
};

struct Manifest {
    nlohmann::ordered_json config;  // resolved config echo
    uint64_t seed = 0;
    std::vector<ManifestEntry> entries;

    std::vector<ManifestEntry> split(const std::string& name) const;
};

void save_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest load_manifest(const std::filesystem::path& path);

struct DatasetConfig {
    int n_points = 1024;
    std::vector<Task> tasks = {Task::Reconstruction, Task::Denoising, Task::Registration,
                               Task::Segmentation};
    double split_train = 0.8;
    double split_val = 0.1;
    double split_test = 0.1;
    int codebook_size = 50;
    int seg_augment = 0;  // extra augmented copies per labeled source
    AugmentParams augment;
    nlohmann::ordered_json config_echo = nlohmann::ordered_json::object();
};

// Scans source_dir for .xyz/.f32 clouds (class label = parent directory,
// optional sibling .seg label file), generates one sample per (cloud, task)
// with a seeded level draw, and writes clouds plus manifest.json to out_dir.
// Unreadable files are skipped with a warning; an empty source is an error.
// Every sample's randomness derives from hash(seed, sample_id) only.
Manifest build_dataset(const std::filesystem::path& source_dir, const DatasetConfig& config,
                       uint64_t seed, const std::filesystem::path& out_dir);

TaskSample load_sample(const ManifestEntry& entry, const std::filesystem::path& root);

// -- prompt selection ------------------------------------------------------

enum class PromptStrategy { Random, ClassAware, CdAware };

std::string strategy_name(PromptStrategy s);
PromptStrategy strategy_from_name(const std::string& name);

struct PromptPair {
    TaskSample prompt;
    TaskSample query;
};

// A manifest split with lazily cached candidate inputs, so CD-aware scans do
// not reload clouds per query.
class PromptPool {
public:
    PromptPool(std::vector<ManifestEntry> entries, std::filesystem::path root);

    const std::vector<ManifestEntry>& entries() const { return entries_; }
    const std::filesystem::path& root() const { return root_; }
    const Points& input(size_t i) const;
    TaskSample sample(size_t i) const;

private:
    std::vector<ManifestEntry> entries_;
    std::filesystem::path root_;
    mutable std::map<size_t, Points> input_cache_;
};

// Rebuilds a registration prompt so its recorded rotation matches the
// query's (the clean cloud is recovered from the stored target; the flip is
// involutive).
TaskSample synchronize_registration(TaskSample prompt, const Rotation& query_rotation);

// random: seeded uniform pick among same-task candidates; class_aware:
// restrict to the query's class first, falling back to task-only; cd_aware:
// argmin l2 Chamfer between candidate input and query input. Registration
// prompts are always synchronized to the query rotation.
PromptPair select_prompt(const TaskSample& query, const PromptPool& pool, PromptStrategy strategy,
                         uint64_t seed);

}  // namespace pic
