#include "pic/taskgen.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>

namespace pic {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string task_name(Task t) {
    switch (t) {
        case Task::Reconstruction: return "reconstruction";
        case Task::Denoising: return "denoising";
        case Task::Registration: return "registration";
        case Task::Segmentation: return "segmentation";
    }
    throw std::logic_error("task_name: bad task");
}

Task task_from_name(const std::string& name) {
    if (name == "reconstruction") return Task::Reconstruction;
    if (name == "denoising") return Task::Denoising;
    if (name == "registration") return Task::Registration;
    if (name == "segmentation") return Task::Segmentation;
    throw std::invalid_argument("unknown task: " + name);
}

LabelCodebook LabelCodebook::build(int L) {
    if (L < 1 || L > 64) throw std::invalid_argument("LabelCodebook: need 1 <= L <= 64");
    LabelCodebook cb;
    cb.entries.resize(L, 3);
    const auto site = [](int t) { return -1.0 + (2.0 / 3.0) * t; };
    for (int l = 0; l < L; ++l) {
        cb.entries.row(l) = Vec3(site(l / 16), site((l / 4) % 4), site(l % 4));
    }
    return cb;
}

Vec3 LabelCodebook::encode(int label) const {
    if (label < 0 || label >= size()) throw std::out_of_range("codebook: label out of range");
    return entries.row(label);
}

int LabelCodebook::decode(const Vec3& p) const {
    int best = 0;
    double best_d2 = (entries.row(0) - p).squaredNorm();
    for (int l = 1; l < size(); ++l) {
        const double d2 = (entries.row(l) - p).squaredNorm();
        if (d2 < best_d2) {  // strict: ties keep the lowest id
            best_d2 = d2;
            best = l;
        }
    }
    return best;
}

Rotation registration_flip() { return Rotation(Eigen::Vector3d::UnitX(), M_PI); }

int reconstruction_seed_count(int level) {
    if (level < 1 || level > 5) throw std::invalid_argument("reconstruction level must be 1..5");
    return 512 >> (level - 1);
}

int denoising_noise_count(int level) {
    if (level < 1 || level > 5) throw std::invalid_argument("denoising level must be 1..5");
    return 100 * level;
}

double registration_max_angle(int level) {
    if (level < 1 || level > 5) throw std::invalid_argument("registration level must be 1..5");
    return level * 36.0 * M_PI / 180.0;
}

TaskSample gen_reconstruction(const Points& clean, int level, uint64_t seed) {
    (void)seed;
    // seed count clamps to the cloud size so small clouds stay valid
    const int s = std::min(reconstruction_seed_count(level), static_cast<int>(clean.rows()));
    const auto seed_idx = sample_centers(clean, s, Sampling::FPS, 0);
    Points seeds(s, 3);
    for (int j = 0; j < s; ++j) seeds.row(j) = clean.row(seed_idx[j]);

    TaskSample out;
    out.task = Task::Reconstruction;
    out.level = level;
    out.target = clean;
    out.input.resize(clean.rows(), 3);
    for (Eigen::Index i = 0; i < clean.rows(); ++i) {
        int best = 0;
        double best_d2 = (seeds.row(0) - clean.row(i)).squaredNorm();
        for (int j = 1; j < s; ++j) {
            const double d2 = (seeds.row(j) - clean.row(i)).squaredNorm();
            if (d2 < best_d2) {
                best_d2 = d2;
                best = j;
            }
        }
        out.input.row(i) = seeds.row(best);
    }
    return out;
}

TaskSample gen_denoising(const Points& clean, int level, uint64_t seed) {
    const int k = std::min(denoising_noise_count(level), static_cast<int>(clean.rows()));
    Rng rng(seed);
    const auto slots = rng.sample_without_replacement(static_cast<int>(clean.rows()), k);

    TaskSample out;
    out.task = Task::Denoising;
    out.level = level;
    out.target = clean;
    out.input = clean;
    for (const int i : slots) {
        for (int c = 0; c < 3; ++c) {
            out.input(i, c) = std::clamp(rng.normal() * 0.5, -1.0, 1.0);
        }
    }
    return out;
}

TaskSample gen_registration(const Points& clean, int level, uint64_t seed,
                            const std::optional<Rotation>& rotation_override) {
    registration_max_angle(level);  // validates the level
    Rotation r = [&] {
        if (rotation_override) return *rotation_override;
        Rng rng(seed);
        const auto ax = rng.unit_vector();
        return Rotation(Eigen::Vector3d(ax[0], ax[1], ax[2]),
                        rng.uniform(0.0, registration_max_angle(level)));
    }();

    TaskSample out;
    out.task = Task::Registration;
    out.level = level;
    out.input = rotate(clean, r);
    out.target = rotate(clean, registration_flip());
    out.rotation = r;
    return out;
}

TaskSample gen_segmentation(const Points& points, const std::vector<int>& labels,
                            const LabelCodebook& codebook) {
    if (static_cast<Eigen::Index>(labels.size()) != points.rows()) {
        throw std::invalid_argument("gen_segmentation: labels must match point count");
    }
    TaskSample out;
    out.task = Task::Segmentation;
    out.level = 0;
    out.input = points;
    out.labels = labels;
    out.target.resize(points.rows(), 3);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        out.target.row(i) = codebook.encode(labels[i]);  // throws on out-of-range ids
    }
    return out;
}

Points augment_points(const Points& pc, const AugmentParams& params, uint64_t seed) {
    Rng rng(seed);
    const auto ax = rng.unit_vector();
    const Rotation r(Eigen::Vector3d(ax[0], ax[1], ax[2]), rng.uniform(0.0, params.max_rotation));
    const double scale = rng.uniform(params.scale_lo, params.scale_hi);
    Points out = rotate(pc, r) * scale;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        for (int c = 0; c < 3; ++c) out(i, c) += rng.normal() * params.jitter_sigma;
    }
    return out;
}

// -- manifest --------------------------------------------------------------

static ordered_json rotation_to_json(const Rotation& r) {
    return ordered_json{{"axis", {r.axis.x(), r.axis.y(), r.axis.z()}}, {"angle", r.angle}};
}

static Rotation rotation_from_json(const ordered_json& j) {
    const auto& ax = j.at("axis");
    return Rotation(Eigen::Vector3d(ax.at(0).get<double>(), ax.at(1).get<double>(),
                                    ax.at(2).get<double>()),
                    j.at("angle").get<double>());
}

void save_manifest(const Manifest& m, const fs::path& path) {
    ordered_json j;
    j["config"] = m.config;
    j["seed"] = m.seed;
    j["entries"] = ordered_json::array();
    for (const auto& e : m.entries) {
        ordered_json je;
        je["sample_id"] = e.sample_id;
        je["task"] = task_name(e.task);
        je["level"] = e.level;
        je["class"] = e.class_label;
        je["input_path"] = e.input_path;
        je["target_path"] = e.target_path;
        if (e.labels_path) je["labels_path"] = *e.labels_path;
        if (e.rotation) je["rotation"] = rotation_to_json(*e.rotation);
        je["split"] = e.split;
        j["entries"].push_back(std::move(je));
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

Manifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    ordered_json j;
    in >> j;
    Manifest m;
    m.config = j.value("config", ordered_json::object());
    m.seed = j.at("seed").get<uint64_t>();
    for (const auto& je : j.at("entries")) {
        ManifestEntry e;
        e.sample_id = je.at("sample_id").get<std::string>();
        e.task = task_from_name(je.at("task").get<std::string>());
        e.level = je.at("level").get<int>();
        e.class_label = je.at("class").get<std::string>();
        e.input_path = je.at("input_path").get<std::string>();
        e.target_path = je.at("target_path").get<std::string>();
        if (je.contains("labels_path")) e.labels_path = je.at("labels_path").get<std::string>();
        if (je.contains("rotation")) e.rotation = rotation_from_json(je.at("rotation"));
        e.split = je.at("split").get<std::string>();
        m.entries.push_back(std::move(e));
    }
    return m;
}

std::vector<ManifestEntry> Manifest::split(const std::string& name) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries) {
        if (e.split == name) out.push_back(e);
    }
    return out;
}

// -- dataset build ---------------------------------------------------------

static std::vector<int> load_labels_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<int> labels;
    int v;
    while (in >> v) labels.push_back(v);
    return labels;
}

static void save_labels_file(const fs::path& path, const std::vector<int>& labels) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const int v : labels) out << v << "\n";
}

// Deterministic resample to exactly n points: without replacement when the
// source is large enough, topped up with seeded repeats otherwise; chosen
// indices kept in ascending source order.
static std::vector<int> resample_indices(int n_src, int n_out, uint64_t seed) {
    Rng rng(seed);
    std::vector<int> idx;
    if (n_src >= n_out) {
        idx = rng.sample_without_replacement(n_src, n_out);
    } else {
        idx.resize(n_src);
        std::iota(idx.begin(), idx.end(), 0);
        for (int i = n_src; i < n_out; ++i) {
            idx.push_back(static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n_src))));
        }
    }
    std::sort(idx.begin(), idx.end());
    return idx;
}

static std::string flat_file_stem(const std::string& sample_id) {
    std::string s = sample_id;
    for (auto& c : s) {
        if (c == '/' || c == '\\' || c == ' ') c = '_';
    }
    return s;
}

static std::string pick_split(uint64_t seed, const std::string& sample_id,
                              const DatasetConfig& cfg) {
    const double u = Rng(derive_seed(seed, "split/" + sample_id)).uniform();
    if (u < cfg.split_train) return "train";
    if (u < cfg.split_train + cfg.split_val) return "val";
    return "test";
}

Manifest build_dataset(const fs::path& source_dir, const DatasetConfig& config, uint64_t seed,
                       const fs::path& out_dir) {
    struct Source {
        std::string class_label;
        std::string stem;
        fs::path cloud_path;
        fs::path labels_path;  // empty if absent
    };

    std::vector<Source> sources;
    if (!fs::exists(source_dir)) throw std::runtime_error("source dir missing: " + source_dir.string());
    for (const auto& entry : fs::recursive_directory_iterator(source_dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension().string();
        if (ext != ".xyz" && ext != ".f32") continue;
        Source s;
        s.cloud_path = entry.path();
        s.stem = entry.path().stem().string();
        const auto parent = fs::relative(entry.path().parent_path(), source_dir).string();
        s.class_label = (parent.empty() || parent == ".") ? "default" : parent;
        const auto seg = entry.path().parent_path() / (s.stem + ".seg");
        if (fs::exists(seg)) s.labels_path = seg;
        sources.push_back(std::move(s));
    }
    if (sources.empty()) throw std::runtime_error("empty source: no cloud files under " + source_dir.string());
    std::sort(sources.begin(), sources.end(), [](const Source& a, const Source& b) {
        return std::tie(a.class_label, a.stem) < std::tie(b.class_label, b.stem);
    });

    const auto codebook = LabelCodebook::build(config.codebook_size);
    fs::create_directories(out_dir / "data");

    Manifest manifest;
    manifest.config = config.config_echo;
    manifest.seed = seed;

    const auto emit = [&](const TaskSample& sample) {
        ManifestEntry e;
        e.sample_id = sample.sample_id;
        e.task = sample.task;
        e.level = sample.level;
        e.class_label = sample.class_label;
        e.rotation = sample.rotation;
        const std::string stem = flat_file_stem(sample.sample_id);
        e.input_path = "data/" + stem + ".input.xyz";
        e.target_path = "data/" + stem + ".target.xyz";
        save_xyz(out_dir / e.input_path, sample.input);
        save_xyz(out_dir / e.target_path, sample.target);
        if (!sample.labels.empty()) {
            e.labels_path = "data/" + stem + ".labels.txt";
            save_labels_file(out_dir / *e.labels_path, sample.labels);
        }
        e.split = pick_split(seed, sample.sample_id, config);
        manifest.entries.push_back(std::move(e));
    };

    for (const auto& src : sources) {
        Points raw;
        std::vector<int> raw_labels;
        try {
            raw = load_cloud(src.cloud_path);
            if (!src.labels_path.empty()) {
                raw_labels = load_labels_file(src.labels_path);
                if (static_cast<Eigen::Index>(raw_labels.size()) != raw.rows()) {
                    throw std::runtime_error("label count mismatch");
                }
            }
        } catch (const std::exception& ex) {
            std::cerr << "warning: skipping " << src.cloud_path.string() << ": " << ex.what()
                      << "\n";
            continue;
        }

        const std::string base_id = src.class_label + "/" + src.stem;
        const auto pick = resample_indices(static_cast<int>(raw.rows()), config.n_points,
                                           derive_seed(seed, "resample/" + base_id));
        Points cloud(config.n_points, 3);
        std::vector<int> labels;
        for (int i = 0; i < config.n_points; ++i) cloud.row(i) = raw.row(pick[i]);
        if (!raw_labels.empty()) {
            labels.resize(config.n_points);
            for (int i = 0; i < config.n_points; ++i) labels[i] = raw_labels[pick[i]];
        }
        Points clean;
        try {
            clean = normalize(cloud);
        } catch (const std::exception& ex) {
            std::cerr << "warning: skipping " << src.cloud_path.string() << ": " << ex.what()
                      << "\n";
            continue;
        }

        for (const Task task : config.tasks) {
            if (task == Task::Segmentation) {
                if (labels.empty()) continue;
                if (*std::max_element(labels.begin(), labels.end()) >= codebook.size()) {
                    std::cerr << "warning: skipping segmentation for " << src.cloud_path.string()
                              << ": label id outside codebook\n";
                    continue;
                }
                const int copies = 1 + std::max(0, config.seg_augment);
                for (int a = 0; a < copies; ++a) {
                    const std::string sid =
                        base_id + "__seg" + (a == 0 ? "" : "@aug" + std::to_string(a));
                    Points pts = clean;
                    if (a > 0) {
                        pts = augment_points(clean, config.augment,
                                             derive_seed(seed, "aug/" + sid));
                    }
                    TaskSample s = gen_segmentation(pts, labels, codebook);
                    s.class_label = src.class_label;
                    s.sample_id = sid;
                    emit(s);
                }
                continue;
            }

            const std::string code = task == Task::Reconstruction ? "rec"
                                     : task == Task::Denoising   ? "den"
                                                                 : "reg";
            const std::string sid = base_id + "__" + code;
            Rng rng(derive_seed(seed, sid));
            const int level = 1 + static_cast<int>(rng.uniform_int(5));
            const uint64_t gen_seed = rng.next_u64();
            TaskSample s = task == Task::Reconstruction ? gen_reconstruction(clean, level, gen_seed)
                           : task == Task::Denoising    ? gen_denoising(clean, level, gen_seed)
                                                        : gen_registration(clean, level, gen_seed);
            s.class_label = src.class_label;
            s.sample_id = sid;
            emit(s);
        }
    }

    if (manifest.entries.empty()) throw std::runtime_error("empty source: no usable samples");
    std::sort(manifest.entries.begin(), manifest.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) {
                  return a.sample_id < b.sample_id;
              });
    save_manifest(manifest, out_dir / "manifest.json");
    return manifest;
}

TaskSample load_sample(const ManifestEntry& entry, const fs::path& root) {
    TaskSample s;
    s.input = load_cloud(root / entry.input_path);
    s.target = load_cloud(root / entry.target_path);
    s.task = entry.task;
    s.level = entry.level;
    s.class_label = entry.class_label;
    s.sample_id = entry.sample_id;
    s.rotation = entry.rotation;
    if (entry.labels_path) s.labels = load_labels_file(root / *entry.labels_path);
    return s;
}

// -- prompt selection ------------------------------------------------------

std::string strategy_name(PromptStrategy s) {
    switch (s) {
        case PromptStrategy::Random: return "random";
        case PromptStrategy::ClassAware: return "class_aware";
        case PromptStrategy::CdAware: return "cd_aware";
    }
    throw std::logic_error("strategy_name: bad strategy");
}

PromptStrategy strategy_from_name(const std::string& name) {
    if (name == "random") return PromptStrategy::Random;
    if (name == "class_aware" || name == "class") return PromptStrategy::ClassAware;
    if (name == "cd_aware" || name == "cd") return PromptStrategy::CdAware;
    throw std::invalid_argument("unknown prompt strategy: " + name);
}

PromptPool::PromptPool(std::vector<ManifestEntry> entries, fs::path root)
    : entries_(std::move(entries)), root_(std::move(root)) {}

const Points& PromptPool::input(size_t i) const {
    auto it = input_cache_.find(i);
    if (it == input_cache_.end()) {
        it = input_cache_.emplace(i, load_cloud(root_ / entries_.at(i).input_path)).first;
    }
    return it->second;
}

TaskSample PromptPool::sample(size_t i) const { return load_sample(entries_.at(i), root_); }

TaskSample synchronize_registration(TaskSample prompt, const Rotation& query_rotation) {
    // target = flip(clean) and the flip is its own inverse
    const Points clean = rotate(prompt.target, registration_flip());
    prompt.input = rotate(clean, query_rotation);
    prompt.rotation = query_rotation;
    return prompt;
}

PromptPair select_prompt(const TaskSample& query, const PromptPool& pool, PromptStrategy strategy,
                         uint64_t seed) {
    std::vector<size_t> candidates;
    for (size_t i = 0; i < pool.entries().size(); ++i) {
        if (pool.entries()[i].task == query.task) candidates.push_back(i);
    }
    if (strategy == PromptStrategy::ClassAware) {
        std::vector<size_t> same_class;
        for (const size_t i : candidates) {
            if (pool.entries()[i].class_label == query.class_label) same_class.push_back(i);
        }
        if (!same_class.empty()) candidates = std::move(same_class);
    }
    if (candidates.empty()) throw std::runtime_error("empty candidate set for task " + task_name(query.task));

    size_t chosen;
    if (strategy == PromptStrategy::CdAware) {
        chosen = candidates[0];
        double best = chamfer(pool.input(candidates[0]), query.input, ChamferNorm::L2);
        for (size_t k = 1; k < candidates.size(); ++k) {
            const double d = chamfer(pool.input(candidates[k]), query.input, ChamferNorm::L2);
            if (d < best) {
                best = d;
                chosen = candidates[k];
            }
        }
    } else {
        chosen = candidates[Rng(seed).uniform_int(candidates.size())];
    }

    TaskSample prompt = pool.sample(chosen);
    if (query.task == Task::Registration) {
        if (!query.rotation) throw std::runtime_error("registration query lacks a recorded rotation");
        prompt = synchronize_registration(std::move(prompt), *query.rotation);
    }
    return PromptPair{std::move(prompt), query};
}

}  // namespace pic
