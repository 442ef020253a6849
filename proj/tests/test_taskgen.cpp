#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "pic/taskgen.hpp"

using namespace pic;
namespace fs = std::filesystem;

namespace {

Points random_cloud(Rng& rng, int n) {
    Points pc(n, 3);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) pc(i, j) = rng.uniform(-1.0, 1.0);
    return normalize(pc);
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& stem) {
        path = fs::temp_directory_path() / (stem + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// writes a small source tree: k clouds under two class dirs, one labeled
void write_source(const fs::path& dir, int k, int n_points, uint64_t seed) {
    Rng rng(seed);
    for (int i = 0; i < k; ++i) {
        const fs::path cls = dir / (i % 2 == 0 ? "chair" : "table");
        fs::create_directories(cls);
        const fs::path cloud = cls / ("obj" + std::to_string(i) + ".xyz");
        save_xyz(cloud, random_cloud(rng, n_points));
        std::ofstream seg(cls / ("obj" + std::to_string(i) + ".seg"));
        for (int p = 0; p < n_points; ++p) seg << (p % 4) << "\n";
    }
}

}  // namespace

TEST_CASE("codebook sites are the x-major lattice with pitch 2/3") {
    const LabelCodebook cb = LabelCodebook::build(64);
    REQUIRE(cb.size() == 64);
    CHECK((cb.encode(0) - Vec3(-1, -1, -1)).norm() <= 1e-15);
    CHECK((cb.encode(1) - Vec3(-1, -1, -1.0 / 3.0)).norm() <= 1e-12);
    CHECK((cb.encode(4) - Vec3(-1, -1.0 / 3.0, -1)).norm() <= 1e-12);
    CHECK((cb.encode(16) - Vec3(-1.0 / 3.0, -1, -1)).norm() <= 1e-12);
    CHECK((cb.encode(63) - Vec3(1, 1, 1)).norm() <= 1e-15);

    double min_dist = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 64; ++i)
        for (int j = i + 1; j < 64; ++j)
            min_dist = std::min(min_dist, (cb.encode(i) - cb.encode(j)).norm());
    CHECK(min_dist == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("codebook decode inverts encode and breaks ties by lowest id") {
    for (int L : {1, 2, 7, 50, 64}) {
        const LabelCodebook cb = LabelCodebook::build(L);
        REQUIRE(cb.size() == L);
        for (int l = 0; l < L; ++l) CHECK(cb.decode(cb.encode(l)) == l);
        for (int l = 0; l < L; ++l) {
            CHECK(cb.encode(l).cwiseAbs().maxCoeff() <= 1.0);
        }
    }
    const LabelCodebook cb = LabelCodebook::build(2);
    // midpoint between entries 0 and 1 is equidistant; lowest id wins
    const Vec3 mid = 0.5 * (cb.encode(0) + cb.encode(1));
    CHECK(cb.decode(mid) == 0);
    CHECK_THROWS(LabelCodebook::build(65));
    CHECK_THROWS(LabelCodebook::build(0));
}

TEST_CASE("level maps") {
    CHECK(reconstruction_seed_count(1) == 512);
    CHECK(reconstruction_seed_count(2) == 256);
    CHECK(reconstruction_seed_count(3) == 128);
    CHECK(reconstruction_seed_count(4) == 64);
    CHECK(reconstruction_seed_count(5) == 32);
    CHECK(denoising_noise_count(1) == 100);
    CHECK(denoising_noise_count(5) == 500);
    CHECK(registration_max_angle(1) == doctest::Approx(36.0 * M_PI / 180.0));
    CHECK(registration_max_angle(5) == doctest::Approx(M_PI));
    for (int bad : {0, 6}) {
        CHECK_THROWS(reconstruction_seed_count(bad));
        CHECK_THROWS(denoising_noise_count(bad));
        CHECK_THROWS(registration_max_angle(bad));
    }
}

TEST_CASE("reconstruction quantizes onto the fps seed set") {
    Rng rng(1);
    const Points clean = random_cloud(rng, 1024);
    const TaskSample s = gen_reconstruction(clean, 5, 0);
    REQUIRE(s.input.rows() == 1024);
    CHECK((s.target - clean).cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.task == Task::Reconstruction);

    // distinct input coordinates <= seed count
    std::set<std::array<double, 3>> uniq;
    for (int i = 0; i < 1024; ++i) uniq.insert({s.input(i, 0), s.input(i, 1), s.input(i, 2)});
    CHECK(uniq.size() <= 32);

    // alignment predicate: input[i] is the nearest seed to target[i]
    const auto seed_idx = sample_centers(clean, 32, Sampling::FPS, 0);
    for (int i = 0; i < 1024; ++i) {
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (int sidx : seed_idx) {
            const double d = (clean.row(i) - clean.row(sidx)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = sidx;
            }
        }
        CHECK((s.input.row(i) - clean.row(best)).norm() <= 1e-15);
    }
}

TEST_CASE("reconstruction level 1 uses 512 seeds") {
    Rng rng(2);
    const Points clean = random_cloud(rng, 1024);
    const TaskSample s = gen_reconstruction(clean, 1, 0);
    std::set<std::array<double, 3>> uniq;
    for (int i = 0; i < 1024; ++i) uniq.insert({s.input(i, 0), s.input(i, 1), s.input(i, 2)});
    CHECK(uniq.size() <= 512);
    CHECK(uniq.size() > 256);  // fps seeds are distinct points
}

TEST_CASE("denoising replaces exactly 100*level slots and keeps the rest") {
    Rng rng(3);
    const Points clean = random_cloud(rng, 1024);
    for (int level : {1, 3, 5}) {
        const TaskSample s = gen_denoising(clean, level, 42);
        CHECK((s.target - clean).cwiseAbs().maxCoeff() == 0.0);
        int diff = 0;
        for (int i = 0; i < 1024; ++i) {
            if ((s.input.row(i) - s.target.row(i)).cwiseAbs().maxCoeff() != 0.0) {
                ++diff;
            }
        }
        CHECK(diff == 100 * level);
        CHECK(s.input.cwiseAbs().maxCoeff() <= 1.0);
    }
    const Points i1 = gen_denoising(clean, 2, 7).input;
    const Points i2 = gen_denoising(clean, 2, 7).input;
    const Points i3 = gen_denoising(clean, 2, 8).input;
    CHECK((i1 - i2).cwiseAbs().maxCoeff() == 0.0);
    CHECK((i1 - i3).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("registration rotates the input and flips the target") {
    Rng rng(4);
    const Points clean = random_cloud(rng, 256);
    const Rotation flip = registration_flip();
    CHECK(flip.angle == doctest::Approx(M_PI));
    // flip is an involution
    const Points twice = rotate(rotate(clean, flip), flip);
    CHECK((twice - clean).cwiseAbs().maxCoeff() <= 1e-12);

    const TaskSample s = gen_registration(clean, 3, 11);
    REQUIRE(s.rotation.has_value());
    CHECK(s.rotation->angle <= registration_max_angle(3) + 1e-12);
    CHECK((s.input - rotate(clean, *s.rotation)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((s.target - rotate(clean, flip)).cwiseAbs().maxCoeff() <= 1e-12);

    // alignment predicate: input[i] = R * F^-1 * target[i]
    const Eigen::Matrix3d rf = s.rotation->matrix() * flip.inverse().matrix();
    const Points aligned = s.target * rf.transpose();
    CHECK((s.input - aligned).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("registration angle bound holds over 1000 seeded draws") {
    Rng rng(5);
    const Points clean = random_cloud(rng, 64);
    for (uint64_t seed = 0; seed < 1000; ++seed) {
        const TaskSample s = gen_registration(clean, 3, seed);
        CHECK(s.rotation->angle <= 108.0 * M_PI / 180.0 + 1e-12);
        CHECK(s.rotation->angle >= 0.0);
    }
}

TEST_CASE("registration override pins the rotation") {
    Rng rng(6);
    const Points clean = random_cloud(rng, 64);
    const Rotation want(Eigen::Vector3d::UnitY(), 0.5);
    const TaskSample s = gen_registration(clean, 2, 9, want);
    REQUIRE(s.rotation.has_value());
    CHECK(s.rotation->angle == want.angle);
    CHECK((s.rotation->axis - want.axis).norm() <= 1e-15);
    CHECK((s.input - rotate(clean, want)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("segmentation maps labels onto codebook points") {
    const LabelCodebook cb = LabelCodebook::build(4);
    Points pts(3, 3);
    pts << 0.1, 0, 0, 0.2, 0, 0, 0.3, 0, 0;
    const TaskSample s = gen_segmentation(pts, {0, 0, 1}, cb);
    CHECK((s.input - pts).cwiseAbs().maxCoeff() == 0.0);
    CHECK((s.target.row(0) - cb.encode(0)).norm() == 0.0);
    CHECK((s.target.row(1) - cb.encode(0)).norm() == 0.0);
    CHECK((s.target.row(2) - cb.encode(1)).norm() == 0.0);
    CHECK(s.labels == std::vector<int>{0, 0, 1});
    CHECK(s.level == 0);
    for (int i = 0; i < 3; ++i) CHECK(cb.decode(Vec3(s.target.row(i))) == s.labels[i]);

    CHECK_THROWS(gen_segmentation(pts, {0, 1}, cb));       // length mismatch
    CHECK_THROWS(gen_segmentation(pts, {0, 0, 4}, cb));    // out of range
}

TEST_CASE("augmentation moves geometry but not labels, within configured bounds") {
    Rng rng(7);
    const Points pc = random_cloud(rng, 128);
    AugmentParams params;
    const Points aug = augment_points(pc, params, 21);
    CHECK(aug.rows() == pc.rows());
    CHECK((aug - pc).cwiseAbs().maxCoeff() > 0.0);
    CHECK((augment_points(pc, params, 21) - aug).cwiseAbs().maxCoeff() == 0.0);
    // scale bound: norms grow at most by 1.2 plus jitter slack
    CHECK(aug.rowwise().norm().maxCoeff() <= 1.2 * pc.rowwise().norm().maxCoeff() + 0.1);
}

TEST_CASE("manifest round-trips through json") {
    Manifest m;
    m.seed = 123;
    m.config = {{"n_points", 1024}};
    ManifestEntry e;
    e.sample_id = "a__reg";
    e.task = Task::Registration;
    e.level = 2;
    e.class_label = "chair";
    e.input_path = "data/a.input.xyz";
    e.target_path = "data/a.target.xyz";
    e.rotation = Rotation(Eigen::Vector3d::UnitZ(), 0.25);
    e.split = "train";
    m.entries.push_back(e);

    TempDir tmp("pic_manifest");
    const fs::path path = tmp.path / "manifest.json";
    save_manifest(m, path);
    const Manifest back = load_manifest(path);
    CHECK(back.seed == 123);
    CHECK(back.config["n_points"] == 1024);
    REQUIRE(back.entries.size() == 1);
    const ManifestEntry& b = back.entries[0];
    CHECK(b.sample_id == e.sample_id);
    CHECK(b.task == Task::Registration);
    CHECK(b.level == 2);
    CHECK(b.class_label == "chair");
    CHECK(b.input_path == e.input_path);
    CHECK(b.target_path == e.target_path);
    REQUIRE(b.rotation.has_value());
    CHECK(b.rotation->angle == 0.25);
    CHECK((b.rotation->axis - Eigen::Vector3d::UnitZ()).norm() == 0.0);
    CHECK(b.split == "train");
    CHECK(!b.labels_path.has_value());
}

TEST_CASE("build_dataset writes one sample per cloud and task, deterministically") {
    TempDir src("pic_src");
    TempDir out_a("pic_out_a");
    TempDir out_b("pic_out_b");
    write_source(src.path, 10, 64, 1);

    DatasetConfig cfg;
    cfg.n_points = 64;

    const Manifest ma = build_dataset(src.path, cfg, 5, out_a.path);
    CHECK(ma.entries.size() == 40);  // 10 clouds x 4 tasks

    // reload scan: every entry loads with matching sizes
    std::set<std::string> ids;
    for (const auto& e : ma.entries) {
        ids.insert(e.sample_id);
        const TaskSample s = load_sample(e, out_a.path);
        CHECK(s.input.rows() == 64);
        CHECK(s.target.rows() == 64);
        CHECK(s.task == e.task);
        if (e.task == Task::Segmentation) {
            CHECK(s.labels.size() == 64);
        } else {
            CHECK(e.level >= 1);
            CHECK(e.level <= 5);
        }
    }
    CHECK(ids.size() == 40);

    // splits are a partition with all three names present at this size
    std::map<std::string, int> split_count;
    for (const auto& e : ma.entries) split_count[e.split]++;
    int total = 0;
    for (const auto& [name, c] : split_count) {
        CHECK((name == "train" || name == "val" || name == "test"));
        total += c;
    }
    CHECK(total == 40);
    CHECK(split_count["train"] > 20);

    const Manifest mb = build_dataset(src.path, cfg, 5, out_b.path);
    CHECK(slurp(out_a.path / "manifest.json") == slurp(out_b.path / "manifest.json"));

    // different seed changes the manifest
    TempDir out_c("pic_out_c");
    build_dataset(src.path, cfg, 6, out_c.path);
    CHECK(slurp(out_a.path / "manifest.json") != slurp(out_c.path / "manifest.json"));
}

TEST_CASE("build_dataset with segmentation augmentation adds labeled copies") {
    TempDir src("pic_srcaug");
    TempDir out("pic_outaug");
    write_source(src.path, 2, 64, 2);
    DatasetConfig cfg;
    cfg.n_points = 64;
    cfg.tasks = {Task::Segmentation};
    cfg.seg_augment = 2;
    const Manifest m = build_dataset(src.path, cfg, 3, out.path);
    CHECK(m.entries.size() == 6);  // 2 sources x (1 + 2 augmented)
    for (const auto& e : m.entries) {
        const TaskSample s = load_sample(e, out.path);
        CHECK(s.labels.size() == 64);
    }
}

TEST_CASE("build_dataset on an empty source throws") {
    TempDir src("pic_srcempty");
    TempDir out("pic_outempty");
    DatasetConfig cfg;
    CHECK_THROWS(build_dataset(src.path, cfg, 1, out.path));
}

TEST_CASE("select_prompt honors strategies") {
    TempDir src("pic_srcsel");
    TempDir out("pic_outsel");
    write_source(src.path, 8, 64, 3);
    DatasetConfig cfg;
    cfg.n_points = 64;
    cfg.split_train = 1.0;
    cfg.split_val = 0.0;
    cfg.split_test = 0.0;
    const Manifest m = build_dataset(src.path, cfg, 5, out.path);
    PromptPool pool(m.split("train"), out.path);
    REQUIRE(pool.entries().size() == 32);

    // build a query matching one of the pool's tasks
    Rng rng(9);
    const Points clean = random_cloud(rng, 64);
    TaskSample query = gen_denoising(clean, 2, 77);
    query.sample_id = "query__den";
    query.class_label = "chair";

    SUBCASE("random picks a same-task candidate, seeded") {
        const PromptPair a = select_prompt(query, pool, PromptStrategy::Random, 4);
        const PromptPair b = select_prompt(query, pool, PromptStrategy::Random, 4);
        CHECK(a.prompt.sample_id == b.prompt.sample_id);
        CHECK(a.prompt.task == Task::Denoising);
        CHECK(a.query.sample_id == "query__den");
    }

    SUBCASE("class_aware restricts to the query class") {
        const PromptPair p = select_prompt(query, pool, PromptStrategy::ClassAware, 4);
        CHECK(p.prompt.class_label == "chair");
        CHECK(p.prompt.task == Task::Denoising);
    }

    SUBCASE("cd_aware equals the exhaustive argmin") {
        const PromptPair p = select_prompt(query, pool, PromptStrategy::CdAware, 4);
        double best = std::numeric_limits<double>::infinity();
        std::string best_id;
        for (size_t i = 0; i < pool.entries().size(); ++i) {
            if (pool.entries()[i].task != Task::Denoising) continue;
            const double d = chamfer(pool.input(i), query.input, ChamferNorm::L2);
            if (d < best) {
                best = d;
                best_id = pool.entries()[i].sample_id;
            }
        }
        CHECK(p.prompt.sample_id == best_id);
    }

    SUBCASE("registration prompts are synchronized to the query rotation") {
        TaskSample rq = gen_registration(clean, 3, 13);
        rq.sample_id = "query__reg";
        rq.class_label = "table";
        const PromptPair p = select_prompt(rq, pool, PromptStrategy::Random, 4);
        REQUIRE(p.prompt.rotation.has_value());
        CHECK(p.prompt.rotation->angle == rq.rotation->angle);
        CHECK((p.prompt.rotation->axis - rq.rotation->axis).norm() <= 1e-15);
        // prompt geometry is consistent: input = R * F^-1 * target
        const Eigen::Matrix3d rf =
            p.prompt.rotation->matrix() * registration_flip().inverse().matrix();
        CHECK((p.prompt.input - p.prompt.target * rf.transpose()).cwiseAbs().maxCoeff() <= 1e-9);
    }

    SUBCASE("empty candidate set throws") {
        PromptPool empty_pool({}, out.path);
        CHECK_THROWS(select_prompt(query, empty_pool, PromptStrategy::Random, 1));
    }

    SUBCASE("single same-task candidate wins under every strategy") {
        std::vector<ManifestEntry> one;
        for (const auto& e : pool.entries()) {
            if (e.task == Task::Denoising && one.empty()) one.push_back(e);
        }
        PromptPool single(one, out.path);
        for (auto strat :
             {PromptStrategy::Random, PromptStrategy::ClassAware, PromptStrategy::CdAware}) {
            const PromptPair p = select_prompt(query, single, strat, 2);
            CHECK(p.prompt.sample_id == one[0].sample_id);
        }
    }
}

TEST_CASE("task names round-trip") {
    for (Task t :
         {Task::Reconstruction, Task::Denoising, Task::Registration, Task::Segmentation}) {
        CHECK(task_from_name(task_name(t)) == t);
    }
    CHECK_THROWS(task_from_name("sculpting"));
}
