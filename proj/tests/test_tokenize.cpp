#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "pic/taskgen.hpp"
#include "pic/tokenize.hpp"

using namespace pic;

namespace {

Points random_cloud(Rng& rng, int n) {
    Points pc(n, 3);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) pc(i, j) = rng.uniform(-1.0, 1.0);
    return normalize(pc);
}

}  // namespace

TEST_CASE("joint_sample shares one center-index list across both clouds") {
    Rng rng(1);
    const Points clean = random_cloud(rng, 1024);
    const TaskSample s = gen_denoising(clean, 2, 5);
    const PatchBatch b = joint_sample(s.input, s.target, 64, 32, Sampling::FPS, 3);

    REQUIRE(b.n_patches() == 64);
    REQUIRE(b.patch_size() == 32);
    REQUIRE(b.center_indices.size() == 64);
    CHECK(b.input_centers.rows() == 64);
    CHECK(b.target_centers.rows() == 64);
    REQUIRE(b.input_patches.size() == 64);
    REQUIRE(b.target_patches.size() == 64);
    REQUIRE(b.input_neighbor_indices.size() == 64);

    std::set<int> uniq(b.center_indices.begin(), b.center_indices.end());
    CHECK(uniq.size() == 64);

    // centers are gathered rows of each cloud under the same index
    for (int p = 0; p < 64; ++p) {
        const int ci = b.center_indices[p];
        CHECK((b.input_centers.row(p) - s.input.row(ci)).cwiseAbs().maxCoeff() == 0.0);
        CHECK((b.target_centers.row(p) - s.target.row(ci)).cwiseAbs().maxCoeff() == 0.0);
        CHECK(b.input_neighbor_indices[p].size() == 32);
        CHECK(b.input_neighbor_indices[p][0] == ci);  // self is the nearest
        CHECK(b.input_patches[p].rows() == 32);
        CHECK(b.target_patches[p].rows() == 32);
        // patches are center-relative: stored rows + center reproduce the cloud
        for (int j = 0; j < 32; ++j) {
            const int pi = b.input_neighbor_indices[p][j];
            CHECK((b.input_patches[p].row(j) + b.input_centers.row(p) - s.input.row(pi))
                      .cwiseAbs()
                      .maxCoeff() <= 1e-12);
        }
    }

    // fps on the input drives the choice
    CHECK(b.center_indices == sample_centers(s.input, 64, Sampling::FPS, 3));
}

TEST_CASE("identical clouds give identical patch decompositions") {
    Rng rng(2);
    const Points pc = random_cloud(rng, 512);
    const PatchBatch b = joint_sample(pc, pc, 32, 16, Sampling::FPS, 1);
    for (int p = 0; p < 32; ++p) {
        CHECK((b.input_patches[p] - b.target_patches[p]).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK((b.input_centers - b.target_centers).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("joint_sample validates sizes") {
    Rng rng(3);
    const Points a = random_cloud(rng, 64);
    const Points b = random_cloud(rng, 32);
    CHECK_THROWS(joint_sample(a, b, 8, 4, Sampling::FPS, 0));   // size mismatch
    CHECK_THROWS(joint_sample(a, a, 65, 4, Sampling::FPS, 0));  // more patches than points
    CHECK_THROWS(joint_sample(a, a, 8, 65, Sampling::FPS, 0));  // patch larger than cloud
}

TEST_CASE("random-strategy joint sampling is seeded") {
    Rng rng(4);
    const Points pc = random_cloud(rng, 256);
    const PatchBatch a = joint_sample(pc, pc, 16, 8, Sampling::RS, 9);
    const PatchBatch b = joint_sample(pc, pc, 16, 8, Sampling::RS, 9);
    const PatchBatch c = joint_sample(pc, pc, 16, 8, Sampling::RS, 10);
    CHECK(a.center_indices == b.center_indices);
    CHECK(a.center_indices != c.center_indices);
}

TEST_CASE("sequence layouts expose the four blocks") {
    const SequenceLayout sep{Variant::Sep, 64, true};
    CHECK(sep.total_tokens() == 128);
    CHECK(sep.prompt_target_block() == std::pair<int, int>{0, 64});
    CHECK(sep.query_target_block() == std::pair<int, int>{64, 128});

    const SequenceLayout sep_behind{Variant::Sep, 64, false};
    CHECK(sep_behind.prompt_target_block() == std::pair<int, int>{64, 128});
    CHECK(sep_behind.query_target_block() == std::pair<int, int>{0, 64});

    const SequenceLayout cat{Variant::Cat, 64, true};
    CHECK(cat.total_tokens() == 256);
    CHECK(cat.prompt_input_block() == std::pair<int, int>{0, 64});
    CHECK(cat.prompt_target_block() == std::pair<int, int>{64, 128});
    CHECK(cat.query_input_block() == std::pair<int, int>{128, 192});
    CHECK(cat.query_target_block() == std::pair<int, int>{192, 256});

    const SequenceLayout cat_behind{Variant::Cat, 64, false};
    CHECK(cat_behind.query_input_block() == std::pair<int, int>{0, 64});
    CHECK(cat_behind.query_target_block() == std::pair<int, int>{64, 128});
    CHECK(cat_behind.prompt_input_block() == std::pair<int, int>{128, 192});
    CHECK(cat_behind.prompt_target_block() == std::pair<int, int>{192, 256});
}

TEST_CASE("variant names round-trip") {
    CHECK(variant_from_name(variant_name(Variant::Sep)) == Variant::Sep);
    CHECK(variant_from_name(variant_name(Variant::Cat)) == Variant::Cat);
    CHECK_THROWS(variant_from_name("mix"));
}

TEST_CASE("train masks hit the floor rule exactly across the ratio grid") {
    for (double ratio : {0.2, 0.3, 0.4, 0.5, 0.6, 0.7}) {
        for (Variant v : {Variant::Sep, Variant::Cat}) {
            const SequenceLayout layout{v, 64, true};
            const MaskPlan plan = make_mask(layout, ratio, MaskMode::Train, 7);
            const int want = static_cast<int>(ratio * layout.total_tokens());
            CHECK(plan.count() == want);
            CHECK(static_cast<int>(plan.masked.size()) == layout.total_tokens());
            // positions() agrees with the flags
            const auto pos = plan.positions();
            CHECK(static_cast<int>(pos.size()) == want);
            for (size_t i = 1; i < pos.size(); ++i) CHECK(pos[i - 1] < pos[i]);
        }
    }
}

TEST_CASE("train masking is seeded and ratio 0 masks nothing") {
    const SequenceLayout layout{Variant::Cat, 16, true};
    const MaskPlan a = make_mask(layout, 0.6, MaskMode::Train, 1);
    const MaskPlan b = make_mask(layout, 0.6, MaskMode::Train, 1);
    const MaskPlan c = make_mask(layout, 0.6, MaskMode::Train, 2);
    CHECK(a.masked == b.masked);
    CHECK(a.masked != c.masked);
    CHECK(make_mask(layout, 0.0, MaskMode::Train, 1).count() == 0);
    CHECK_THROWS(make_mask(layout, 1.0, MaskMode::Train, 1));
    CHECK_THROWS(make_mask(layout, -0.1, MaskMode::Train, 1));
}

TEST_CASE("inference masks exactly the query-target block") {
    for (Variant v : {Variant::Sep, Variant::Cat}) {
        for (bool first : {true, false}) {
            const SequenceLayout layout{v, 64, first};
            const MaskPlan plan = make_mask(layout, 0.7, MaskMode::Infer, 123);
            const auto [lo, hi] = layout.query_target_block();
            CHECK(plan.count() == 64);
            for (int i = 0; i < layout.total_tokens(); ++i) {
                CHECK(static_cast<bool>(plan.masked[i]) == (i >= lo && i < hi));
            }
        }
    }
    // cat with prompt first: the masked quarter is the last one
    const SequenceLayout cat{Variant::Cat, 64, true};
    const auto pos = make_mask(cat, 0.6, MaskMode::Infer, 0).positions();
    CHECK(pos.front() == 192);
    CHECK(pos.back() == 255);
}
