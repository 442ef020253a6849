#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pic/config.hpp"
#include "pic/eval.hpp"

namespace py = pybind11;
using namespace pic;

namespace {

Sampling sampling_arg(const std::string& name) {
    if (name == "fps") return Sampling::FPS;
    if (name == "rs") return Sampling::RS;
    throw std::invalid_argument("sampling must be 'fps' or 'rs'");
}

ChamferNorm chamfer_arg(const std::string& name) {
    if (name == "l1") return ChamferNorm::L1;
    if (name == "l2") return ChamferNorm::L2;
    throw std::invalid_argument("norm must be 'l1' or 'l2'");
}

py::dict sample_to_dict(const TaskSample& s) {
    py::dict d;
    d["input"] = s.input;
    d["target"] = s.target;
    d["task"] = task_name(s.task);
    d["level"] = s.level;
    d["class"] = s.class_label;
    d["sample_id"] = s.sample_id;
    if (!s.labels.empty()) d["labels"] = s.labels;
    if (s.rotation) {
        py::dict r;
        r["axis"] = py::make_tuple(s.rotation->axis.x(), s.rotation->axis.y(),
                                   s.rotation->axis.z());
        r["angle"] = s.rotation->angle;
        d["rotation"] = r;
    }
    return d;
}

}  // namespace

PYBIND11_MODULE(_pic, m) {
    m.doc() = "point cloud in-context learning core";

    m.def("normalize", &normalize, py::arg("points"),
          "center to the origin and scale the farthest point to unit norm");
    m.def(
        "sample_centers",
        [](const Points& pc, int k, const std::string& strategy, uint64_t seed) {
            return sample_centers(pc, k, sampling_arg(strategy), seed);
        },
        py::arg("points"), py::arg("k"), py::arg("strategy") = "fps", py::arg("seed") = 0);
    m.def(
        "knn_indices",
        [](const Points& pc, const std::vector<int>& centers, int m_) {
            return knn_indices(pc, centers, m_);
        },
        py::arg("points"), py::arg("centers"), py::arg("m"));
    m.def(
        "chamfer",
        [](const Points& a, const Points& b, const std::string& norm) {
            return chamfer(a, b, chamfer_arg(norm));
        },
        py::arg("a"), py::arg("b"), py::arg("norm") = "l2");
    m.def(
        "rotate",
        [](const Points& pc, const Eigen::Vector3d& axis, double angle) {
            return rotate(pc, Rotation(axis, angle));
        },
        py::arg("points"), py::arg("axis"), py::arg("angle"));

    py::class_<LabelCodebook>(m, "LabelCodebook")
        .def_static("build", &LabelCodebook::build, py::arg("size"))
        .def_property_readonly("entries", [](const LabelCodebook& cb) { return cb.entries; })
        .def("size", &LabelCodebook::size)
        .def("encode", &LabelCodebook::encode, py::arg("label"))
        .def("decode", [](const LabelCodebook& cb, const Vec3& p) { return cb.decode(p); },
             py::arg("point"));

    m.def(
        "gen_reconstruction",
        [](const Points& clean, int level, uint64_t seed) {
            return sample_to_dict(gen_reconstruction(clean, level, seed));
        },
        py::arg("clean"), py::arg("level"), py::arg("seed") = 0);
    m.def(
        "gen_denoising",
        [](const Points& clean, int level, uint64_t seed) {
            return sample_to_dict(gen_denoising(clean, level, seed));
        },
        py::arg("clean"), py::arg("level"), py::arg("seed") = 0);
    m.def(
        "gen_registration",
        [](const Points& clean, int level, uint64_t seed) {
            return sample_to_dict(gen_registration(clean, level, seed));
        },
        py::arg("clean"), py::arg("level"), py::arg("seed") = 0);
    m.def(
        "gen_segmentation",
        [](const Points& points, const std::vector<int>& labels, int codebook_size) {
            return sample_to_dict(
                gen_segmentation(points, labels, LabelCodebook::build(codebook_size)));
        },
        py::arg("points"), py::arg("labels"), py::arg("codebook_size") = 50);

    py::class_<PatchBatch>(m, "PatchBatch")
        .def_readonly("center_indices", &PatchBatch::center_indices)
        .def_readonly("input_patches", &PatchBatch::input_patches)
        .def_readonly("target_patches", &PatchBatch::target_patches)
        .def_readonly("input_centers", &PatchBatch::input_centers)
        .def_readonly("target_centers", &PatchBatch::target_centers)
        .def_readonly("input_neighbor_indices", &PatchBatch::input_neighbor_indices)
        .def_property_readonly("n_patches", &PatchBatch::n_patches)
        .def_property_readonly("patch_size", &PatchBatch::patch_size);

    m.def(
        "joint_sample",
        [](const Points& input, const Points& target, int n, int m_, const std::string& strategy,
           uint64_t seed) {
            return joint_sample(input, target, n, m_, sampling_arg(strategy), seed);
        },
        py::arg("input"), py::arg("target"), py::arg("n_patches") = 64,
        py::arg("patch_size") = 32, py::arg("strategy") = "fps", py::arg("seed") = 0);

    m.def(
        "make_mask",
        [](const std::string& variant, int n_patches, bool prompt_first, double ratio,
           const std::string& mode, uint64_t seed) {
            const SequenceLayout layout{variant_from_name(variant), n_patches, prompt_first};
            const MaskMode mm = [&] {
                if (mode == "train") return MaskMode::Train;
                if (mode == "infer") return MaskMode::Infer;
                throw std::invalid_argument("mode must be 'train' or 'infer'");
            }();
            const MaskPlan plan = make_mask(layout, ratio, mm, seed);
            return std::vector<int>(plan.masked.begin(), plan.masked.end());
        },
        py::arg("variant"), py::arg("n_patches"), py::arg("prompt_first"), py::arg("ratio"),
        py::arg("mode"), py::arg("seed") = 0);

    m.def(
        "build_dataset",
        [](const std::string& source, const std::string& out, uint64_t seed,
           const std::string& config_json) {
            RunConfig cfg = parse_config_json(nlohmann::ordered_json::parse(config_json));
            cfg.seed = seed;
            cfg.seed_set = true;
            cfg.dataset.config_echo = cfg.to_json();
            const Manifest m_ = build_dataset(source, cfg.dataset, seed, out);
            return static_cast<int>(m_.entries.size());
        },
        py::arg("source"), py::arg("out"), py::arg("seed") = 0, py::arg("config_json") = "{}");

    m.def(
        "load_sample",
        [](const std::string& manifest_dir, const std::string& sample_id) {
            const Manifest m_ = load_manifest(std::filesystem::path(manifest_dir) / "manifest.json");
            for (const auto& e : m_.entries) {
                if (e.sample_id == sample_id) {
                    return sample_to_dict(load_sample(e, manifest_dir));
                }
            }
            throw std::out_of_range("no such sample: " + sample_id);
        },
        py::arg("manifest_dir"), py::arg("sample_id"));

    m.def(
        "infer",
        [](const std::string& ckpt, const Points& prompt_input, const Points& prompt_target,
           const Points& query_input, uint64_t seed) {
            const LoadedModel model = load_model(ckpt);
            TaskSample prompt;
            prompt.input = prompt_input;
            prompt.target = prompt_target;
            return infer(model.params, model.cfg, prompt, query_input, seed);
        },
        py::arg("ckpt"), py::arg("prompt_input"), py::arg("prompt_target"),
        py::arg("query_input"), py::arg("seed") = 0);

    m.def("metric_cd", &metric_cd, py::arg("pred"), py::arg("gt"));
    m.def(
        "metric_miou",
        [](const Points& pred, const std::vector<int>& slot_labels, int codebook_size) {
            return metric_miou(pred, slot_labels, LabelCodebook::build(codebook_size));
        },
        py::arg("pred"), py::arg("slot_labels"), py::arg("codebook_size") = 50);

    m.def(
        "parse_config",
        [](const std::string& config_json) {
            return parse_config_json(nlohmann::ordered_json::parse(config_json)).to_json().dump();
        },
        py::arg("config_json") = "{}", "resolve a flat JSON config; returns the echo as JSON");
}
