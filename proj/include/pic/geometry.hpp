#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "pic/rng.hpp"

namespace pic {

// Row i is point i. Order is meaningful: slot i of an input cloud
// corresponds to slot i of its target cloud.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Vec3 = Eigen::RowVector3d;

struct Rotation {
    Eigen::Vector3d axis;  // unit
    double angle = 0.0;    // radians, [0, pi]

    Rotation() : axis(0, 0, 1) {}
    Rotation(const Eigen::Vector3d& ax, double ang);

    Eigen::Matrix3d matrix() const;
    Rotation inverse() const { return Rotation(axis, angle, flip_tag{}); }

private:
    struct flip_tag {};
    Rotation(const Eigen::Vector3d& ax, double ang, flip_tag) : axis(-ax), angle(ang) {}
};

enum class Sampling { FPS, RS };
enum class ChamferNorm { L1, L2 };

// Centroid to the origin, max point norm scaled to 1. Order preserved.
// Throws on zero spread.
Points normalize(const Points& pc);

// k distinct indices. FPS is the greedy farthest-first traversal starting at
// index 0: at each step pick the point with the largest distance to the
// selected set, lowest index on ties. RS is a seeded uniform draw without
// replacement, in draw order.
std::vector<int> sample_centers(const Points& pc, int k, Sampling strategy, uint64_t seed);

// For each center, the m nearest point indices (self included), sorted by
// ascending distance, ties by ascending index.
std::vector<std::vector<int>> knn_indices(const Points& pc, const std::vector<int>& centers, int m);

// Same neighborhoods gathered as coordinates, one m x 3 block per center.
std::vector<Points> knn_group(const Points& pc, const std::vector<int>& centers, int m);

// Bidirectional nearest-neighbor distance, mean-reduced by (|a| + |b|).
// L2 accumulates squared distances, L1 plain Euclidean distances.
double chamfer(const Points& a, const Points& b, ChamferNorm norm);

Points rotate(const Points& pc, const Rotation& r);

// -- point-cloud files ------------------------------------------------------
// .xyz: one "x y z" per line, decimal floats.
// .f32: little-endian 32-bit floats, length divisible by 3, no header.

Points load_xyz(const std::filesystem::path& path);
void save_xyz(const std::filesystem::path& path, const Points& pc);
Points load_f32(const std::filesystem::path& path);
void save_f32(const std::filesystem::path& path, const Points& pc);

// dispatch on extension
Points load_cloud(const std::filesystem::path& path);

}  // namespace pic
