#include "pic/geometry.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace pic {

Rotation::Rotation(const Eigen::Vector3d& ax, double ang) {
    const double n = ax.norm();
    if (!(n > 1e-12) || !std::isfinite(n)) {
        throw std::invalid_argument("Rotation: axis must be a nonzero finite vector");
    }
    if (!(ang >= 0.0 && ang <= M_PI + 1e-12)) {
        throw std::invalid_argument("Rotation: angle must lie in [0, pi]");
    }
    axis = ax / n;
    angle = std::min(ang, M_PI);
}

Eigen::Matrix3d Rotation::matrix() const {
    return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

Points normalize(const Points& pc) {
    if (pc.rows() < 1) throw std::invalid_argument("normalize: empty cloud");
    if (!pc.allFinite()) throw std::invalid_argument("normalize: non-finite coordinates");
    Points out = pc;
    const Vec3 centroid = out.colwise().mean();
    out.rowwise() -= centroid;
    const double scale = out.rowwise().norm().maxCoeff();
    if (!(scale > 1e-12)) throw std::invalid_argument("degenerate cloud");
    out /= scale;
    return out;
}

static std::vector<int> fps_indices(const Points& pc, int k) {
    const int n = static_cast<int>(pc.rows());
    std::vector<int> selected;
    selected.reserve(k);
    selected.push_back(0);
    Eigen::VectorXd min_d2 = (pc.rowwise() - pc.row(0)).rowwise().squaredNorm();
    for (int step = 1; step < k; ++step) {
        int best = 0;
        double best_d2 = -1.0;
        for (int i = 0; i < n; ++i) {
            if (min_d2[i] > best_d2) {  // strict: ties keep the lowest index
                best_d2 = min_d2[i];
                best = i;
            }
        }
        selected.push_back(best);
        const Eigen::VectorXd d2 = (pc.rowwise() - pc.row(best)).rowwise().squaredNorm();
        min_d2 = min_d2.cwiseMin(d2);
    }
    return selected;
}

std::vector<int> sample_centers(const Points& pc, int k, Sampling strategy, uint64_t seed) {
    const int n = static_cast<int>(pc.rows());
    if (k < 1 || k > n) throw std::invalid_argument("sample_centers: need 1 <= k <= n");
    if (strategy == Sampling::FPS) return fps_indices(pc, k);
    Rng rng(seed);
    return rng.sample_without_replacement(n, k);
}

std::vector<std::vector<int>> knn_indices(const Points& pc, const std::vector<int>& centers, int m) {
    const int n = static_cast<int>(pc.rows());
    if (m < 1 || m > n) throw std::invalid_argument("knn_indices: need 1 <= m <= n");
    std::vector<std::vector<int>> out;
    out.reserve(centers.size());
    std::vector<std::pair<double, int>> order(n);
    for (const int c : centers) {
        if (c < 0 || c >= n) throw std::out_of_range("knn_indices: center index out of range");
        const Eigen::VectorXd d2 = (pc.rowwise() - pc.row(c)).rowwise().squaredNorm();
        for (int i = 0; i < n; ++i) order[i] = {d2[i], i};
        std::partial_sort(order.begin(), order.begin() + m, order.end());
        std::vector<int> nbr(m);
        for (int j = 0; j < m; ++j) nbr[j] = order[j].second;
        out.push_back(std::move(nbr));
    }
    return out;
}

std::vector<Points> knn_group(const Points& pc, const std::vector<int>& centers, int m) {
    const auto idx = knn_indices(pc, centers, m);
    std::vector<Points> patches;
    patches.reserve(idx.size());
    for (const auto& nbr : idx) {
        Points patch(m, 3);
        for (int j = 0; j < m; ++j) patch.row(j) = pc.row(nbr[j]);
        patches.push_back(std::move(patch));
    }
    return patches;
}

double chamfer(const Points& a, const Points& b, ChamferNorm norm) {
    if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("chamfer: empty point set");
    const auto one_way = [norm](const Points& from, const Points& to) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < from.rows(); ++i) {
            const double d2 = (to.rowwise() - from.row(i)).rowwise().squaredNorm().minCoeff();
            acc += norm == ChamferNorm::L2 ? d2 : std::sqrt(d2);
        }
        return acc;
    };
    return (one_way(a, b) + one_way(b, a)) / static_cast<double>(a.rows() + b.rows());
}

Points rotate(const Points& pc, const Rotation& r) {
    return pc * r.matrix().transpose();
}

Points load_xyz(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<double> vals;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        double x, y, z;
        if (!(ls >> x >> y >> z)) throw std::runtime_error("malformed .xyz line in " + path.string());
        vals.push_back(x);
        vals.push_back(y);
        vals.push_back(z);
    }
    if (vals.empty()) throw std::runtime_error("empty cloud file " + path.string());
    Points pc(vals.size() / 3, 3);
    for (Eigen::Index i = 0; i < pc.rows(); ++i) {
        pc.row(i) = Vec3(vals[3 * i], vals[3 * i + 1], vals[3 * i + 2]);
    }
    return pc;
}

void save_xyz(const std::filesystem::path& path, const Points& pc) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    char buf[128];
    for (Eigen::Index i = 0; i < pc.rows(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", pc(i, 0), pc(i, 1), pc(i, 2));
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

Points load_f32(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<size_t>(in.tellg());
    in.seekg(0);
    if (bytes == 0 || bytes % (3 * sizeof(float)) != 0) {
        throw std::runtime_error("bad .f32 length in " + path.string());
    }
    std::vector<float> vals(bytes / sizeof(float));
    in.read(reinterpret_cast<char*>(vals.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw std::runtime_error("read failed for " + path.string());
    Points pc(vals.size() / 3, 3);
    for (Eigen::Index i = 0; i < pc.rows(); ++i) {
        pc.row(i) = Vec3(vals[3 * i], vals[3 * i + 1], vals[3 * i + 2]);
    }
    return pc;
}

void save_f32(const std::filesystem::path& path, const Points& pc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    std::vector<float> vals(static_cast<size_t>(pc.rows()) * 3);
    for (Eigen::Index i = 0; i < pc.rows(); ++i) {
        vals[3 * i] = static_cast<float>(pc(i, 0));
        vals[3 * i + 1] = static_cast<float>(pc(i, 1));
        vals[3 * i + 2] = static_cast<float>(pc(i, 2));
    }
    out.write(reinterpret_cast<const char*>(vals.data()),
              static_cast<std::streamsize>(vals.size() * sizeof(float)));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

Points load_cloud(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".xyz") return load_xyz(path);
    if (ext == ".f32") return load_f32(path);
    throw std::runtime_error("unknown cloud format: " + path.string());
}

}  // namespace pic
