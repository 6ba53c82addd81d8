#include "axspoof/face_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "axspoof/common.hpp"
#include "axspoof/container.hpp"

namespace axspoof::face {

namespace {

void check_base_shape(const Tensor& t, int q, const char* what) {
    if (t.rank() != 2 || t.dim(0) != 3 || t.dim(1) != q)
        throw ShapeError(std::string(what) + " must be [3," + std::to_string(q) + "], got " +
                         t.shape_str());
}

}  // namespace

void FaceBasis::validate() const {
    if (mean.rank() != 2 || mean.dim(0) != 3 || mean.dim(1) < 1)
        throw ShapeError("basis mean must be [3,Q]");
    if (id_bases.empty() || exp_bases.empty())
        throw ShapeError("basis needs at least one identity and one expression base");
    const int q = vertex_count();
    for (const Tensor& b : id_bases) check_base_shape(b, q, "identity base");
    for (const Tensor& b : exp_bases) check_base_shape(b, q, "expression base");
    for (int v : forehead)
        if (v < 0 || v >= q) throw ShapeError("forehead vertex index out of range");
}

void Pose::validate() const {
    if (!(s > 0.0)) throw ContractError("pose: scale must be positive");
    const auto& r = rotation;
    // R^T R = I
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double dot = 0.0;
            for (int k = 0; k < 3; ++k) dot += r[static_cast<std::size_t>(3 * k + i)] * r[static_cast<std::size_t>(3 * k + j)];
            const double want = i == j ? 1.0 : 0.0;
            if (std::fabs(dot - want) > 1e-9)
                throw ContractError("pose: rotation is not orthonormal");
        }
    const double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                       r[2] * (r[3] * r[7] - r[4] * r[6]);
    if (std::fabs(det - 1.0) > 1e-9) throw ContractError("pose: rotation determinant is not +1");
}

Tensor synthesize_shape(const FaceBasis& basis, const ShapeParams& params) {
    basis.validate();
    if (params.alpha_id.size() != basis.id_bases.size())
        throw ShapeError("alpha_id length " + std::to_string(params.alpha_id.size()) +
                         " does not match " + std::to_string(basis.id_bases.size()) + " bases");
    if (params.alpha_exp.size() != basis.exp_bases.size())
        throw ShapeError("alpha_exp length " + std::to_string(params.alpha_exp.size()) +
                         " does not match " + std::to_string(basis.exp_bases.size()) + " bases");
    Tensor out = basis.mean;
    for (std::size_t i = 0; i < basis.id_bases.size(); ++i) {
        const double a = params.alpha_id[i];
        if (a == 0.0) continue;
        const Tensor& b = basis.id_bases[i];
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += a * b[k];
    }
    for (std::size_t i = 0; i < basis.exp_bases.size(); ++i) {
        const double a = params.alpha_exp[i];
        if (a == 0.0) continue;
        const Tensor& b = basis.exp_bases[i];
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += a * b[k];
    }
    return out;
}

PosedShape pose_transform(const Tensor& frontal, const Pose& pose) {
    if (frontal.rank() != 2 || frontal.dim(0) != 3)
        throw ShapeError("pose_transform: shape must be [3,Q]");
    pose.validate();
    const int q = frontal.dim(1);
    PosedShape out{Tensor({3, q})};
    const auto& r = pose.rotation;
    for (int v = 0; v < q; ++v) {
        const double x = frontal.at(0, v), y = frontal.at(1, v), z = frontal.at(2, v);
        out.vertices.at(0, v) = pose.s * (r[0] * x + r[1] * y + r[2] * z) + pose.translation[0];
        out.vertices.at(1, v) = pose.s * (r[3] * x + r[4] * y + r[5] * z) + pose.translation[1];
        out.vertices.at(2, v) = pose.s * (r[6] * x + r[7] * y + r[8] * z) + pose.translation[2];
    }
    return out;
}

PosedShape normalize_depth(PosedShape shape) {
    const int q = shape.vertex_count();
    double zmin = shape.z(0), zmax = shape.z(0);
    for (int v = 1; v < q; ++v) {
        zmin = std::min(zmin, shape.z(v));
        zmax = std::max(zmax, shape.z(v));
    }
    if (zmax - zmin <= 0.0)
        throw ContractError("normalize_depth: degenerate flat shape, all z equal");
    const double inv = 1.0 / (zmax - zmin);
    for (int v = 0; v < q; ++v)
        shape.vertices.at(2, v) = (shape.z(v) - zmin) * inv;
    return shape;
}

DepthMap render_depth(const PosedShape& shape, int img_h, int img_w, bool* empty_warning) {
    if (img_h <= 0 || img_w <= 0) throw ShapeError("render_depth: image extent must be positive");
    DepthMap map;
    bool any = false;
    const int q = shape.vertex_count();
    for (int v = 0; v < q; ++v) {
        const int col = static_cast<int>(std::floor(shape.x(v) * kMapSize / img_w));
        const int row = static_cast<int>(std::floor(shape.y(v) * kMapSize / img_h));
        if (col < 0 || col >= kMapSize || row < 0 || row >= kMapSize) continue;
        any = true;
        double& cell = map.values.at(row, col);
        cell = std::max(cell, shape.z(v));
    }
    if (empty_warning) *empty_warning = !any;
    return map;
}

Pose canonical_pose(int img_h, int img_w) {
    Pose p;
    p.s = 0.42 * std::min(img_h, img_w);
    p.translation = {img_w / 2.0, img_h / 2.0, 0.0};
    return p;
}

VertexIndexMap build_vertex_index_map(const FaceBasis& basis, int img_h, int img_w) {
    const PosedShape posed = normalize_depth(
        pose_transform(synthesize_shape(basis, {std::vector<double>(basis.id_bases.size(), 0.0),
                                                std::vector<double>(basis.exp_bases.size(), 0.0)}),
                       canonical_pose(img_h, img_w)));
    VertexIndexMap map;
    std::vector<double> best(kMapSize * kMapSize, -1.0);
    const int q = posed.vertex_count();
    for (int v = 0; v < q; ++v) {
        const int col = static_cast<int>(std::floor(posed.x(v) * kMapSize / img_w));
        const int row = static_cast<int>(std::floor(posed.y(v) * kMapSize / img_h));
        if (col < 0 || col >= kMapSize || row < 0 || row >= kMapSize) continue;
        const std::size_t at = static_cast<std::size_t>(row) * kMapSize + col;
        if (posed.z(v) > best[at]) {
            best[at] = posed.z(v);
            map.m[at] = v;
        }
    }
    map.face_pixel_count = 0;
    for (int idx : map.m)
        if (idx != kNoVertex) ++map.face_pixel_count;
    return map;
}

namespace {

// Smooth deterministic deformation fields for the procedural bases. The
// coefficient tables are fixed so a given (grid, n_id, n_exp) always yields
// the same basis.
double field(double u, double v, int mode, int axis) {
    const double a = 0.9 + 0.37 * mode + 0.21 * axis;
    const double b = 1.3 + 0.29 * mode - 0.17 * axis;
    const double ph = 0.7 * mode + 1.3 * axis;
    return std::sin(a * u * 2.3 + ph) * std::cos(b * v * 1.9 - 0.5 * ph);
}

double bump(double u, double v, double cu, double cv, double radius) {
    const double du = u - cu, dv = v - cv;
    return std::exp(-(du * du + dv * dv) / (radius * radius));
}

}  // namespace

FaceBasis synthetic_basis(int grid, int n_id, int n_exp) {
    if (grid < 8 || n_id < 1 || n_exp < 1)
        throw ContractError("synthetic_basis: grid >= 8 and at least one base of each kind");

    std::vector<double> us, vs;
    for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j) {
            const double u = -1.0 + 2.0 * j / (grid - 1);
            const double v = -1.0 + 2.0 * i / (grid - 1);
            if (u * u + v * v <= 1.0) {
                us.push_back(u);
                vs.push_back(v);
            }
        }
    const int q = static_cast<int>(us.size());

    FaceBasis basis;
    basis.mean = Tensor({3, q});
    for (int k = 0; k < q; ++k) {
        const double u = us[static_cast<std::size_t>(k)];
        const double v = vs[static_cast<std::size_t>(k)];
        // Image convention: +y runs down the face, so the forehead sits at
        // negative v and the nose bump slightly below center.
        const double dome = 0.62 * std::sqrt(std::max(0.0, 1.0 - u * u - v * v));
        const double nose = 0.20 * bump(u, v, 0.0, 0.12, 0.13);
        basis.mean.at(0, k) = 0.78 * u;
        basis.mean.at(1, k) = v;
        basis.mean.at(2, k) = dome + nose;
    }

    for (int i = 0; i < n_id; ++i) {
        Tensor b({3, q});
        for (int k = 0; k < q; ++k) {
            const double u = us[static_cast<std::size_t>(k)];
            const double v = vs[static_cast<std::size_t>(k)];
            b.at(0, k) = 0.035 * field(u, v, i, 0);
            b.at(1, k) = 0.035 * field(u, v, i, 1);
            b.at(2, k) = 0.045 * field(u, v, i, 2);
        }
        basis.id_bases.push_back(std::move(b));
    }
    for (int i = 0; i < n_exp; ++i) {
        Tensor b({3, q});
        // Expressions act around the mouth (v ~ 0.55) and brow (v ~ -0.35).
        const double cv = i % 2 == 0 ? 0.55 : -0.35;
        const double cu = 0.25 * ((i % 3) - 1);
        for (int k = 0; k < q; ++k) {
            const double u = us[static_cast<std::size_t>(k)];
            const double v = vs[static_cast<std::size_t>(k)];
            const double w = bump(u, v, cu, cv, 0.28);
            b.at(0, k) = 0.01 * w * field(u, v, i + 7, 0);
            b.at(1, k) = 0.03 * w;
            b.at(2, k) = 0.025 * w * field(u, v, i + 7, 2);
        }
        basis.exp_bases.push_back(std::move(b));
    }

    for (int k = 0; k < q; ++k) {
        const double u = us[static_cast<std::size_t>(k)];
        const double v = vs[static_cast<std::size_t>(k)];
        if (std::fabs(u) <= 0.35 && v >= -0.62 && v <= -0.34) basis.forehead.push_back(k);
    }
    basis.validate();
    return basis;
}

FaceBasis load_basis(const std::string& path) {
    const io::Container c = io::Container::load(path);
    FaceBasis basis;
    basis.mean = c.tensor("mean");
    char name[32];
    for (int i = 0;; ++i) {
        std::snprintf(name, sizeof(name), "id_%03d", i);
        if (!c.contains(name)) break;
        basis.id_bases.push_back(c.tensor(name));
    }
    for (int i = 0;; ++i) {
        std::snprintf(name, sizeof(name), "exp_%03d", i);
        if (!c.contains(name)) break;
        basis.exp_bases.push_back(c.tensor(name));
    }
    if (c.contains("forehead")) {
        for (std::int64_t v : c.entry("forehead").i64)
            basis.forehead.push_back(static_cast<int>(v));
    }
    try {
        basis.validate();
    } catch (const ShapeError& e) {
        throw DataError("invalid basis file " + path + ": " + e.what());
    }
    return basis;
}

void save_basis(const FaceBasis& basis, const std::string& path) {
    basis.validate();
    io::Container c;
    c.put("mean", basis.mean);
    char name[32];
    for (std::size_t i = 0; i < basis.id_bases.size(); ++i) {
        std::snprintf(name, sizeof(name), "id_%03zu", i);
        c.put(name, basis.id_bases[i]);
    }
    for (std::size_t i = 0; i < basis.exp_bases.size(); ++i) {
        std::snprintf(name, sizeof(name), "exp_%03zu", i);
        c.put(name, basis.exp_bases[i]);
    }
    if (!basis.forehead.empty()) {
        std::vector<std::int64_t> fh(basis.forehead.begin(), basis.forehead.end());
        c.put_i64("forehead", {static_cast<int>(fh.size())}, std::move(fh));
    }
    c.save(path);
}

}  // namespace axspoof::face
