#pragma once

#include <array>
#include <string>
#include <vector>

#include "axspoof/tensor.hpp"

namespace axspoof::face {

inline constexpr int kMapSize = 32;  // ground-truth depth maps are 32x32
inline constexpr int kNoVertex = -1;

// Linear face shape model: mean plus identity and expression bases, each 3xQ.
struct FaceBasis {
    Tensor mean;                     // [3, Q]
    std::vector<Tensor> id_bases;    // each [3, Q]
    std::vector<Tensor> exp_bases;   // each [3, Q]
    std::vector<int> forehead;       // vertex indices of the tracked skin patch

    int vertex_count() const { return mean.dim(1); }
    void validate() const;
};

struct ShapeParams {
    std::vector<double> alpha_id;
    std::vector<double> alpha_exp;
};

// Scaled-orthographic alignment: S = s * R * S_F + t.
struct Pose {
    double s = 1.0;
    std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major 3x3
    std::array<double, 3> translation{0, 0, 0};

    // Throws ContractError unless R is a proper rotation (within 1e-9) and s > 0.
    void validate() const;
};

// Vertices in image-aligned coordinates: x, y in pixels, z unitless until
// normalize_depth maps it to [0,1] (larger z = closer to camera).
struct PosedShape {
    Tensor vertices;  // [3, Q]

    int vertex_count() const { return vertices.dim(1); }
    double x(int v) const { return vertices.at(0, v); }
    double y(int v) const { return vertices.at(1, v); }
    double z(int v) const { return vertices.at(2, v); }
};

struct DepthMap {
    Tensor values{std::vector<int>{kMapSize, kMapSize}};  // in [0,1], background exactly 0
};

// Per-pixel index of the nearest-to-camera vertex of the canonical frontal
// mean shape, or kNoVertex.
struct VertexIndexMap {
    std::vector<int> m = std::vector<int>(kMapSize * kMapSize, kNoVertex);
    int face_pixel_count = 0;

    int at(int row, int col) const { return m[static_cast<std::size_t>(row) * kMapSize + col]; }
};

// S_F = S0 + sum_i alpha_id[i] * S_id[i] + sum_i alpha_exp[i] * S_exp[i]
Tensor synthesize_shape(const FaceBasis& basis, const ShapeParams& params);

PosedShape pose_transform(const Tensor& frontal, const Pose& pose);

// Affinely rescales z so the closest vertex gets 1 and the furthest 0.
// Throws ContractError when all z values coincide.
PosedShape normalize_depth(PosedShape shape);

// Z-buffer rasterization into the 32x32 grid: vertex (x, y) lands in pixel
// (floor(y*32/H), floor(x*32/W)); the largest normalized z per pixel wins and
// uncovered pixels stay 0. If no vertex lands inside the image the map is all
// zero and *empty_warning (when given) is set.
DepthMap render_depth(const PosedShape& shape, int img_h, int img_w,
                      bool* empty_warning = nullptr);

// Frontal pose placing the model in the middle of an img_h x img_w image.
Pose canonical_pose(int img_h, int img_w);

// Renders the canonically posed mean shape and records, per covered pixel,
// the index of its nearest-to-camera vertex.
VertexIndexMap build_vertex_index_map(const FaceBasis& basis, int img_h, int img_w);

// Procedural ellipsoid-with-nose basis used when no external model is given.
// grid controls vertex density (Q is close to pi/4 * grid^2).
FaceBasis synthetic_basis(int grid = 52, int n_id = 10, int n_exp = 5);

// Container format: entries "mean", "id_000".., "exp_000".., optional
// "forehead" (i64 vertex indices).
FaceBasis load_basis(const std::string& path);
void save_basis(const FaceBasis& basis, const std::string& path);

}  // namespace axspoof::face
