#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "axspoof/face_model.hpp"
#include "axspoof/rng.hpp"

using namespace axspoof;
using namespace axspoof::face;

namespace {

FaceBasis tiny_basis(int q = 4) {
    FaceBasis b;
    b.mean = Tensor({3, q});
    for (int v = 0; v < q; ++v) {
        b.mean.at(0, v) = v;
        b.mean.at(1, v) = 2.0 * v;
        b.mean.at(2, v) = 0.1 * v;
    }
    b.id_bases.push_back(Tensor({3, q}, 1.0));
    b.exp_bases.push_back(Tensor({3, q}, 2.0));
    return b;
}

ShapeParams zero_params(const FaceBasis& b) {
    return {std::vector<double>(b.id_bases.size(), 0.0),
            std::vector<double>(b.exp_bases.size(), 0.0)};
}

Pose rotation_z_90() {
    Pose p;
    p.rotation = {0, -1, 0, 1, 0, 0, 0, 0, 1};
    return p;
}

}  // namespace

TEST_CASE("synthesize_shape: zero parameters give the mean shape") {
    const FaceBasis b = tiny_basis();
    const Tensor s = synthesize_shape(b, zero_params(b));
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i] == b.mean[i]);
}

TEST_CASE("synthesize_shape: unit identity coefficient adds one base") {
    const FaceBasis b = tiny_basis();
    ShapeParams p = zero_params(b);
    p.alpha_id[0] = 1.0;
    const Tensor s = synthesize_shape(b, p);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i] == b.mean[i] + 1.0);
}

TEST_CASE("synthesize_shape: matches the explicit summation oracle") {
    const FaceBasis basis = synthetic_basis(20, 4, 3);
    Rng rng(5);
    ShapeParams p;
    for (int i = 0; i < 4; ++i) p.alpha_id.push_back(rng.normal());
    for (int i = 0; i < 3; ++i) p.alpha_exp.push_back(rng.normal());
    const Tensor s = synthesize_shape(basis, p);

    Tensor want = basis.mean;
    for (int i = 0; i < 4; ++i)
        for (std::size_t k = 0; k < want.size(); ++k)
            want[k] += p.alpha_id[static_cast<std::size_t>(i)] *
                       basis.id_bases[static_cast<std::size_t>(i)][k];
    for (int i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < want.size(); ++k)
            want[k] += p.alpha_exp[static_cast<std::size_t>(i)] *
                       basis.exp_bases[static_cast<std::size_t>(i)][k];
    for (std::size_t k = 0; k < want.size(); ++k) CHECK(std::fabs(s[k] - want[k]) < 1e-12);
}

TEST_CASE("synthesize_shape: linearity in the parameters") {
    const FaceBasis basis = synthetic_basis(16, 3, 2);
    Rng rng(9);
    ShapeParams p;
    for (int i = 0; i < 3; ++i) p.alpha_id.push_back(rng.normal());
    for (int i = 0; i < 2; ++i) p.alpha_exp.push_back(rng.normal());
    ShapeParams p2 = p;
    const double a = 2.5;
    for (double& v : p2.alpha_id) v *= a;
    for (double& v : p2.alpha_exp) v *= a;
    const Tensor s1 = synthesize_shape(basis, p);
    const Tensor s2 = synthesize_shape(basis, p2);
    for (std::size_t k = 0; k < s1.size(); ++k)
        CHECK(std::fabs((s2[k] - basis.mean[k]) - a * (s1[k] - basis.mean[k])) < 1e-10);
}

TEST_CASE("synthesize_shape: length mismatch is a shape error") {
    const FaceBasis b = tiny_basis();
    CHECK_THROWS_AS(synthesize_shape(b, {{}, {0.0}}), ShapeError);
}

TEST_CASE("pose_transform: identity, scale-translate, and rotation fixtures") {
    const FaceBasis b = tiny_basis();
    const Tensor s = b.mean;

    const PosedShape same = pose_transform(s, Pose{});
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(same.vertices[i] == s[i]);

    Tensor single({3, 1}, {0.0, 0.0, 0.0});
    Pose st;
    st.s = 2.0;
    st.translation = {1.0, 0.0, 0.0};
    const PosedShape moved = pose_transform(single, st);
    CHECK(moved.x(0) == 1.0);
    CHECK(moved.y(0) == 0.0);
    CHECK(moved.z(0) == 0.0);

    Tensor ex({3, 1}, {1.0, 0.0, 0.0});
    const PosedShape rot = pose_transform(ex, rotation_z_90());
    CHECK(rot.x(0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rot.y(0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pose_transform: preserves pairwise distances up to the scale") {
    const FaceBasis basis = synthetic_basis(14, 2, 2);
    Rng rng(21);
    Pose p;
    // Rotation about z by a random angle.
    const double a = rng.uniform(0.0, 3.0);
    p.rotation = {std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1};
    p.s = 3.7;
    p.translation = {4.0, -2.0, 1.0};
    const Tensor s = basis.mean;
    const PosedShape posed = pose_transform(s, p);
    for (int k = 0; k < 10; ++k) {
        const int v1 = rng.uniform_int(s.dim(1)), v2 = rng.uniform_int(s.dim(1));
        double d0 = 0.0, d1 = 0.0;
        for (int ax = 0; ax < 3; ++ax) {
            const double a0 = s.at(ax, v1) - s.at(ax, v2);
            d0 += a0 * a0;
            const double a1 = posed.vertices.at(ax, v1) - posed.vertices.at(ax, v2);
            d1 += a1 * a1;
        }
        CHECK(std::sqrt(d1) == doctest::Approx(p.s * std::sqrt(d0)).epsilon(1e-9));
    }
}

TEST_CASE("pose_transform: non-orthogonal rotation is rejected") {
    Pose p;
    p.rotation = {1, 0.3, 0, 0, 1, 0, 0, 0, 1};
    CHECK_THROWS_AS(pose_transform(Tensor({3, 2}), p), ContractError);
    Pose reflect;
    reflect.rotation = {1, 0, 0, 0, 1, 0, 0, 0, -1};  // det -1
    CHECK_THROWS_AS(pose_transform(Tensor({3, 2}), reflect), ContractError);
}

TEST_CASE("normalize_depth: affine normalization fixtures") {
    Tensor v({3, 3});
    v.at(2, 0) = 5.0;
    v.at(2, 1) = 7.0;
    v.at(2, 2) = 9.0;
    const PosedShape out = normalize_depth(PosedShape{v});
    CHECK(out.z(0) == 0.0);
    CHECK(out.z(1) == 0.5);
    CHECK(out.z(2) == 1.0);

    Tensor two({3, 2});
    two.at(2, 1) = 1.0;
    const PosedShape id = normalize_depth(PosedShape{two});
    CHECK(id.z(0) == 0.0);
    CHECK(id.z(1) == 1.0);

    // Already-normalized input is a fixed point.
    const PosedShape again = normalize_depth(id);
    CHECK(again.z(0) == 0.0);
    CHECK(again.z(1) == 1.0);
}

TEST_CASE("normalize_depth: flat shape is a degenerate-shape error") {
    CHECK_THROWS_AS(normalize_depth(PosedShape{Tensor({3, 4}, 2.0)}), ContractError);
}

TEST_CASE("render_depth: nearest wins and background stays zero") {
    Tensor v({3, 2});
    // Both vertices in the same pixel of a 64x64 image: cell (0,0).
    v.at(0, 0) = 1.0;
    v.at(1, 0) = 1.0;
    v.at(2, 0) = 0.3;
    v.at(0, 1) = 1.5;
    v.at(1, 1) = 1.5;
    v.at(2, 1) = 0.8;
    const DepthMap map = render_depth(PosedShape{v}, 64, 64);
    CHECK(map.values.at(0, 0) == 0.8);
    CHECK(map.values.at(0, 1) == 0.0);
    CHECK(map.values.at(5, 5) == 0.0);
}

TEST_CASE("render_depth: vertices outside the image give an empty map with a warning") {
    Tensor v({3, 2});
    v.at(0, 0) = -5.0;
    v.at(1, 0) = 10.0;
    v.at(0, 1) = 200.0;
    v.at(1, 1) = 10.0;
    bool warn = false;
    const DepthMap map = render_depth(PosedShape{v}, 64, 64, &warn);
    CHECK(warn);
    for (std::size_t i = 0; i < map.values.size(); ++i) CHECK(map.values[i] == 0.0);
}

TEST_CASE("render_depth: dense hemisphere matches the analytic surface") {
    // Dense point cloud of a unit hemisphere, radius 0.39*W pixels.
    const int img = 256;
    const double r = 0.39 * img;
    const double cx = img / 2.0, cy = img / 2.0;
    const int n = 900;
    std::vector<double> xs, ys, zs;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double x = cx - r + 2.0 * r * j / (n - 1);
            const double y = cy - r + 2.0 * r * i / (n - 1);
            const double rho2 = ((x - cx) / r) * ((x - cx) / r) + ((y - cy) / r) * ((y - cy) / r);
            if (rho2 > 1.0) continue;
            xs.push_back(x);
            ys.push_back(y);
            zs.push_back(std::sqrt(1.0 - rho2));
        }
    Tensor v({3, static_cast<int>(xs.size())});
    for (std::size_t k = 0; k < xs.size(); ++k) {
        v.at(0, static_cast<int>(k)) = xs[k];
        v.at(1, static_cast<int>(k)) = ys[k];
        v.at(2, static_cast<int>(k)) = zs[k];
    }
    const DepthMap map = render_depth(normalize_depth(PosedShape{v}), img, img);

    double mae = 0.0;
    for (int i = 0; i < kMapSize; ++i)
        for (int j = 0; j < kMapSize; ++j) {
            const double px = (j + 0.5) * img / kMapSize;
            const double py = (i + 0.5) * img / kMapSize;
            const double rho2 =
                ((px - cx) / r) * ((px - cx) / r) + ((py - cy) / r) * ((py - cy) / r);
            const double analytic = rho2 <= 1.0 ? std::sqrt(1.0 - rho2) : 0.0;
            mae += std::fabs(map.values.at(i, j) - analytic);
        }
    mae /= kMapSize * kMapSize;
    CHECK(mae < 0.05);
}

TEST_CASE("render_depth: in-plane shift by one cell moves the map one pixel") {
    const FaceBasis basis = synthetic_basis(40, 4, 2);
    const int img = 64;
    const PosedShape posed = normalize_depth(
        pose_transform(synthesize_shape(basis, zero_params(basis)), canonical_pose(img, img)));
    const DepthMap before = render_depth(posed, img, img);

    PosedShape shifted = posed;
    for (int v = 0; v < shifted.vertex_count(); ++v)
        shifted.vertices.at(0, v) += img / static_cast<double>(kMapSize);
    const DepthMap after = render_depth(shifted, img, img);
    for (int i = 0; i < kMapSize; ++i)
        for (int j = 1; j < kMapSize; ++j)
            CHECK(after.values.at(i, j) == before.values.at(i, j - 1));
}

TEST_CASE("render_depth: output satisfies the depth-map invariants") {
    const FaceBasis basis = synthetic_basis(40, 4, 2);
    Rng rng(33);
    for (int trial = 0; trial < 5; ++trial) {
        ShapeParams p;
        for (int i = 0; i < 4; ++i) p.alpha_id.push_back(rng.normal(0, 0.8));
        for (int i = 0; i < 2; ++i) p.alpha_exp.push_back(rng.normal(0, 0.5));
        const PosedShape posed =
            normalize_depth(pose_transform(synthesize_shape(basis, p), canonical_pose(64, 64)));
        const DepthMap map = render_depth(posed, 64, 64);
        for (std::size_t i = 0; i < map.values.size(); ++i) {
            CHECK(map.values[i] >= 0.0);
            CHECK(map.values[i] <= 1.0);
        }
    }
}

TEST_CASE("build_vertex_index_map: single and contested pixels") {
    FaceBasis b;
    b.mean = Tensor({3, 2});
    // Two vertices in pixel (0,0) of the canonical 64x64 image after posing:
    // position them via the canonical pose: s=26.88, t=(32,32). Model coords
    // that land near the top-left corner:
    b.mean.at(0, 0) = -1.1;
    b.mean.at(1, 0) = -1.1;
    b.mean.at(2, 0) = 0.2;
    b.mean.at(0, 1) = -1.1;
    b.mean.at(1, 1) = -1.1;
    b.mean.at(2, 1) = 0.9;
    b.id_bases.push_back(Tensor({3, 2}));
    b.exp_bases.push_back(Tensor({3, 2}));
    const VertexIndexMap m = build_vertex_index_map(b, 64, 64);
    CHECK(m.face_pixel_count == 1);
    int row = -1, col = -1;
    for (int i = 0; i < kMapSize; ++i)
        for (int j = 0; j < kMapSize; ++j)
            if (m.at(i, j) != kNoVertex) {
                row = i;
                col = j;
            }
    REQUIRE(row >= 0);
    CHECK(m.at(row, col) == 1);  // nearest-to-camera vertex wins
}

TEST_CASE("build_vertex_index_map: K counts covered pixels") {
    const FaceBasis basis = synthetic_basis(40, 4, 2);
    const VertexIndexMap m = build_vertex_index_map(basis, 64, 64);

    // Direct projection count oracle.
    const PosedShape posed = normalize_depth(
        pose_transform(synthesize_shape(basis, zero_params(basis)), canonical_pose(64, 64)));
    std::vector<bool> covered(kMapSize * kMapSize, false);
    for (int v = 0; v < posed.vertex_count(); ++v) {
        const int col = static_cast<int>(std::floor(posed.x(v) * kMapSize / 64));
        const int row = static_cast<int>(std::floor(posed.y(v) * kMapSize / 64));
        if (col < 0 || col >= kMapSize || row < 0 || row >= kMapSize) continue;
        covered[static_cast<std::size_t>(row) * kMapSize + col] = true;
    }
    int want = 0;
    for (bool c : covered) want += c ? 1 : 0;
    CHECK(m.face_pixel_count == want);
    CHECK(m.face_pixel_count > 100);  // the synthetic face covers a real area
}

TEST_CASE("basis: save/load round trip and synthetic sanity") {
    const FaceBasis basis = synthetic_basis(24, 3, 2);
    CHECK(basis.vertex_count() > 300);
    CHECK(!basis.forehead.empty());

    const std::string path = "/tmp/axspoof_basis.axsp";
    save_basis(basis, path);
    const FaceBasis back = load_basis(path);
    CHECK(back.vertex_count() == basis.vertex_count());
    CHECK(back.id_bases.size() == basis.id_bases.size());
    CHECK(back.exp_bases.size() == basis.exp_bases.size());
    CHECK(back.forehead == basis.forehead);
    for (std::size_t i = 0; i < basis.mean.size(); ++i) CHECK(back.mean[i] == basis.mean[i]);
    std::remove(path.c_str());
}
