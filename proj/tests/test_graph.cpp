#include <doctest.h>

#include <cmath>

#include "axspoof/graph.hpp"
#include "gradcheck.hpp"

using namespace axspoof;
using testing::check_gradients;
using testing::random_tensor;
using testing::rel_err;

TEST_CASE("backward: d(x^2)/dx at x=3 is 6") {
    Tensor x = Tensor::scalar(3.0);
    x.requires_grad = true;
    Graph g;
    const auto xi = g.leaf(x);
    const auto loss = g.mul(xi, xi);
    g.backward(loss);
    CHECK(g.grad(xi)[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward: matmul gradients match finite differences") {
    Rng rng(41);
    std::vector<Tensor> leaves{random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)};
    const auto res = check_gradients(
        leaves, [](Graph& g, const std::vector<Graph::NodeId>& ids) {
            return g.sum(g.matmul(ids[0], ids[1]));
        });
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("backward: leaf not on the path to the loss gets zero gradient") {
    Tensor x = Tensor::scalar(2.0);
    Tensor y = Tensor::scalar(5.0);
    x.requires_grad = true;
    y.requires_grad = true;
    Graph g;
    const auto xi = g.leaf(x);
    const auto yi = g.leaf(y);
    g.backward(g.mul(xi, xi));
    CHECK(g.grad(yi)[0] == 0.0);
}

TEST_CASE("backward: non-scalar loss is a contract violation") {
    Graph g;
    const auto x = g.constant(Tensor({2, 2}, 1.0));
    CHECK_THROWS_AS(g.backward(x), ContractError);
}

TEST_CASE("backward: gradients accumulate over all paths") {
    Tensor x = Tensor::scalar(1.5);
    x.requires_grad = true;
    Graph g;
    const auto xi = g.leaf(x);
    const auto loss = g.add(g.mul(xi, xi), xi);  // x^2 + x -> 2x + 1
    g.backward(loss);
    CHECK(g.grad(xi)[0] == doctest::Approx(4.0).epsilon(1e-12));
}

namespace {

// Direct six-loop cross-correlation with zero padding, bias added.
Tensor conv_reference(const Tensor& x, const Tensor& w, const Tensor& b) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int k = w.dim(0), kh = w.dim(2), p = kh / 2;
    Tensor out({n, k, h, wd});
    for (int ni = 0; ni < n; ++ni)
        for (int ki = 0; ki < k; ++ki)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < wd; ++j) {
                    double acc = b[static_cast<std::size_t>(ki)];
                    for (int ci = 0; ci < c; ++ci)
                        for (int di = 0; di < kh; ++di)
                            for (int dj = 0; dj < kh; ++dj) {
                                const int y = i + di - p, z = j + dj - p;
                                if (y < 0 || y >= h || z < 0 || z >= wd) continue;
                                acc += x.at(ni, ci, y, z) * w.at(ki, ci, di, dj);
                            }
                    out.at(ni, ki, i, j) = acc;
                }
    return out;
}

}  // namespace

TEST_CASE("conv2d: padded tap counting on a constant image") {
    Graph g;
    const auto x = g.constant(Tensor({1, 1, 3, 3}, 1.0));
    const auto w = g.constant(Tensor({1, 1, 3, 3}, 1.0));
    const auto b = g.constant(Tensor({1}));
    const Tensor& y = g.value(g.conv2d(x, w, b));
    CHECK(y.at(0, 0, 1, 1) == 9.0);
    CHECK(y.at(0, 0, 0, 0) == 4.0);
    CHECK(y.at(0, 0, 0, 1) == 6.0);
}

TEST_CASE("conv2d: zero kernel with bias 0.5 gives constant 0.5") {
    Rng rng(7);
    Graph g;
    const auto x = g.constant(random_tensor({2, 3, 4, 4}, rng));
    const auto w = g.constant(Tensor({2, 3, 3, 3}));
    const auto b = g.constant(Tensor({2}, 0.5));
    const Tensor& y = g.value(g.conv2d(x, w, b));
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.5);
}

TEST_CASE("conv2d: matches the naive-loop reference") {
    Rng rng(11);
    const Tensor x = random_tensor({1, 2, 5, 5}, rng);
    const Tensor w = random_tensor({3, 2, 3, 3}, rng);
    const Tensor b = random_tensor({3}, rng);
    Graph g;
    const Tensor& y = g.value(g.conv2d(g.constant(x), g.constant(w), g.constant(b)));
    const Tensor ref = conv_reference(x, w, b);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::fabs(y[i] - ref[i]) < 1e-12);
}

TEST_CASE("conv2d: channel mismatch is a shape error") {
    Graph g;
    const auto x = g.constant(Tensor({1, 2, 4, 4}));
    const auto w = g.constant(Tensor({1, 3, 3, 3}));
    const auto b = g.constant(Tensor({1}));
    CHECK_THROWS_AS(g.conv2d(x, w, b), ShapeError);
}

TEST_CASE("conv2d: gradients match finite differences") {
    Rng rng(13);
    std::vector<Tensor> leaves{random_tensor({1, 2, 4, 4}, rng), random_tensor({2, 2, 3, 3}, rng),
                               random_tensor({2}, rng)};
    const auto res = check_gradients(
        leaves, [](Graph& g, const std::vector<Graph::NodeId>& ids) {
            return g.mean(g.abs(g.conv2d(ids[0], ids[1], ids[2])));
        });
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("conv2d: forward determinism is bitwise") {
    Rng rng(17);
    const Tensor x = random_tensor({2, 3, 8, 8}, rng);
    const Tensor w = random_tensor({4, 3, 3, 3}, rng);
    const Tensor b = random_tensor({4}, rng);
    Graph g1, g2;
    const Tensor& y1 = g1.value(g1.conv2d(g1.constant(x), g1.constant(w), g1.constant(b)));
    const Tensor& y2 = g2.value(g2.conv2d(g2.constant(x), g2.constant(w), g2.constant(b)));
    for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1[i] == y2[i]);
}

TEST_CASE("max_pool2: window maximum and tie-breaking") {
    Graph g;
    const auto x = g.constant(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
    CHECK(g.value(g.max_pool2(x))[0] == 4.0);

    Tensor flat({1, 1, 2, 2}, 7.0);
    flat.requires_grad = true;
    Graph g2;
    const auto xi = g2.leaf(flat);
    const auto pooled = g2.max_pool2(xi);
    CHECK(g2.value(pooled)[0] == 7.0);
    g2.backward(g2.sum(pooled));
    const Tensor grad = g2.grad(xi);
    CHECK(grad[0] == 1.0);  // ties go to the first element in row-major order
    CHECK(grad[1] == 0.0);
    CHECK(grad[2] == 0.0);
    CHECK(grad[3] == 0.0);
}

TEST_CASE("max_pool2: matches a direct window scan") {
    Rng rng(19);
    const Tensor x = random_tensor({1, 2, 8, 8}, rng);
    Graph g;
    const Tensor& y = g.value(g.max_pool2(g.constant(x)));
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                const double want = std::max(
                    std::max(x.at(0, c, 2 * i, 2 * j), x.at(0, c, 2 * i, 2 * j + 1)),
                    std::max(x.at(0, c, 2 * i + 1, 2 * j), x.at(0, c, 2 * i + 1, 2 * j + 1)));
                CHECK(y.at(0, c, i, j) == want);
            }
}

TEST_CASE("max_pool2: odd spatial dims are a shape error") {
    Graph g;
    CHECK_THROWS_AS(g.max_pool2(g.constant(Tensor({1, 1, 3, 4}))), ShapeError);
}

TEST_CASE("bilinear_resize: constant image stays constant") {
    Graph g;
    const Tensor& y = g.value(g.bilinear_resize(g.constant(Tensor({1, 1, 3, 3}, 0.7)), 7, 5));
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("bilinear_resize: align-corners preserves the four corners") {
    Graph g;
    const auto x = g.constant(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
    const Tensor& y = g.value(g.bilinear_resize(x, 4, 4));
    CHECK(y.at(0, 0, 0, 0) == 1.0);
    CHECK(y.at(0, 0, 0, 3) == 2.0);
    CHECK(y.at(0, 0, 3, 0) == 3.0);
    CHECK(y.at(0, 0, 3, 3) == 4.0);
}

TEST_CASE("bilinear_resize: gradients match finite differences") {
    Rng rng(23);
    std::vector<Tensor> leaves{random_tensor({1, 1, 3, 3}, rng)};
    const auto res = check_gradients(
        leaves, [](Graph& g, const std::vector<Graph::NodeId>& ids) {
            return g.mean(g.abs(g.bilinear_resize(ids[0], 5, 4)));
        });
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("elu: fixed points and slope") {
    Graph g;
    const Tensor& y =
        g.value(g.elu(g.constant(Tensor({3}, {1.0, 0.0, -1.0}))));
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-12));

    Tensor x = Tensor::scalar(-1.0);
    x.requires_grad = true;
    Graph g2;
    const auto xi = g2.leaf(x);
    g2.backward(g2.sum(g2.elu(xi)));
    CHECK(g2.grad(xi)[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("batch_norm: normalized batch passes through up to epsilon") {
    Tensor x({2, 1, 1, 2}, {-1.0, 1.0, 1.0, -1.0});  // zero mean, unit variance
    Graph g;
    Tensor rm({1}), rv({1}, 1.0);
    const auto y = g.batch_norm(g.constant(x), g.constant(Tensor({1}, 1.0)),
                                g.constant(Tensor({1})), rm, rv, true);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(g.value(y)[i] == doctest::Approx(x[i]).epsilon(1e-4));
    // Running stats pick up the batch statistics with momentum 0.9.
    CHECK(rm[0] == doctest::Approx(0.0));
    CHECK(rv[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0).epsilon(1e-12));
}

TEST_CASE("batch_norm: zero gamma collapses the output to beta") {
    Rng rng(29);
    Graph g;
    Tensor rm({2}), rv({2}, 1.0);
    const auto y = g.batch_norm(g.constant(random_tensor({3, 2, 2, 2}, rng)),
                                g.constant(Tensor({2})), g.constant(Tensor({2}, 0.25)), rm, rv,
                                true);
    for (std::size_t i = 0; i < g.value(y).size(); ++i) CHECK(g.value(y)[i] == 0.25);
}

TEST_CASE("batch_norm: training gradients match finite differences") {
    Rng rng(31);
    std::vector<Tensor> leaves{random_tensor({3, 2, 2, 2}, rng), random_tensor({2}, rng, 0.3),
                               random_tensor({2}, rng, 0.3)};
    leaves[1][0] += 1.0;  // keep gamma away from zero
    leaves[1][1] += 1.0;
    const auto res = check_gradients(
        leaves, [](Graph& g, const std::vector<Graph::NodeId>& ids) {
            Tensor rm({2}), rv({2}, 1.0);
            return g.mean(g.abs(g.batch_norm(ids[0], ids[1], ids[2], rm, rv, true)));
        });
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("batch_norm: eval mode uses running statistics") {
    Graph g;
    Tensor rm({1}, 2.0), rv({1}, 4.0);
    const auto y = g.batch_norm(g.constant(Tensor({1, 1, 1, 2}, {2.0, 4.0})),
                                g.constant(Tensor({1}, 1.0)), g.constant(Tensor({1})), rm, rv,
                                false);
    CHECK(g.value(y)[0] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(g.value(y)[1] == doctest::Approx(1.0).epsilon(1e-3));  // (4-2)/sqrt(4+eps)
    CHECK(rm[0] == 2.0);  // eval leaves the running buffers alone
    CHECK(rv[0] == 4.0);
}

TEST_CASE("batch_norm: batch of one in training mode is an error") {
    Graph g;
    Tensor rm({1}), rv({1}, 1.0);
    CHECK_THROWS_AS(g.batch_norm(g.constant(Tensor({1, 1, 2, 2})), g.constant(Tensor({1}, 1.0)),
                                 g.constant(Tensor({1})), rm, rv, true),
                    ContractError);
}

TEST_CASE("lstm_step: zero weights and zero previous cell") {
    Graph g;
    const LstmWeights w{g.constant(Tensor({8, 3})), g.constant(Tensor({8, 2})),
                        g.constant(Tensor({8}))};
    const LstmState prev{g.constant(Tensor({1, 2})), g.constant(Tensor({1, 2}))};
    const LstmState next = lstm_step(g, g.constant(Tensor({1, 3}, 0.5)), prev, w);
    CHECK(g.value(next.h)[0] == 0.0);
    CHECK(g.value(next.c)[0] == 0.0);
}

TEST_CASE("lstm_step: zero weights halve the carried cell state") {
    Graph g;
    const LstmWeights w{g.constant(Tensor({8, 3})), g.constant(Tensor({8, 2})),
                        g.constant(Tensor({8}))};
    const double c0 = 0.8;
    const LstmState prev{g.constant(Tensor({1, 2})), g.constant(Tensor({1, 2}, c0))};
    const LstmState next = lstm_step(g, g.constant(Tensor({1, 3}, 0.5)), prev, w);
    CHECK(g.value(next.c)[0] == doctest::Approx(0.5 * c0).epsilon(1e-12));
    CHECK(g.value(next.h)[0] == doctest::Approx(0.5 * std::tanh(0.5 * c0)).epsilon(1e-12));
}

TEST_CASE("lstm_step: gradients through three chained steps") {
    Rng rng(37);
    const int in = 3, hidden = 2;
    std::vector<Tensor> leaves{random_tensor({4 * hidden, in}, rng, 0.4),
                               random_tensor({4 * hidden, hidden}, rng, 0.4),
                               random_tensor({4 * hidden}, rng, 0.2),
                               random_tensor({2, in}, rng), random_tensor({2, in}, rng),
                               random_tensor({2, in}, rng)};
    const auto res = check_gradients(
        leaves, [hidden](Graph& g, const std::vector<Graph::NodeId>& ids) {
            const LstmWeights w{ids[0], ids[1], ids[2]};
            LstmState st{g.constant(Tensor({2, hidden})), g.constant(Tensor({2, hidden}))};
            for (int j = 0; j < 3; ++j) st = lstm_step(g, ids[3 + j], st, w);
            return g.mean(g.abs(st.h));
        });
    CHECK(res.max_rel_err < 1e-4);
}

namespace {

// Brute-force unnormalized DFT magnitudes, bins 1..n/2.
std::vector<double> dft_reference(const std::vector<double>& x) {
    const int n = static_cast<int>(x.size());
    std::vector<double> out;
    for (int k = 1; k <= n / 2; ++k) {
        double re = 0.0, im = 0.0;
        for (int t = 0; t < n; ++t) {
            re += x[static_cast<std::size_t>(t)] * std::cos(2.0 * M_PI * k * t / n);
            im -= x[static_cast<std::size_t>(t)] * std::sin(2.0 * M_PI * k * t / n);
        }
        out.push_back(std::sqrt(re * re + im * im));
    }
    return out;
}

}  // namespace

TEST_CASE("dft_magnitude: impulse, DC and cosine fixtures") {
    Graph g;
    const Tensor& imp = g.value(g.dft_magnitude(g.constant(Tensor({4}, {1, 0, 0, 0}))));
    CHECK(imp[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(imp[1] == doctest::Approx(1.0).epsilon(1e-12));

    const Tensor& dc = g.value(g.dft_magnitude(g.constant(Tensor({4}, {1, 1, 1, 1}))));
    CHECK(dc[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(dc[1] == doctest::Approx(0.0).epsilon(1e-12));

    const Tensor& cosine = g.value(g.dft_magnitude(g.constant(Tensor({4}, {1, 0, -1, 0}))));
    CHECK(cosine[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(cosine[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("dft_magnitude: agrees with the O(N^2) oracle up to N=64") {
    Rng rng(43);
    for (int n : {8, 16, 32, 64}) {
        std::vector<double> x(static_cast<std::size_t>(n));
        for (double& v : x) v = rng.normal();
        Graph g;
        const Tensor& y = g.value(g.dft_magnitude(g.constant(Tensor({n}, x))));
        const std::vector<double> ref = dft_reference(x);
        for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::fabs(y[i] - ref[i]) < 1e-10);
    }
}

TEST_CASE("dft_magnitude: gradient matches finite differences; zero input stays finite") {
    Rng rng(47);
    std::vector<Tensor> leaves{random_tensor({8}, rng)};
    const auto res = check_gradients(
        leaves, [](Graph& g, const std::vector<Graph::NodeId>& ids) {
            return g.mean(g.dft_magnitude(ids[0]));
        });
    CHECK(res.max_rel_err < 1e-6);

    // Subgradient 0 at the origin: no NaN for an exactly zero spectrum.
    Tensor zero({8});
    zero.requires_grad = true;
    Graph g;
    const auto xi = g.leaf(zero);
    g.backward(g.mean(g.dft_magnitude(xi)));
    const Tensor grad = g.grad(xi);
    for (std::size_t i = 0; i < grad.size(); ++i) CHECK(grad[i] == 0.0);
}

TEST_CASE("elementwise and structural ops: gradients match finite differences") {
    Rng rng(53);
    std::vector<Tensor> leaves{random_tensor({2, 6}, rng), random_tensor({2, 6}, rng)};
    const auto res = check_gradients(
        leaves, [](Graph& g, const std::vector<Graph::NodeId>& ids) {
            auto x = g.mul(g.sigmoid(ids[0]), g.tanh_act(ids[1]));
            x = g.add(x, g.scale(g.sub(ids[0], ids[1]), 0.3));
            auto parts = g.concat_rows({g.slice_rows(x, 0, 1), g.slice_rows(x, 1, 1)});
            return g.mean(g.abs(g.slice_cols(parts, 1, 4)));
        });
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("fully_connected and global_avg_pool: gradients match finite differences") {
    Rng rng(59);
    std::vector<Tensor> leaves{random_tensor({2, 3, 4, 4}, rng), random_tensor({5, 3}, rng),
                               random_tensor({5}, rng)};
    const auto res = check_gradients(
        leaves, [](Graph& g, const std::vector<Graph::NodeId>& ids) {
            return g.mean(g.abs(g.fully_connected(g.global_avg_pool(ids[0]), ids[1], ids[2])));
        });
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("softmax_cross_entropy: gradients match finite differences") {
    Rng rng(61);
    std::vector<Tensor> leaves{random_tensor({4, 2}, rng)};
    const auto res = check_gradients(
        leaves, [](Graph& g, const std::vector<Graph::NodeId>& ids) {
            return g.softmax_cross_entropy(ids[0], {0, 1, 1, 0});
        });
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("gather: forward picks sources, missing entries stay zero") {
    Tensor x({4}, {10, 20, 30, 40});
    x.requires_grad = true;
    Graph g;
    const auto xi = g.leaf(x);
    const auto y = g.gather(xi, {2, -1, 0, 2}, {4});
    CHECK(g.value(y)[0] == 30.0);
    CHECK(g.value(y)[1] == 0.0);
    CHECK(g.value(y)[2] == 10.0);
    CHECK(g.value(y)[3] == 30.0);
    g.backward(g.sum(y));
    const Tensor grad = g.grad(xi);
    CHECK(grad[0] == 1.0);
    CHECK(grad[1] == 0.0);
    CHECK(grad[2] == 2.0);  // two outputs read index 2
    CHECK(grad[3] == 0.0);
}

TEST_CASE("forward ops keep finite values on finite inputs") {
    Rng rng(67);
    Graph g;
    const auto x = g.constant(random_tensor({2, 2, 4, 4}, rng, 50.0));
    const auto y = g.elu(g.scale(x, -3.0));
    Tensor rm({2}), rv({2}, 1.0);
    const auto z = g.batch_norm(y, g.constant(Tensor({2}, 1.0)), g.constant(Tensor({2})), rm, rv,
                                true);
    CHECK(g.value(z).all_finite());
}
