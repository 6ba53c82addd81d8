#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "axspoof/clip_io.hpp"
#include "axspoof/synthgen.hpp"
#include "axspoof/trainer.hpp"
#include "gradcheck.hpp"

using namespace axspoof;
using namespace axspoof::train;
using testing::random_tensor;

namespace {

net::NetConfig tiny_net() {
    net::NetConfig cfg;
    cfg.input_size = 32;
    cfg.block_channels = {4, 6, 6, 4};
    cfg.branch_channels = 6;
    cfg.lstm_hidden = 8;
    cfg.fc_out = 16;
    cfg.spectrum_bins = 50;
    cfg.n_f = 3;
    return cfg;
}

TrainConfig tiny_train() {
    TrainConfig cfg;
    cfg.n_f = 3;
    cfg.batch_cnn = 4;
    cfg.batch_rnn = 2;
    cfg.seed = 5;
    return cfg;
}

bool same_bits(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

CnnBatch random_cnn_batch(const net::NetConfig& ncfg, int n, Rng& rng) {
    CnnBatch batch;
    batch.images = random_tensor({n, 3, ncfg.input_size, ncfg.input_size}, rng, 0.3);
    for (std::size_t i = 0; i < batch.images.size(); ++i)
        batch.images[i] = 0.5 + 0.4 * std::tanh(batch.images[i]);
    batch.depths = Tensor({n, 1, 32, 32});
    for (std::size_t i = 0; i < batch.depths.size(); ++i)
        batch.depths[i] = rng.uniform() < 0.5 ? 0.0 : rng.uniform();
    for (int i = 0; i < n; ++i) batch.labels.push_back(i % 2);
    return batch;
}

Dataset micro_dataset(const face::FaceBasis& basis, int subjects, int frames) {
    synth::GenSpec spec;
    spec.subjects = subjects;
    spec.clips_per_subject = 1;
    spec.frames = frames;
    spec.size = 32;
    spec.seed = 11;
    return synth::generate_dataset(basis, spec);
}

}  // namespace

TEST_CASE("init_params: deterministic, zero biases, calibrated std") {
    net::NetConfig cfg;  // desk-scale defaults; lstm.wx has 4*100*1024 elements
    const net::ModelParams a = init_params(cfg, 7, 0.02);
    const net::ModelParams b = init_params(cfg, 7, 0.02);
    REQUIRE(a.tensors.size() == b.tensors.size());
    for (const auto& [name, t] : a.tensors) CHECK(same_bits(t, b.tensors.at(name)));

    const net::ModelParams c = init_params(cfg, 8, 0.02);
    CHECK(!same_bits(a.tensors.at("rnn.fc.w"), c.tensors.at("rnn.fc.w")));

    for (const auto& [name, t] : a.tensors) {
        if (name.find(".bias") != std::string::npos)
            for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0);
        if (name.find(".bn.g") != std::string::npos)
            for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 1.0);
    }

    const Tensor& big = a.tensors.at("rnn.lstm.wx");
    REQUIRE(big.size() >= 100000);
    double mean = 0.0;
    for (std::size_t i = 0; i < big.size(); ++i) mean += big[i];
    mean /= static_cast<double>(big.size());
    double var = 0.0;
    for (std::size_t i = 0; i < big.size(); ++i) var += (big[i] - mean) * (big[i] - mean);
    const double std_dev = std::sqrt(var / static_cast<double>(big.size()));
    CHECK(std_dev > 0.019);
    CHECK(std_dev < 0.021);
}

TEST_CASE("cnn_stream_step: RNN weights are untouched bit for bit") {
    const net::NetConfig ncfg = tiny_net();
    TrainConfig tcfg = tiny_train();
    net::ModelParams params = init_params(ncfg, 3, tcfg.init_std);
    const net::ModelParams before = params;

    Optimizer opt(tcfg);
    Rng rng(13);
    const CnnBatch batch = random_cnn_batch(ncfg, 4, rng);
    const StepLosses losses = cnn_stream_step(batch, params, opt, ncfg);
    CHECK(losses.depth > 0.0);

    bool cnn_changed = false;
    for (const auto& [name, t] : params.tensors) {
        if (net::ModelParams::is_rnn(name)) {
            CHECK(same_bits(t, before.tensors.at(name)));
        } else if (net::ModelParams::is_trainable(name) && !same_bits(t, before.tensors.at(name))) {
            cnn_changed = true;
        }
    }
    CHECK(cnn_changed);
}

TEST_CASE("cnn_stream_step: zero learning rate leaves parameters unchanged") {
    const net::NetConfig ncfg = tiny_net();
    TrainConfig tcfg = tiny_train();
    tcfg.lr = 0.0;
    net::ModelParams params = init_params(ncfg, 3, tcfg.init_std);
    const net::ModelParams before = params;
    Optimizer opt(tcfg);
    Rng rng(17);
    cnn_stream_step(random_cnn_batch(ncfg, 4, rng), params, opt, ncfg);
    for (const auto& [name, t] : params.tensors)
        if (name.find(".bn.r") == std::string::npos)  // running stats update on forward
            CHECK(same_bits(t, before.tensors.at(name)));
}

TEST_CASE("cnn_stream_step: overfits a fixed tiny batch") {
    const net::NetConfig ncfg = tiny_net();
    const TrainConfig tcfg = tiny_train();
    net::ModelParams params = init_params(ncfg, 19, tcfg.init_std);
    Optimizer opt(tcfg);
    Rng rng(19);
    const CnnBatch batch = random_cnn_batch(ncfg, 4, rng);
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 50; ++step) {
        const StepLosses l = cnn_stream_step(batch, params, opt, ncfg);
        if (step == 0) first = l.depth;
        last = l.depth;
    }
    CHECK(last < first);
    CHECK(last < 0.5 * first);
}

TEST_CASE("rnn_stream_step: both parts move; joint gradient is the sum of parts") {
    const net::NetConfig ncfg = tiny_net();
    const TrainConfig tcfg = tiny_train();
    net::ModelParams params = init_params(ncfg, 23, 0.05);
    const net::ModelParams before = params;

    const face::FaceBasis basis = face::synthetic_basis(32, 4, 2);
    const face::VertexIndexMap vmap = face::build_vertex_index_map(basis, 32, 32);
    const face::PosedShape posed = face::normalize_depth(face::pose_transform(
        face::synthesize_shape(basis, {std::vector<double>(4, 0.0), std::vector<double>(2, 0.0)}),
        face::canonical_pose(32, 32)));

    RnnBatch batch;
    batch.batch = 2;
    Rng rng(29);
    batch.frames = random_tensor({2 * ncfg.n_f, 3, 32, 32}, rng, 0.2);
    for (std::size_t i = 0; i < batch.frames.size(); ++i)
        batch.frames[i] = 0.5 + 0.4 * std::tanh(batch.frames[i]);
    batch.depths = Tensor({2 * ncfg.n_f, 1, 32, 32}, 0.3);
    batch.targets = Tensor({2, ncfg.spectrum_bins});
    batch.targets.at(0, 4) = 1.0;
    batch.targets.at(1, 9) = 1.0;
    batch.shapes.assign(static_cast<std::size_t>(2 * ncfg.n_f), posed);

    // Linearity: grad(joint) = grad(rppg) + grad(depth) on identical state.
    auto grads_for = [&](int which) {
        Graph g;
        net::ModelParams live = before;
        net::BoundParams bp = net::bind_params(g, live, true);
        const auto x = g.constant(batch.frames);
        const net::CnnOut out = net::cnn_forward(g, x, bp, ncfg, true);
        const auto f_maps = net::registration_layer(g, out.feat, g.value(out.depth),
                                                    batch.shapes, vmap, ncfg.depth_threshold,
                                                    32, 32);
        const auto fhat = net::rnn_forward(g, f_maps, 2, bp, ncfg);
        const auto lr = net::l1_loss(g, fhat, g.constant(batch.targets), false);
        const auto ld = net::l1_loss(g, out.depth, g.constant(batch.depths), false);
        const Graph::NodeId loss = which == 0 ? lr : (which == 1 ? ld : g.add(lr, ld));
        g.backward(loss);
        std::map<std::string, Tensor> grads;
        for (const auto& [name, id] : bp.ids)
            if (net::ModelParams::is_trainable(name)) grads.emplace(name, g.grad(id));
        return grads;
    };
    const auto g_rppg = grads_for(0);
    const auto g_depth = grads_for(1);
    const auto g_joint = grads_for(2);
    for (const auto& [name, gj] : g_joint) {
        const Tensor& gr = g_rppg.at(name);
        const Tensor& gd = g_depth.at(name);
        for (std::size_t i = 0; i < gj.size(); ++i)
            CHECK(gj[i] == doctest::Approx(gr[i] + gd[i]).epsilon(1e-9));
    }

    Optimizer opt(tcfg);
    rnn_stream_step(batch, params, opt, ncfg, vmap);
    bool cnn_changed = false, rnn_changed = false;
    for (const auto& [name, t] : params.tensors) {
        if (!net::ModelParams::is_trainable(name)) continue;
        if (same_bits(t, before.tensors.at(name))) continue;
        (net::ModelParams::is_rnn(name) ? rnn_changed : cnn_changed) = true;
    }
    CHECK(cnn_changed);
    CHECK(rnn_changed);
}

TEST_CASE("rnn_stream_step: overfits one fixed sequence") {
    const net::NetConfig ncfg = tiny_net();
    TrainConfig tcfg = tiny_train();
    net::ModelParams params = init_params(ncfg, 31, tcfg.init_std);

    const face::FaceBasis basis = face::synthetic_basis(32, 4, 2);
    const face::VertexIndexMap vmap = face::build_vertex_index_map(basis, 32, 32);
    const face::PosedShape posed = face::normalize_depth(face::pose_transform(
        face::synthesize_shape(basis, {std::vector<double>(4, 0.0), std::vector<double>(2, 0.0)}),
        face::canonical_pose(32, 32)));

    RnnBatch batch;
    batch.batch = 2;
    Rng rng(37);
    batch.frames = random_tensor({2 * ncfg.n_f, 3, 32, 32}, rng, 0.2);
    for (std::size_t i = 0; i < batch.frames.size(); ++i)
        batch.frames[i] = 0.5 + 0.4 * std::tanh(batch.frames[i]);
    batch.depths = Tensor({2 * ncfg.n_f, 1, 32, 32}, 0.4);
    batch.targets = Tensor({2, ncfg.spectrum_bins});
    batch.targets.at(0, 6) = 1.0;
    batch.targets.at(1, 6) = 1.0;
    batch.shapes.assign(static_cast<std::size_t>(2 * ncfg.n_f), posed);

    Optimizer opt(tcfg);
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 200; ++step) {
        const StepLosses l = rnn_stream_step(batch, params, opt, ncfg, vmap);
        if (step == 0) first = l.rppg;
        last = l.rppg;
    }
    CHECK(last < 0.1 * first);
}

TEST_CASE("train: deterministic, resumable, and checkpoints round trip") {
    const face::FaceBasis basis = face::synthetic_basis(32, 4, 2);
    const Dataset data = micro_dataset(basis, 2, 60);

    net::NetConfig ncfg = tiny_net();
    TrainConfig tcfg = tiny_train();
    tcfg.epochs = 2;
    tcfg.frames_per_clip = 2;
    tcfg.batch_cnn = 4;

    const Checkpoint a = train(data, ncfg, tcfg);
    const Checkpoint b = train(data, ncfg, tcfg);
    REQUIRE(a.params.tensors.size() == b.params.tensors.size());
    for (const auto& [name, t] : a.params.tensors)
        CHECK(same_bits(t, b.params.tensors.at(name)));
    CHECK(a.epoch == 2);
    CHECK(a.config_hash == b.config_hash);

    // Resume from the mid-run checkpoint and land on the same bits.
    Checkpoint mid;
    bool have_mid = false;
    train(data, ncfg, tcfg, nullptr, [&](const Checkpoint& ck) {
        if (ck.epoch == 1 && !have_mid) {
            mid = ck;
            have_mid = true;
        }
    });
    REQUIRE(have_mid);
    const Checkpoint resumed = train(data, ncfg, tcfg, &mid);
    for (const auto& [name, t] : a.params.tensors)
        CHECK(same_bits(t, resumed.params.tensors.at(name)));
    for (const auto& [name, slot] : a.opt_state) {
        CHECK(same_bits(slot.m, resumed.opt_state.at(name).m));
        CHECK(same_bits(slot.v, resumed.opt_state.at(name).v));
        CHECK(slot.t == resumed.opt_state.at(name).t);
    }

    // Serialization round trip is bitwise.
    const std::string path = "/tmp/axspoof_ck.axsp";
    a.save(path);
    const Checkpoint loaded = Checkpoint::load(path);
    CHECK(loaded.epoch == a.epoch);
    CHECK(loaded.config_hash == a.config_hash);
    for (const auto& [name, t] : a.params.tensors)
        CHECK(same_bits(t, loaded.params.tensors.at(name)));
    for (const auto& [name, slot] : a.opt_state) {
        CHECK(same_bits(slot.m, loaded.opt_state.at(name).m));
        CHECK(slot.t == loaded.opt_state.at(name).t);
    }
    std::remove(path.c_str());
}

TEST_CASE("train: micro-dataset reaches depth loss below 0.1 within 10 epochs") {
    const face::FaceBasis basis = face::synthetic_basis(40, 4, 2);
    const Dataset data = micro_dataset(basis, 2, 60);

    net::NetConfig ncfg = tiny_net();
    TrainConfig tcfg = tiny_train();
    tcfg.epochs = 10;
    tcfg.frames_per_clip = 8;
    tcfg.batch_cnn = 6;

    double last_depth = 1.0;
    train(data, ncfg, tcfg, nullptr, {}, [&](const LogRecord& rec) {
        if (rec.stream[0] == 'c') last_depth = rec.losses.depth;
    });
    CHECK(last_depth < 0.1);
}

TEST_CASE("train: rejects inconsistent configs and empty data") {
    const face::FaceBasis basis = face::synthetic_basis(24, 2, 2);
    Dataset empty;
    empty.basis = basis;
    net::NetConfig ncfg = tiny_net();
    TrainConfig tcfg = tiny_train();
    CHECK_THROWS_AS(train(empty, ncfg, tcfg), DataError);
    tcfg.n_f = ncfg.n_f + 1;
    const Dataset data = micro_dataset(basis, 1, 40);
    CHECK_THROWS_AS(train(data, ncfg, tcfg), ContractError);
}

TEST_CASE("optimizer: nan guard aborts with the parameter name") {
    const net::NetConfig ncfg = tiny_net();
    net::ModelParams params = init_params(ncfg, 3, 0.02);
    params.at("cnn.b0.c0.w")[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(params.check_finite(), NumericError);
}
