#include "axspoof/net.hpp"

#include <cmath>

#include "axspoof/common.hpp"

namespace axspoof::net {

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::depth_only: return "depth_only";
        case Variant::binary: return "binary";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    if (name == "full") return Variant::full;
    if (name == "depth_only") return Variant::depth_only;
    if (name == "binary") return Variant::binary;
    throw DataError("unknown model variant: " + name);
}

void NetConfig::validate() const {
    if (block_channels.empty()) throw ContractError("net: need at least one block");
    for (int c : block_channels)
        if (c < 1) throw ContractError("net: block channels must be positive");
    if (map_size != face::kMapSize)
        throw ContractError("net: map size must match the 32x32 depth map grid");
    if (concat_size % map_size != 0) throw ContractError("net: map_size must divide concat_size");
    if (fc_out % 2 != 0 || fc_out / 2 < spectrum_bins)
        throw ContractError("net: fc_out/2 must cover spectrum_bins");
    if (lstm_hidden < 1 || n_f < 1 || spectrum_bins < 1)
        throw ContractError("net: sizes must be positive");
    if (lambda < 0.0) throw ContractError("net: lambda must be nonnegative");
    const int div = 1 << static_cast<int>(block_channels.size());
    if (input_size % div != 0)
        throw ContractError("net: input size must be divisible by 2^blocks = " +
                            std::to_string(div));
}

NetConfig NetConfig::paper_scale() {
    NetConfig cfg;
    cfg.input_size = 256;
    cfg.block_channels = {64, 128, 196, 128};
    cfg.branch_channels = 128;
    return cfg;
}

Tensor& ModelParams::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("model: missing parameter '" + name + "'");
    return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("model: missing parameter '" + name + "'");
    return it->second;
}

bool ModelParams::is_trainable(const std::string& name) {
    auto ends_with = [&](const char* suffix) {
        const std::size_t n = std::string(suffix).size();
        return name.size() >= n && name.compare(name.size() - n, n, suffix) == 0;
    };
    return !ends_with(".bn.rm") && !ends_with(".bn.rv");
}

void ModelParams::check_finite() const {
    for (const auto& [name, t] : tensors)
        if (!t.all_finite()) throw NumericError("non-finite values in parameter '" + name + "'");
}

std::vector<ParamSpec> param_specs(const NetConfig& cfg) {
    cfg.validate();
    std::vector<ParamSpec> specs;
    auto conv_bn = [&specs](const std::string& pfx, int out_ch, int in_ch) {
        specs.push_back({pfx + ".w", {out_ch, in_ch, 3, 3}, ParamSpec::Init::normal});
        specs.push_back({pfx + ".bias", {out_ch}, ParamSpec::Init::zero});
        specs.push_back({pfx + ".bn.g", {out_ch}, ParamSpec::Init::one});
        specs.push_back({pfx + ".bn.b", {out_ch}, ParamSpec::Init::zero});
        specs.push_back({pfx + ".bn.rm", {out_ch}, ParamSpec::Init::zero});
        specs.push_back({pfx + ".bn.rv", {out_ch}, ParamSpec::Init::one});
    };

    int in_ch = 3;
    for (std::size_t i = 0; i < cfg.block_channels.size(); ++i) {
        const int ch = cfg.block_channels[i];
        for (int j = 0; j < 3; ++j) {
            conv_bn("cnn.b" + std::to_string(i) + ".c" + std::to_string(j), ch, in_ch);
            in_ch = ch;
        }
    }
    int cat_ch = 0;
    for (int c : cfg.block_channels) cat_ch += c;

    if (cfg.variant == Variant::binary) {
        specs.push_back({"cnn.bin.fc.w", {2, cat_ch}, ParamSpec::Init::normal});
        specs.push_back({"cnn.bin.fc.bias", {2}, ParamSpec::Init::zero});
        return specs;
    }

    auto branch = [&](const std::string& name) {
        conv_bn("cnn." + name + ".c0", cfg.branch_channels, cat_ch);
        conv_bn("cnn." + name + ".c1", cfg.branch_channels, cfg.branch_channels);
        specs.push_back({"cnn." + name + ".out.w", {1, cfg.branch_channels, 3, 3},
                         ParamSpec::Init::normal});
        specs.push_back({"cnn." + name + ".out.bias", {1}, ParamSpec::Init::zero});
    };
    branch("depth");
    if (cfg.variant == Variant::full) {
        branch("feat");
        const int flat = cfg.map_size * cfg.map_size;
        specs.push_back({"rnn.lstm.wx", {4 * cfg.lstm_hidden, flat}, ParamSpec::Init::normal});
        specs.push_back(
            {"rnn.lstm.wh", {4 * cfg.lstm_hidden, cfg.lstm_hidden}, ParamSpec::Init::normal});
        specs.push_back({"rnn.lstm.bias", {4 * cfg.lstm_hidden}, ParamSpec::Init::zero});
        specs.push_back({"rnn.fc.w", {cfg.fc_out, cfg.lstm_hidden}, ParamSpec::Init::normal});
        specs.push_back({"rnn.fc.bias", {cfg.fc_out}, ParamSpec::Init::zero});
    }
    return specs;
}

Graph::NodeId BoundParams::id(const std::string& name) const {
    auto it = ids.find(name);
    if (it == ids.end()) throw DataError("model: parameter '" + name + "' not bound");
    return it->second;
}

BoundParams bind_params(Graph& g, ModelParams& params, bool for_training) {
    BoundParams bp;
    bp.params = &params;
    for (auto& [name, t] : params.tensors) {
        if (ModelParams::is_trainable(name)) {
            t.requires_grad = for_training;
            bp.ids[name] = g.leaf(t);
        } else {
            bp.ids[name] = g.constant(t);
        }
    }
    return bp;
}

namespace {

Graph::NodeId conv_elu_bn(Graph& g, Graph::NodeId x, BoundParams& bp, const std::string& pfx,
                          bool training) {
    Graph::NodeId y = g.conv2d(x, bp.id(pfx + ".w"), bp.id(pfx + ".bias"));
    y = g.elu(y);
    return g.batch_norm(y, bp.id(pfx + ".bn.g"), bp.id(pfx + ".bn.b"),
                        bp.params->at(pfx + ".bn.rm"), bp.params->at(pfx + ".bn.rv"), training);
}

Graph::NodeId branch_head(Graph& g, Graph::NodeId cat, BoundParams& bp, const std::string& name,
                          bool training) {
    Graph::NodeId y = g.max_pool2(cat);  // concat_size -> map_size
    y = conv_elu_bn(g, y, bp, "cnn." + name + ".c0", training);
    y = conv_elu_bn(g, y, bp, "cnn." + name + ".c1", training);
    // Linear output conv; the supervision keeps the range, no clamping here.
    return g.conv2d(y, bp.id("cnn." + name + ".out.w"), bp.id("cnn." + name + ".out.bias"));
}

}  // namespace

CnnOut cnn_forward(Graph& g, Graph::NodeId input, BoundParams& bp, const NetConfig& cfg,
                   bool training) {
    const Tensor& v = g.value(input);
    if (v.rank() != 4 || v.dim(1) != 3) throw ShapeError("cnn_forward: input must be [N,3,H,W]");
    if (v.dim(2) != v.dim(3))
        throw ShapeError("cnn_forward: input must be square, got " + v.shape_str());
    const int div = 1 << static_cast<int>(cfg.block_channels.size());
    if (v.dim(2) % div != 0)
        throw ShapeError("cnn_forward: input size must be divisible by " + std::to_string(div));

    Graph::NodeId x = input;
    std::vector<Graph::NodeId> scales;
    for (std::size_t i = 0; i < cfg.block_channels.size(); ++i) {
        for (int j = 0; j < 3; ++j)
            x = conv_elu_bn(g, x, bp, "cnn.b" + std::to_string(i) + ".c" + std::to_string(j),
                            training);
        x = g.max_pool2(x);
        scales.push_back(g.bilinear_resize(x, cfg.concat_size, cfg.concat_size));
    }
    Graph::NodeId cat = g.concat_channels(scales);

    CnnOut out;
    if (cfg.variant == Variant::binary) {
        out.logits = g.fully_connected(g.global_avg_pool(cat), bp.id("cnn.bin.fc.w"),
                                       bp.id("cnn.bin.fc.bias"));
        return out;
    }
    out.depth = branch_head(g, cat, bp, "depth", training);
    if (cfg.variant == Variant::full) out.feat = branch_head(g, cat, bp, "feat", training);
    return out;
}

Graph::NodeId registration_layer(Graph& g, Graph::NodeId feat, const Tensor& depth_value,
                                 const std::vector<face::PosedShape>& shapes,
                                 const face::VertexIndexMap& m, double threshold, int img_h,
                                 int img_w) {
    const Tensor& vf = g.value(feat);
    if (vf.rank() != 4 || vf.dim(1) != 1 || vf.dim(2) != face::kMapSize ||
        vf.dim(3) != face::kMapSize)
        throw ShapeError("registration: feature map must be [N,1,32,32]");
    if (!depth_value.same_shape(vf))
        throw ShapeError("registration: depth and feature shapes differ");
    if (shapes.size() != static_cast<std::size_t>(vf.dim(0)))
        throw ShapeError("registration: need one shape per batch item");

    // Binary visibility mask from the estimated depth (no gradient through
    // the comparison).
    Tensor mask(vf.shape());
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask[i] = depth_value[i] >= threshold ? 1.0 : 0.0;
    Graph::NodeId masked = g.mul_const(feat, std::move(mask));

    const int n = vf.dim(0);
    const int ms = face::kMapSize;
    const long plane = static_cast<long>(ms) * ms;
    std::vector<long> src(static_cast<std::size_t>(n) * plane, -1);
    for (int b = 0; b < n; ++b) {
        const face::PosedShape& s = shapes[static_cast<std::size_t>(b)];
        for (int i = 0; i < ms; ++i)
            for (int j = 0; j < ms; ++j) {
                const int v = m.at(i, j);
                if (v == face::kNoVertex) continue;
                const int sx = static_cast<int>(std::floor(s.x(v) * ms / img_w));
                const int sy = static_cast<int>(std::floor(s.y(v) * ms / img_h));
                if (sx < 0 || sx >= ms || sy < 0 || sy >= ms) continue;
                src[static_cast<std::size_t>(b * plane + i * ms + j)] =
                    b * plane + static_cast<long>(sy) * ms + sx;
            }
    }
    return g.gather(masked, std::move(src), {n, ms, ms});
}

Graph::NodeId rnn_forward(Graph& g, Graph::NodeId f_maps, int batch, BoundParams& bp,
                          const NetConfig& cfg) {
    const Tensor& v = g.value(f_maps);
    if (v.rank() != 3 || v.dim(0) != cfg.n_f * batch)
        throw ShapeError("rnn_forward: expected n_f*batch frontal maps, got " + v.shape_str());
    if (batch < 1) throw ContractError("rnn_forward: empty sequence batch");
    const int flat = v.dim(1) * v.dim(2);
    Graph::NodeId rows = g.reshape(f_maps, {cfg.n_f * batch, flat});

    LstmState st{g.constant(Tensor({batch, cfg.lstm_hidden})),
                 g.constant(Tensor({batch, cfg.lstm_hidden}))};
    const LstmWeights w{bp.id("rnn.lstm.wx"), bp.id("rnn.lstm.wh"), bp.id("rnn.lstm.bias")};
    for (int j = 0; j < cfg.n_f; ++j)
        st = lstm_step(g, g.slice_rows(rows, j * batch, batch), st, w);

    Graph::NodeId y = g.fully_connected(st.h, bp.id("rnn.fc.w"), bp.id("rnn.fc.bias"));
    Graph::NodeId mag = g.dft_magnitude(y);  // [B, fc_out/2], DC already dropped
    return g.slice_cols(mag, 0, cfg.spectrum_bins);
}

Graph::NodeId l1_loss(Graph& g, Graph::NodeId pred, Graph::NodeId target, bool squared) {
    const Tensor& vp = g.value(pred);
    const Tensor& vt = g.value(target);
    if (!vp.same_shape(vt))
        throw ShapeError("l1_loss: prediction " + vp.shape_str() + " vs target " + vt.shape_str());
    Graph::NodeId diff = g.abs(g.sub(pred, target));
    if (!squared) return g.mean(diff);
    // Per-sample squared l1 mean, then batch mean.
    const int n = vp.dim(0);
    const int m = static_cast<int>(vp.size()) / n;
    Graph::NodeId rows = g.reshape(diff, {n, m});
    Graph::NodeId per_sample = g.matmul(rows, g.constant(Tensor({m, 1}, 1.0 / m)));
    return g.mean(g.mul(per_sample, per_sample));
}

double score(const Tensor& depth, const Tensor& fhat, double lambda) {
    if (lambda < 0.0) throw ContractError("score: lambda must be nonnegative");
    return fhat.squared_l2() + lambda * depth.squared_l2();
}

Tensor frame_tensor(const VideoClip& clip, int t) {
    Tensor out({3, clip.h, clip.w});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < clip.h; ++y)
            for (int x = 0; x < clip.w; ++x) out.at(0, c, y, x) = clip.at(t, y, x, c);
    return out;
}

InferResult infer_clip(const VideoClip& clip, const std::vector<face::PosedShape>& shapes,
                       ModelParams& params, const face::VertexIndexMap& m, const NetConfig& cfg) {
    cfg.validate();
    if (clip.t < cfg.n_f)
        throw ContractError("infer_clip: clip has " + std::to_string(clip.t) +
                            " frames, need at least " + std::to_string(cfg.n_f));
    if (clip.h != cfg.input_size || clip.w != cfg.input_size)
        throw ShapeError("infer_clip: clip frames are " + std::to_string(clip.w) + "x" +
                         std::to_string(clip.h) + ", network expects " +
                         std::to_string(cfg.input_size));
    if (shapes.size() != static_cast<std::size_t>(clip.t))
        throw ShapeError("infer_clip: need one shape per frame");

    const int first = clip.t - cfg.n_f;
    const int n = cfg.n_f;
    Tensor batch({n, 3, clip.h, clip.w});
    for (int i = 0; i < n; ++i) {
        const Tensor f = frame_tensor(clip, first + i);
        for (std::size_t k = 0; k < f.size(); ++k)
            batch[static_cast<std::size_t>(i) * f.size() + k] = f[k];
    }

    Graph g;
    BoundParams bp = bind_params(g, params, false);
    const Graph::NodeId input = g.constant(std::move(batch));
    const CnnOut out = cnn_forward(g, input, bp, cfg, false);

    InferResult res;
    res.fhat = Tensor({cfg.spectrum_bins});
    if (cfg.variant == Variant::binary) {
        const Tensor& logits = g.value(out.logits);
        const double a = logits.at(n - 1, 0), b = logits.at(n - 1, 1);  // {spoof, live}
        const double mx = std::max(a, b);
        const double pl = std::exp(b - mx) / (std::exp(a - mx) + std::exp(b - mx));
        res.score = pl;
        res.depth_last = Tensor({face::kMapSize, face::kMapSize});
        return res;
    }

    const Tensor& depth_all = g.value(out.depth);
    res.depth_last = Tensor({face::kMapSize, face::kMapSize});
    for (int i = 0; i < face::kMapSize; ++i)
        for (int j = 0; j < face::kMapSize; ++j)
            res.depth_last.at(i, j) = depth_all.at(n - 1, 0, i, j);
    res.depth_energy = res.depth_last.squared_l2();

    if (cfg.variant == Variant::depth_only) {
        res.score = res.depth_energy;
        return res;
    }

    std::vector<face::PosedShape> batch_shapes(shapes.begin() + first, shapes.end());
    const Graph::NodeId f_maps = registration_layer(g, out.feat, depth_all, batch_shapes, m,
                                                    cfg.depth_threshold, clip.h, clip.w);
    const Graph::NodeId fhat = rnn_forward(g, f_maps, 1, bp, cfg);

    const Tensor& fv = g.value(fhat);
    for (int k = 0; k < cfg.spectrum_bins; ++k) res.fhat[static_cast<std::size_t>(k)] = fv.at(0, k);
    res.rppg_energy = res.fhat.squared_l2();
    res.score = score(res.depth_last, res.fhat, cfg.lambda);

    const Tensor& fm = g.value(f_maps);
    res.frontal_maps.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Tensor map({face::kMapSize, face::kMapSize});
        for (std::size_t k = 0; k < map.size(); ++k)
            map[k] = fm[static_cast<std::size_t>(i) * map.size() + k];
        res.frontal_maps.push_back(std::move(map));
    }
    return res;
}

}  // namespace axspoof::net
