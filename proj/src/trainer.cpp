#include "axspoof/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <list>
#include <sstream>

#include "axspoof/common.hpp"
#include "axspoof/container.hpp"
#include "axspoof/rng.hpp"

namespace axspoof::train {

void TrainConfig::validate() const {
    if (lr <= 0.0 || epochs <= 0 || batch_cnn <= 0 || batch_rnn <= 0 || n_f <= 0 ||
        init_std <= 0.0 || frames_per_clip <= 0 || windows_per_clip <= 0)
        throw ContractError("train config: all sizes must be positive");
    if (batch_cnn < 2)
        throw ContractError("train config: batch_cnn must be >= 2 for batch norm");
}

net::ModelParams init_params(const net::NetConfig& cfg, std::uint64_t seed, double init_std) {
    Rng rng(Rng::mix(seed, 0x696e6974));  // independent init stream
    net::ModelParams params;
    for (const net::ParamSpec& spec : net::param_specs(cfg)) {
        Tensor t(spec.shape);
        switch (spec.init) {
            case net::ParamSpec::Init::normal:
                for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, init_std);
                break;
            case net::ParamSpec::Init::zero:
                break;
            case net::ParamSpec::Init::one:
                for (std::size_t i = 0; i < t.size(); ++i) t[i] = 1.0;
                break;
        }
        params.tensors.emplace(spec.name, std::move(t));
    }
    return params;
}

void Optimizer::step(net::ModelParams& params, const std::map<std::string, Tensor>& grads) {
    for (const auto& [name, g] : grads) {
        Tensor& p = params.at(name);
        if (!p.same_shape(g)) throw ShapeError("optimizer: gradient shape mismatch for " + name);
        if (cfg_.optimizer == TrainConfig::Opt::sgd) {
            for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg_.lr * g[i];
            continue;
        }
        AdamSlot& slot = slots_[name];
        if (slot.m.size() == 0) {
            slot.m = Tensor(p.shape());
            slot.v = Tensor(p.shape());
        }
        slot.t += 1;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(slot.t));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(slot.t));
        for (std::size_t i = 0; i < p.size(); ++i) {
            slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g[i];
            slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mh = slot.m[i] / bc1;
            const double vh = slot.v[i] / bc2;
            p[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
        }
    }
}

void Checkpoint::save(const std::string& path) const {
    io::Container c;
    for (const auto& [name, t] : params.tensors) c.put("param/" + name, t);
    for (const auto& [name, slot] : opt_state) {
        c.put("adam/m/" + name, slot.m);
        c.put("adam/v/" + name, slot.v);
        c.put_scalar_i64("adam/t/" + name, slot.t);
    }
    c.put_scalar_i64("meta/epoch", epoch);
    c.put_scalar_i64("meta/config_hash", static_cast<std::int64_t>(config_hash));
    c.save(path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    const io::Container c = io::Container::load(path);
    Checkpoint ck;
    for (const std::string& name : c.names()) {
        if (name.rfind("param/", 0) == 0) {
            ck.params.tensors.emplace(name.substr(6), c.tensor(name));
        } else if (name.rfind("adam/m/", 0) == 0) {
            const std::string pname = name.substr(7);
            AdamSlot& slot = ck.opt_state[pname];
            slot.m = c.tensor(name);
            slot.v = c.tensor("adam/v/" + pname);
            slot.t = c.scalar_i64("adam/t/" + pname);
        }
    }
    ck.epoch = static_cast<int>(c.scalar_i64("meta/epoch"));
    ck.config_hash = static_cast<std::uint64_t>(c.scalar_i64("meta/config_hash"));
    return ck;
}

std::string config_signature(const net::NetConfig& ncfg, const TrainConfig& tcfg) {
    std::ostringstream os;
    os << "input_size=" << ncfg.input_size << ";blocks=";
    for (int c : ncfg.block_channels) os << c << ",";
    os << ";branch=" << ncfg.branch_channels << ";concat=" << ncfg.concat_size
       << ";map=" << ncfg.map_size << ";lstm=" << ncfg.lstm_hidden << ";fc=" << ncfg.fc_out
       << ";bins=" << ncfg.spectrum_bins << ";n_f=" << ncfg.n_f << ";lambda=" << ncfg.lambda
       << ";thr=" << ncfg.depth_threshold << ";sql1=" << ncfg.squared_l1
       << ";variant=" << net::variant_name(ncfg.variant) << ";lr=" << tcfg.lr
       << ";epochs=" << tcfg.epochs << ";bc=" << tcfg.batch_cnn << ";br=" << tcfg.batch_rnn
       << ";tnf=" << tcfg.n_f << ";std=" << tcfg.init_std
       << ";opt=" << (tcfg.optimizer == TrainConfig::Opt::adam ? "adam" : "sgd")
       << ";seed=" << tcfg.seed << ";fpc=" << tcfg.frames_per_clip
       << ";wpc=" << tcfg.windows_per_clip;
    return os.str();
}

std::uint64_t config_hash(const net::NetConfig& ncfg, const TrainConfig& tcfg) {
    const std::string s = config_signature(ncfg, tcfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

std::map<std::string, Tensor> collect_grads(Graph& g, const net::BoundParams& bp,
                                            bool cnn_only) {
    std::map<std::string, Tensor> grads;
    for (const auto& [name, id] : bp.ids) {
        if (!net::ModelParams::is_trainable(name)) continue;
        if (cnn_only && net::ModelParams::is_rnn(name)) continue;
        grads.emplace(name, g.grad(id));
    }
    return grads;
}

}  // namespace

StepLosses cnn_stream_step(const CnnBatch& batch, net::ModelParams& params, Optimizer& opt,
                           const net::NetConfig& ncfg) {
    Graph g;
    net::BoundParams bp = net::bind_params(g, params, true);
    const Graph::NodeId x = g.constant(batch.images);
    const net::CnnOut out = net::cnn_forward(g, x, bp, ncfg, true);

    StepLosses losses;
    Graph::NodeId loss;
    if (ncfg.variant == net::Variant::binary) {
        loss = g.softmax_cross_entropy(out.logits, batch.labels);
        losses.ce = g.value(loss)[0];
    } else {
        loss = net::l1_loss(g, out.depth, g.constant(batch.depths), ncfg.squared_l1);
        losses.depth = g.value(loss)[0];
    }
    g.backward(loss);
    opt.step(params, collect_grads(g, bp, /*cnn_only=*/true));
    params.check_finite();
    return losses;
}

StepLosses rnn_stream_step(const RnnBatch& batch, net::ModelParams& params, Optimizer& opt,
                           const net::NetConfig& ncfg, const face::VertexIndexMap& vmap) {
    if (ncfg.variant != net::Variant::full)
        throw ContractError("rnn_stream_step: only the full variant has an RNN stream");
    Graph g;
    net::BoundParams bp = net::bind_params(g, params, true);
    const Graph::NodeId x = g.constant(batch.frames);
    const net::CnnOut out = net::cnn_forward(g, x, bp, ncfg, true);

    const Graph::NodeId f_maps =
        net::registration_layer(g, out.feat, g.value(out.depth), batch.shapes, vmap,
                                ncfg.depth_threshold, ncfg.input_size, ncfg.input_size);
    const Graph::NodeId fhat = net::rnn_forward(g, f_maps, batch.batch, bp, ncfg);

    const Graph::NodeId rppg_loss =
        net::l1_loss(g, fhat, g.constant(batch.targets), ncfg.squared_l1);
    const Graph::NodeId depth_loss =
        net::l1_loss(g, out.depth, g.constant(batch.depths), ncfg.squared_l1);
    const Graph::NodeId joint = g.add(rppg_loss, depth_loss);

    StepLosses losses;
    losses.rppg = g.value(rppg_loss)[0];
    losses.depth = g.value(depth_loss)[0];
    g.backward(joint);
    opt.step(params, collect_grads(g, bp, /*cnn_only=*/false));
    params.check_finite();
    return losses;
}

namespace {

// Small most-recently-used cache so batches touching the same clips do not
// reload them from disk or regenerate them.
class ClipCache {
  public:
    explicit ClipCache(const Dataset& data, std::size_t cap) : data_(data), cap_(cap) {}

    const VideoClip& get(std::size_t idx) {
        for (auto it = order_.begin(); it != order_.end(); ++it) {
            if (it->first == idx) {
                order_.splice(order_.begin(), order_, it);
                return order_.front().second;
            }
        }
        order_.emplace_front(idx, data_.clips[idx].load());
        if (order_.size() > cap_) order_.pop_back();
        return order_.front().second;
    }

  private:
    const Dataset& data_;
    std::size_t cap_;
    std::list<std::pair<std::size_t, VideoClip>> order_;
};

struct FrameItem {
    std::size_t clip;
    int frame;
};

struct WindowItem {
    std::size_t clip;
    int start;
};

CnnBatch make_cnn_batch(ClipCache& cache, const std::vector<FrameItem>& items, std::size_t at,
                        int bsize, const net::NetConfig& ncfg) {
    CnnBatch batch;
    batch.images = Tensor({bsize, 3, ncfg.input_size, ncfg.input_size});
    batch.depths = Tensor({bsize, 1, face::kMapSize, face::kMapSize});
    for (int b = 0; b < bsize; ++b) {
        const FrameItem& it = items[at + static_cast<std::size_t>(b)];
        const VideoClip& clip = cache.get(it.clip);
        const Tensor img = net::frame_tensor(clip, it.frame);
        std::copy(img.data(), img.data() + img.size(),
                  batch.images.data() + static_cast<std::size_t>(b) * img.size());
        const Tensor& d = clip.gt_depth[static_cast<std::size_t>(it.frame)];
        std::copy(d.data(), d.data() + d.size(),
                  batch.depths.data() + static_cast<std::size_t>(b) * d.size());
        batch.labels.push_back(is_live(clip.label) ? 1 : 0);
    }
    return batch;
}

RnnBatch make_rnn_batch(ClipCache& cache, const Dataset& data,
                        const std::vector<WindowItem>& items, std::size_t at, int bsize,
                        const net::NetConfig& ncfg) {
    RnnBatch batch;
    batch.batch = bsize;
    const int rows = bsize * ncfg.n_f;
    batch.frames = Tensor({rows, 3, ncfg.input_size, ncfg.input_size});
    batch.depths = Tensor({rows, 1, face::kMapSize, face::kMapSize});
    batch.targets = Tensor({bsize, ncfg.spectrum_bins});
    batch.shapes.resize(static_cast<std::size_t>(rows));
    for (int b = 0; b < bsize; ++b) {
        const WindowItem& it = items[at + static_cast<std::size_t>(b)];
        const VideoClip& clip = cache.get(it.clip);
        for (int j = 0; j < ncfg.n_f; ++j) {
            const int row = j * bsize + b;  // frame-major layout
            const int frame = it.start + j;
            const Tensor img = net::frame_tensor(clip, frame);
            std::copy(img.data(), img.data() + img.size(),
                      batch.frames.data() + static_cast<std::size_t>(row) * img.size());
            const Tensor& d = clip.gt_depth[static_cast<std::size_t>(frame)];
            std::copy(d.data(), d.data() + d.size(),
                      batch.depths.data() + static_cast<std::size_t>(row) * d.size());
            batch.shapes[static_cast<std::size_t>(row)] =
                shape_for_frame(clip, data.basis, frame);
        }
        for (int k = 0; k < ncfg.spectrum_bins; ++k)
            batch.targets.at(b, k) = clip.gt_rppg[static_cast<std::size_t>(k)];
    }
    return batch;
}

}  // namespace

Checkpoint train(const Dataset& data, const net::NetConfig& ncfg, const TrainConfig& tcfg,
                 const Checkpoint* resume_from, const EpochFn& on_epoch, const LogFn& on_log) {
    ncfg.validate();
    tcfg.validate();
    if (tcfg.n_f != ncfg.n_f)
        throw ContractError("train: TrainConfig.n_f must match NetConfig.n_f");
    if (data.clips.empty()) throw DataError("train: dataset is empty");
    for (const ClipRef& c : data.clips)
        if (c.frames < ncfg.n_f) throw DataError("train: clip " + c.id + " shorter than n_f");

    Checkpoint ck;
    Optimizer opt(tcfg);
    if (resume_from) {
        ck = *resume_from;
        if (ck.config_hash != config_hash(ncfg, tcfg))
            throw DataError("train: checkpoint was produced by a different configuration");
        opt.slots() = ck.opt_state;
    } else {
        ck.params = init_params(ncfg, tcfg.seed, tcfg.init_std);
        ck.epoch = 0;
        ck.config_hash = config_hash(ncfg, tcfg);
    }

    const face::VertexIndexMap vmap =
        face::build_vertex_index_map(data.basis, ncfg.input_size, ncfg.input_size);
    const bool has_rnn_stream = ncfg.variant == net::Variant::full;

    for (int epoch = ck.epoch; epoch < tcfg.epochs; ++epoch) {
        Rng rng(Rng::mix(tcfg.seed, static_cast<std::uint64_t>(epoch) + 1));
        ClipCache cache(data, 24);

        std::vector<FrameItem> s1;
        for (std::size_t ci = 0; ci < data.clips.size(); ++ci)
            for (int k = 0; k < tcfg.frames_per_clip; ++k)
                s1.push_back({ci, rng.uniform_int(data.clips[ci].frames)});
        rng.shuffle(s1);

        std::vector<WindowItem> s2;
        if (has_rnn_stream) {
            for (std::size_t ci = 0; ci < data.clips.size(); ++ci)
                for (int k = 0; k < tcfg.windows_per_clip; ++k)
                    s2.push_back({ci, rng.uniform_int(data.clips[ci].frames - ncfg.n_f + 1)});
            rng.shuffle(s2);
        }

        const std::size_t s1_steps = s1.size() / static_cast<std::size_t>(tcfg.batch_cnn);
        const std::size_t s2_steps =
            has_rnn_stream ? s2.size() / static_cast<std::size_t>(tcfg.batch_rnn) : 0;

        std::size_t i1 = 0, i2 = 0;
        int step = 0;
        while (i1 < s1_steps || i2 < s2_steps) {
            using Clock = std::chrono::steady_clock;
            if (i1 < s1_steps) {
                const auto t0 = Clock::now();
                const CnnBatch batch = make_cnn_batch(
                    cache, s1, i1 * static_cast<std::size_t>(tcfg.batch_cnn), tcfg.batch_cnn,
                    ncfg);
                const StepLosses losses = cnn_stream_step(batch, ck.params, opt, ncfg);
                ++i1;
                if (on_log) {
                    const double ms = std::chrono::duration<double, std::milli>(
                                          Clock::now() - t0).count();
                    on_log({epoch, "cnn", step, losses, ms});
                }
                ++step;
            }
            if (i2 < s2_steps) {
                const auto t0 = Clock::now();
                const RnnBatch batch = make_rnn_batch(
                    cache, data, s2, i2 * static_cast<std::size_t>(tcfg.batch_rnn),
                    tcfg.batch_rnn, ncfg);
                const StepLosses losses = rnn_stream_step(batch, ck.params, opt, ncfg, vmap);
                ++i2;
                if (on_log) {
                    const double ms = std::chrono::duration<double, std::milli>(
                                          Clock::now() - t0).count();
                    on_log({epoch, "rnn", step, losses, ms});
                }
                ++step;
            }
        }

        ck.epoch = epoch + 1;
        ck.opt_state = opt.slots();
        if (on_epoch) on_epoch(ck);
    }
    return ck;
}

}  // namespace axspoof::train
