#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "axspoof/dataset.hpp"
#include "axspoof/net.hpp"

namespace axspoof::train {

struct TrainConfig {
    double lr = 3e-3;
    int epochs = 10;
    int batch_cnn = 10;
    int batch_rnn = 2;
    int n_f = 5;  // must match NetConfig::n_f
    double init_std = 0.02;
    enum class Opt { adam, sgd };
    Opt optimizer = Opt::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    // Per-epoch stream views: frames sampled per clip for the CNN stream and
    // sequence windows sampled per clip for the CNN-RNN stream.
    int frames_per_clip = 3;
    int windows_per_clip = 1;

    void validate() const;
};

// Weights drawn from N(0, init_std^2), biases zero, batch-norm gamma 1 /
// beta 0 (running stats 0 / 1). Same seed, same bits.
net::ModelParams init_params(const net::NetConfig& cfg, std::uint64_t seed, double init_std);

struct AdamSlot {
    Tensor m, v;
    std::int64_t t = 0;
};

// Adam (default) or plain SGD. One slot per parameter, shared by both
// training streams; step() touches exactly the parameters named in grads.
class Optimizer {
  public:
    explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}

    void step(net::ModelParams& params, const std::map<std::string, Tensor>& grads);

    std::map<std::string, AdamSlot>& slots() { return slots_; }
    const std::map<std::string, AdamSlot>& slots() const { return slots_; }

  private:
    TrainConfig cfg_;
    std::map<std::string, AdamSlot> slots_;
};

struct Checkpoint {
    net::ModelParams params;
    std::map<std::string, AdamSlot> opt_state;
    int epoch = 0;  // completed epochs
    std::uint64_t config_hash = 0;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

// Canonical description of a run configuration; its FNV-1a hash is stored in
// every checkpoint.
std::string config_signature(const net::NetConfig& ncfg, const TrainConfig& tcfg);
std::uint64_t config_hash(const net::NetConfig& ncfg, const TrainConfig& tcfg);

struct CnnBatch {
    Tensor images;           // [B,3,S,S]
    Tensor depths;           // [B,1,32,32]
    std::vector<int> labels; // 1 = live, 0 = spoof (binary variant)
};

struct RnnBatch {
    Tensor frames;  // [B*n_f,3,S,S], frame-major (all sequences' frame j adjacent)
    Tensor depths;  // [B*n_f,1,32,32], same order
    std::vector<face::PosedShape> shapes;  // same order
    Tensor targets;  // [B, spectrum_bins]
    int batch = 0;
};

struct StepLosses {
    double depth = 0.0;
    double rppg = 0.0;
    double ce = 0.0;
};

// One optimizer step on the frame stream. Updates only CNN parameters; the
// RNN part is untouched bit for bit.
StepLosses cnn_stream_step(const CnnBatch& batch, net::ModelParams& params, Optimizer& opt,
                           const net::NetConfig& ncfg);

// One optimizer step on the sequence stream: rPPG loss plus depth loss over
// the sequence frames, back-propagated end to end through both parts.
StepLosses rnn_stream_step(const RnnBatch& batch, net::ModelParams& params, Optimizer& opt,
                           const net::NetConfig& ncfg, const face::VertexIndexMap& vmap);

struct LogRecord {
    int epoch = 0;
    const char* stream = "";
    int step = 0;
    StepLosses losses;
    double wall_ms = 0.0;
};

using LogFn = std::function<void(const LogRecord&)>;
using EpochFn = std::function<void(const Checkpoint&)>;

// Alternating two-stream training. Per epoch both stream views are sampled
// and shuffled from an epoch-derived RNG, then steps interleave 1:1 until one
// view is exhausted and the remainder of the other runs out. Deterministic
// function of (dataset, configs, seed); resuming from an epoch-k checkpoint
// reproduces the unresumed run exactly.
Checkpoint train(const Dataset& data, const net::NetConfig& ncfg, const TrainConfig& tcfg,
                 const Checkpoint* resume_from = nullptr, const EpochFn& on_epoch = {},
                 const LogFn& on_log = {});

}  // namespace axspoof::train
