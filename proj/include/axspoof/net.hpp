#pragma once

#include <map>
#include <string>
#include <vector>

#include "axspoof/clip.hpp"
#include "axspoof/graph.hpp"

namespace axspoof::net {

enum class Variant { full, depth_only, binary };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct NetConfig {
    int input_size = 64;                          // paper scale: 256
    std::vector<int> block_channels = {8, 16, 24, 16};  // paper scale: {64,128,196,128}
    int branch_channels = 16;                     // paper scale: 128
    int concat_size = 64;
    int map_size = 32;
    int lstm_hidden = 100;
    int fc_out = 128;       // time-domain head length fed to the DFT layer
    int spectrum_bins = 50;
    int n_f = 5;            // frames per sequence
    double lambda = 0.015;  // Eq. 6 weight between rPPG and depth energy
    double depth_threshold = 0.1;
    bool squared_l1 = false;  // ablation switch; default is plain l1
    Variant variant = Variant::full;

    void validate() const;
    static NetConfig paper_scale();
};

// Named parameter and state tensors. Names under "cnn." belong to the CNN
// part, names under "rnn." to the RNN part; ".bn.rm"/".bn.rv" suffixes are
// batch-norm running statistics (state, not trained).
struct ModelParams {
    std::map<std::string, Tensor> tensors;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    static bool is_rnn(const std::string& name) { return name.rfind("rnn.", 0) == 0; }
    static bool is_trainable(const std::string& name);
    void check_finite() const;  // throws NumericError naming the bad tensor
};

struct ParamSpec {
    std::string name;
    std::vector<int> shape;
    enum class Init { normal, zero, one } init;
};

// Ordered parameter layout for a configuration; initialization and
// serialization both follow this order.
std::vector<ParamSpec> param_specs(const NetConfig& cfg);

// Graph leaves for every tensor in params. When for_training, trainable
// tensors require gradients.
struct BoundParams {
    ModelParams* params = nullptr;
    std::map<std::string, Graph::NodeId> ids;

    Graph::NodeId id(const std::string& name) const;
};
BoundParams bind_params(Graph& g, ModelParams& params, bool for_training);

struct CnnOut {
    Graph::NodeId depth = -1;   // [N,1,32,32]
    Graph::NodeId feat = -1;    // [N,1,32,32] (full variant)
    Graph::NodeId logits = -1;  // [N,2] (binary variant)
};

// Trunk of conv-ELU-BN blocks with pooling, per-block resize to the concat
// size and channel concatenation, then the per-variant heads. Input is
// [N,3,S,S] with S divisible by 2^(number of blocks).
CnnOut cnn_forward(Graph& g, Graph::NodeId input, BoundParams& bp, const NetConfig& cfg,
                   bool training);

// Mask-and-frontalize: V = (depth >= threshold), U = feat .* V, then for each
// output pixel (i,j) with vertex index m_ij the value of U at that vertex's
// current image position (nearest cell). No gradient crosses the threshold
// comparison; gradients reach feat through the mask and the gather.
// feat is [N,1,32,32]; shapes supplies the posed shape per batch item.
// Returns [N,32,32].
Graph::NodeId registration_layer(Graph& g, Graph::NodeId feat, const Tensor& depth_value,
                                 const std::vector<face::PosedShape>& shapes,
                                 const face::VertexIndexMap& m, double threshold, int img_h,
                                 int img_w);

// LSTM over n_f frontalized maps, fully-connected head, DFT magnitude, first
// spectrum_bins bins. f_maps is [n_f*B, 32, 32] in frame-major order (all
// sequences' frame j adjacent). Returns [B, spectrum_bins].
Graph::NodeId rnn_forward(Graph& g, Graph::NodeId f_maps, int batch, BoundParams& bp,
                          const NetConfig& cfg);

// Mean absolute error (or its per-sample squared variant) between prediction
// and a constant target of the same shape.
Graph::NodeId l1_loss(Graph& g, Graph::NodeId pred, Graph::NodeId target, bool squared);

double score(const Tensor& depth, const Tensor& fhat, double lambda);

struct InferResult {
    double score = 0.0;
    double depth_energy = 0.0;  // ||D^||_2^2 of the last frame
    double rppg_energy = 0.0;   // ||f^||_2^2
    Tensor depth_last;          // [32,32]
    Tensor fhat;                // [spectrum_bins]
    std::vector<Tensor> frontal_maps;  // n_f maps of [32,32] (full variant)
};

// Runs the network over the last n_f frames of a clip in eval mode and fuses
// the outputs into the liveness score. Throws ContractError for clips
// shorter than n_f.
InferResult infer_clip(const VideoClip& clip, const std::vector<face::PosedShape>& shapes,
                       ModelParams& params, const face::VertexIndexMap& m, const NetConfig& cfg);

// Image tensor [3,H,W] of one frame.
Tensor frame_tensor(const VideoClip& clip, int t);

}  // namespace axspoof::net
