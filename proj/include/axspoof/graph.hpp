#pragma once

#include <functional>
#include <vector>

#include "axspoof/tensor.hpp"

namespace axspoof {

// Reverse-mode autodiff tape. Nodes are appended in topological order
// (inputs always precede their consumers); backward() walks the tape in
// reverse once and accumulates gradients by summation over all paths.
//
// A Graph instance is not thread safe; build and differentiate it from a
// single thread. Disjoint graphs may run concurrently.
class Graph {
  public:
    using NodeId = int;

    // Leaf holding a copy of t; participates in gradients iff t.requires_grad.
    NodeId leaf(const Tensor& t);
    // Leaf that never receives gradients.
    NodeId constant(Tensor t);

    const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    std::size_t node_count() const { return nodes_.size(); }

    // Runs reverse accumulation from a scalar loss node. Each node is
    // visited at most once. Throws ContractError if the loss is not scalar.
    void backward(NodeId loss);

    // Accumulated dLoss/dNode after backward(); zeros if the node is not on
    // any path to the loss.
    Tensor grad(NodeId id) const;

    // ---- algebra ----
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double s);
    NodeId matmul(NodeId a, NodeId b);  // [M,K] x [K,N]
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    NodeId abs(NodeId a);
    NodeId sigmoid(NodeId a);
    NodeId tanh_act(NodeId a);
    NodeId elu(NodeId a);

    // ---- structure ----
    NodeId reshape(NodeId a, std::vector<int> shape);
    NodeId slice_rows(NodeId a, int r0, int len);   // 2-D, rows [r0, r0+len)
    NodeId slice_cols(NodeId a, int c0, int len);   // 2-D, cols [c0, c0+len)
    NodeId concat_rows(const std::vector<NodeId>& parts);      // 2-D, axis 0
    NodeId concat_channels(const std::vector<NodeId>& parts);  // NCHW, axis 1
    NodeId mul_const(NodeId a, Tensor mask);
    // out[i] = a.flat[src[i]] for src[i] >= 0, else 0. Gradients scatter-add.
    NodeId gather(NodeId a, std::vector<long> src, std::vector<int> out_shape);

    // ---- neural network ----
    // x [N,C,H,W], w [K,C,k,k] (odd k), b [K]; stride 1, zero 'same' padding.
    NodeId conv2d(NodeId x, NodeId w, NodeId b);
    // 2x2 window, stride 2; H and W must be even. Ties route the gradient to
    // the first window element in row-major order.
    NodeId max_pool2(NodeId x);
    // Align-corners bilinear interpolation to (oh, ow).
    NodeId bilinear_resize(NodeId x, int oh, int ow);
    // Per-channel normalization over (N,H,W), eps 1e-5. Training mode uses
    // batch statistics and updates the running buffers with momentum 0.9;
    // eval mode reads the running buffers. Batch size 1 in training throws.
    NodeId batch_norm(NodeId x, NodeId gamma, NodeId beta, Tensor& running_mean,
                      Tensor& running_var, bool training);
    NodeId fully_connected(NodeId x, NodeId w, NodeId b);  // x[N,I], w[O,I], b[O]
    NodeId linear(NodeId x, NodeId w);                     // fully_connected without bias
    NodeId global_avg_pool(NodeId x);                      // [N,C,H,W] -> [N,C]
    // Magnitudes |X_k| of the unnormalized DFT along the last axis for
    // k = 1..N/2 (DC bin dropped). d|z| at z = 0 uses subgradient 0.
    NodeId dft_magnitude(NodeId x);
    // Mean cross entropy of logits [N,C] against integer labels.
    NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels);

    static constexpr double kBatchNormEps = 1e-5;
    static constexpr double kBatchNormMomentum = 0.9;

  private:
    struct Node {
        Tensor value;
        std::vector<NodeId> inputs;
        std::function<void(Graph&, NodeId)> backprop;  // empty for leaves
        bool needs_grad = false;
        const char* op = "";
    };

    NodeId push(Tensor value, std::vector<NodeId> inputs,
                std::function<void(Graph&, NodeId)> backprop, const char* op);
    bool wants_grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
    Tensor& grad_buffer(NodeId id);
    const Tensor& out_grad(NodeId id) const { return grads_[static_cast<std::size_t>(id)]; }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;  // parallel to nodes_; empty tensor = untouched
};

// One LSTM cell step. Gate order in the stacked weights is input, forget,
// candidate, output; gates use sigmoid, the candidate uses tanh.
struct LstmWeights {
    Graph::NodeId wx;  // [4H, I]
    Graph::NodeId wh;  // [4H, H]
    Graph::NodeId b;   // [4H]
};

struct LstmState {
    Graph::NodeId h;
    Graph::NodeId c;
};

LstmState lstm_step(Graph& g, Graph::NodeId x, const LstmState& prev, const LstmWeights& w);

}  // namespace axspoof
