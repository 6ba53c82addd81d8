#include "axspoof/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <utility>

namespace axspoof {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Graph::NodeId Graph::push(Tensor value, std::vector<NodeId> inputs,
                          std::function<void(Graph&, NodeId)> backprop, const char* op) {
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.backprop = std::move(backprop);
    n.op = op;
    for (NodeId i : n.inputs) n.needs_grad = n.needs_grad || wants_grad(i);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::NodeId Graph::leaf(const Tensor& t) {
    Node n;
    n.value = t;
    n.needs_grad = t.requires_grad;
    n.op = "leaf";
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::NodeId Graph::constant(Tensor t) {
    Node n;
    n.value = std::move(t);
    n.op = "const";
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor& Graph::grad_buffer(NodeId id) {
    Tensor& g = grads_[static_cast<std::size_t>(id)];
    if (g.size() == 0) g = Tensor(nodes_[static_cast<std::size_t>(id)].value.shape());
    return g;
}

void Graph::backward(NodeId loss) {
    if (value(loss).size() != 1)
        throw ContractError("backward: loss node must be scalar, got shape " +
                            value(loss).shape_str());
    grads_.assign(nodes_.size(), Tensor());
    grad_buffer(loss)[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad || !n.backprop) continue;
        if (grads_[static_cast<std::size_t>(id)].size() == 0) continue;  // not on a path to loss
        n.backprop(*this, id);
    }
}

Tensor Graph::grad(NodeId id) const {
    const Tensor& g = grads_[static_cast<std::size_t>(id)];
    if (g.size() == 0) return Tensor(value(id).shape());
    return g;
}

// ---- algebra ----

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    check_same_shape(va, vb, "add");
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
    return push(std::move(out), {a, b},
                [a, b](Graph& g, NodeId id) {
                    const Tensor& go = g.out_grad(id);
                    for (NodeId in : {a, b}) {
                        if (!g.wants_grad(in)) continue;
                        Tensor& gi = g.grad_buffer(in);
                        for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
                    }
                },
                "add");
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    check_same_shape(va, vb, "sub");
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
    return push(std::move(out), {a, b},
                [a, b](Graph& g, NodeId id) {
                    const Tensor& go = g.out_grad(id);
                    if (g.wants_grad(a)) {
                        Tensor& gi = g.grad_buffer(a);
                        for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
                    }
                    if (g.wants_grad(b)) {
                        Tensor& gi = g.grad_buffer(b);
                        for (std::size_t i = 0; i < go.size(); ++i) gi[i] -= go[i];
                    }
                },
                "sub");
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    check_same_shape(va, vb, "mul");
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
    return push(std::move(out), {a, b},
                [a, b](Graph& g, NodeId id) {
                    const Tensor& go = g.out_grad(id);
                    const Tensor& va = g.value(a);
                    const Tensor& vb = g.value(b);
                    if (g.wants_grad(a)) {
                        Tensor& gi = g.grad_buffer(a);
                        for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i] * vb[i];
                    }
                    if (g.wants_grad(b)) {
                        Tensor& gi = g.grad_buffer(b);
                        for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i] * va[i];
                    }
                },
                "mul");
}

Graph::NodeId Graph::scale(NodeId a, double s) {
    const Tensor& va = value(a);
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * s;
    return push(std::move(out), {a},
                [a, s](Graph& g, NodeId id) {
                    if (!g.wants_grad(a)) return;
                    const Tensor& go = g.out_grad(id);
                    Tensor& gi = g.grad_buffer(a);
                    for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i] * s;
                },
                "scale");
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0))
        throw ShapeError("matmul: incompatible shapes " + va.shape_str() + " x " + vb.shape_str());
    const int m = va.dim(0), k = va.dim(1), n = vb.dim(1);
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
        for (int l = 0; l < k; ++l) {
            const double av = va.at(i, l);
            for (int j = 0; j < n; ++j) out.at(i, j) += av * vb.at(l, j);
        }
    return push(std::move(out), {a, b},
                [a, b, m, k, n](Graph& g, NodeId id) {
                    const Tensor& go = g.out_grad(id);
                    if (g.wants_grad(a)) {  // da = go . b^T
                        const Tensor& vb = g.value(b);
                        Tensor& gi = g.grad_buffer(a);
                        for (int i = 0; i < m; ++i)
                            for (int j = 0; j < n; ++j) {
                                const double gv = go.at(i, j);
                                for (int l = 0; l < k; ++l) gi.at(i, l) += gv * vb.at(l, j);
                            }
                    }
                    if (g.wants_grad(b)) {  // db = a^T . go
                        const Tensor& va = g.value(a);
                        Tensor& gi = g.grad_buffer(b);
                        for (int i = 0; i < m; ++i)
                            for (int l = 0; l < k; ++l) {
                                const double av = va.at(i, l);
                                for (int j = 0; j < n; ++j) gi.at(l, j) += av * go.at(i, j);
                            }
                    }
                },
                "matmul");
}

Graph::NodeId Graph::sum(NodeId a) {
    Tensor out = Tensor::scalar(value(a).sum());
    return push(std::move(out), {a},
                [a](Graph& g, NodeId id) {
                    if (!g.wants_grad(a)) return;
                    const double go = g.out_grad(id)[0];
                    Tensor& gi = g.grad_buffer(a);
                    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go;
                },
                "sum");
}

Graph::NodeId Graph::mean(NodeId a) {
    const double inv = 1.0 / static_cast<double>(value(a).size());
    Tensor out = Tensor::scalar(value(a).sum() * inv);
    return push(std::move(out), {a},
                [a, inv](Graph& g, NodeId id) {
                    if (!g.wants_grad(a)) return;
                    const double go = g.out_grad(id)[0] * inv;
                    Tensor& gi = g.grad_buffer(a);
                    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go;
                },
                "mean");
}

Graph::NodeId Graph::abs(NodeId a) {
    const Tensor& va = value(a);
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(va[i]);
    return push(std::move(out), {a},
                [a](Graph& g, NodeId id) {
                    if (!g.wants_grad(a)) return;
                    const Tensor& go = g.out_grad(id);
                    const Tensor& va = g.value(a);
                    Tensor& gi = g.grad_buffer(a);
                    for (std::size_t i = 0; i < go.size(); ++i) {
                        const double s = va[i] > 0.0 ? 1.0 : (va[i] < 0.0 ? -1.0 : 0.0);
                        gi[i] += go[i] * s;
                    }
                },
                "abs");
}

Graph::NodeId Graph::sigmoid(NodeId a) {
    const Tensor& va = value(a);
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(va[i]);
    return push(std::move(out), {a},
                [a](Graph& g, NodeId id) {
                    if (!g.wants_grad(a)) return;
                    const Tensor& go = g.out_grad(id);
                    const Tensor& y = g.value(id);
                    Tensor& gi = g.grad_buffer(a);
                    for (std::size_t i = 0; i < go.size(); ++i)
                        gi[i] += go[i] * y[i] * (1.0 - y[i]);
                },
                "sigmoid");
}

Graph::NodeId Graph::tanh_act(NodeId a) {
    const Tensor& va = value(a);
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(va[i]);
    return push(std::move(out), {a},
                [a](Graph& g, NodeId id) {
                    if (!g.wants_grad(a)) return;
                    const Tensor& go = g.out_grad(id);
                    const Tensor& y = g.value(id);
                    Tensor& gi = g.grad_buffer(a);
                    for (std::size_t i = 0; i < go.size(); ++i)
                        gi[i] += go[i] * (1.0 - y[i] * y[i]);
                },
                "tanh");
}

Graph::NodeId Graph::elu(NodeId a) {
    const Tensor& va = value(a);
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = va[i] > 0.0 ? va[i] : std::expm1(va[i]);
    return push(std::move(out), {a},
                [a](Graph& g, NodeId id) {
                    if (!g.wants_grad(a)) return;
                    const Tensor& go = g.out_grad(id);
                    const Tensor& va = g.value(a);
                    const Tensor& y = g.value(id);
                    Tensor& gi = g.grad_buffer(a);
                    for (std::size_t i = 0; i < go.size(); ++i)
                        gi[i] += go[i] * (va[i] > 0.0 ? 1.0 : y[i] + 1.0);
                },
                "elu");
}

// ---- structure ----

Graph::NodeId Graph::reshape(NodeId a, std::vector<int> shape) {
    Tensor out = reshape_copy(value(a), std::move(shape));
    return push(std::move(out), {a},
                [a](Graph& g, NodeId id) {
                    if (!g.wants_grad(a)) return;
                    const Tensor& go = g.out_grad(id);
                    Tensor& gi = g.grad_buffer(a);
                    for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
                },
                "reshape");
}

Graph::NodeId Graph::slice_rows(NodeId a, int r0, int len) {
    const Tensor& va = value(a);
    if (va.rank() != 2 || r0 < 0 || len <= 0 || r0 + len > va.dim(0))
        throw ShapeError("slice_rows: bad range for " + va.shape_str());
    const int cols = va.dim(1);
    Tensor out({len, cols});
    for (int r = 0; r < len; ++r)
        for (int c = 0; c < cols; ++c) out.at(r, c) = va.at(r0 + r, c);
    return push(std::move(out), {a},
                [a, r0, len, cols](Graph& g, NodeId id) {
                    if (!g.wants_grad(a)) return;
                    const Tensor& go = g.out_grad(id);
                    Tensor& gi = g.grad_buffer(a);
                    for (int r = 0; r < len; ++r)
                        for (int c = 0; c < cols; ++c) gi.at(r0 + r, c) += go.at(r, c);
                },
                "slice_rows");
}

Graph::NodeId Graph::slice_cols(NodeId a, int c0, int len) {
    const Tensor& va = value(a);
    if (va.rank() != 2 || c0 < 0 || len <= 0 || c0 + len > va.dim(1))
        throw ShapeError("slice_cols: bad range for " + va.shape_str());
    const int rows = va.dim(0);
    Tensor out({rows, len});
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < len; ++c) out.at(r, c) = va.at(r, c0 + c);
    return push(std::move(out), {a},
                [a, c0, len, rows](Graph& g, NodeId id) {
                    if (!g.wants_grad(a)) return;
                    const Tensor& go = g.out_grad(id);
                    Tensor& gi = g.grad_buffer(a);
                    for (int r = 0; r < rows; ++r)
                        for (int c = 0; c < len; ++c) gi.at(r, c0 + c) += go.at(r, c);
                },
                "slice_cols");
}

Graph::NodeId Graph::concat_rows(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    int rows = 0;
    const int cols = value(parts[0]).dim(1);
    for (NodeId p : parts) {
        const Tensor& v = value(p);
        if (v.rank() != 2 || v.dim(1) != cols) throw ShapeError("concat_rows: column mismatch");
        rows += v.dim(0);
    }
    Tensor out({rows, cols});
    std::size_t off = 0;
    for (NodeId p : parts) {
        const Tensor& v = value(p);
        for (std::size_t i = 0; i < v.size(); ++i) out[off + i] = v[i];
        off += v.size();
    }
    return push(std::move(out), parts,
                [parts](Graph& g, NodeId id) {
                    const Tensor& go = g.out_grad(id);
                    std::size_t off = 0;
                    for (NodeId p : parts) {
                        const std::size_t n = g.value(p).size();
                        if (g.wants_grad(p)) {
                            Tensor& gi = g.grad_buffer(p);
                            for (std::size_t i = 0; i < n; ++i) gi[i] += go[off + i];
                        }
                        off += n;
                    }
                },
                "concat_rows");
}

Graph::NodeId Graph::concat_channels(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const Tensor& first = value(parts[0]);
    if (first.rank() != 4) throw ShapeError("concat_channels: expects NCHW");
    const int n = first.dim(0), h = first.dim(2), w = first.dim(3);
    int c_total = 0;
    for (NodeId p : parts) {
        const Tensor& v = value(p);
        if (v.rank() != 4 || v.dim(0) != n || v.dim(2) != h || v.dim(3) != w)
            throw ShapeError("concat_channels: incompatible " + v.shape_str());
        c_total += v.dim(1);
    }
    Tensor out({n, c_total, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    int c_off = 0;
    for (NodeId p : parts) {
        const Tensor& v = value(p);
        const int c = v.dim(1);
        for (int b = 0; b < n; ++b)
            for (int ch = 0; ch < c; ++ch) {
                const double* src = v.data() + (static_cast<std::size_t>(b) * c + ch) * plane;
                double* dst = out.data() + (static_cast<std::size_t>(b) * c_total + c_off + ch) * plane;
                std::copy(src, src + plane, dst);
            }
        c_off += c;
    }
    return push(std::move(out), parts,
                [parts, n, c_total, plane](Graph& g, NodeId id) {
                    const Tensor& go = g.out_grad(id);
                    int c_off = 0;
                    for (NodeId p : parts) {
                        const int c = g.value(p).dim(1);
                        if (g.wants_grad(p)) {
                            Tensor& gi = g.grad_buffer(p);
                            for (int b = 0; b < n; ++b)
                                for (int ch = 0; ch < c; ++ch) {
                                    const double* src =
                                        go.data() +
                                        (static_cast<std::size_t>(b) * c_total + c_off + ch) * plane;
                                    double* dst =
                                        gi.data() + (static_cast<std::size_t>(b) * c + ch) * plane;
                                    for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
                                }
                        }
                        c_off += c;
                    }
                },
                "concat_channels");
}

Graph::NodeId Graph::mul_const(NodeId a, Tensor mask) {
    const Tensor& va = value(a);
    check_same_shape(va, mask, "mul_const");
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * mask[i];
    auto m = std::make_shared<Tensor>(std::move(mask));
    return push(std::move(out), {a},
                [a, m](Graph& g, NodeId id) {
                    if (!g.wants_grad(a)) return;
                    const Tensor& go = g.out_grad(id);
                    Tensor& gi = g.grad_buffer(a);
                    for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i] * (*m)[i];
                },
                "mul_const");
}

Graph::NodeId Graph::gather(NodeId a, std::vector<long> src, std::vector<int> out_shape) {
    const Tensor& va = value(a);
    Tensor out(std::move(out_shape));
    if (out.size() != src.size()) throw ShapeError("gather: index count mismatch");
    for (std::size_t i = 0; i < src.size(); ++i) {
        const long s = src[i];
        if (s >= static_cast<long>(va.size())) throw ShapeError("gather: index out of range");
        out[i] = s >= 0 ? va[static_cast<std::size_t>(s)] : 0.0;
    }
    auto idx = std::make_shared<std::vector<long>>(std::move(src));
    return push(std::move(out), {a},
                [a, idx](Graph& g, NodeId id) {
                    if (!g.wants_grad(a)) return;
                    const Tensor& go = g.out_grad(id);
                    Tensor& gi = g.grad_buffer(a);
                    for (std::size_t i = 0; i < idx->size(); ++i) {
                        const long s = (*idx)[i];
                        if (s >= 0) gi[static_cast<std::size_t>(s)] += go[i];
                    }
                },
                "gather");
}

// ---- neural network ----

namespace {

// y[n,k] (+)= cross-correlation of x[n,c] with kern, offset (di,dj) from the
// padded origin. Shared by the conv forward and both backward passes.
inline void corr_accumulate(const double* x, int h, int w, double kv, int di, int dj, double* y) {
    const int h0 = std::max(0, -di), h1 = std::min(h, h - di);
    const int w0 = std::max(0, -dj), w1 = std::min(w, w - dj);
    for (int i = h0; i < h1; ++i) {
        const double* xr = x + static_cast<std::size_t>(i + di) * w + (w0 + dj);
        double* yr = y + static_cast<std::size_t>(i) * w + w0;
        for (int j = 0; j < w1 - w0; ++j) yr[j] += kv * xr[j];
    }
}

}  // namespace

Graph::NodeId Graph::conv2d(NodeId x, NodeId w, NodeId b) {
    const Tensor& vx = value(x);
    const Tensor& vw = value(w);
    const Tensor& vb = value(b);
    if (vx.rank() != 4 || vw.rank() != 4) throw ShapeError("conv2d: expects NCHW input and KCkk kernel");
    const int n = vx.dim(0), c = vx.dim(1), h = vx.dim(2), wd = vx.dim(3);
    const int k = vw.dim(0), kc = vw.dim(1), kh = vw.dim(2), kw = vw.dim(3);
    if (kc != c) throw ShapeError("conv2d: channel mismatch, input has " + std::to_string(c) +
                                  ", kernel expects " + std::to_string(kc));
    if (kh != kw || kh % 2 == 0) throw ShapeError("conv2d: kernel must be odd and square");
    if (vb.rank() != 1 || vb.dim(0) != k) throw ShapeError("conv2d: bias size mismatch");
    const int p = kh / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * wd;

    Tensor out({n, k, h, wd});
#pragma omp parallel for collapse(2) schedule(static)
    for (int ni = 0; ni < n; ++ni)
        for (int ki = 0; ki < k; ++ki) {
            double* y = out.data() + (static_cast<std::size_t>(ni) * k + ki) * plane;
            const double bias = vb[static_cast<std::size_t>(ki)];
            for (std::size_t i = 0; i < plane; ++i) y[i] = bias;
            for (int ci = 0; ci < c; ++ci) {
                const double* xp = vx.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
                for (int di = 0; di < kh; ++di)
                    for (int dj = 0; dj < kw; ++dj) {
                        const double kv = vw.at(ki, ci, di, dj);
                        corr_accumulate(xp, h, wd, kv, di - p, dj - p, y);
                    }
            }
        }

    return push(std::move(out), {x, w, b},
                [x, w, b, n, c, h, wd, k, kh, kw, p, plane](Graph& g, NodeId id) {
                    const Tensor& go = g.out_grad(id);
                    const Tensor& vx = g.value(x);
                    const Tensor& vw = g.value(w);
                    if (g.wants_grad(x)) {  // correlate output grad with flipped kernel
                        Tensor& gx = g.grad_buffer(x);
#pragma omp parallel for collapse(2) schedule(static)
                        for (int ni = 0; ni < n; ++ni)
                            for (int ci = 0; ci < c; ++ci) {
                                double* dst =
                                    gx.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
                                for (int ki = 0; ki < k; ++ki) {
                                    const double* gop =
                                        go.data() + (static_cast<std::size_t>(ni) * k + ki) * plane;
                                    for (int di = 0; di < kh; ++di)
                                        for (int dj = 0; dj < kw; ++dj) {
                                            const double kv = vw.at(ki, ci, di, dj);
                                            corr_accumulate(gop, h, wd, kv, p - di, p - dj, dst);
                                        }
                                }
                            }
                    }
                    if (g.wants_grad(w)) {
                        Tensor& gw = g.grad_buffer(w);
#pragma omp parallel for collapse(2) schedule(static)
                        for (int ki = 0; ki < k; ++ki)
                            for (int ci = 0; ci < c; ++ci)
                                for (int di = 0; di < kh; ++di)
                                    for (int dj = 0; dj < kw; ++dj) {
                                        double acc = 0.0;
                                        for (int ni = 0; ni < n; ++ni) {
                                            const double* gop =
                                                go.data() +
                                                (static_cast<std::size_t>(ni) * k + ki) * plane;
                                            const double* xp =
                                                vx.data() +
                                                (static_cast<std::size_t>(ni) * c + ci) * plane;
                                            const int h0 = std::max(0, p - di),
                                                      h1 = std::min(h, h + p - di);
                                            const int w0 = std::max(0, p - dj),
                                                      w1 = std::min(wd, wd + p - dj);
                                            for (int i = h0; i < h1; ++i) {
                                                const double* gr =
                                                    gop + static_cast<std::size_t>(i) * wd + w0;
                                                const double* xr =
                                                    xp +
                                                    static_cast<std::size_t>(i + di - p) * wd +
                                                    (w0 + dj - p);
                                                for (int j = 0; j < w1 - w0; ++j)
                                                    acc += gr[j] * xr[j];
                                            }
                                        }
                                        gw.at(ki, ci, di, dj) += acc;
                                    }
                    }
                    if (g.wants_grad(b)) {
                        Tensor& gb = g.grad_buffer(b);
                        for (int ni = 0; ni < n; ++ni)
                            for (int ki = 0; ki < k; ++ki) {
                                const double* gop =
                                    go.data() + (static_cast<std::size_t>(ni) * k + ki) * plane;
                                double acc = 0.0;
                                for (std::size_t i = 0; i < plane; ++i) acc += gop[i];
                                gb[static_cast<std::size_t>(ki)] += acc;
                            }
                    }
                },
                "conv2d");
}

Graph::NodeId Graph::max_pool2(NodeId x) {
    const Tensor& vx = value(x);
    if (vx.rank() != 4) throw ShapeError("max_pool2: expects NCHW");
    const int n = vx.dim(0), c = vx.dim(1), h = vx.dim(2), w = vx.dim(3);
    if (h % 2 != 0 || w % 2 != 0)
        throw ShapeError("max_pool2: spatial dims must be even, got " + vx.shape_str());
    const int oh = h / 2, ow = w / 2;
    Tensor out({n, c, oh, ow});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
    std::size_t o = 0;
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
            const std::size_t base = (static_cast<std::size_t>(ni) * c + ci) *
                                     static_cast<std::size_t>(h) * w;
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j, ++o) {
                    double best = -1.0;
                    std::size_t best_at = 0;
                    bool first = true;
                    for (int di = 0; di < 2; ++di)
                        for (int dj = 0; dj < 2; ++dj) {
                            const std::size_t at =
                                base + static_cast<std::size_t>(2 * i + di) * w + (2 * j + dj);
                            if (first || vx[at] > best) {
                                best = vx[at];
                                best_at = at;
                                first = false;
                            }
                        }
                    out[o] = best;
                    (*argmax)[o] = static_cast<std::int64_t>(best_at);
                }
        }
    return push(std::move(out), {x},
                [x, argmax](Graph& g, NodeId id) {
                    if (!g.wants_grad(x)) return;
                    const Tensor& go = g.out_grad(id);
                    Tensor& gi = g.grad_buffer(x);
                    for (std::size_t i = 0; i < go.size(); ++i)
                        gi[static_cast<std::size_t>((*argmax)[i])] += go[i];
                },
                "max_pool2");
}

Graph::NodeId Graph::bilinear_resize(NodeId x, int oh, int ow) {
    const Tensor& vx = value(x);
    if (vx.rank() != 4) throw ShapeError("bilinear_resize: expects NCHW");
    if (oh < 1 || ow < 1) throw ShapeError("bilinear_resize: output dims must be >= 1");
    const int n = vx.dim(0), c = vx.dim(1), h = vx.dim(2), w = vx.dim(3);
    const double sy = oh > 1 ? static_cast<double>(h - 1) / (oh - 1) : 0.0;
    const double sx = ow > 1 ? static_cast<double>(w - 1) / (ow - 1) : 0.0;

    struct Tap {
        int lo;
        double frac;
    };
    std::vector<Tap> ty(static_cast<std::size_t>(oh)), tx(static_cast<std::size_t>(ow));
    for (int i = 0; i < oh; ++i) {
        const double p = i * sy;
        int lo = std::min(static_cast<int>(p), h - 1);
        ty[static_cast<std::size_t>(i)] = {lo, std::min(p - lo, 1.0)};
    }
    for (int j = 0; j < ow; ++j) {
        const double p = j * sx;
        int lo = std::min(static_cast<int>(p), w - 1);
        tx[static_cast<std::size_t>(j)] = {lo, std::min(p - lo, 1.0)};
    }

    Tensor out({n, c, oh, ow});
    const std::size_t iplane = static_cast<std::size_t>(h) * w;
    const std::size_t oplane = static_cast<std::size_t>(oh) * ow;
#pragma omp parallel for collapse(2) schedule(static)
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
            const double* src = vx.data() + (static_cast<std::size_t>(ni) * c + ci) * iplane;
            double* dst = out.data() + (static_cast<std::size_t>(ni) * c + ci) * oplane;
            for (int i = 0; i < oh; ++i) {
                const int y0 = ty[static_cast<std::size_t>(i)].lo;
                const int y1 = std::min(y0 + 1, h - 1);
                const double fy = ty[static_cast<std::size_t>(i)].frac;
                for (int j = 0; j < ow; ++j) {
                    const int x0 = tx[static_cast<std::size_t>(j)].lo;
                    const int x1 = std::min(x0 + 1, w - 1);
                    const double fx = tx[static_cast<std::size_t>(j)].frac;
                    const double v00 = src[static_cast<std::size_t>(y0) * w + x0];
                    const double v01 = src[static_cast<std::size_t>(y0) * w + x1];
                    const double v10 = src[static_cast<std::size_t>(y1) * w + x0];
                    const double v11 = src[static_cast<std::size_t>(y1) * w + x1];
                    dst[static_cast<std::size_t>(i) * ow + j] =
                        (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                        fy * ((1 - fx) * v10 + fx * v11);
                }
            }
        }

    auto tys = std::make_shared<std::vector<Tap>>(std::move(ty));
    auto txs = std::make_shared<std::vector<Tap>>(std::move(tx));
    return push(std::move(out), {x},
                [x, tys, txs, n, c, h, w, oh, ow, iplane, oplane](Graph& g, NodeId id) {
                    if (!g.wants_grad(x)) return;
                    const Tensor& go = g.out_grad(id);
                    Tensor& gi = g.grad_buffer(x);
#pragma omp parallel for collapse(2) schedule(static)
                    for (int ni = 0; ni < n; ++ni)
                        for (int ci = 0; ci < c; ++ci) {
                            const double* src =
                                go.data() + (static_cast<std::size_t>(ni) * c + ci) * oplane;
                            double* dst =
                                gi.data() + (static_cast<std::size_t>(ni) * c + ci) * iplane;
                            for (int i = 0; i < oh; ++i) {
                                const int y0 = (*tys)[static_cast<std::size_t>(i)].lo;
                                const int y1 = std::min(y0 + 1, h - 1);
                                const double fy = (*tys)[static_cast<std::size_t>(i)].frac;
                                for (int j = 0; j < ow; ++j) {
                                    const int x0 = (*txs)[static_cast<std::size_t>(j)].lo;
                                    const int x1 = std::min(x0 + 1, w - 1);
                                    const double fx = (*txs)[static_cast<std::size_t>(j)].frac;
                                    const double gv = src[static_cast<std::size_t>(i) * ow + j];
                                    dst[static_cast<std::size_t>(y0) * w + x0] +=
                                        gv * (1 - fy) * (1 - fx);
                                    dst[static_cast<std::size_t>(y0) * w + x1] += gv * (1 - fy) * fx;
                                    dst[static_cast<std::size_t>(y1) * w + x0] += gv * fy * (1 - fx);
                                    dst[static_cast<std::size_t>(y1) * w + x1] += gv * fy * fx;
                                }
                            }
                        }
                },
                "bilinear_resize");
}

Graph::NodeId Graph::batch_norm(NodeId x, NodeId gamma, NodeId beta, Tensor& running_mean,
                                Tensor& running_var, bool training) {
    const Tensor& vx = value(x);
    if (vx.rank() != 4) throw ShapeError("batch_norm: expects NCHW");
    const int n = vx.dim(0), c = vx.dim(1), h = vx.dim(2), w = vx.dim(3);
    const Tensor& vg = value(gamma);
    const Tensor& vb = value(beta);
    if (vg.size() != static_cast<std::size_t>(c) || vb.size() != static_cast<std::size_t>(c) ||
        running_mean.size() != static_cast<std::size_t>(c) ||
        running_var.size() != static_cast<std::size_t>(c))
        throw ShapeError("batch_norm: parameter size must equal channel count");
    if (training && n < 2) throw ContractError("batch_norm: training mode needs batch size >= 2");

    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t m = static_cast<std::size_t>(n) * plane;  // samples per channel
    auto xhat = std::make_shared<Tensor>(vx.shape());
    auto inv_sigma = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c));

    for (int ci = 0; ci < c; ++ci) {
        double mu, var;
        if (training) {
            double s = 0.0;
            for (int ni = 0; ni < n; ++ni) {
                const double* p = vx.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
                for (std::size_t i = 0; i < plane; ++i) s += p[i];
            }
            mu = s / static_cast<double>(m);
            double sv = 0.0;
            for (int ni = 0; ni < n; ++ni) {
                const double* p = vx.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = p[i] - mu;
                    sv += d * d;
                }
            }
            var = sv / static_cast<double>(m);
            running_mean[static_cast<std::size_t>(ci)] =
                kBatchNormMomentum * running_mean[static_cast<std::size_t>(ci)] +
                (1.0 - kBatchNormMomentum) * mu;
            running_var[static_cast<std::size_t>(ci)] =
                kBatchNormMomentum * running_var[static_cast<std::size_t>(ci)] +
                (1.0 - kBatchNormMomentum) * var;
        } else {
            mu = running_mean[static_cast<std::size_t>(ci)];
            var = running_var[static_cast<std::size_t>(ci)];
        }
        const double inv = 1.0 / std::sqrt(var + kBatchNormEps);
        (*inv_sigma)[static_cast<std::size_t>(ci)] = inv;
        for (int ni = 0; ni < n; ++ni) {
            const double* p = vx.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
            double* q = xhat->data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
            for (std::size_t i = 0; i < plane; ++i) q[i] = (p[i] - mu) * inv;
        }
    }

    Tensor out(vx.shape());
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
            const double gm = vg[static_cast<std::size_t>(ci)];
            const double bt = vb[static_cast<std::size_t>(ci)];
            const double* q = xhat->data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
            double* y = out.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
            for (std::size_t i = 0; i < plane; ++i) y[i] = gm * q[i] + bt;
        }

    return push(
        std::move(out), {x, gamma, beta},
        [x, gamma, beta, xhat, inv_sigma, n, c, plane, m, training](Graph& g, NodeId id) {
            const Tensor& go = g.out_grad(id);
            const Tensor& vg = g.value(gamma);
            // Per-channel reductions used by every term.
            std::vector<double> sum_go(static_cast<std::size_t>(c), 0.0);
            std::vector<double> sum_go_xhat(static_cast<std::size_t>(c), 0.0);
            for (int ni = 0; ni < n; ++ni)
                for (int ci = 0; ci < c; ++ci) {
                    const double* gp = go.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
                    const double* q =
                        xhat->data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
                    double a = 0.0, bsum = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) {
                        a += gp[i];
                        bsum += gp[i] * q[i];
                    }
                    sum_go[static_cast<std::size_t>(ci)] += a;
                    sum_go_xhat[static_cast<std::size_t>(ci)] += bsum;
                }
            if (g.wants_grad(beta)) {
                Tensor& gb = g.grad_buffer(beta);
                for (int ci = 0; ci < c; ++ci)
                    gb[static_cast<std::size_t>(ci)] += sum_go[static_cast<std::size_t>(ci)];
            }
            if (g.wants_grad(gamma)) {
                Tensor& gg = g.grad_buffer(gamma);
                for (int ci = 0; ci < c; ++ci)
                    gg[static_cast<std::size_t>(ci)] += sum_go_xhat[static_cast<std::size_t>(ci)];
            }
            if (g.wants_grad(x)) {
                Tensor& gx = g.grad_buffer(x);
                const double inv_m = 1.0 / static_cast<double>(m);
                for (int ni = 0; ni < n; ++ni)
                    for (int ci = 0; ci < c; ++ci) {
                        const double gm = vg[static_cast<std::size_t>(ci)];
                        const double inv = (*inv_sigma)[static_cast<std::size_t>(ci)];
                        const double* gp =
                            go.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
                        const double* q =
                            xhat->data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
                        double* dst = gx.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
                        if (training) {
                            const double mg = sum_go[static_cast<std::size_t>(ci)] * inv_m;
                            const double mgx = sum_go_xhat[static_cast<std::size_t>(ci)] * inv_m;
                            for (std::size_t i = 0; i < plane; ++i)
                                dst[i] += gm * inv * (gp[i] - mg - q[i] * mgx);
                        } else {
                            for (std::size_t i = 0; i < plane; ++i) dst[i] += gm * inv * gp[i];
                        }
                    }
            }
        },
        "batch_norm");
}

Graph::NodeId Graph::fully_connected(NodeId x, NodeId w, NodeId b) {
    const Tensor& vx = value(x);
    const Tensor& vw = value(w);
    const Tensor& vb = value(b);
    if (vx.rank() != 2 || vw.rank() != 2 || vx.dim(1) != vw.dim(1))
        throw ShapeError("fully_connected: x " + vx.shape_str() + " vs w " + vw.shape_str());
    const int n = vx.dim(0), in = vx.dim(1), out_dim = vw.dim(0);
    if (vb.size() != static_cast<std::size_t>(out_dim))
        throw ShapeError("fully_connected: bias size mismatch");
    Tensor out({n, out_dim});
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < out_dim; ++o) {
            double acc = vb[static_cast<std::size_t>(o)];
            const double* xr = vx.data() + static_cast<std::size_t>(i) * in;
            const double* wr = vw.data() + static_cast<std::size_t>(o) * in;
            for (int l = 0; l < in; ++l) acc += xr[l] * wr[l];
            out.at(i, o) = acc;
        }
    return push(std::move(out), {x, w, b},
                [x, w, b, n, in, out_dim](Graph& g, NodeId id) {
                    const Tensor& go = g.out_grad(id);
                    const Tensor& vx = g.value(x);
                    const Tensor& vw = g.value(w);
                    if (g.wants_grad(x)) {
                        Tensor& gx = g.grad_buffer(x);
                        for (int i = 0; i < n; ++i)
                            for (int o = 0; o < out_dim; ++o) {
                                const double gv = go.at(i, o);
                                const double* wr = vw.data() + static_cast<std::size_t>(o) * in;
                                double* dst = gx.data() + static_cast<std::size_t>(i) * in;
                                for (int l = 0; l < in; ++l) dst[l] += gv * wr[l];
                            }
                    }
                    if (g.wants_grad(w)) {
                        Tensor& gw = g.grad_buffer(w);
                        for (int i = 0; i < n; ++i)
                            for (int o = 0; o < out_dim; ++o) {
                                const double gv = go.at(i, o);
                                const double* xr = vx.data() + static_cast<std::size_t>(i) * in;
                                double* dst = gw.data() + static_cast<std::size_t>(o) * in;
                                for (int l = 0; l < in; ++l) dst[l] += gv * xr[l];
                            }
                    }
                    if (g.wants_grad(b)) {
                        Tensor& gb = g.grad_buffer(b);
                        for (int i = 0; i < n; ++i)
                            for (int o = 0; o < out_dim; ++o)
                                gb[static_cast<std::size_t>(o)] += go.at(i, o);
                    }
                },
                "fully_connected");
}

Graph::NodeId Graph::linear(NodeId x, NodeId w) {
    Tensor zero({value(w).dim(0)});
    return fully_connected(x, w, constant(std::move(zero)));
}

Graph::NodeId Graph::global_avg_pool(NodeId x) {
    const Tensor& vx = value(x);
    if (vx.rank() != 4) throw ShapeError("global_avg_pool: expects NCHW");
    const int n = vx.dim(0), c = vx.dim(1);
    const std::size_t plane = static_cast<std::size_t>(vx.dim(2)) * vx.dim(3);
    const double inv = 1.0 / static_cast<double>(plane);
    Tensor out({n, c});
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
            const double* p = vx.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            out.at(ni, ci) = acc * inv;
        }
    return push(std::move(out), {x},
                [x, n, c, plane, inv](Graph& g, NodeId id) {
                    if (!g.wants_grad(x)) return;
                    const Tensor& go = g.out_grad(id);
                    Tensor& gi = g.grad_buffer(x);
                    for (int ni = 0; ni < n; ++ni)
                        for (int ci = 0; ci < c; ++ci) {
                            const double gv = go.at(ni, ci) * inv;
                            double* dst =
                                gi.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
                            for (std::size_t i = 0; i < plane; ++i) dst[i] += gv;
                        }
                },
                "global_avg_pool");
}

Graph::NodeId Graph::dft_magnitude(NodeId x) {
    const Tensor& vx = value(x);
    if (vx.rank() < 1) throw ShapeError("dft_magnitude: needs at least one axis");
    const int n = vx.dim(vx.rank() - 1);
    if (n % 2 != 0) throw ShapeError("dft_magnitude: last axis must be even");
    const int half = n / 2;
    const std::size_t rows = vx.size() / static_cast<std::size_t>(n);

    std::vector<int> out_shape = vx.shape();
    out_shape.back() = half;
    Tensor out(out_shape);
    auto re = std::make_shared<std::vector<double>>(rows * static_cast<std::size_t>(half));
    auto im = std::make_shared<std::vector<double>>(rows * static_cast<std::size_t>(half));

    const double step = 6.283185307179586476925286766559 / n;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = vx.data() + r * static_cast<std::size_t>(n);
        for (int k = 1; k <= half; ++k) {
            double sre = 0.0, sim = 0.0;
            for (int t = 0; t < n; ++t) {
                const double a = step * k * t;
                sre += xr[t] * std::cos(a);
                sim -= xr[t] * std::sin(a);
            }
            const std::size_t at = r * static_cast<std::size_t>(half) + (k - 1);
            (*re)[at] = sre;
            (*im)[at] = sim;
            out[at] = std::hypot(sre, sim);
        }
    }
    return push(std::move(out), {x},
                [x, re, im, n, half, rows, step](Graph& g, NodeId id) {
                    if (!g.wants_grad(x)) return;
                    const Tensor& go = g.out_grad(id);
                    const Tensor& y = g.value(id);
                    Tensor& gi = g.grad_buffer(x);
                    for (std::size_t r = 0; r < rows; ++r) {
                        double* dst = gi.data() + r * static_cast<std::size_t>(n);
                        for (int k = 1; k <= half; ++k) {
                            const std::size_t at = r * static_cast<std::size_t>(half) + (k - 1);
                            const double mag = y[at];
                            if (mag == 0.0) continue;  // subgradient 0 at the origin
                            const double coef = go[at] / mag;
                            const double cre = (*re)[at] * coef;
                            const double cim = (*im)[at] * coef;
                            for (int t = 0; t < n; ++t) {
                                const double a = step * k * t;
                                dst[t] += cre * std::cos(a) - cim * std::sin(a);
                            }
                        }
                    }
                },
                "dft_magnitude");
}

Graph::NodeId Graph::softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
    const Tensor& vl = value(logits);
    if (vl.rank() != 2) throw ShapeError("softmax_cross_entropy: logits must be 2-D");
    const int n = vl.dim(0), c = vl.dim(1);
    if (labels.size() != static_cast<std::size_t>(n))
        throw ShapeError("softmax_cross_entropy: label count mismatch");
    auto probs = std::make_shared<Tensor>(vl.shape());
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= c) throw ShapeError("softmax_cross_entropy: label out of range");
        double mx = vl.at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, vl.at(i, j));
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(vl.at(i, j) - mx);
        const double lse = mx + std::log(z);
        for (int j = 0; j < c; ++j) probs->at(i, j) = std::exp(vl.at(i, j) - lse);
        loss += lse - vl.at(i, y);
    }
    loss /= n;
    auto lbl = std::make_shared<std::vector<int>>(std::move(labels));
    return push(Tensor::scalar(loss), {logits},
                [logits, probs, lbl, n, c](Graph& g, NodeId id) {
                    if (!g.wants_grad(logits)) return;
                    const double go = g.out_grad(id)[0] / n;
                    Tensor& gi = g.grad_buffer(logits);
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < c; ++j) {
                            const double onehot = (*lbl)[static_cast<std::size_t>(i)] == j ? 1.0 : 0.0;
                            gi.at(i, j) += go * (probs->at(i, j) - onehot);
                        }
                },
                "softmax_cross_entropy");
}

LstmState lstm_step(Graph& g, Graph::NodeId x, const LstmState& prev, const LstmWeights& w) {
    const int four_h = g.value(w.wx).dim(0);
    if (four_h % 4 != 0) throw ShapeError("lstm_step: stacked weight rows must be 4*hidden");
    const int hidden = four_h / 4;
    if (g.value(w.wh).dim(0) != four_h || g.value(w.wh).dim(1) != hidden)
        throw ShapeError("lstm_step: recurrent weight shape mismatch");
    if (g.value(prev.h).dim(1) != hidden || g.value(prev.c).dim(1) != hidden)
        throw ShapeError("lstm_step: state width mismatch");

    Graph::NodeId gates = g.add(g.fully_connected(x, w.wx, w.b), g.linear(prev.h, w.wh));
    Graph::NodeId i_gate = g.sigmoid(g.slice_cols(gates, 0, hidden));
    Graph::NodeId f_gate = g.sigmoid(g.slice_cols(gates, hidden, hidden));
    Graph::NodeId cand = g.tanh_act(g.slice_cols(gates, 2 * hidden, hidden));
    Graph::NodeId o_gate = g.sigmoid(g.slice_cols(gates, 3 * hidden, hidden));
    Graph::NodeId c_new = g.add(g.mul(f_gate, prev.c), g.mul(i_gate, cand));
    Graph::NodeId h_new = g.mul(o_gate, g.tanh_act(c_new));
    return {h_new, c_new};
}

}  // namespace axspoof
