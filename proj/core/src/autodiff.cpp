#include "geoloop/autodiff.hpp"

#include <cmath>
#include <memory>

namespace geoloop::ad {

Var Tape::push(Tensor value, bool requires_grad) {
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) {
        n.grad.shape = n.value.shape;
        n.grad.data = Eigen::ArrayXd::Zero(n.value.numel());
    }
    return &n;
}

Var Tape::leaf(const Tensor* value, Tensor* grad_sink) {
    Var n = push(*value, true);
    n->backward_fn = [grad_sink](Node& node) { grad_sink->data += node.grad.data; };
    return n;
}

Var Tape::input(Tensor value) { return push(std::move(value), false); }

namespace {
void accumulate(Node* parent, const Eigen::ArrayXd& g) {
    if (parent->requires_grad) parent->grad.data += g;
}
} // namespace

Var Tape::matmul(Var a, Var b) {
    if (a->value.shape.size() != 2 || b->value.shape.size() != 2 ||
        a->value.dim(1) != b->value.dim(0))
        throw ContractError("matmul: incompatible shapes");
    const auto m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
    Tensor out({m, n});
    out.mat() = a->value.mat() * b->value.mat();
    Var node = push(std::move(out), a->requires_grad || b->requires_grad);
    if (node->requires_grad)
        node->backward_fn = [a, b, m, k, n](Node& node) {
            auto dc = node.grad.mat(m, n);
            if (a->requires_grad) a->grad.mat(m, k) += dc * b->value.mat().transpose();
            if (b->requires_grad) b->grad.mat(k, n) += a->value.mat().transpose() * dc;
        };
    return node;
}

Var Tape::add(Var a, Var b) {
    if (a->value.shape != b->value.shape) throw ContractError("add: shape mismatch");
    Tensor out(a->value.shape, a->value.data + b->value.data);
    Var node = push(std::move(out), a->requires_grad || b->requires_grad);
    if (node->requires_grad)
        node->backward_fn = [a, b](Node& node) {
            accumulate(a, node.grad.data);
            accumulate(b, node.grad.data);
        };
    return node;
}

Var Tape::sub(Var a, Var b) {
    if (a->value.shape != b->value.shape) throw ContractError("sub: shape mismatch");
    Tensor out(a->value.shape, a->value.data - b->value.data);
    Var node = push(std::move(out), a->requires_grad || b->requires_grad);
    if (node->requires_grad)
        node->backward_fn = [a, b](Node& node) {
            accumulate(a, node.grad.data);
            if (b->requires_grad) b->grad.data -= node.grad.data;
        };
    return node;
}

Var Tape::mul(Var a, Var b) {
    if (a->value.shape != b->value.shape) throw ContractError("mul: shape mismatch");
    Tensor out(a->value.shape, a->value.data * b->value.data);
    Var node = push(std::move(out), a->requires_grad || b->requires_grad);
    if (node->requires_grad)
        node->backward_fn = [a, b](Node& node) {
            if (a->requires_grad) a->grad.data += node.grad.data * b->value.data;
            if (b->requires_grad) b->grad.data += node.grad.data * a->value.data;
        };
    return node;
}

Var Tape::scale(Var a, double s) {
    Tensor out(a->value.shape, a->value.data * s);
    Var node = push(std::move(out), a->requires_grad);
    if (node->requires_grad)
        node->backward_fn = [a, s](Node& node) { a->grad.data += node.grad.data * s; };
    return node;
}

Var Tape::add_row_broadcast(Var x, Var bias) {
    if (x->value.shape.size() != 2 || bias->value.numel() != x->value.dim(1))
        throw ContractError("add_row_broadcast: bias length != columns");
    const auto rows = x->value.dim(0), cols = x->value.dim(1);
    Tensor out({rows, cols});
    out.mat() = x->value.mat().rowwise() +
                Eigen::Map<const Eigen::RowVectorXd>(bias->value.data.data(), cols);
    Var node = push(std::move(out), x->requires_grad || bias->requires_grad);
    if (node->requires_grad)
        node->backward_fn = [x, bias, rows, cols](Node& node) {
            accumulate(x, node.grad.data);
            if (bias->requires_grad)
                Eigen::Map<Eigen::RowVectorXd>(bias->grad.data.data(), cols) +=
                    node.grad.mat(rows, cols).colwise().sum();
        };
    return node;
}

Var Tape::tanh(Var x) {
    Tensor out(x->value.shape, x->value.data.tanh());
    Var node = push(std::move(out), x->requires_grad);
    if (node->requires_grad)
        node->backward_fn = [x](Node& node) {
            x->grad.data += node.grad.data * (1.0 - node.value.data.square());
        };
    return node;
}

Var Tape::sigmoid(Var x) {
    Tensor out(x->value.shape, 0.5 * (0.5 * x->value.data).tanh() + 0.5);
    Var node = push(std::move(out), x->requires_grad);
    if (node->requires_grad)
        node->backward_fn = [x](Node& node) {
            x->grad.data += node.grad.data * node.value.data * (1.0 - node.value.data);
        };
    return node;
}

Var Tape::relu(Var x) {
    Tensor out(x->value.shape, x->value.data.max(0.0));
    Var node = push(std::move(out), x->requires_grad);
    if (node->requires_grad)
        node->backward_fn = [x](Node& node) {
            x->grad.data += node.grad.data * (x->value.data > 0.0).cast<double>();
        };
    return node;
}

Var Tape::concat_cols(Var a, Var b) {
    if (a->value.shape.size() != 2 || b->value.shape.size() != 2 ||
        a->value.dim(0) != b->value.dim(0))
        throw ContractError("concat_cols: row mismatch");
    const auto rows = a->value.dim(0), ca = a->value.dim(1), cb = b->value.dim(1);
    Tensor out({rows, ca + cb});
    out.mat().leftCols(ca) = a->value.mat();
    out.mat().rightCols(cb) = b->value.mat();
    Var node = push(std::move(out), a->requires_grad || b->requires_grad);
    if (node->requires_grad)
        node->backward_fn = [a, b, rows, ca, cb](Node& node) {
            auto dc = node.grad.mat(rows, ca + cb);
            if (a->requires_grad) a->grad.mat(rows, ca) += dc.leftCols(ca);
            if (b->requires_grad) b->grad.mat(rows, cb) += dc.rightCols(cb);
        };
    return node;
}

Var Tape::slice_cols(Var x, std::int64_t start, std::int64_t len) {
    if (x->value.shape.size() != 2 || start < 0 || start + len > x->value.dim(1))
        throw ContractError("slice_cols: range out of bounds");
    const auto rows = x->value.dim(0), cols = x->value.dim(1);
    Tensor out({rows, len});
    out.mat() = x->value.mat().middleCols(start, len);
    Var node = push(std::move(out), x->requires_grad);
    if (node->requires_grad)
        node->backward_fn = [x, rows, cols, start, len](Node& node) {
            x->grad.mat(rows, cols).middleCols(start, len) += node.grad.mat(rows, len);
        };
    return node;
}

Var Tape::reshape(Var x, std::vector<std::int64_t> shape) {
    if (Tensor::numel_of(shape) != x->value.numel())
        throw ContractError("reshape: element count mismatch");
    Tensor out(std::move(shape), x->value.data);
    Var node = push(std::move(out), x->requires_grad);
    if (node->requires_grad)
        node->backward_fn = [x](Node& node) { x->grad.data += node.grad.data; };
    return node;
}

namespace {
// col is [oh*ow, C*kh*kw] row-major for one sample
void im2col(const double* x, int C, int H, int W, int kh, int kw, int stride, int pad, int oh,
            int ow, double* col) {
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
            double* dst = col + (static_cast<std::ptrdiff_t>(oy) * ow + ox) * C * kh * kw;
            for (int c = 0; c < C; ++c)
                for (int ky = 0; ky < kh; ++ky) {
                    const int y = oy * stride - pad + ky;
                    for (int kx = 0; kx < kw; ++kx, ++dst) {
                        const int xx = ox * stride - pad + kx;
                        *dst = (y >= 0 && y < H && xx >= 0 && xx < W)
                                   ? x[(static_cast<std::ptrdiff_t>(c) * H + y) * W + xx]
                                   : 0.0;
                    }
                }
        }
}

void col2im_add(const double* col, int C, int H, int W, int kh, int kw, int stride, int pad,
                int oh, int ow, double* x) {
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
            const double* src = col + (static_cast<std::ptrdiff_t>(oy) * ow + ox) * C * kh * kw;
            for (int c = 0; c < C; ++c)
                for (int ky = 0; ky < kh; ++ky) {
                    const int y = oy * stride - pad + ky;
                    for (int kx = 0; kx < kw; ++kx, ++src) {
                        const int xx = ox * stride - pad + kx;
                        if (y >= 0 && y < H && xx >= 0 && xx < W)
                            x[(static_cast<std::ptrdiff_t>(c) * H + y) * W + xx] += *src;
                    }
                }
        }
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
} // namespace

Var Tape::conv2d(Var x, Var w, Var bias, int stride, int pad) {
    if (x->value.shape.size() != 4 || w->value.shape.size() != 4)
        throw ContractError("conv2d: x must be [B,C,H,W], w must be [F,C,kh,kw]");
    const int B = static_cast<int>(x->value.dim(0)), C = static_cast<int>(x->value.dim(1)),
              H = static_cast<int>(x->value.dim(2)), W = static_cast<int>(x->value.dim(3));
    const int F = static_cast<int>(w->value.dim(0)), kh = static_cast<int>(w->value.dim(2)),
              kw = static_cast<int>(w->value.dim(3));
    if (w->value.dim(1) != C) throw ContractError("conv2d: channel mismatch");
    if (bias->value.numel() != F) throw ContractError("conv2d: bias length != filters");
    const int oh = conv_out_dim(H, kh, stride, pad), ow = conv_out_dim(W, kw, stride, pad);
    if (oh <= 0 || ow <= 0) throw ContractError("conv2d: empty output");
    const int ckk = C * kh * kw, ohw = oh * ow;

    // whole-batch im2col, kept alive for the backward pass
    auto col = std::make_shared<RowMat>(static_cast<Eigen::Index>(B) * ohw, ckk);
    for (int b = 0; b < B; ++b)
        im2col(x->value.data.data() + static_cast<std::ptrdiff_t>(b) * C * H * W, C, H, W, kh,
               kw, stride, pad, oh, ow, col->data() + static_cast<std::ptrdiff_t>(b) * ohw * ckk);

    RowMat prod = *col * w->value.mat(F, ckk).transpose(); // [B*ohw, F]
    Tensor out({B, F, oh, ow});
    for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f)
            for (int p = 0; p < ohw; ++p)
                out.data[(static_cast<std::ptrdiff_t>(b) * F + f) * ohw + p] =
                    prod(static_cast<Eigen::Index>(b) * ohw + p, f) + bias->value.data[f];

    Var node = push(std::move(out), x->requires_grad || w->requires_grad || bias->requires_grad);
    if (node->requires_grad)
        node->backward_fn = [=](Node& node) {
            RowMat dprod(static_cast<Eigen::Index>(B) * ohw, F);
            for (int b = 0; b < B; ++b)
                for (int f = 0; f < F; ++f)
                    for (int p = 0; p < ohw; ++p)
                        dprod(static_cast<Eigen::Index>(b) * ohw + p, f) =
                            node.grad.data[(static_cast<std::ptrdiff_t>(b) * F + f) * ohw + p];
            if (bias->requires_grad)
                Eigen::Map<Eigen::RowVectorXd>(bias->grad.data.data(), F) +=
                    dprod.colwise().sum();
            if (w->requires_grad) w->grad.mat(F, ckk) += dprod.transpose() * *col;
            if (x->requires_grad) {
                RowMat dcol = dprod * w->value.mat(F, ckk); // [B*ohw, ckk]
                for (int b = 0; b < B; ++b)
                    col2im_add(dcol.data() + static_cast<std::ptrdiff_t>(b) * ohw * ckk, C, H, W,
                               kh, kw, stride, pad, oh, ow,
                               x->grad.data.data() + static_cast<std::ptrdiff_t>(b) * C * H * W);
            }
        };
    return node;
}

Var Tape::conv2d_transpose(Var x, Var w, Var bias, int stride, int pad, int out_h, int out_w) {
    if (x->value.shape.size() != 4 || w->value.shape.size() != 4)
        throw ContractError("conv2d_transpose: x must be [B,F,H',W'], w must be [F,C,kh,kw]");
    const int B = static_cast<int>(x->value.dim(0)), F = static_cast<int>(x->value.dim(1)),
              ih = static_cast<int>(x->value.dim(2)), iw = static_cast<int>(x->value.dim(3));
    const int C = static_cast<int>(w->value.dim(1)), kh = static_cast<int>(w->value.dim(2)),
              kw = static_cast<int>(w->value.dim(3));
    if (w->value.dim(0) != F) throw ContractError("conv2d_transpose: filter mismatch");
    if (bias->value.numel() != C) throw ContractError("conv2d_transpose: bias length != channels");
    if (conv_out_dim(out_h, kh, stride, pad) != ih || conv_out_dim(out_w, kw, stride, pad) != iw)
        throw ContractError("conv2d_transpose: output size inconsistent with geometry");
    const int ckk = C * kh * kw, ihw = ih * iw;

    // x viewed as [B*ihw, F] with positions fastest
    auto xmat = std::make_shared<RowMat>(static_cast<Eigen::Index>(B) * ihw, F);
    for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f)
            for (int p = 0; p < ihw; ++p)
                (*xmat)(static_cast<Eigen::Index>(b) * ihw + p, f) =
                    x->value.data[(static_cast<std::ptrdiff_t>(b) * F + f) * ihw + p];

    RowMat col = *xmat * w->value.mat(F, ckk); // [B*ihw, ckk]
    Tensor out({B, C, out_h, out_w});
    for (int b = 0; b < B; ++b)
        col2im_add(col.data() + static_cast<std::ptrdiff_t>(b) * ihw * ckk, C, out_h, out_w, kh,
                   kw, stride, pad, ih, iw,
                   out.data.data() + static_cast<std::ptrdiff_t>(b) * C * out_h * out_w);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            out.data.segment((static_cast<std::ptrdiff_t>(b) * C + c) * out_h * out_w,
                             out_h * out_w) += bias->value.data[c];

    Var node = push(std::move(out), x->requires_grad || w->requires_grad || bias->requires_grad);
    if (node->requires_grad)
        node->backward_fn = [=](Node& node) {
            RowMat dcol(static_cast<Eigen::Index>(B) * ihw, ckk);
            for (int b = 0; b < B; ++b)
                im2col(node.grad.data.data() + static_cast<std::ptrdiff_t>(b) * C * out_h * out_w,
                       C, out_h, out_w, kh, kw, stride, pad, ih, iw,
                       dcol.data() + static_cast<std::ptrdiff_t>(b) * ihw * ckk);
            if (bias->requires_grad)
                for (int b = 0; b < B; ++b)
                    for (int c = 0; c < C; ++c)
                        bias->grad.data[c] +=
                            node.grad.data
                                .segment((static_cast<std::ptrdiff_t>(b) * C + c) * out_h * out_w,
                                         out_h * out_w)
                                .sum();
            if (w->requires_grad) w->grad.mat(F, ckk) += xmat->transpose() * dcol;
            if (x->requires_grad) {
                RowMat dxmat = dcol * w->value.mat(F, ckk).transpose(); // [B*ihw, F]
                for (int b = 0; b < B; ++b)
                    for (int f = 0; f < F; ++f)
                        for (int p = 0; p < ihw; ++p)
                            x->grad.data[(static_cast<std::ptrdiff_t>(b) * F + f) * ihw + p] +=
                                dxmat(static_cast<Eigen::Index>(b) * ihw + p, f);
            }
        };
    return node;
}

Var Tape::sum_squared(Var a) {
    Tensor out({1});
    out.data[0] = a->value.data.square().sum();
    Var node = push(std::move(out), a->requires_grad);
    if (node->requires_grad)
        node->backward_fn = [a](Node& node) {
            a->grad.data += 2.0 * node.grad.data[0] * a->value.data;
        };
    return node;
}

void Tape::backward(Var loss) {
    if (loss->value.numel() != 1) throw ContractError("backward: loss must be scalar");
    if (!loss->requires_grad)
        throw ContractError("backward: loss does not depend on any trainable leaf");
    loss->grad.data[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
        if (it->requires_grad && it->backward_fn) it->backward_fn(*it);
}

Parameter& ParamStore::add(const std::string& name, std::vector<std::int64_t> shape) {
    for (const auto& p : params)
        if (p.name == name) throw ContractError("duplicate parameter name: " + name);
    params.emplace_back(name, std::move(shape));
    return params.back();
}

Parameter& ParamStore::find(const std::string& name) {
    for (auto& p : params)
        if (p.name == name) return p;
    throw ContractError("unknown parameter: " + name);
}

const Parameter& ParamStore::find(const std::string& name) const {
    for (const auto& p : params)
        if (p.name == name) return p;
    throw ContractError("unknown parameter: " + name);
}

void ParamStore::zero_grads() {
    for (auto& p : params) p.grad.data.setZero();
}

std::int64_t ParamStore::total_size() const {
    std::int64_t n = 0;
    for (const auto& p : params) n += p.value.numel();
    return n;
}

std::vector<double> ParamStore::pack_values() const {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(total_size()));
    for (const auto& p : params)
        flat.insert(flat.end(), p.value.data.data(), p.value.data.data() + p.value.numel());
    return flat;
}

void ParamStore::unpack_values(const std::vector<double>& flat) {
    if (flat.size() != static_cast<std::size_t>(total_size()))
        throw ContractError("unpack_values: size mismatch");
    std::size_t k = 0;
    for (auto& p : params) {
        for (Eigen::Index i = 0; i < p.value.numel(); ++i) p.value.data[i] = flat[k++];
    }
}

void adam_step(AdamState& state, ParamStore& params) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (auto& p : params.params) {
        p.moment1.data = state.beta1 * p.moment1.data + (1.0 - state.beta1) * p.grad.data;
        p.moment2.data = state.beta2 * p.moment2.data + (1.0 - state.beta2) * p.grad.data.square();
        p.value.data -=
            state.learning_rate * (p.moment1.data / bc1) / ((p.moment2.data / bc2).sqrt() + state.epsilon);
    }
}

void init_uniform_fan_in(Tensor& t, std::int64_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < t.numel(); ++i) t.data[i] = rng.uniform(-bound, bound);
}

std::pair<Var, Var> lstm_cell(Tape& tape, Var x, Var h, Var c, Var w, Var bias) {
    const auto hidden = h->value.dim(1);
    Var z = tape.add_row_broadcast(tape.matmul(tape.concat_cols(x, h), w), bias);
    Var gate_i = tape.sigmoid(tape.slice_cols(z, 0, hidden));
    Var gate_f = tape.sigmoid(tape.slice_cols(z, hidden, hidden));
    Var gate_g = tape.tanh(tape.slice_cols(z, 2 * hidden, hidden));
    Var gate_o = tape.sigmoid(tape.slice_cols(z, 3 * hidden, hidden));
    Var c_next = tape.add(tape.mul(gate_f, c), tape.mul(gate_i, gate_g));
    Var h_next = tape.mul(gate_o, tape.tanh(c_next));
    return {h_next, c_next};
}

} // namespace geoloop::ad
