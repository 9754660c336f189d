#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geoloop/io.hpp"
#include "geoloop/rng.hpp"

namespace geoloop::ad {

// Dense row-major tensor of 64-bit floats.
struct Tensor {
    std::vector<std::int64_t> shape;
    Eigen::ArrayXd data;

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
        data = Eigen::ArrayXd::Zero(numel_of(shape));
    }
    Tensor(std::vector<std::int64_t> s, Eigen::ArrayXd d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != numel_of(shape))
            throw ContractError("Tensor: data length != product(shape)");
    }

    static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
        std::int64_t n = 1;
        for (auto d : s) n *= d;
        return n;
    }
    std::int64_t numel() const { return data.size(); }
    std::int64_t dim(std::size_t i) const { return shape.at(i); }

    using MatrixMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using ConstMatrixMap =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

    // view as rows x cols matrix; total size must match
    MatrixMap mat(std::int64_t rows, std::int64_t cols) {
        if (rows * cols != numel()) throw ContractError("Tensor::mat: size mismatch");
        return MatrixMap(data.data(), rows, cols);
    }
    ConstMatrixMap mat(std::int64_t rows, std::int64_t cols) const {
        if (rows * cols != numel()) throw ContractError("Tensor::mat: size mismatch");
        return ConstMatrixMap(data.data(), rows, cols);
    }
    // 2-D tensors only
    MatrixMap mat() { return mat(shape.at(0), shape.at(1)); }
    ConstMatrixMap mat() const { return mat(shape.at(0), shape.at(1)); }
};

struct Node;
using Var = Node*;

struct Node {
    Tensor value;
    Tensor grad;                 // allocated when requires_grad
    bool requires_grad = false;
    std::function<void(Node&)> backward_fn; // accumulates into parents
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the
// backward pass is a reverse sweep. A tape is built per forward pass and
// is single-threaded.
class Tape {
public:
    // Trainable leaf: reads *value, accumulates into *grad_sink.
    Var leaf(const Tensor* value, Tensor* grad_sink);
    // Constant input, no gradient.
    Var input(Tensor value);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var add_row_broadcast(Var x, Var bias);
    Var tanh(Var x);
    Var sigmoid(Var x);
    Var relu(Var x);
    Var concat_cols(Var a, Var b);
    Var slice_cols(Var x, std::int64_t start, std::int64_t len);
    Var reshape(Var x, std::vector<std::int64_t> shape);
    // x [B,C,H,W], w [F,C,kh,kw], bias [F] -> [B,F,H',W']
    Var conv2d(Var x, Var w, Var bias, int stride, int pad);
    // adjoint map: x [B,F,H',W'], w [F,C,kh,kw], bias [C] -> [B,C,out_h,out_w]
    Var conv2d_transpose(Var x, Var w, Var bias, int stride, int pad, int out_h, int out_w);
    Var sum_squared(Var a); // scalar sum of squares over all entries

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. loss must
    // be scalar and belong to this tape; forward values are already cached.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

private:
    Var push(Tensor value, bool requires_grad);
    std::deque<Node> nodes_;
};

// Named trainable tensor with its gradient and Adam moments.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor moment1;
    Tensor moment2;

    explicit Parameter(std::string n, std::vector<std::int64_t> shape)
        : name(std::move(n)), value(shape), grad(shape), moment1(shape), moment2(std::move(shape)) {}
};

struct ParamStore {
    std::deque<Parameter> params;

    Parameter& add(const std::string& name, std::vector<std::int64_t> shape);
    Parameter& find(const std::string& name);
    const Parameter& find(const std::string& name) const;
    void zero_grads();
    std::int64_t total_size() const;

    // flat concatenation in declaration order
    std::vector<double> pack_values() const;
    void unpack_values(const std::vector<double>& flat);
};

struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t step = 0;
};

// Standard Adam update with bias correction; moments live on the parameters.
void adam_step(AdamState& state, ParamStore& params);

// uniform fan-in init, U[-1/sqrt(fan_in), 1/sqrt(fan_in)]
void init_uniform_fan_in(Tensor& t, std::int64_t fan_in, Rng& rng);

// One LSTM step. x [B,D], h and c [B,H], w [D+H,4H] with gate order
// (input, forget, cell, output), bias [4H]. Returns (h', c').
std::pair<Var, Var> lstm_cell(Tape& tape, Var x, Var h, Var c, Var w, Var bias);

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

} // namespace geoloop::ad
