#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "geoloop/autodiff.hpp"

#include "test_util.hpp"

using namespace geoloop;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (Eigen::Index i = 0; i < t.numel(); ++i) t.data[i] = rng.uniform(-scale, scale);
    return t;
}

// central finite differences of a scalar-valued forward against the
// analytic gradient accumulated in grads; worst relative error over probes
double fd_check(std::vector<Tensor*> leaves, const std::function<double(Tape&, std::vector<Var>&)>& forward,
                int probes, Rng& rng) {
    // analytic gradients; forward() builds the graph, runs backward, and
    // returns the loss value
    std::vector<Tensor> grads;
    for (Tensor* leaf : leaves) grads.emplace_back(leaf->shape);
    {
        Tape tape;
        std::vector<Var> vars;
        for (std::size_t i = 0; i < leaves.size(); ++i)
            vars.push_back(tape.leaf(leaves[i], &grads[i]));
        forward(tape, vars);
    }
    double worst = 0.0;
    const double h = 1e-5;
    for (int p = 0; p < probes; ++p) {
        const std::size_t which = rng.index(leaves.size());
        Tensor* leaf = leaves[which];
        const auto idx = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(leaf->numel())));

        auto eval = [&]() {
            Tape tape;
            std::vector<Var> vars;
            std::vector<Tensor> sink;
            for (Tensor* l : leaves) sink.emplace_back(l->shape);
            for (std::size_t i = 0; i < leaves.size(); ++i) vars.push_back(tape.leaf(leaves[i], &sink[i]));
            return forward(tape, vars);
        };
        const double saved = leaf->data[idx];
        leaf->data[idx] = saved + h;
        const double fp = eval();
        leaf->data[idx] = saved - h;
        const double fm = eval();
        leaf->data[idx] = saved;
        const double numeric = (fp - fm) / (2.0 * h);
        const double analytic = grads[which].data[idx];
        const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
        worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
    return worst;
}

} // namespace

TEST_CASE("dense layer with identity weights is the identity") {
    Rng rng(1);
    Tensor x = random_tensor({4, 6}, rng);
    Tensor w({6, 6});
    for (int i = 0; i < 6; ++i) w.data[i * 6 + i] = 1.0;
    Tensor b({6});

    Tape tape;
    Var out = tape.add_row_broadcast(tape.matmul(tape.input(x), tape.input(w)), tape.input(b));
    CHECK((out->value.data - x.data).abs().maxCoeff() < 1e-14);
}

TEST_CASE("conv2d matches the naive nested-loop oracle") {
    Rng rng(2);
    const int C = 2, F = 3, H = 5, W = 5, K = 3;
    Tensor x = random_tensor({1, C, H, W}, rng);
    Tensor w = random_tensor({F, C, K, K}, rng);
    Tensor b = random_tensor({F}, rng);

    for (int stride : {1, 2})
        for (int pad : {0, 1}) {
            const int oh = ad::conv_out_dim(H, K, stride, pad);
            const int ow = ad::conv_out_dim(W, K, stride, pad);
            Tape tape;
            Var out = tape.conv2d(tape.input(x), tape.input(w), tape.input(b), stride, pad);
            REQUIRE(out->value.shape == std::vector<std::int64_t>{1, F, oh, ow});

            for (int f = 0; f < F; ++f)
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox) {
                        double acc = b.data[f];
                        for (int c = 0; c < C; ++c)
                            for (int ky = 0; ky < K; ++ky)
                                for (int kx = 0; kx < K; ++kx) {
                                    const int y = oy * stride - pad + ky;
                                    const int xx = ox * stride - pad + kx;
                                    if (y < 0 || y >= H || xx < 0 || xx >= W) continue;
                                    acc += x.data[(c * H + y) * W + xx] *
                                           w.data[((f * C + c) * K + ky) * K + kx];
                                }
                        const double got = out->value.data[(f * oh + oy) * ow + ox];
                        CHECK(got == doctest::Approx(acc).epsilon(1e-12));
                    }
        }
}

TEST_CASE("transposed convolution is the adjoint of convolution") {
    Rng rng(3);
    const int C = 2, F = 4, H = 8, W = 8, K = 3, stride = 2, pad = 1;
    const int oh = ad::conv_out_dim(H, K, stride, pad), ow = ad::conv_out_dim(W, K, stride, pad);

    Tensor x = random_tensor({1, C, H, W}, rng);
    Tensor w = random_tensor({F, C, K, K}, rng);
    Tensor y = random_tensor({1, F, oh, ow}, rng);
    Tensor zero_f({F}), zero_c({C});

    Tape tape;
    Var conv = tape.conv2d(tape.input(x), tape.input(w), tape.input(zero_f), stride, pad);
    Var back = tape.conv2d_transpose(tape.input(y), tape.input(w), tape.input(zero_c), stride,
                                     pad, H, W);
    const double lhs = (conv->value.data * y.data).sum();
    const double rhs = (x.data * back->value.data).sum();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-11));
}

TEST_CASE("gradient of the squared norm is the vector itself") {
    Rng rng(4);
    Tensor x = random_tensor({3, 5}, rng);
    Tensor grad(x.shape);
    Tape tape;
    Var leaf = tape.leaf(&x, &grad);
    Var loss = tape.scale(tape.sum_squared(leaf), 0.5);
    tape.backward(loss);
    CHECK((grad.data - x.data).abs().maxCoeff() < 1e-14);
}

TEST_CASE("finite-difference checks per primitive") {
    Rng rng(5);

    SUBCASE("dense + tanh + mse") {
        Tensor x = random_tensor({4, 3}, rng);
        Tensor w = random_tensor({3, 2}, rng);
        Tensor b = random_tensor({2}, rng);
        Tensor target = random_tensor({4, 2}, rng);
        auto forward = [&](Tape& t, std::vector<Var>& v) {
            Var out = t.tanh(t.add_row_broadcast(t.matmul(v[0], v[1]), v[2]));
            Var loss = t.scale(t.sum_squared(t.sub(out, t.input(target))), 1.0 / 4.0);
            t.backward(loss);
            return loss->value.data[0];
        };
        CHECK(fd_check({&x, &w, &b}, forward, 10, rng) < 1e-4);
    }
    SUBCASE("relu and sigmoid chain") {
        Tensor x = random_tensor({5, 4}, rng);
        Tensor w = random_tensor({4, 4}, rng);
        auto forward = [&](Tape& t, std::vector<Var>& v) {
            Var h = t.relu(t.matmul(v[0], v[1]));
            Var out = t.sigmoid(h);
            Var loss = t.sum_squared(out);
            t.backward(loss);
            return loss->value.data[0];
        };
        CHECK(fd_check({&x, &w}, forward, 10, rng) < 1e-4);
    }
    SUBCASE("conv2d") {
        Tensor x = random_tensor({2, 2, 6, 6}, rng);
        Tensor w = random_tensor({3, 2, 3, 3}, rng);
        Tensor b = random_tensor({3}, rng);
        auto forward = [&](Tape& t, std::vector<Var>& v) {
            Var out = t.relu(t.conv2d(v[0], v[1], v[2], 2, 1));
            Var loss = t.sum_squared(out);
            t.backward(loss);
            return loss->value.data[0];
        };
        CHECK(fd_check({&x, &w, &b}, forward, 10, rng) < 1e-4);
    }
    SUBCASE("conv2d_transpose") {
        Tensor x = random_tensor({2, 3, 3, 3}, rng);
        Tensor w = random_tensor({3, 2, 3, 3}, rng);
        Tensor b = random_tensor({2}, rng);
        auto forward = [&](Tape& t, std::vector<Var>& v) {
            Var out = t.conv2d_transpose(v[0], v[1], v[2], 2, 1, 6, 6);
            Var loss = t.sum_squared(out);
            t.backward(loss);
            return loss->value.data[0];
        };
        CHECK(fd_check({&x, &w, &b}, forward, 10, rng) < 1e-4);
    }
    SUBCASE("concat, slice, mul, scale") {
        Tensor a = random_tensor({3, 2}, rng);
        Tensor b = random_tensor({3, 4}, rng);
        auto forward = [&](Tape& t, std::vector<Var>& v) {
            Var cat = t.concat_cols(v[0], v[1]);
            Var left = t.slice_cols(cat, 0, 3);
            Var right = t.slice_cols(cat, 3, 3);
            Var loss = t.sum_squared(t.scale(t.mul(left, right), 0.7));
            t.backward(loss);
            return loss->value.data[0];
        };
        CHECK(fd_check({&a, &b}, forward, 10, rng) < 1e-4);
    }
    SUBCASE("lstm cell over three steps, gradient w.r.t. the initial state") {
        const int B = 2, D = 3, H = 4;
        Tensor h0 = random_tensor({B, H}, rng);
        Tensor c0 = random_tensor({B, H}, rng);
        Tensor w = random_tensor({D + H, 4 * H}, rng);
        Tensor b = random_tensor({4 * H}, rng);
        std::vector<Tensor> xs;
        for (int s = 0; s < 3; ++s) xs.push_back(random_tensor({B, D}, rng));
        auto forward = [&](Tape& t, std::vector<Var>& v) {
            Var h = v[0], c = v[1];
            for (int s = 0; s < 3; ++s) {
                auto [hn, cn] = ad::lstm_cell(t, t.input(xs[static_cast<std::size_t>(s)]), h, c,
                                              v[2], v[3]);
                h = hn;
                c = cn;
            }
            Var loss = t.sum_squared(h);
            t.backward(loss);
            return loss->value.data[0];
        };
        CHECK(fd_check({&h0, &c0, &w, &b}, forward, 12, rng) < 1e-4);
    }
}

TEST_CASE("backward is linear in the loss combination") {
    Rng rng(6);
    Tensor x = random_tensor({4, 4}, rng);
    Tensor w = random_tensor({4, 3}, rng);
    const double a = 1.7, b = -0.6;

    auto grads_of = [&](double ca, double cb) {
        Tensor gx(x.shape), gw(w.shape);
        Tape tape;
        Var lx = tape.leaf(&x, &gx);
        Var lw = tape.leaf(&w, &gw);
        Var h = tape.tanh(tape.matmul(lx, lw));
        Var l1 = tape.sum_squared(h);
        Var l2 = tape.sum_squared(tape.sigmoid(h));
        Var loss = tape.add(tape.scale(l1, ca), tape.scale(l2, cb));
        tape.backward(loss);
        return std::make_pair(gx, gw);
    };

    const auto [gx1, gw1] = grads_of(1.0, 0.0);
    const auto [gx2, gw2] = grads_of(0.0, 1.0);
    const auto [gxc, gwc] = grads_of(a, b);
    CHECK((gxc.data - (a * gx1.data + b * gx2.data)).abs().maxCoeff() < 1e-10);
    CHECK((gwc.data - (a * gw1.data + b * gw2.data)).abs().maxCoeff() < 1e-10);
}

TEST_CASE("backward without a forward-dependent loss is a state error") {
    Tape tape;
    Var c = tape.input(Tensor({1}));
    CHECK_THROWS_AS(tape.backward(c), ContractError);
}

TEST_CASE("adam") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        ad::ParamStore store;
        auto& p = store.add("p", {4});
        p.value.data.setConstant(1.25);
        ad::AdamState adam;
        for (int i = 0; i < 10; ++i) ad::adam_step(adam, store);
        CHECK((p.value.data == 1.25).all());
    }
    SUBCASE("constant gradient step size approaches the learning rate") {
        ad::ParamStore store;
        auto& p = store.add("p", {1});
        ad::AdamState adam;
        adam.learning_rate = 1e-3;
        double prev = p.value.data[0];
        double step = 0.0;
        for (int i = 0; i < 500; ++i) {
            p.grad.data[0] = 3.0; // constant positive gradient
            ad::adam_step(adam, store);
            step = prev - p.value.data[0];
            prev = p.value.data[0];
        }
        CHECK(step == doctest::Approx(1e-3).epsilon(1e-3));
    }
    SUBCASE("1-D quadratic reaches the minimum") {
        ad::ParamStore store;
        auto& p = store.add("x", {1});
        ad::AdamState adam;
        adam.learning_rate = 1e-3;
        for (int i = 0; i < 10000; ++i) {
            p.grad.data[0] = 2.0 * (p.value.data[0] - 3.0);
            ad::adam_step(adam, store);
        }
        CHECK(std::abs(p.value.data[0] - 3.0) < 1e-3);
    }
}

TEST_CASE("parameter store pack/unpack round trip") {
    Rng rng(7);
    ad::ParamStore store;
    ad::init_uniform_fan_in(store.add("a", {3, 4}).value, 3, rng);
    ad::init_uniform_fan_in(store.add("b", {5}).value, 5, rng);
    const auto flat = store.pack_values();
    ad::ParamStore other;
    other.add("a", {3, 4});
    other.add("b", {5});
    other.unpack_values(flat);
    CHECK(exact_eq(other.find("a").value.data, store.find("a").value.data));
    CHECK(exact_eq(other.find("b").value.data, store.find("b").value.data));
    CHECK_THROWS_AS(store.add("a", {1}), ContractError);
}
