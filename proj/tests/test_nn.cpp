#include <doctest.h>

#include <cmath>
#include <fstream>

#include <microchar/nn/adam.hpp>
#include <microchar/nn/checkpoint.hpp>
#include <microchar/nn/ops.hpp>

#include "gradcheck.hpp"

using namespace microchar;
using nn::TensorT;
using DTensor = TensorT<double>;

TEST_SUITE("conv_forward") {
    TEST_CASE("3x3 all-ones input and kernel sums to 9") {
        nn::Conv2d<double> conv(1, 1, 3, 1, 0);
        std::fill(conv.w.begin(), conv.w.end(), 1.0);
        DTensor x(1, 1, 3, 3);
        std::fill(x.data.begin(), x.data.end(), 1.0);
        const DTensor y = conv.forward(x);
        CHECK(y.h == 1);
        CHECK(y.w == 1);
        CHECK(y.data[0] == doctest::Approx(9.0));
    }

    TEST_CASE("1x1 identity kernel is the exact identity") {
        nn::Conv2d<float> conv(2, 2, 1);
        // Identity: weight[oc][ic] = (oc == ic).
        conv.w[0] = 1.0f; // (0,0)
        conv.w[3] = 1.0f; // (1,1)
        Rng rng(5);
        nn::Tensor x(2, 2, 5, 7);
        for (auto& v : x.data) v = static_cast<float>(rng.next_range(-2.0, 2.0));
        const nn::Tensor y = conv.forward(x);
        CHECK(y.data == x.data);
    }

    TEST_CASE("matches a naive 7-loop oracle on random tensors") {
        Rng rng(17);
        for (int rep = 0; rep < 4; ++rep) {
            const int k = rep % 2 == 0 ? 3 : 5;
            nn::Conv2d<double> conv(3, 2, k);
            conv.init(rng);
            for (auto& b : conv.b) b = rng.next_range(-0.5, 0.5);
            DTensor x = gradcheck::random_tensor(rng, 2, 3, 8, 8);
            const DTensor y = conv.forward(x);
            const int p = k / 2;
            for (int n = 0; n < 2; ++n) {
                for (int oc = 0; oc < 2; ++oc) {
                    for (int oy = 0; oy < 8; ++oy) {
                        for (int ox = 0; ox < 8; ++ox) {
                            double acc = conv.b[static_cast<std::size_t>(oc)];
                            for (int ic = 0; ic < 3; ++ic) {
                                for (int ky = 0; ky < k; ++ky) {
                                    for (int kx = 0; kx < k; ++kx) {
                                        const int iy = oy + ky - p, ix = ox + kx - p;
                                        if (iy < 0 || iy >= 8 || ix < 0 || ix >= 8) continue;
                                        acc += conv.w[((static_cast<std::size_t>(oc) * 3 + ic) * k + ky) * k + kx] *
                                               x.at(n, ic, iy, ix);
                                    }
                                }
                            }
                            CHECK(std::abs(acc - y.at(n, oc, oy, ox)) < 1e-6);
                        }
                    }
                }
            }
        }
    }

    TEST_CASE("shape errors") {
        nn::Conv2d<float> conv(2, 4, 3);
        nn::Tensor bad(1, 3, 8, 8);
        CHECK_THROWS_AS(conv.forward(bad), ShapeMismatch);
        CHECK_THROWS_AS(nn::Conv2d<float>(1, 1, 4), InvalidSpec); // even kernel
        nn::Conv2d<float> strided(1, 1, 3, 2, 0);
        nn::Tensor odd(1, 1, 6, 6); // (6-3)%2 != 0
        CHECK_THROWS_AS(strided.forward(odd), ShapeMismatch);
    }

    TEST_CASE("forward is deterministic") {
        Rng rng(3);
        nn::Conv2d<float> conv(2, 3, 5);
        conv.init(rng);
        nn::Tensor x(1, 2, 12, 12);
        for (auto& v : x.data) v = static_cast<float>(rng.next_range(-1.0, 1.0));
        const nn::Tensor a = conv.forward(x);
        const nn::Tensor b = conv.forward(x);
        CHECK(a.data == b.data);
    }
}

TEST_SUITE("gradients") {
    TEST_CASE("conv2d gradients match finite differences") {
        Rng rng(100);
        for (const int k : {1, 3, 5}) {
            nn::Conv2d<double> conv(2, 2, k);
            conv.init(rng);
            for (auto& b : conv.b) b = rng.next_range(-0.2, 0.2);
            DTensor x = gradcheck::random_tensor(rng, 2, 2, 5, 6);
            const DTensor coef = gradcheck::random_tensor(rng, 2, 2, 5, 6);

            conv.zero_grad();
            const DTensor dx = conv.backward(x, coef);
            auto loss = [&] { return gradcheck::projection_loss(conv.forward(x), coef); };
            CHECK(gradcheck::max_rel_error(x.data, dx.data, loss) < 1e-4);
            CHECK(gradcheck::max_rel_error(conv.w, conv.dw, loss) < 1e-4);
            CHECK(gradcheck::max_rel_error(conv.b, conv.db, loss) < 1e-4);
        }
    }

    TEST_CASE("strided conv gradients (generic path)") {
        Rng rng(101);
        nn::Conv2d<double> conv(2, 3, 3, 2, 1);
        conv.init(rng);
        DTensor x = gradcheck::random_tensor(rng, 1, 2, 7, 7);
        const DTensor y = conv.forward(x);
        CHECK(y.h == 4);
        const DTensor coef = gradcheck::random_tensor(rng, 1, 3, 4, 4);
        conv.zero_grad();
        const DTensor dx = conv.backward(x, coef);
        auto loss = [&] { return gradcheck::projection_loss(conv.forward(x), coef); };
        CHECK(gradcheck::max_rel_error(x.data, dx.data, loss) < 1e-4);
        CHECK(gradcheck::max_rel_error(conv.w, conv.dw, loss) < 1e-4);
    }

    TEST_CASE("transpose conv doubles the extent and matches FD") {
        Rng rng(102);
        nn::ConvT2x2<double> up(3, 2);
        up.init(rng);
        DTensor x = gradcheck::random_tensor(rng, 1, 3, 4, 5);
        const DTensor y = up.forward(x);
        CHECK(y.h == 8);
        CHECK(y.w == 10);
        const DTensor coef = gradcheck::random_tensor(rng, 1, 2, 8, 10);
        up.zero_grad();
        const DTensor dx = up.backward(x, coef);
        auto loss = [&] { return gradcheck::projection_loss(up.forward(x), coef); };
        CHECK(gradcheck::max_rel_error(x.data, dx.data, loss) < 1e-4);
        CHECK(gradcheck::max_rel_error(up.w, up.dw, loss) < 1e-4);
        CHECK(gradcheck::max_rel_error(up.b, up.db, loss) < 1e-4);
    }

    TEST_CASE("maxpool gradients") {
        Rng rng(103);
        DTensor x = gradcheck::random_tensor(rng, 2, 2, 6, 6);
        const auto fwd = nn::maxpool2x2_forward(x);
        const DTensor coef = gradcheck::random_tensor(rng, 2, 2, 3, 3);
        const DTensor dx = nn::maxpool2x2_backward(fwd, x, coef);
        auto loss = [&] {
            return gradcheck::projection_loss(nn::maxpool2x2_forward(x).out, coef);
        };
        CHECK(gradcheck::max_rel_error(x.data, dx.data, loss, 1e-5) < 1e-4);
    }

    TEST_CASE("relu gradients") {
        Rng rng(104);
        DTensor x = gradcheck::random_tensor(rng, 1, 3, 4, 4, 1.0, 0.2);
        const DTensor coef = gradcheck::random_tensor(rng, 1, 3, 4, 4);
        const DTensor dx = nn::relu_backward(x, coef);
        auto loss = [&] { return gradcheck::projection_loss(nn::relu_forward(x), coef); };
        CHECK(gradcheck::max_rel_error(x.data, dx.data, loss) < 1e-4);
    }

    TEST_CASE("sigmoid gradients") {
        Rng rng(105);
        DTensor x = gradcheck::random_tensor(rng, 1, 2, 3, 5, 2.0);
        const DTensor coef = gradcheck::random_tensor(rng, 1, 2, 3, 5);
        const DTensor y = nn::sigmoid_forward(x);
        const DTensor dx = nn::sigmoid_backward(y, coef);
        auto loss = [&] { return gradcheck::projection_loss(nn::sigmoid_forward(x), coef); };
        CHECK(gradcheck::max_rel_error(x.data, dx.data, loss) < 1e-4);
    }

    TEST_CASE("softmax rows sum to one and gradients match") {
        Rng rng(106);
        DTensor x = gradcheck::random_tensor(rng, 2, 4, 1, 1, 2.0);
        const DTensor y = nn::softmax_forward(x);
        for (int i = 0; i < 2; ++i) {
            double row = 0.0;
            for (int j = 0; j < 4; ++j) {
                row += y.at(i, j, 0, 0);
                CHECK(y.at(i, j, 0, 0) >= 0.0);
            }
            CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
        }
        const DTensor coef = gradcheck::random_tensor(rng, 2, 4, 1, 1);
        const DTensor dx = nn::softmax_backward(y, coef);
        auto loss = [&] { return gradcheck::projection_loss(nn::softmax_forward(x), coef); };
        CHECK(gradcheck::max_rel_error(x.data, dx.data, loss) < 1e-4);
    }

    TEST_CASE("softmax of a zero row is uniform") {
        DTensor x(1, 3, 1, 1);
        const DTensor y = nn::softmax_forward(x);
        for (int j = 0; j < 3; ++j) CHECK(y.at(0, j, 0, 0) == doctest::Approx(1.0 / 3.0));
    }

    TEST_CASE("global average pool gradients") {
        Rng rng(107);
        DTensor x = gradcheck::random_tensor(rng, 2, 3, 4, 4);
        const DTensor coef = gradcheck::random_tensor(rng, 2, 3, 1, 1);
        const DTensor dx = nn::global_avg_pool_backward(x, coef);
        auto loss = [&] {
            return gradcheck::projection_loss(nn::global_avg_pool_forward(x), coef);
        };
        CHECK(gradcheck::max_rel_error(x.data, dx.data, loss) < 1e-4);
    }

    TEST_CASE("linear gradients") {
        Rng rng(108);
        nn::Linear<double> fc(6, 4);
        fc.init(rng);
        DTensor x = gradcheck::random_tensor(rng, 3, 6, 1, 1);
        const DTensor coef = gradcheck::random_tensor(rng, 3, 4, 1, 1);
        fc.zero_grad();
        const DTensor dx = fc.backward(x, coef);
        auto loss = [&] { return gradcheck::projection_loss(fc.forward(x), coef); };
        CHECK(gradcheck::max_rel_error(x.data, dx.data, loss) < 1e-4);
        CHECK(gradcheck::max_rel_error(fc.w, fc.dw, loss) < 1e-4);
        CHECK(gradcheck::max_rel_error(fc.b, fc.db, loss) < 1e-4);
    }

    TEST_CASE("concat splits gradients back to both inputs") {
        Rng rng(109);
        DTensor a = gradcheck::random_tensor(rng, 2, 2, 3, 3);
        DTensor b = gradcheck::random_tensor(rng, 2, 3, 3, 3);
        const DTensor coef = gradcheck::random_tensor(rng, 2, 5, 3, 3);
        const auto [da, db] = nn::split_channels(coef, 2, 3);
        auto loss_a = [&] {
            return gradcheck::projection_loss(nn::concat_channels(a, b), coef);
        };
        CHECK(gradcheck::max_rel_error(a.data, da.data, loss_a) < 1e-4);
        CHECK(gradcheck::max_rel_error(b.data, db.data, loss_a) < 1e-4);
    }
}

TEST_SUITE("losses") {
    TEST_CASE("mse of identical tensors is zero") {
        Rng rng(110);
        const DTensor x = gradcheck::random_tensor(rng, 1, 2, 3, 3);
        CHECK(nn::mse_loss(x, x).value == doctest::Approx(0.0));
    }

    TEST_CASE("bce(0.5, 1) = ln 2") {
        DTensor p(1, 1, 1, 1);
        p.data[0] = 0.5;
        DTensor t(1, 1, 1, 1);
        t.data[0] = 1.0;
        CHECK(nn::bce_loss(p, t).value == doctest::Approx(std::log(2.0)));
    }

    TEST_CASE("loss gradients match finite differences") {
        Rng rng(111);
        // MSE
        {
            DTensor p = gradcheck::random_tensor(rng, 2, 2, 3, 3);
            const DTensor t = gradcheck::random_tensor(rng, 2, 2, 3, 3);
            const auto l = nn::mse_loss(p, t);
            auto loss = [&] { return nn::mse_loss(p, t).value; };
            CHECK(gradcheck::max_rel_error(p.data, l.grad.data, loss) < 1e-4);
        }
        // BCE (probabilities in a safe interior range)
        {
            DTensor p(1, 1, 4, 4);
            DTensor t(1, 1, 4, 4);
            for (std::size_t i = 0; i < p.size(); ++i) {
                p.data[i] = rng.next_range(0.15, 0.85);
                t.data[i] = rng.next_below(2) ? 1.0 : 0.0;
            }
            const auto l = nn::bce_loss(p, t);
            auto loss = [&] { return nn::bce_loss(p, t).value; };
            CHECK(gradcheck::max_rel_error(p.data, l.grad.data, loss) < 1e-4);
        }
        // CE on probability rows
        {
            DTensor p(3, 4, 1, 1);
            for (auto& v : p.data) v = rng.next_range(0.1, 0.9);
            const std::vector<int> labels{1, 3, 0};
            const auto l = nn::ce_loss(p, labels);
            auto loss = [&] { return nn::ce_loss(p, labels).value; };
            CHECK(gradcheck::max_rel_error(p.data, l.grad.data, loss) < 1e-4);
        }
    }

    TEST_CASE("shape mismatches throw") {
        DTensor a(1, 1, 2, 2), b(1, 1, 3, 3);
        CHECK_THROWS_AS(nn::mse_loss(a, b), ShapeMismatch);
        CHECK_THROWS_AS(nn::bce_loss(a, b), ShapeMismatch);
    }
}

TEST_SUITE("adam") {
    TEST_CASE("first step on f(w)=w^2 moves by about lr") {
        std::vector<double> w{1.0};
        std::vector<double> g{2.0}; // df/dw at w=1
        nn::Adam<double> adam(0.1);
        adam.step({{&w, &g}});
        CHECK(w[0] == doctest::Approx(0.9).epsilon(1e-6));
    }

    TEST_CASE("zero gradient leaves parameters unchanged") {
        std::vector<double> w{1.5, -2.0};
        std::vector<double> g{0.0, 0.0};
        nn::Adam<double> adam(0.05);
        adam.step({{&w, &g}});
        adam.step({{&w, &g}});
        CHECK(w[0] == 1.5);
        CHECK(w[1] == -2.0);
        CHECK(adam.step_count == 2);
    }

    TEST_CASE("200 steps shrink a 2-D quadratic below 1e-3") {
        std::vector<double> w{3.0, -2.0};
        std::vector<double> g(2, 0.0);
        nn::Adam<double> adam(0.05);
        for (int i = 0; i < 200; ++i) {
            g[0] = 2.0 * w[0];
            g[1] = 2.0 * w[1];
            adam.step({{&w, &g}});
        }
        CHECK(std::sqrt(w[0] * w[0] + w[1] * w[1]) < 1e-3);
    }
}

TEST_SUITE("param_count") {
    TEST_CASE("conv 1->8 k3 with bias has 80 parameters") {
        nn::Conv2d<float> conv(1, 8, 3);
        CHECK(conv.param_count() == 80);
    }
}

TEST_SUITE("checkpoint") {
    TEST_CASE("round trip preserves bytes and structure") {
        Rng rng(60);
        nn::Conv2d<float> conv(2, 3, 3);
        conv.init(rng);
        nn::Linear<float> fc(4, 2);
        fc.init(rng);
        std::vector<nn::ParamRef<float>> refs;
        for (auto& r : conv.param_refs()) refs.push_back(r);
        for (auto& r : fc.param_refs()) refs.push_back(r);

        const std::string path = "/tmp/microchar_ckpt_test.ckpt";
        nn::save_checkpoint(path, "{\"type\":\"test\"}", refs);
        const nn::Checkpoint ckpt = nn::load_checkpoint(path);
        CHECK(ckpt.arch_json == "{\"type\":\"test\"}");
        REQUIRE(ckpt.blobs.size() == 4);
        CHECK(ckpt.blobs[0] == conv.w);
        CHECK(ckpt.blobs[1] == conv.b);
        CHECK(ckpt.blobs[2] == fc.w);
        CHECK(ckpt.blobs[3] == fc.b);

        nn::Conv2d<float> conv2(2, 3, 3);
        nn::Linear<float> fc2(4, 2);
        std::vector<nn::ParamRef<float>> refs2;
        for (auto& r : conv2.param_refs()) refs2.push_back(r);
        for (auto& r : fc2.param_refs()) refs2.push_back(r);
        nn::restore_params(ckpt, refs2);
        CHECK(conv2.w == conv.w);
        CHECK(fc2.b == fc.b);
    }

    TEST_CASE("loading garbage throws NoCheckpoint") {
        const std::string path = "/tmp/microchar_ckpt_bad.ckpt";
        {
            std::ofstream out(path, std::ios::binary);
            out << "not a checkpoint";
        }
        CHECK_THROWS_AS(nn::load_checkpoint(path), NoCheckpoint);
        CHECK_THROWS_AS(nn::load_checkpoint("/tmp/does_not_exist.ckpt"), NoCheckpoint);
    }
}
