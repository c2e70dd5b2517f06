// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "camo/tensor.hpp"
#include "helpers.hpp"

using namespace camo;
using camo::testing::gradcheck;
using camo::testing::random_tensor;

TEST_CASE("tensor construction validates shape and data") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), DimensionError);
    CHECK_THROWS_AS(Tensor({0}, {}), DimensionError);
    CHECK_THROWS_AS(Tensor({1}, {std::nan("")}), NumericError);
    Tensor t({2, 2}, {1, 2, 3, 4});
    CHECK(t.numel() == 4);
    CHECK(t.at(1, 0) == 3.0);
}

TEST_CASE("matmul identity and hand-computed dot product") {
    Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
    Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
    Tensor prod = matmul(eye, m);
    CHECK(max_abs_diff(prod, m) == 0.0);

    // [[1,2]] * [[3],[4]] = [[1*3 + 2*4]] = [[11]]
    Tensor a = Tensor::matrix({{1, 2}});
    Tensor b = Tensor::matrix({{3}, {4}});
    CHECK(matmul(a, b).item() == 11.0);

    CHECK_THROWS_AS(matmul(a, Tensor::matrix({{1, 2}})), DimensionError);
}

TEST_CASE("matmul gradient matches finite differences") {
    Rng rng(7);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    auto loss = [&] { return sum(matmul(a, b)); };
    auto res = gradcheck(loss, {a, b});
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("softmax basics") {
    Tensor flat = softmax(Tensor::row_vector({0, 0, 0}), 0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(flat.at(i) == Catch::Approx(1.0 / 3.0));

    // shift invariance
    Rng rng(3);
    Tensor x = random_tensor({5}, rng, false);
    std::vector<double> shifted = x.data();
    for (double& v : shifted) v += 17.25;
    Tensor y1 = softmax(x, 0);
    Tensor y2 = softmax(Tensor({5}, shifted), 0);
    CHECK(max_abs_diff(y1, y2) < 1e-12);

    // direct exp-normalize oracle for [1, 2]
    const double e1 = std::exp(1.0), e2 = std::exp(2.0);
    Tensor s = softmax(Tensor::row_vector({1, 2}), 0);
    CHECK(s.at(0) == Catch::Approx(e1 / (e1 + e2)).epsilon(1e-12));
    CHECK(s.at(1) == Catch::Approx(e2 / (e1 + e2)).epsilon(1e-12));

    CHECK_THROWS_AS(softmax(x, 1), DimensionError);
}

TEST_CASE("softmax rows sum to one on random input") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor({4, 6}, rng, false, -30.0, 30.0);
        Tensor y = softmax(x, 1);
        for (std::size_t r = 0; r < 4; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < 6; ++c) s += y.at(r, c);
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("softmax gradient matches finite differences") {
    Rng rng(5);
    Tensor x = random_tensor({3, 4}, rng);
    Tensor w = random_tensor({3, 4}, rng, false);
    auto loss = [&] { return sum(mul(softmax(x, 1), w)); };
    CHECK(gradcheck(loss, {x}).max_rel_err < 1e-4);
}

TEST_CASE("log_softmax gradient matches finite differences") {
    Rng rng(6);
    Tensor x = random_tensor({2, 5}, rng);
    Tensor w = random_tensor({2, 5}, rng, false);
    auto loss = [&] { return sum(mul(log_softmax(x, 1), w)); };
    CHECK(gradcheck(loss, {x}).max_rel_err < 1e-4);
}

TEST_CASE("leaky_relu values and slope gradient") {
    CHECK(leaky_relu(Tensor::scalar(2.0), 0.01).item() == 2.0);
    CHECK(leaky_relu(Tensor::scalar(-1.0), 0.01).item() == Catch::Approx(-0.01));
    CHECK_THROWS_AS(leaky_relu(Tensor::scalar(1.0), 0.0), ConfigError);
    CHECK_THROWS_AS(leaky_relu(Tensor::scalar(1.0), 1.0), ConfigError);

    Tensor x = Tensor::scalar(-3.0, true);
    auto loss = [&] { return leaky_relu(x, 0.01); };
    Tensor out = loss();
    backward(out);
    CHECK(std::abs(x.grad()[0] - 0.01) < 1e-8);
    CHECK(gradcheck(loss, {x}).max_rel_err < 1e-4);
}

TEST_CASE("concat identity, shape arithmetic, and backward routing") {
    Rng rng(9);
    Tensor one = random_tensor({2, 3}, rng, false);
    Tensor same = concat({one}, 1);
    CHECK(max_abs_diff(one, same) == 0.0);

    Tensor a = random_tensor({4, 8}, rng, false);
    Tensor b = random_tensor({4, 8}, rng, false);
    Tensor c = random_tensor({4, 8}, rng, false);
    Tensor cat = concat({a, b, c}, 1);
    CHECK(cat.shape() == Shape{4, 24});
    CHECK(cat.at(2, 9) == b.at(2, 1));

    Tensor ga = random_tensor({2, 2}, rng);
    Tensor gb = random_tensor({2, 3}, rng);
    Tensor w = random_tensor({2, 5}, rng, false);
    auto loss = [&] { return sum(mul(concat({ga, gb}, 1), w)); };
    CHECK(gradcheck(loss, {ga, gb}).max_rel_err < 1e-4);

    CHECK_THROWS_AS(concat({a, random_tensor({3, 8}, rng, false)}, 1), DimensionError);
}

TEST_CASE("layer_norm constant row and hand case") {
    Tensor gain = Tensor::full({4}, 1.0);
    Tensor bias = Tensor::zeros({4});
    Tensor constant = Tensor::matrix({{5, 5, 5, 5}});
    Tensor normed = layer_norm(constant, gain, bias, 1e-6);
    for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(normed.at(0, c)) < 1e-9);

    // [1,3]: mean 2, var 1 -> normalized [-1, 1] as eps -> 0
    Tensor two = layer_norm(Tensor::matrix({{1, 3}}), Tensor::full({2}, 1.0), Tensor::zeros({2}),
                            1e-12);
    CHECK(two.at(0, 0) == Catch::Approx(-1.0).epsilon(1e-6));
    CHECK(two.at(0, 1) == Catch::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("layer_norm gradient matches finite differences") {
    Rng rng(13);
    Tensor x = random_tensor({3, 6}, rng);
    Tensor gain = random_tensor({6}, rng, true, 0.5, 1.5);
    Tensor bias = random_tensor({6}, rng);
    Tensor w = random_tensor({3, 6}, rng, false);
    auto loss = [&] { return sum(mul(layer_norm(x, gain, bias, 1e-6), w)); };
    CHECK(gradcheck(loss, {x, gain, bias}).max_rel_err < 1e-4);
}

TEST_CASE("backward computes polynomial derivative") {
    Tensor x({2}, {1.0, 2.0}, true);
    Tensor loss = sum(mul(x, x));
    backward(loss);
    CHECK(x.grad()[0] == Catch::Approx(2.0));
    CHECK(x.grad()[1] == Catch::Approx(4.0));
}

TEST_CASE("backward twice without rebuilding errors") {
    Tensor x({2}, {1.0, 2.0}, true);
    Tensor loss = sum(x);
    backward(loss);
    CHECK_THROWS_AS(backward(loss), ContractError);
}

TEST_CASE("backward rejects non-scalar seed") {
    Tensor x({2, 2}, {1, 2, 3, 4}, true);
    Tensor y = scale(x, 2.0);
    CHECK_THROWS_AS(backward(y), ContractError);
}

TEST_CASE("composite matmul-softmax-sum gradient") {
    Rng rng(17);
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    auto loss = [&] { return sum(softmax(matmul(a, b), 1)); };
    CHECK(gradcheck(loss, {a, b}).max_rel_err < 1e-4);
}

TEST_CASE("ops never mutate their inputs") {
    Rng rng(21);
    Tensor a = random_tensor({3, 3}, rng);
    Tensor b = random_tensor({3, 3}, rng);
    const std::vector<double> a_before = a.data();
    const std::vector<double> b_before = b.data();

    (void)matmul(a, b);
    (void)add(a, b);
    (void)mul(a, b);
    (void)softmax(a, 1);
    (void)leaky_relu(a, 0.2);
    (void)concat({a, b}, 0);
    (void)transpose(a);
    Tensor loss = sum(mul(a, b));
    backward(loss);

    CHECK(a.data() == a_before);
    CHECK(b.data() == b_before);
}

TEST_CASE("non-finite results raise immediately") {
    Tensor big = Tensor::full({2}, 1e308);
    CHECK_THROWS_AS(add(big, big), NumericError);
}

TEST_CASE("embedding lookup and scatter-add gradient") {
    Rng rng(23);
    Tensor weight = random_tensor({5, 3}, rng);
    std::vector<int> ids{1, 3, 1};
    Tensor rows = embed(weight, ids);
    CHECK(rows.shape() == Shape{3, 3});
    CHECK(rows.at(0, 0) == weight.at(1, 0));
    CHECK_THROWS_AS(embed(weight, {7}), InputError);

    Tensor w = random_tensor({3, 3}, rng, false);
    auto loss = [&] { return sum(mul(embed(weight, ids), w)); };
    CHECK(gradcheck(loss, {weight}).max_rel_err < 1e-4);
}

TEST_CASE("nll reduction, padding, and gradient") {
    Rng rng(29);
    Tensor logits = random_tensor({3, 4}, rng);
    std::vector<int> targets{2, 0, 1};

    auto loss = [&] { return nll(log_softmax(logits, 1), targets, /*pad_id=*/0); };
    Tensor value = loss();
    // position 1 is padding (target==pad_id) so only two terms participate
    const Tensor lp = log_softmax(logits, 1);
    const double expect = -(lp.at(0, 2) + lp.at(2, 1)) / 2.0;
    CHECK(value.item() == Catch::Approx(expect).epsilon(1e-12));
    CHECK(gradcheck(loss, {logits}).max_rel_err < 1e-4);

    CHECK_THROWS_AS(nll(log_softmax(logits, 1), {0, 0, 0}, 0), ContractError);
}

TEST_CASE("slice_cols roundtrips through concat and routes gradients") {
    Rng rng(31);
    Tensor x = random_tensor({3, 6}, rng);
    Tensor left = slice_cols(x, 0, 2);
    Tensor right = slice_cols(x, 2, 6);
    CHECK(max_abs_diff(concat({left, right}, 1), x) == 0.0);

    Tensor w = random_tensor({3, 2}, rng, false);
    auto loss = [&] { return sum(mul(slice_cols(x, 2, 4), w)); };
    CHECK(gradcheck(loss, {x}).max_rel_err < 1e-4);
}

TEST_CASE("no-grad mode skips graph construction") {
    Tensor x = Tensor::scalar(2.0, true);
    NoGradGuard guard;
    Tensor y = scale(x, 3.0);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("random op pipeline gradients on many seeds") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        Tensor a = random_tensor({2, 3}, rng);
        Tensor b = random_tensor({3, 3}, rng);
        Tensor gain = random_tensor({3}, rng, true, 0.5, 1.5);
        Tensor bias = random_tensor({3}, rng);
        auto loss = [&] {
            Tensor h = matmul(a, b);
            h = layer_norm(h, gain, bias, 1e-6);
            h = leaky_relu(h, 0.1);
            return sum(softmax(h, 1));
        };
        auto res = gradcheck(loss, {a, b, gain, bias});
        INFO("seed " << seed);
        CHECK(res.max_rel_err < 1e-4);
    }
}
