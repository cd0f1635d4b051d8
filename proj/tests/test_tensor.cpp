#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "shakg/gradcheck.hpp"
#include "shakg/params.hpp"
#include "shakg/tensor.hpp"

using namespace shakg;

TEST_CASE("matmul identity leaves input unchanged") {
    auto eye = tensor(3, 3);
    for (int i = 0; i < 3; ++i) eye->at(i, i) = 1.0;
    auto x = tensor_from({1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}, 3, 4);
    auto y = matmul(eye, x);
    REQUIRE(y->data == x->data);
}

TEST_CASE("row softmax of zeros is uniform") {
    auto x = tensor(1, 4);
    auto y = softmax_rows(x);
    for (double v : y->data) REQUIRE(v == Catch::Approx(0.25).margin(1e-15));
}

TEST_CASE("tanh of zero matrix is zero") {
    auto y = tanh(tensor(2, 3));
    for (double v : y->data) REQUIRE(v == 0.0);
}

TEST_CASE("softmax rows are stochastic with entries in (0,1)") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-20.0, 20.0);
    for (int trial = 0; trial < 50; ++trial) {
        auto x = tensor(5, 7);
        for (auto& v : x->data) v = dist(rng);
        auto y = softmax_rows(x);
        for (std::size_t i = 0; i < y->rows; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < y->cols; ++j) {
                double v = y->at(i, j);
                REQUIRE(v > 0.0);
                REQUIRE(v < 1.0);
                s += v;
            }
            REQUIRE(s == Catch::Approx(1.0).margin(1e-9));
        }
    }
}

TEST_CASE("backward of column sum gives ones") {
    ParameterStore ps(1);
    auto x = ps.add("x", 1, 5);
    auto loss = sum_cols(x);
    backward(loss);
    for (double g : x->grad) REQUIRE(g == 1.0);
}

TEST_CASE("tanh gradient at zero is one") {
    ParameterStore ps(1);
    auto x = ps.add_zeros("x", 1, 1);
    auto loss = tanh(x);
    backward(loss);
    REQUIRE(x->grad[0] == 1.0);
}

TEST_CASE("backward rejects non-scalar loss") {
    ParameterStore ps(1);
    auto x = ps.add("x", 2, 2);
    auto y = tanh(x);
    REQUIRE_THROWS_AS(backward(y), std::invalid_argument);
}

TEST_CASE("shape mismatch error names kind and shapes") {
    auto a = tensor(2, 3);
    auto b = tensor(2, 3);
    try {
        matmul(a, b);
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        REQUIRE(msg.find("matmul") != std::string::npos);
        REQUIRE(msg.find("2x3") != std::string::npos);
    }
}

TEST_CASE("log rejects non-positive input") {
    auto x = tensor(1, 1, 0.0);
    REQUIRE_THROWS_AS(log(x), std::domain_error);
}

TEST_CASE("random three-layer graph matches finite differences") {
    ParameterStore ps(42);
    auto w1 = ps.add("w1", 4, 3);
    auto b1 = ps.add_zeros("b1", 4, 1);
    auto w2 = ps.add("w2", 3, 4);
    auto w3 = ps.add("w3", 1, 3);
    auto x = tensor_from({0.3, -0.7, 1.2}, 3, 1);
    auto build = [&]() {
        auto h1 = tanh(add(matmul(w1, x), b1));
        auto h2 = sigmoid(matmul(w2, h1));
        auto out = matmul(w3, h2);
        return mul(out, out);
    };
    REQUIRE(grad_check(ps, build) < 1e-4);
}

TEST_CASE("grad_check on quadratic loss is near exact") {
    ParameterStore ps(3);
    auto x = ps.add("x", 4, 1);
    auto build = [&]() { return sum_all(mul(x, x)); };
    REQUIRE(grad_check(ps, build) < 1e-8);
}

TEST_CASE("parameter not reaching the loss has zero gradient both ways") {
    ParameterStore ps(5);
    auto x = ps.add("x", 2, 1);
    auto unused = ps.add("unused", 2, 2);
    auto build = [&]() { return sum_all(mul(x, x)); };
    REQUIRE(grad_check(ps, build) < 1e-8);
    REQUIRE(unused->grad[0] == 0.0);
}

TEST_CASE("backward is linear in the loss") {
    ParameterStore ps(11);
    auto w = ps.add("w", 3, 3);
    auto x = tensor_from({1, -2, 0.5}, 3, 1);
    auto l1 = [&] { return sum_all(tanh(matmul(w, x))); };
    auto l2 = [&] { return sum_all(mul(matmul(w, x), matmul(w, x))); };

    ps.zero_grad();
    backward(add(smul(l1(), 2.0), smul(l2(), -0.5)));
    auto combined = w->grad;

    ps.zero_grad();
    backward(l1());
    auto g1 = w->grad;
    ps.zero_grad();
    backward(l2());
    auto g2 = w->grad;

    for (std::size_t i = 0; i < combined.size(); ++i)
        REQUIRE(combined[i] == Catch::Approx(2.0 * g1[i] - 0.5 * g2[i]).margin(1e-9));
}

TEST_CASE("identical seeds give bit-identical values and gradients") {
    auto run = [](std::uint64_t seed) {
        ParameterStore ps(seed);
        auto w = ps.add("w", 5, 5);
        auto x = tensor(5, 1, 0.3);
        auto loss = sum_all(sigmoid(matmul(w, x)));
        backward(loss);
        return std::make_pair(loss->data[0], w->grad);
    };
    auto [l1, g1] = run(99);
    auto [l2, g2] = run(99);
    REQUIRE(l1 == l2);
    REQUIRE(g1 == g2);
}

TEST_CASE("calling backward twice accumulates gradients") {
    ParameterStore ps(2);
    auto x = ps.add("x", 1, 3);
    backward(sum_cols(x));
    backward(sum_cols(x));
    for (double g : x->grad) REQUIRE(g == 2.0);
}

TEST_CASE("no-grad mode records no graph") {
    ParameterStore ps(2);
    auto x = ps.add("x", 2, 2);
    NoGradGuard ng;
    auto y = tanh(x);
    REQUIRE_FALSE(y->requires_grad);
    REQUIRE(y->inputs.empty());
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
    ParameterStore ps(8);
    auto w = ps.add("w", 3, 2);
    auto before = w->data;
    AdamState st;
    adam_step(ps, st);
    REQUIRE(st.t == 1);
    REQUIRE(w->data == before);
}

TEST_CASE("adam first step has magnitude close to lr") {
    ParameterStore ps(8);
    auto w = ps.add_zeros("w", 1, 1);
    w->grad[0] = 0.1;
    AdamState st;
    adam_step(ps, st, 0.003);
    REQUIRE(std::abs(w->data[0] + 0.003) < 1e-6);  // moved by ~ -lr * sign(g)
}

TEST_CASE("adam with constant gradient moves monotonically against it") {
    ParameterStore ps(8);
    auto w = ps.add_zeros("w", 1, 1);
    AdamState st;
    double prev = 0.0;
    for (int i = 0; i < 2; ++i) {
        w->grad[0] = 0.5;
        adam_step(ps, st, 0.003);
        REQUIRE(w->data[0] < prev);
        prev = w->data[0];
    }
    REQUIRE(st.t == 2);
}

TEST_CASE("grad_check probe budget still covers every parameter") {
    ParameterStore ps(4);
    auto a = ps.add("a", 6, 6);
    auto b = ps.add("b", 6, 1);
    auto x = tensor(6, 1, 0.25);
    auto build = [&]() { return sum_all(tanh(add(matmul(a, x), b))); };
    REQUIRE(grad_check(ps, build, 1e-5, 3, 17) < 1e-6);
}

TEST_CASE("transpose round trips and routes gradients") {
    ParameterStore ps(21);
    auto w = ps.add("w", 3, 2);
    auto tt = transpose(transpose(w));
    REQUIRE(tt->data == w->data);
    auto build = [&]() { return sum_all(mul(transpose(w), transpose(w))); };
    REQUIRE(grad_check(ps, build) < 1e-8);
}

TEST_CASE("add broadcast column matches manual expansion") {
    ParameterStore ps(31);
    auto m = ps.add("m", 3, 4);
    auto v = ps.add("v", 3, 1);
    auto out = add_col(m, v);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            REQUIRE(out->at(i, j) == m->at(i, j) + v->data[i]);
    auto build = [&]() { return sum_all(tanh(add_col(m, v))); };
    REQUIRE(grad_check(ps, build) < 1e-6);
}

TEST_CASE("row select gathers and scatters") {
    ParameterStore ps(12);
    auto table = ps.add("t", 5, 3);
    auto picked = rows_at(table, {4, 0, 4});
    REQUIRE(picked->rows == 3);
    REQUIRE(picked->at(0, 1) == table->at(4, 1));
    auto build = [&]() { return sum_all(mul(rows_at(table, {4, 0, 4}), rows_at(table, {4, 0, 4}))); };
    REQUIRE(grad_check(ps, build) < 1e-8);
}

TEST_CASE("every primitive passes a finite-difference sweep") {
    ParameterStore ps(77);
    auto a = ps.add("a", 3, 4);
    auto b = ps.add("b", 4, 2);
    auto c = ps.add("c", 3, 1);
    auto build = [&]() {
        auto mm = matmul(a, b);                       // 3x2
        auto bc = add_col(mm, c);                     // 3x2
        auto stack = concat_rows(bc, smul(bc, 0.5));  // 6x2
        auto act = leaky_relu(stack, 0.2);
        auto sm = softmax_rows(act);
        auto lg = log(sm);
        auto ex = exp(smul(lg, 0.25));
        auto mixed = mul(add(ex, sm), sigmoid(stack));
        auto pooled = add(sum_cols(mixed), mean_cols(mixed));  // 6x1
        return sum_all(tanh(transpose(pooled)));
    };
    REQUIRE(grad_check(ps, build) < 1e-5);
}
