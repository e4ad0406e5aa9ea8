#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"

using namespace entprune;
using testutil::max_grad_error;

TEST(Tensor, MatmulSmallExample) {
    Tape tape;
    Var a = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
    Var b = tape.constant(Tensor::matrix({{5, 6}, {7, 8}}));
    EXPECT_EQ(ops::matmul(a, b).value(), Tensor::matrix({{19, 22}, {43, 50}}));
}

TEST(Tensor, MatmulShapeMismatchThrows) {
    Tape tape;
    Var a = tape.constant(Tensor({2, 3}));
    Var b = tape.constant(Tensor({2, 3}));
    EXPECT_THROW(ops::matmul(a, b), ShapeError);
}

TEST(Tensor, MatmulMatchesTripleLoopOnRandomShapes) {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<std::size_t> dim(1, 9);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
        Tensor a = Tensor::randn({m, k}, rng), b = Tensor::randn({k, n}, rng);
        EXPECT_LT(max_abs_diff(matmul_values(a, b), testutil::naive_matmul(a, b)), 1e-12);
    }
}

TEST(Tensor, TransposedAndReshape) {
    Tensor a = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    EXPECT_EQ(a.transposed(), Tensor::matrix({{1, 4}, {2, 5}, {3, 6}}));
    EXPECT_EQ(a.reshaped({3, 2}).shape(), (Shape{3, 2}));
    EXPECT_THROW(a.reshaped({4, 2}), ShapeError);
}

TEST(Autodiff, BackwardTwiceThrows) {
    Tape tape;
    Var x = tape.parameter("x", Tensor::scalar(2.0));
    Var y = ops::mul(x, x);
    tape.backward(y);
    EXPECT_THROW(tape.backward(y), PreconditionError);
}

TEST(Autodiff, NonScalarLossRejected) {
    Tape tape;
    Var x = tape.parameter("x", Tensor::vector({1.0, 2.0}));
    EXPECT_THROW(tape.backward(x), PreconditionError);
}

TEST(Autodiff, SquareGradientExample) {
    Tape tape;
    Var x = tape.parameter("x", Tensor::scalar(3.0));
    auto g = tape.backward(ops::sum(ops::square(x)));
    EXPECT_DOUBLE_EQ(g.at("x").item(), 6.0);
}

TEST(Autodiff, UnreachableParameterGetsZeroGradient) {
    Tape tape;
    Var x = tape.parameter("x", Tensor::vector({1.0, 2.0}));
    tape.parameter("unused", Tensor::vector({5.0}));
    auto g = tape.backward(ops::sum(x));
    EXPECT_EQ(g.at("unused"), Tensor::vector({0.0}));
}

TEST(Autodiff, NonFiniteForwardNamesOp) {
    Tape tape;
    Var x = tape.parameter("x", Tensor::vector({1e300}));
    try {
        ops::mul(x, x);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("mul"), std::string::npos);
    }
}

TEST(Autodiff, DuplicateParameterNameRejected) {
    Tape tape;
    tape.parameter("w", Tensor::scalar(1.0));
    EXPECT_THROW(tape.parameter("w", Tensor::scalar(1.0)), PreconditionError);
}

// Gradient checks against central finite differences for every primitive.
class GradCheck : public ::testing::Test {
  protected:
    std::mt19937_64 rng{7};
    Tensor r(Shape s, double scale = 1.0) { return Tensor::randn(std::move(s), rng, scale); }
    static constexpr double kTol = 1e-6;
};

TEST_F(GradCheck, Matmul) {
    auto f = [](Tape&, const std::vector<Var>& v) { return ops::sum(ops::square(ops::matmul(v[0], v[1]))); };
    EXPECT_LT(max_grad_error(f, {r({3, 4}), r({4, 2})}), kTol);
}

TEST_F(GradCheck, Bmm) {
    auto f = [](Tape&, const std::vector<Var>& v) { return ops::sum(ops::square(ops::bmm(v[0], v[1]))); };
    EXPECT_LT(max_grad_error(f, {r({2, 3, 4}), r({2, 4, 3})}), kTol);
}

TEST_F(GradCheck, ElementwiseAddSubMulScale) {
    auto f = [](Tape&, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::scale(ops::add(v[0], v[1]), 1.5), ops::sub(v[0], v[1])));
    };
    EXPECT_LT(max_grad_error(f, {r({3, 3}), r({3, 3})}), kTol);
}

TEST_F(GradCheck, RowwiseAddAndMul) {
    auto f = [](Tape&, const std::vector<Var>& v) {
        return ops::sum(ops::square(ops::mul_rowwise(ops::add_rowwise(v[0], v[1]), v[2])));
    };
    EXPECT_LT(max_grad_error(f, {r({4, 3}), r({3}), r({3})}), kTol);
}

TEST_F(GradCheck, LayerNorm) {
    Tensor w = r({3, 5});
    auto f = [w](Tape& t, const std::vector<Var>& v) { return ops::sum(ops::mul(ops::layer_norm(v[0]), t.constant(w))); };
    EXPECT_LT(max_grad_error(f, {r({3, 5})}), 1e-5);
}

TEST_F(GradCheck, Gelu) {
    auto f = [](Tape&, const std::vector<Var>& v) { return ops::sum(ops::gelu(v[0])); };
    EXPECT_LT(max_grad_error(f, {r({4, 4}, 2.0)}), kTol);
}

TEST_F(GradCheck, Softmax) {
    Tensor w = r({2, 3, 4});
    auto f = [w](Tape& t, const std::vector<Var>& v) { return ops::sum(ops::mul(ops::softmax(v[0]), t.constant(w))); };
    EXPECT_LT(max_grad_error(f, {r({2, 3, 4})}), kTol);
}

TEST_F(GradCheck, ReshapePermuteTranspose) {
    Tensor w = r({3, 2, 4});
    auto f = [w](Tape& t, const std::vector<Var>& v) {
        Var p = ops::permute(ops::reshape(v[0], {2, 3, 4}), {1, 0, 2});
        return ops::sum(ops::mul(p, t.constant(w)));
    };
    EXPECT_LT(max_grad_error(f, {r({6, 4})}), kTol);
    Tensor w2 = r({2, 4, 3});
    auto g = [w2](Tape& t, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::transpose_last2(v[0]), t.constant(w2)));
    };
    EXPECT_LT(max_grad_error(g, {r({2, 3, 4})}), kTol);
    auto h = [](Tape&, const std::vector<Var>& v) { return ops::sum(ops::matmul(ops::transpose(v[0]), v[0])); };
    EXPECT_LT(max_grad_error(h, {r({3, 2})}), kTol);
}

TEST_F(GradCheck, MeanAndSquare) {
    auto f = [](Tape&, const std::vector<Var>& v) { return ops::mean(ops::square(v[0])); };
    EXPECT_LT(max_grad_error(f, {r({5})}), kTol);
}

TEST_F(GradCheck, GatherRepeatTile) {
    Tensor w = r({6, 3});
    auto f = [w](Tape& t, const std::vector<Var>& v) {
        Var g = ops::gather_rows(v[0], {2, 0, 2});
        Var a = ops::add(ops::repeat_rows(g, 2), ops::tile_rows(v[1], 3));
        return ops::sum(ops::mul(ops::square(a), t.constant(w)));
    };
    EXPECT_LT(max_grad_error(f, {r({4, 3}), r({2, 3})}), kTol);
}

TEST(Permute, GeneralFourDimensional) {
    Tape tape;
    Tensor x({2, 3, 4, 5});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
    Var p = ops::permute(tape.constant(x), {0, 2, 1, 3});
    const Tensor& y = p.value();
    ASSERT_EQ(y.shape(), (Shape{2, 4, 3, 5}));
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 3; ++b)
            for (std::size_t c = 0; c < 4; ++c)
                for (std::size_t d = 0; d < 5; ++d)
                    EXPECT_EQ(y[((a * 4 + c) * 3 + b) * 5 + d], x[((a * 3 + b) * 4 + c) * 5 + d]);
}

TEST(Linalg, IdentityEigenvalues) {
    auto e = sym_eig(Tensor::identity(4));
    for (double v : e.eigenvalues) EXPECT_NEAR(v, 1.0, 1e-14);
}

TEST(Linalg, DiagonalSortedDescending) {
    Tensor m({3, 3});
    m(0, 0) = 1.0;
    m(1, 1) = 5.0;
    m(2, 2) = 3.0;
    auto e = sym_eig(m);
    EXPECT_NEAR(e.eigenvalues[0], 5.0, 1e-14);
    EXPECT_NEAR(e.eigenvalues[1], 3.0, 1e-14);
    EXPECT_NEAR(e.eigenvalues[2], 1.0, 1e-14);
}

TEST(Linalg, TwoByTwoExample) {
    auto e = sym_eig(Tensor::matrix({{2, 1}, {1, 2}}));
    EXPECT_NEAR(e.eigenvalues[0], 3.0, 1e-12);
    EXPECT_NEAR(e.eigenvalues[1], 1.0, 1e-12);
}

TEST(Linalg, AsymmetricRejected) {
    EXPECT_THROW(sym_eig(Tensor::matrix({{1, 2}, {0, 1}})), PreconditionError);
    EXPECT_THROW(sym_eig(Tensor({2, 3})), PreconditionError);
}

TEST(Linalg, PropertyReconstructionTraceAndPsd) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> dim(2, 12);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = dim(rng);
        Tensor j = Tensor::randn({n, n + 2}, rng);
        Tensor g = matmul_values(j, j.transposed());
        auto e = sym_eig(g);
        double trace = 0.0, sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) trace += g(i, i);
        for (double v : e.eigenvalues) {
            sum += v;
            EXPECT_GE(v, -1e-10);
        }
        EXPECT_NEAR(trace, sum, 1e-9 * std::max(1.0, trace));
        // V diag(L) V^T == G
        Tensor vl = e.eigenvectors;
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < n; ++c) vl(r, c) *= e.eigenvalues[c];
        EXPECT_LT(max_abs_diff(matmul_values(vl, e.eigenvectors.transposed()), g), 1e-9 * std::max(1.0, trace));
        for (std::size_t i = 1; i < n; ++i) EXPECT_GE(e.eigenvalues[i - 1], e.eigenvalues[i]);
    }
}

TEST(Stats, SpearmanMonotoneAndTies) {
    EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0);
    EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
    auto r = average_ranks({5, 1, 5, 2});
    EXPECT_DOUBLE_EQ(r[0], 3.5);
    EXPECT_DOUBLE_EQ(r[1], 1.0);
    EXPECT_DOUBLE_EQ(r[2], 3.5);
    EXPECT_DOUBLE_EQ(r[3], 2.0);
}

TEST(Parallel, MapPreservesOrder) {
    auto v = parallel_map(20, [](std::size_t i) { return i * i; });
    for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(v[i], i * i);
}
