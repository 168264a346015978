#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "mate/numerics/grad_check.hpp"
#include "mate/numerics/kernels.hpp"
#include "mate/numerics/ops.hpp"
#include "mate/numerics/tape.hpp"
#include "test_util.hpp"

using namespace mate::num;
using mate::test::random_matrix;
using kernels::KernelTable;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c = Tensor::matrix(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

// Direct convolution: out[t] = b + sum_j x[t*stride + j - pad] W_j.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t kw,
                  std::size_t stride) {
  const std::size_t in = x.cols(), out_ch = w.cols(), pad = (kw - 1) / 2;
  const std::size_t out_len = (x.rows() + stride - 1) / stride;
  Tensor y = Tensor::matrix(out_len, out_ch);
  for (std::size_t t = 0; t < out_len; ++t)
    for (std::size_t o = 0; o < out_ch; ++o) {
      double s = bias[o];
      for (std::size_t j = 0; j < kw; ++j) {
        const long src = static_cast<long>(t * stride + j) - static_cast<long>(pad);
        if (src < 0 || src >= static_cast<long>(x.rows())) continue;
        for (std::size_t c = 0; c < in; ++c) s += x(static_cast<std::size_t>(src), c) * w(j * in + c, o);
      }
      y(t, o) = s;
    }
  return y;
}

struct KernelGuard {
  ~KernelGuard() { kernels::select_default(); }
};

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3, 4});
  CHECK(t.rows() == 6);
  CHECK(t.cols() == 4);
  CHECK(Tensor({5}).rows() == 1);
  CHECK(Tensor::matrix(0, 3).rows() == 0);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS(Tensor::matrix(2, 2).item(), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST_CASE("scalar and avx2 kernels agree") {
  KernelGuard guard;
  const KernelTable* fast = kernels::avx2_table();
  if (fast == nullptr) {
    MESSAGE("no AVX2 variant on this machine; checking scalar table only");
    fast = &kernels::scalar_table();
  }
  const KernelTable& ref = kernels::scalar_table();
  std::mt19937_64 rng(11);
  for (std::size_t m : {1u, 3u, 4u, 5u, 9u}) {
    for (std::size_t n : {1u, 7u, 8u, 17u, 33u}) {
      for (std::size_t k : {1u, 2u, 15u, 64u}) {
        const Tensor a = random_matrix(m, k, rng), b = random_matrix(k, n, rng);
        const Tensor bt = random_matrix(n, k, rng), at = random_matrix(k, m, rng);
        Tensor c1 = random_matrix(m, n, rng), c2 = c1;
        ref.gemm_nn(m, n, k, a.data(), b.data(), c1.data());
        fast->gemm_nn(m, n, k, a.data(), b.data(), c2.data());
        CHECK(max_abs_diff(c1, c2) <= 1e-12 * static_cast<double>(k));
        Tensor d1 = Tensor::matrix(m, n), d2 = d1;
        ref.gemm_nt(m, n, k, a.data(), bt.data(), d1.data());
        fast->gemm_nt(m, n, k, a.data(), bt.data(), d2.data());
        CHECK(max_abs_diff(d1, d2) <= 1e-12 * static_cast<double>(k));
        Tensor e1 = Tensor::matrix(m, n), e2 = e1;
        ref.gemm_tn(m, n, k, at.data(), b.data(), e1.data());
        fast->gemm_tn(m, n, k, at.data(), b.data(), e2.data());
        CHECK(max_abs_diff(e1, e2) <= 1e-12 * static_cast<double>(k));
      }
    }
  }
  for (std::size_t n : {0u, 1u, 3u, 4u, 15u, 16u, 17u, 100u}) {
    const Tensor x = random_matrix(1, std::max<std::size_t>(n, 1), rng);
    const Tensor y = random_matrix(1, std::max<std::size_t>(n, 1), rng);
    CHECK(std::abs(ref.dot(x.data(), y.data(), n) - fast->dot(x.data(), y.data(), n)) <= 1e-12);
    Tensor y1 = y, y2 = y;
    ref.axpy(0.7, x.data(), y1.data(), n);
    fast->axpy(0.7, x.data(), y2.data(), n);
    CHECK(max_abs_diff(y1, y2) <= 1e-14);
  }
}

TEST_CASE("gemm rows are independent of how many rows are stacked") {
  KernelGuard guard;
  std::mt19937_64 rng(3);
  std::vector<kernels::Isa> isas = {kernels::Isa::Scalar};
  if (kernels::avx2_table() != nullptr) isas.push_back(kernels::Isa::Avx2);
  for (auto isa : isas) {
    REQUIRE(kernels::select(isa));
    const Tensor a = random_matrix(7, 19, rng), b = random_matrix(19, 13, rng);
    const Tensor bt = random_matrix(13, 19, rng);
    Tensor full = Tensor::matrix(7, 13), full_nt = full;
    kernels::active().gemm_nn(7, 13, 19, a.data(), b.data(), full.data());
    kernels::active().gemm_nt(7, 13, 19, a.data(), bt.data(), full_nt.data());
    for (std::size_t r = 0; r < 7; ++r) {
      Tensor one = Tensor::matrix(1, 13), one_nt = one;
      kernels::active().gemm_nn(1, 13, 19, a.data() + r * 19, b.data(), one.data());
      kernels::active().gemm_nt(1, 13, 19, a.data() + r * 19, bt.data(), one_nt.data());
      for (std::size_t c = 0; c < 13; ++c) {
        CHECK(one[c] == full(r, c));
        CHECK(one_nt[c] == full_nt(r, c));
      }
    }
  }
}

TEST_CASE("matmul matches a triple loop") {
  std::mt19937_64 rng(5);
  Tape tape;
  const Tensor a = random_matrix(4, 6, rng), b = random_matrix(6, 3, rng);
  const Var c = matmul(tape.constant(a), tape.constant(b));
  CHECK(max_abs_diff(c.value(), naive_matmul(a, b)) < 1e-12);
  CHECK_THROWS_AS(matmul(tape.constant(a), tape.constant(a)), ShapeError);
}

TEST_CASE("conv1d matches direct convolution and its length rule") {
  std::mt19937_64 rng(8);
  for (std::size_t len : {1u, 2u, 5u, 16u, 40u}) {
    for (std::size_t kw : {1u, 3u, 5u}) {
      for (std::size_t stride : {1u, 2u, 3u}) {
        const Tensor x = random_matrix(len, 3, rng), w = random_matrix(kw * 3, 4, rng);
        const Tensor b = random_matrix(1, 4, rng);
        Tape tape;
        const Var y = conv1d(tape.constant(x), tape.constant(w), tape.constant(b), kw, stride);
        CHECK(y.rows() == conv1d_output_length(len, stride));
        CHECK(max_abs_diff(y.value(), naive_conv(x, w, b, kw, stride)) < 1e-12);
      }
    }
  }
  const std::array<std::size_t, 3> strides = {2, 1, 2};
  CHECK(conv_output_length(40, strides) == 10);
  CHECK(conv_output_length(16, strides) == 4);
  CHECK(conv_output_length(1, strides) == 1);
  CHECK(conv_output_length(7, strides) == 2);
  Tape tape;
  const Var x = tape.constant(Tensor::matrix(4, 2));
  CHECK_THROWS_WITH_AS(conv1d(x, tape.constant(Tensor::matrix(4, 1)), tape.constant(Tensor::matrix(1, 1)), 2, 1),
                       doctest::Contains("odd"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(conv1d(tape.constant(Tensor::matrix(0, 2)), tape.constant(Tensor::matrix(2, 1)),
                              tape.constant(Tensor::matrix(1, 1)), 1, 1),
                       doctest::Contains("empty sequence"), std::invalid_argument);
  CHECK_THROWS_AS(conv1d_output_length(3, 0), std::invalid_argument);
}

TEST_CASE("softmax, log_softmax and layer_norm values") {
  Tape tape;
  const Var s = tape.constant(Tensor({1, 3}, std::vector<double>{1.0, 2.0, 3.0}));
  const Tensor p = softmax_rows(s).value();
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-14));
  CHECK(p[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));

  const bool mask[3] = {true, false, true};
  const Tensor pm = softmax_rows(s, mask).value();
  CHECK(pm[1] == 0.0);
  CHECK(pm[0] + pm[2] == doctest::Approx(1.0).epsilon(1e-15));

  const Var big = tape.constant(Tensor({1, 2}, std::vector<double>{1000.0, 1000.0}));
  CHECK(log_softmax_rows(big).value()[0] == doctest::Approx(-std::log(2.0)).epsilon(1e-14));

  const Var x = tape.constant(Tensor({1, 4}, std::vector<double>{1.0, 2.0, 3.0, 4.0}));
  const Tensor& ln =
      layer_norm(x, tape.constant(Tensor({1, 4}, 1.0)), tape.constant(Tensor::matrix(1, 4))).value();
  const double sd = std::sqrt(1.25 + 1e-5);
  CHECK(ln[0] == doctest::Approx(-1.5 / sd).epsilon(1e-12));
  CHECK(ln[3] == doctest::Approx(1.5 / sd).epsilon(1e-12));
}

TEST_CASE("cross entropy on uniform and peaked logits") {
  Tape tape;
  const Var uniform = tape.constant(Tensor::matrix(2, 8));
  const int labels[2] = {3, 7};
  const Tensor ce = cross_entropy_rows(uniform, labels).value();
  CHECK(ce[0] == doctest::Approx(std::log(8.0)).epsilon(1e-14));
  CHECK(ce[1] == doctest::Approx(std::log(8.0)).epsilon(1e-14));
  Tensor peaked = Tensor::matrix(1, 4, -50.0);
  peaked(0, 2) = 50.0;
  CHECK(cross_entropy(tape.constant(peaked), 2).value().item() < 1e-8);
  const int bad[1] = {9};
  CHECK_THROWS_AS(cross_entropy_rows(tape.constant(Tensor::matrix(1, 4)), bad), std::out_of_range);
}

TEST_CASE("mean_pool ignores masked rows") {
  Tape tape;
  Tensor seq = Tensor::matrix(3, 2);
  seq(0, 0) = 1.0, seq(1, 0) = 3.0, seq(2, 0) = 1000.0;
  const bool valid[3] = {true, true, false};
  CHECK(mean_pool(tape.constant(seq), valid).value()[0] == 2.0);
  const bool none[3] = {false, false, false};
  CHECK_THROWS_WITH(mean_pool(tape.constant(seq), none), doctest::Contains("empty pool"));
}

TEST_CASE("backward of every op matches central differences") {
  std::mt19937_64 rng(21);
  ParameterSet params;
  params.add("g", "a", random_matrix(5, 4, rng));
  params.add("g", "b", random_matrix(4, 6, rng));
  params.add("g", "bias", random_matrix(1, 6, rng));
  params.add("g", "gain", random_matrix(1, 6, rng));
  params.add("g", "conv_w", random_matrix(3 * 4, 3, rng));
  params.add("g", "conv_b", random_matrix(1, 3, rng));
  params.add("g", "table", random_matrix(7, 4, rng));

  const LossFn f = [](Tape& tape, const ParameterSet& p) {
    const Var a = tape.parameter(p, "g/a");
    const Var h = gelu(linear(a, tape.parameter(p, "g/b"), tape.parameter(p, "g/bias")));
    const Var n = layer_norm(h, tape.parameter(p, "g/gain"), tape.parameter(p, "g/bias"));
    const bool mask[6] = {true, true, false, true, true, true};
    const Var att = softmax_rows(matmul_nt(n, n), {mask, 5});
    const int ids[3] = {1, 4, 1};
    const Var emb = gather_rows(tape.parameter(p, "g/table"), ids);
    const Var conv = conv1d(concat_rows({a, emb}), tape.parameter(p, "g/conv_w"),
                            tape.parameter(p, "g/conv_b"), 3, 2);
    const int labels[4] = {0, 2, 1, 2};
    const Var ce = mean(cross_entropy_rows(conv, labels));
    const std::pair<std::size_t, std::size_t> coords[2] = {{0, 1}, {3, 2}};
    const Var picked = sum(select(log_softmax_rows(att), coords));
    const Var pooled = mean_pool(slice_cols(n, 1, 5), {});
    const Var wide = concat_cols({emb, emb});
    const Var extras = add(sum(mul(slice_rows(a, 1, 3), slice_rows(emb, 0, 2))),
                           add(sum(sub(slice_rows(a, 0, 3), emb)), scale(dot(wide, wide), 0.1)));
    return add(add(ce, scale(picked, 0.3)), add(dot(pooled, pooled), extras));
  };
  const GradCheckReport report = grad_check(f, params);
  CHECK(report.coordinates_checked == params.scalar_count());
  CHECK(report.max_relative_error < 1e-6);
}

TEST_CASE("frozen groups receive no gradient") {
  std::mt19937_64 rng(2);
  ParameterSet params;
  params.add("live", "w", random_matrix(3, 3, rng));
  params.add("frozen", "w", random_matrix(3, 3, rng));
  params.set_group_trainable("frozen", false);
  Tape tape;
  const Var loss = sum(matmul(tape.parameter(params, "live/w"), tape.parameter(params, "frozen/w")));
  const GradientSet grads = backward(loss, params);
  for (double g : grads["frozen/w"].values()) CHECK(g == 0.0);
  double live = 0.0;
  for (double g : grads["live/w"].values()) live += std::abs(g);
  CHECK(live > 0.0);
  CHECK_THROWS_AS(params.set_group_trainable("missing", false), std::out_of_range);
}

TEST_CASE("backward requires a scalar loss") {
  Tape tape;
  const Var v = tape.variable(Tensor::matrix(2, 2, 1.0));
  CHECK_THROWS_AS(tape.backward(v), ShapeError);
}

TEST_CASE("dropout keeps expectation and is seeded") {
  Tape tape;
  const Var x = tape.constant(Tensor::matrix(200, 50, 1.0));
  std::mt19937_64 r1(4), r2(4);
  const Tensor a = dropout(x, 0.1, r1).value();
  const Tensor b = dropout(x, 0.1, r2).value();
  CHECK(a == b);
  double total = 0.0;
  for (double v : a.values()) total += v;
  CHECK(total / 10000.0 == doctest::Approx(1.0).epsilon(0.03));
  std::mt19937_64 r3(4);
  CHECK(dropout(x, 0.0, r3).id == x.id);
}
