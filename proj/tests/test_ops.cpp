#include <doctest.h>

#include <cmath>

#include "dcnn/ops.hpp"
#include "dcnn/rng.hpp"
#include "oracles.hpp"

using dcnn::ConvParams;
using dcnn::Padding;
using dcnn::Tensor;

namespace {

Tensor filled(dcnn::Extents shape, std::initializer_list<double> values) {
  Tensor t(std::move(shape));
  std::int64_t i = 0;
  for (double v : values) t[i++] = v;
  REQUIRE(i == t.size());
  return t;
}

}  // namespace

TEST_CASE("dilated taps pick every other column") {
  // taps at columns 0, 2, 4 of [1 2 3 4 5] give 1 + 3 + 5
  const Tensor input = filled({1, 1, 1, 5}, {1, 2, 3, 4, 5});
  const Tensor weights = filled({1, 1, 1, 3}, {1, 1, 1});
  const Tensor bias({1}, 0.0);
  ConvParams p;
  p.filter_cols = 3;
  p.dilation_cols = 2;
  const Tensor out = dcnn::conv2d_forward(input, weights, bias, p);
  CHECK(out.shape() == dcnn::Extents{1, 1, 1, 1});
  CHECK(out[0] == 9.0);
}

TEST_CASE("zero weights leave only the bias") {
  dcnn::Rng rng(3);
  Tensor input({2, 1, 3, 8});
  oracle::fill_uniform(input, rng);
  const Tensor weights({4, 1, 1, 3}, 0.0);
  const Tensor bias({4}, 7.0);
  ConvParams p;
  p.filter_cols = 3;
  p.out_channels = 4;
  const Tensor out = dcnn::conv2d_forward(input, weights, bias, p);
  for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == 7.0);
}

TEST_CASE("same padding keeps the first v1_individual layer at 3x200") {
  dcnn::Rng rng(4);
  Tensor input({1, 1, 3, 200});
  oracle::fill_uniform(input, rng);
  Tensor weights({32, 1, 3, 20});
  oracle::fill_uniform(weights, rng);
  const Tensor bias({32}, 0.0);
  ConvParams p;
  p.filter_rows = 3;
  p.filter_cols = 20;
  p.out_channels = 32;
  p.dilation_cols = 2;
  p.padding = Padding::same;
  const Tensor out = dcnn::conv2d_forward(input, weights, bias, p);
  CHECK(out.shape() == dcnn::Extents{1, 32, 3, 200});
}

TEST_CASE("conv2d rejects bad geometry") {
  const Tensor input({1, 1, 3, 4});
  const Tensor bias({1}, 0.0);
  ConvParams p;
  p.filter_cols = 3;
  p.dilation_cols = 2;  // effective width 5 > 4

  SUBCASE("effective kernel larger than valid input") {
    const Tensor weights({1, 1, 1, 3});
    CHECK_THROWS_AS(dcnn::conv2d_forward(input, weights, bias, p), dcnn::ShapeError);
  }
  SUBCASE("channel mismatch") {
    const Tensor weights({1, 2, 1, 3});
    ConvParams q;
    q.filter_cols = 3;
    CHECK_THROWS_AS(dcnn::conv2d_forward(input, weights, bias, q), dcnn::ShapeError);
  }
  SUBCASE("zero-extent param") {
    const Tensor weights({1, 1, 1, 3});
    ConvParams q;
    q.filter_cols = 3;
    q.stride_cols = 0;
    CHECK_THROWS_AS(dcnn::conv2d_forward(input, weights, bias, q), dcnn::ShapeError);
  }
}

TEST_CASE("conv2d matches the naive oracle across an exhaustive small sweep") {
  dcnn::Rng rng(101);
  std::int64_t cases = 0;
  for (std::int64_t rows : {1, 2, 3})
    for (std::int64_t cols : {1, 3, 6})
      for (std::int64_t channels : {1, 2})
        for (std::int64_t filters : {1, 2})
          for (std::int64_t fr : {1, 2})
            for (std::int64_t fc : {1, 3})
              for (std::int64_t dil : {1, 2})
                for (std::int64_t stride : {1, 2})
                  for (Padding padding : {Padding::valid, Padding::same}) {
                    ConvParams p;
                    p.filter_rows = fr;
                    p.filter_cols = fc;
                    p.out_channels = filters;
                    p.dilation_rows = 1;
                    p.dilation_cols = dil;
                    p.stride_rows = 1;
                    p.stride_cols = stride;
                    p.padding = padding;
                    if (padding == Padding::valid &&
                        (rows < fr || cols < (fc - 1) * dil + 1))
                      continue;
                    Tensor input({2, channels, rows, cols});
                    Tensor weights({filters, channels, fr, fc});
                    Tensor bias({filters});
                    oracle::fill_uniform(input, rng);
                    oracle::fill_uniform(weights, rng);
                    oracle::fill_uniform(bias, rng);
                    const Tensor got = dcnn::conv2d_forward(input, weights, bias, p);
                    const Tensor want = oracle::naive_conv2d(input, weights, bias, p);
                    REQUIRE(got.shape() == want.shape());
                    CHECK(oracle::max_abs_diff(got, want) <= 1e-12);
                    ++cases;
                  }
  CHECK(cases > 100);
}

TEST_CASE("dilation 1 equals the oracle with no dilation, bit for bit") {
  dcnn::Rng rng(55);
  ConvParams p;
  p.filter_rows = 2;
  p.filter_cols = 3;
  p.out_channels = 2;
  Tensor input({1, 2, 4, 7});
  Tensor weights({2, 2, 2, 3});
  Tensor bias({2});
  oracle::fill_uniform(input, rng);
  oracle::fill_uniform(weights, rng);
  oracle::fill_uniform(bias, rng);
  const Tensor got = dcnn::conv2d_forward(input, weights, bias, p);
  const Tensor want = oracle::naive_conv2d(input, weights, bias, p);
  for (std::int64_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
}

TEST_CASE("strided-layer geometry preserves rows") {
  dcnn::Rng rng(66);
  for (std::int64_t stride : {2, 4}) {
    ConvParams p;  // SL shape: 1-row filter, no dilation
    p.filter_rows = 1;
    p.filter_cols = stride;
    p.out_channels = 3;
    p.stride_cols = stride;
    Tensor input({1, 2, 3, 16});
    Tensor weights({3, 2, 1, stride});
    Tensor bias({3});
    oracle::fill_uniform(input, rng);
    oracle::fill_uniform(weights, rng);
    oracle::fill_uniform(bias, rng);
    const Tensor out = dcnn::conv2d_forward(input, weights, bias, p);
    CHECK(out.extent(2) == input.extent(2));
    CHECK(out.extent(3) == (16 - stride) / stride + 1);
  }
}

TEST_CASE("conv2d_backward: zero upstream gradient, scalar chain rule") {
  const Tensor input = filled({1, 1, 1, 1}, {3.0});
  const Tensor weights = filled({1, 1, 1, 1}, {2.0});
  ConvParams p;

  SUBCASE("zero d_out zeroes every gradient") {
    const Tensor d_out({1, 1, 1, 1}, 0.0);
    const dcnn::OpGradients g = dcnn::conv2d_backward(input, weights, p, d_out);
    CHECK(g.d_input[0] == 0.0);
    CHECK(g.d_weights[0] == 0.0);
    CHECK(g.d_bias[0] == 0.0);
  }
  SUBCASE("1x1 case is the scalar chain rule") {
    const Tensor d_out = filled({1, 1, 1, 1}, {5.0});
    const dcnn::OpGradients g = dcnn::conv2d_backward(input, weights, p, d_out);
    CHECK(g.d_weights[0] == 5.0 * 3.0);
    CHECK(g.d_input[0] == 5.0 * 2.0);
    CHECK(g.d_bias[0] == 5.0);
  }
  SUBCASE("d_out shape is checked") {
    const Tensor d_out({1, 1, 1, 2});
    CHECK_THROWS_AS(dcnn::conv2d_backward(input, weights, p, d_out), dcnn::ShapeError);
  }
}

TEST_CASE("conv2d_backward matches finite differences on random small cases") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    dcnn::Rng rng(seed);
    ConvParams p;
    p.filter_rows = 1 + static_cast<std::int64_t>(rng.next_below(2));
    p.filter_cols = 1 + static_cast<std::int64_t>(rng.next_below(2));
    p.out_channels = 1 + static_cast<std::int64_t>(rng.next_below(2));
    p.dilation_cols = 1 + static_cast<std::int64_t>(rng.next_below(2));
    p.stride_cols = 1 + static_cast<std::int64_t>(rng.next_below(2));
    p.padding = rng.next_below(2) ? Padding::same : Padding::valid;
    const std::int64_t rows = p.filter_rows + static_cast<std::int64_t>(rng.next_below(2));
    const std::int64_t cols = (p.filter_cols - 1) * p.dilation_cols + 1 +
                              static_cast<std::int64_t>(rng.next_below(3));
    Tensor input({2, 1 + static_cast<std::int64_t>(rng.next_below(2)), rows, cols});
    Tensor weights({p.out_channels, input.extent(1), p.filter_rows, p.filter_cols});
    Tensor bias({p.out_channels});
    oracle::fill_uniform(input, rng);
    oracle::fill_uniform(weights, rng);
    oracle::fill_uniform(bias, rng);

    Tensor probe(dcnn::conv2d_forward(input, weights, bias, p).shape());
    oracle::fill_uniform(probe, rng);
    auto objective = [&]() {
      return oracle::weighted_sum(dcnn::conv2d_forward(input, weights, bias, p), probe);
    };

    const dcnn::OpGradients g = dcnn::conv2d_backward(input, weights, p, probe);
    CHECK(oracle::max_rel_err(g.d_input, oracle::finite_difference(input, objective)) < 1e-6);
    CHECK(oracle::max_rel_err(g.d_weights, oracle::finite_difference(weights, objective)) < 1e-6);
    CHECK(oracle::max_rel_err(g.d_bias, oracle::finite_difference(bias, objective)) < 1e-6);
  }
}

TEST_CASE("relu forward and backward") {
  const Tensor x = filled({3}, {-1.0, 0.0, 2.0});
  const Tensor y = dcnn::relu_forward(x);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.0);

  const Tensor d_out = filled({3}, {5.0, 5.0, 5.0});
  const Tensor dx = dcnn::relu_backward(x, d_out);
  CHECK(dx[0] == 0.0);
  CHECK(dx[1] == 0.0);  // subgradient at exactly 0 is 0
  CHECK(dx[2] == 5.0);

  const Tensor positive = filled({3}, {0.5, 1.0, 9.0});
  const Tensor fwd = dcnn::relu_forward(positive);
  const Tensor bwd = dcnn::relu_backward(positive, d_out);
  for (std::int64_t i = 0; i < 3; ++i) {
    CHECK(fwd[i] == positive[i]);
    CHECK(bwd[i] == d_out[i]);
  }
}

TEST_CASE("dense forward basics") {
  const Tensor x = filled({1, 2}, {1.0, 2.0});
  const Tensor w = filled({2, 1}, {1.0, 1.0});
  const Tensor b({1}, 0.0);
  CHECK(dcnn::dense_forward(x, w, b)[0] == 3.0);

  Tensor eye({3, 3}, 0.0);
  for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  dcnn::Rng rng(8);
  Tensor v({2, 3});
  oracle::fill_uniform(v, rng);
  const Tensor out = dcnn::dense_forward(v, eye, Tensor({3}, 0.0));
  for (std::int64_t i = 0; i < v.size(); ++i) CHECK(out[i] == v[i]);

  CHECK_THROWS_AS(dcnn::dense_forward(x, filled({3, 1}, {1, 1, 1}), b), dcnn::ShapeError);
}

TEST_CASE("dense backward matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    dcnn::Rng rng(seed * 31);
    const std::int64_t batch = 1 + static_cast<std::int64_t>(rng.next_below(3));
    const std::int64_t in = 1 + static_cast<std::int64_t>(rng.next_below(5));
    const std::int64_t units = 1 + static_cast<std::int64_t>(rng.next_below(4));
    Tensor x({batch, in}), w({in, units}), b({units}), probe({batch, units});
    oracle::fill_uniform(x, rng);
    oracle::fill_uniform(w, rng);
    oracle::fill_uniform(b, rng);
    oracle::fill_uniform(probe, rng);
    auto objective = [&]() { return oracle::weighted_sum(dcnn::dense_forward(x, w, b), probe); };
    const dcnn::OpGradients g = dcnn::dense_backward(x, w, probe);
    CHECK(oracle::max_rel_err(g.d_input, oracle::finite_difference(x, objective)) < 1e-6);
    CHECK(oracle::max_rel_err(g.d_weights, oracle::finite_difference(w, objective)) < 1e-6);
    CHECK(oracle::max_rel_err(g.d_bias, oracle::finite_difference(b, objective)) < 1e-6);
  }
}

TEST_CASE("softmax cross-entropy forward") {
  SUBCASE("uniform logits") {
    const Tensor logits({1, 6}, 0.0);
    const dcnn::SoftmaxXent sx = dcnn::softmax_xent_forward(logits, {0});
    for (std::int64_t k = 0; k < 6; ++k) CHECK(sx.probs[k] == doctest::Approx(1.0 / 6.0));
    CHECK(sx.loss == doctest::Approx(std::log(6.0)).epsilon(1e-12));
  }
  SUBCASE("probability one half") {
    const Tensor logits = filled({1, 2}, {0.0, 0.0});
    const dcnn::SoftmaxXent sx = dcnn::softmax_xent_forward(logits, {1});
    CHECK(sx.loss == doctest::Approx(0.6931471805599453).epsilon(1e-12));
  }
  SUBCASE("huge logit does not overflow") {
    const Tensor logits = filled({1, 2}, {1000.0, 0.0});
    const dcnn::SoftmaxXent sx = dcnn::softmax_xent_forward(logits, {0});
    CHECK(std::isfinite(sx.loss));
    CHECK(sx.loss == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("rows sum to one for large magnitudes") {
    dcnn::Rng rng(77);
    Tensor logits({8, 6});
    oracle::fill_uniform(logits, rng, -1e3, 1e3);
    const dcnn::SoftmaxXent sx = dcnn::softmax_xent_forward(logits, std::vector<int>(8, 2));
    for (std::int64_t r = 0; r < 8; ++r) {
      double sum = 0.0;
      for (std::int64_t k = 0; k < 6; ++k) sum += sx.probs[r * 6 + k];
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
  SUBCASE("label out of range") {
    const Tensor logits({1, 2}, 0.0);
    CHECK_THROWS_AS(dcnn::softmax_xent_forward(logits, {2}), dcnn::LabelError);
    CHECK_THROWS_AS(dcnn::softmax_xent_forward(logits, {-1}), dcnn::LabelError);
  }
}

TEST_CASE("softmax cross-entropy backward") {
  SUBCASE("uniform two-class case") {
    const Tensor logits({1, 2}, 0.0);
    const dcnn::SoftmaxXent sx = dcnn::softmax_xent_forward(logits, {0});
    const Tensor d = dcnn::softmax_xent_backward(sx.probs, {0});
    CHECK(d[0] == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(d[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("one-hot prediction gives zero gradient") {
    Tensor probs({1, 3}, 0.0);
    probs[1] = 1.0;
    const Tensor d = dcnn::softmax_xent_backward(probs, {1});
    for (std::int64_t i = 0; i < 3; ++i) CHECK(d[i] == 0.0);
  }
  SUBCASE("matches finite differences of the loss") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      dcnn::Rng rng(seed * 7 + 1);
      const std::int64_t batch = 1 + static_cast<std::int64_t>(rng.next_below(4));
      Tensor logits({batch, 5});
      oracle::fill_uniform(logits, rng, -2.0, 2.0);
      std::vector<int> labels;
      for (std::int64_t r = 0; r < batch; ++r)
        labels.push_back(static_cast<int>(rng.next_below(5)));
      auto objective = [&]() { return dcnn::softmax_xent_forward(logits, labels).loss; };
      const Tensor analytic =
          dcnn::softmax_xent_backward(dcnn::softmax_xent_forward(logits, labels).probs, labels);
      CHECK(oracle::max_rel_err(analytic, oracle::finite_difference(logits, objective)) < 1e-6);
    }
  }
}

TEST_CASE("l2 penalty") {
  SUBCASE("lambda zero") {
    const Tensor w = filled({2}, {3.0, -4.0});
    const dcnn::L2Penalty p = dcnn::l2_penalty({&w}, 0.0);
    CHECK(p.loss == 0.0);
    CHECK(p.grads[0][0] == 0.0);
    CHECK(p.grads[0][1] == 0.0);
  }
  SUBCASE("single weight") {
    const Tensor w = filled({1}, {2.0});
    const dcnn::L2Penalty p = dcnn::l2_penalty({&w}, 0.5);
    CHECK(p.loss == 2.0);
    CHECK(p.grads[0][0] == 2.0);
  }
  SUBCASE("matches finite differences") {
    dcnn::Rng rng(12);
    Tensor w({3, 4});
    oracle::fill_uniform(w, rng);
    auto objective = [&]() { return dcnn::l2_penalty({&w}, 0.3).loss; };
    const dcnn::L2Penalty p = dcnn::l2_penalty({&w}, 0.3);
    CHECK(oracle::max_rel_err(p.grads[0], oracle::finite_difference(w, objective)) < 1e-6);
  }
  SUBCASE("negative lambda rejected") {
    const Tensor w({1}, 1.0);
    CHECK_THROWS_AS(dcnn::l2_penalty({&w}, -0.1), dcnn::ConfigError);
  }
}
