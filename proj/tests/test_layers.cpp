// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "domainshift/layers.hpp"

using namespace domainshift;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.normal(0.0, scale);
  return t;
}

void set_identity(DenseLayer& l) {
  const std::size_t n = l.weight.shape()[0];
  std::fill(l.weight.values().begin(), l.weight.values().end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) l.weight.values()[i * n + i] = 1.0;
  std::fill(l.bias.values().begin(), l.bias.values().end(), 0.0);
}

// plain-loop reference for y = x.W^T + b on one row
std::vector<double> dense_ref(const std::vector<double>& w, const std::vector<double>& b,
                              std::size_t out, std::size_t in,
                              const std::vector<double>& x) {
  std::vector<double> y(out, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t i = 0; i < in; ++i) y[o] += w[o * in + i] * x[i];
    y[o] += b[o];
  }
  return y;
}

std::vector<double> relu_ref(std::vector<double> v) {
  for (auto& x : v)
    if (x < 0) x = 0;
  return v;
}

// brute-force EdgeConv: double loop over nodes and neighbors, then the
// eval-mode normalization with fresh running stats (mean 0, var 1)
std::vector<double> edgeconv_ref(const EdgeConvBlock& block,
                                 const std::vector<std::vector<double>>& nodes,
                                 const std::vector<std::vector<std::size_t>>& nbrs) {
  const std::size_t fin = nodes[0].size();
  const std::size_t fout = block.lin1.bias.size();
  std::vector<double> out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    std::vector<double> acc(fout, 0.0);
    std::vector<std::size_t> js = nbrs[i].empty() ? std::vector<std::size_t>{i} : nbrs[i];
    for (std::size_t j : js) {
      std::vector<double> pair(2 * fin);
      for (std::size_t f = 0; f < fin; ++f) {
        pair[f] = nodes[i][f];
        pair[fin + f] = nodes[j][f] - nodes[i][f];
      }
      auto h = relu_ref(dense_ref(block.lin0.weight.values(), block.lin0.bias.values(),
                                  fout, 2 * fin, pair));
      h = relu_ref(dense_ref(block.lin1.weight.values(), block.lin1.bias.values(), fout,
                             fout, h));
      for (std::size_t f = 0; f < fout; ++f) acc[f] += h[f];
    }
    const double scale = 1.0 / (static_cast<double>(js.size()) * std::sqrt(1.0 + 1e-5));
    for (std::size_t f = 0; f < fout; ++f) out.push_back(acc[f] * scale);
  }
  return out;
}

}  // namespace

TEST_CASE("dense layer reproduces identity, zero-weight and hand-multiplied cases") {
  Rng rng = Rng::from_seed(1);
  ParameterStore ps;
  DenseLayer l(ps, "d", 2, 2, Init::kReluFan, rng);

  set_identity(l);
  Tensor x({2, 2}, {1, 2, 3, 4});
  CHECK(l.forward(x).values() == x.values());

  std::fill(l.weight.values().begin(), l.weight.values().end(), 0.0);
  l.bias.values() = {1, 2};
  CHECK(l.forward(x).values() == std::vector<double>{1, 2, 1, 2});

  l.weight.values() = {1, 2, 3, 4};
  l.bias.values() = {0, 0};
  CHECK(l.forward(Tensor({1, 2}, {1, 1})).values() == std::vector<double>{3, 7});

  CHECK_THROWS_AS(l.forward(Tensor({1, 3})), std::invalid_argument);
}

TEST_CASE("dense layer initialization respects fan-in bounds and zero biases") {
  Rng rng = Rng::from_seed(2);
  ParameterStore ps;
  DenseLayer l(ps, "d", 50, 20, Init::kReluFan, rng);
  const double limit = std::sqrt(6.0 / 50.0);
  for (double w : l.weight.values()) CHECK(std::abs(w) <= limit);
  for (double b : l.bias.values()) CHECK(b == 0.0);
  CHECK(ps.has("d.weight"));
  CHECK(ps.has("d.bias"));
}

TEST_CASE("dense layer gradients match finite differences") {
  Rng rng = Rng::from_seed(3);
  ParameterStore ps;
  DenseLayer l(ps, "d", 4, 3, Init::kReluFan, rng);
  Tensor x0 = random_tensor(rng, {5, 4});
  auto fx = [&](const Tensor& x) { return mean_all(relu(l.forward(x))); };
  CHECK(finite_difference_check(fx, x0, 1e-5) < 1e-3);

  auto fw = [&](const Tensor& w) {
    DenseLayer probe;
    probe.weight = w;
    probe.bias = l.bias;
    return mean_all(relu(probe.forward(x0)));
  };
  CHECK(finite_difference_check(fw, l.weight, 1e-5) < 1e-3);
}

TEST_CASE("layer norm kind maps constant rows to beta and zeros variance") {
  ParameterStore ps;
  NormLayer ln(ps, "ln", NormKind::kLayer, 4);
  Tensor constant({2, 4}, {3, 3, 3, 3, -1, -1, -1, -1});
  CHECK(ln.forward(constant, Mode::kTrain).values() == std::vector<double>(8, 0.0));

  ln.beta.values() = {1, 2, 3, 4};
  std::fill(ln.gamma.values().begin(), ln.gamma.values().end(), 0.0);
  Rng rng = Rng::from_seed(4);
  Tensor x = random_tensor(rng, {2, 4});
  CHECK(ln.forward(x, Mode::kTrain).values() ==
        std::vector<double>{1, 2, 3, 4, 1, 2, 3, 4});
}

TEST_CASE("batch norm normalizes over the batch and tracks running statistics") {
  ParameterStore ps;
  NormLayer bn(ps, "bn", NormKind::kBatch, 2);
  Tensor x({4, 2}, {1, 10, 2, 20, 3, 30, 4, 40});
  Tensor y = bn.forward(x, Mode::kTrain);

  // per feature: mean 0, biased variance 1
  for (std::size_t f = 0; f < 2; ++f) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 4; ++i) m += y.values()[i * 2 + f];
    m /= 4;
    for (std::size_t i = 0; i < 4; ++i) {
      const double d = y.values()[i * 2 + f] - m;
      v += d * d;
    }
    CHECK(std::abs(m) < 1e-12);
    CHECK(v / 4 == doctest::Approx(1.0).epsilon(1e-4));
  }

  // running stats after one step: (1-0.1)*init + 0.1*batch with unbiased var
  CHECK(bn.running_mean.values()[0] == doctest::Approx(0.1 * 2.5).epsilon(1e-12));
  CHECK(bn.running_mean.values()[1] == doctest::Approx(0.1 * 25.0).epsilon(1e-12));
  const double unbiased0 = (2.25 + 0.25 + 0.25 + 2.25) / 3.0;
  CHECK(bn.running_var.values()[0] ==
        doctest::Approx(0.9 * 1.0 + 0.1 * unbiased0).epsilon(1e-12));

  CHECK_THROWS_WITH_AS(bn.forward(Tensor({1, 2}, {1, 2}), Mode::kTrain),
                       doctest::Contains("batch size"), std::invalid_argument);
}

TEST_CASE("batch norm eval mode with unit running stats is near identity") {
  ParameterStore ps;
  NormLayer bn(ps, "bn", NormKind::kBatch, 3);
  Tensor x({2, 3}, {1, -2, 3, 0.5, 0, -1});
  Tensor y = bn.forward(x, Mode::kEval);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(y.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-4));
}

TEST_CASE("frozen batch norm keeps running statistics bit-identical in train mode") {
  ParameterStore ps;
  NormLayer bn(ps, "bn", NormKind::kBatch, 2);
  Tensor warm({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  bn.forward(warm, Mode::kTrain);
  const auto mean_before = bn.running_mean.values();
  const auto var_before = bn.running_var.values();

  ps.apply_freeze({"bn"});
  CHECK(bn.frozen());
  Tensor x({4, 2}, {9, 9, 8, 8, 7, 7, 6, 6});
  Tensor y = bn.forward(x, Mode::kTrain);
  CHECK(bn.running_mean.values() == mean_before);
  CHECK(bn.running_var.values() == var_before);
  // and the forward used the running stats, not the batch stats
  CHECK(y.values()[0] ==
        doctest::Approx((9.0 - mean_before[0]) / std::sqrt(var_before[0] + 1e-5))
            .epsilon(1e-12));
}

TEST_CASE("batch norm train-mode gradients match finite differences") {
  Rng rng = Rng::from_seed(5);
  ParameterStore ps;
  NormLayer bn(ps, "bn", NormKind::kBatch, 3);
  bn.gamma.values() = {1.5, 0.5, -2.0};
  bn.beta.values() = {0.1, -0.2, 0.3};
  Tensor x0 = random_tensor(rng, {6, 3});
  // full-rank weighting; a uniform sum of batch-normalized columns is
  // constant and would leave nothing to differentiate
  Tensor w = random_tensor(rng, {6, 3});
  auto f = [&](const Tensor& x) {
    ParameterStore tmp;
    NormLayer probe(tmp, "p", NormKind::kBatch, 3);
    probe.gamma.values() = bn.gamma.values();
    probe.beta.values() = bn.beta.values();
    return sum_all(multiply(probe.forward(x, Mode::kTrain), w));
  };
  CHECK(finite_difference_check(f, x0, 1e-5) < 1e-3);
}

TEST_CASE("dropout is the identity in eval mode and unbiased in train mode") {
  DropoutLayer drop{0.1};
  Rng rng = Rng::from_seed(6);
  Tensor x({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK(drop.forward(x, Mode::kEval, rng).values() == x.values());

  const int n = 10000;
  double acc = 0.0;
  Tensor one({1}, {1.0});
  for (int i = 0; i < n; ++i) acc += drop.forward(one, Mode::kTrain, rng).values()[0];
  const double sigma = std::sqrt(0.1 / 0.9 / n);
  CHECK(std::abs(acc / n - 1.0) < 3.0 * sigma);

  DropoutLayer bad{1.0};
  CHECK_THROWS_AS(bad.forward(x, Mode::kTrain, rng), std::invalid_argument);
}

TEST_CASE("attention over a single token returns its value projection") {
  Rng rng = Rng::from_seed(7);
  ParameterStore ps;
  MultiHeadAttention mha(ps, "att", 2, 4, rng);
  set_identity(mha.wo);
  Tensor x = random_tensor(rng, {1, 4});
  Tensor out = mha.forward(x, Tensor({1}, {1.0}));
  Tensor v = mha.wv.forward(x);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(out.values()[i] == doctest::Approx(v.values()[i]).epsilon(1e-12));
}

TEST_CASE("attention over two identical tokens with identity projections passes them through") {
  Rng rng = Rng::from_seed(8);
  ParameterStore ps;
  MultiHeadAttention mha(ps, "att", 1, 3, rng);
  set_identity(mha.wq);
  set_identity(mha.wk);
  set_identity(mha.wv);
  set_identity(mha.wo);
  Tensor x({2, 3}, {0.4, -1.2, 2.0, 0.4, -1.2, 2.0});
  Tensor out = mha.forward(x, Tensor({2}, {1.0, 1.0}));
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-12));
}

TEST_CASE("appending a masked token leaves real-token outputs unchanged") {
  Rng rng = Rng::from_seed(9);
  ParameterStore ps;
  MultiHeadAttention mha(ps, "att", 4, 8, rng);
  Tensor x = random_tensor(rng, {5, 8});
  Tensor base = mha.forward(x, Tensor({5}, std::vector<double>(5, 1.0)));

  Tensor garbage = random_tensor(rng, {1, 8}, 100.0);
  Tensor padded = concat({x, garbage}, 0);
  Tensor mask({6}, {1, 1, 1, 1, 1, 0});
  Tensor out = mha.forward(padded, mask);
  for (std::size_t i = 0; i < 5 * 8; ++i)
    CHECK(out.values()[i] == doctest::Approx(base.values()[i]).epsilon(1e-12));

  CHECK_THROWS_WITH_AS(mha.forward(x, Tensor({5}, std::vector<double>(5, 0.0))),
                       doctest::Contains("masked"), std::invalid_argument);
}

TEST_CASE("attention outputs follow permutations of the other real tokens") {
  Rng rng = Rng::from_seed(10);
  ParameterStore ps;
  MultiHeadAttention mha(ps, "att", 2, 6, rng);
  Tensor x = random_tensor(rng, {4, 6});
  Tensor mask({4}, std::vector<double>(4, 1.0));
  Tensor base = mha.forward(x, mask);

  Tensor shuffled = index_select(x, {0, 3, 1, 2});
  Tensor out = mha.forward(shuffled, mask);
  for (std::size_t f = 0; f < 6; ++f)
    CHECK(out.values()[f] == doctest::Approx(base.values()[f]).epsilon(1e-12));
}

TEST_CASE("attention gradients match finite differences") {
  Rng rng = Rng::from_seed(11);
  ParameterStore ps;
  MultiHeadAttention mha(ps, "att", 2, 4, rng);
  Tensor x0 = random_tensor(rng, {3, 4});
  Tensor mask({3}, {1, 1, 1});
  auto f = [&](const Tensor& x) { return mean_all(mha.forward(x, mask)); };
  CHECK(finite_difference_check(f, x0, 1e-5) < 1e-3);
}

TEST_CASE("edgeconv self-pair rule handles isolated nodes") {
  Rng rng = Rng::from_seed(12);
  ParameterStore ps;
  EdgeConvBlock block(ps, "ec", 3, 5, rng);
  std::vector<std::vector<double>> node{{0.5, -1.0, 2.0}};
  Tensor nodes({1, 3}, {0.5, -1.0, 2.0});
  Tensor out = block.forward(nodes, std::vector<std::vector<std::size_t>>{{}},
                             Mode::kEval, rng);
  auto ref = edgeconv_ref(block, node, {{}});
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(out.values()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("edgeconv with zero weights yields zeros") {
  Rng rng = Rng::from_seed(13);
  ParameterStore ps;
  EdgeConvBlock block(ps, "ec", 2, 4, rng);
  std::fill(block.lin0.weight.values().begin(), block.lin0.weight.values().end(), 0.0);
  std::fill(block.lin1.weight.values().begin(), block.lin1.weight.values().end(), 0.0);
  Tensor nodes({3, 2}, {1, 2, 3, 4, 5, 6});
  std::vector<std::vector<std::size_t>> nbrs{{1}, {0, 2}, {1}};
  Tensor out = block.forward(nodes, nbrs, Mode::kEval, rng);
  for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("edgeconv agrees with a brute-force neighbor loop") {
  Rng rng = Rng::from_seed(14);
  ParameterStore ps;
  EdgeConvBlock block(ps, "ec", 3, 6, rng);
  std::vector<std::vector<double>> rows;
  Tensor nodes({5, 3});
  for (std::size_t i = 0; i < 5; ++i) {
    std::vector<double> r;
    for (std::size_t f = 0; f < 3; ++f) {
      const double v = rng.normal();
      nodes.values()[i * 3 + f] = v;
      r.push_back(v);
    }
    rows.push_back(r);
  }
  std::vector<std::vector<std::size_t>> nbrs{{1, 2}, {0, 3}, {0, 1}, {4, 1}, {3, 0}};
  Tensor out = block.forward(nodes, nbrs, Mode::kEval, rng);
  auto ref = edgeconv_ref(block, rows, nbrs);
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(out.values()[i] == doctest::Approx(ref[i]).epsilon(1e-10));
}

TEST_CASE("edgeconv outputs permute together with their nodes") {
  Rng rng = Rng::from_seed(15);
  ParameterStore ps;
  EdgeConvBlock block(ps, "ec", 2, 4, rng);
  Tensor nodes = random_tensor(rng, {4, 2});
  std::vector<std::vector<std::size_t>> nbrs{{1}, {0, 2}, {3}, {2, 0}};
  Tensor base = block.forward(nodes, nbrs, Mode::kEval, rng);

  // permutation sending old index i to new position perm[i]
  const std::vector<std::size_t> pos{2, 0, 3, 1};
  Tensor pnodes({4, 2});
  std::vector<std::vector<std::size_t>> pnbrs(4);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t f = 0; f < 2; ++f)
      pnodes.values()[pos[i] * 2 + f] = nodes.values()[i * 2 + f];
    for (std::size_t j : nbrs[i]) pnbrs[pos[i]].push_back(pos[j]);
  }
  Tensor out = block.forward(pnodes, pnbrs, Mode::kEval, rng);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t f = 0; f < 4; ++f)
      CHECK(out.values()[pos[i] * 4 + f] ==
            doctest::Approx(base.values()[i * 4 + f]).epsilon(1e-12));
}

TEST_CASE("edgeconv gradients match finite differences in train mode") {
  Rng rng = Rng::from_seed(16);
  ParameterStore ps;
  EdgeConvBlock block(ps, "ec", 2, 3, rng);
  block.dropout.rate = 0.0;
  Tensor x0 = random_tensor(rng, {4, 2});
  Tensor w = random_tensor(rng, {4, 3});
  std::vector<std::vector<std::size_t>> nbrs{{1, 2}, {0}, {3, 1}, {2}};
  auto f = [&](const Tensor& x) {
    Rng r2 = Rng::from_seed(0);
    ParameterStore tmp;
    EdgeConvBlock probe(tmp, "p", 2, 3, r2);
    probe.lin0 = block.lin0;
    probe.lin1 = block.lin1;
    probe.dropout.rate = 0.0;
    return sum_all(multiply(probe.forward(x, nbrs, Mode::kTrain, r2), w));
  };
  CHECK(finite_difference_check(f, x0, 1e-5) < 1e-3);
}

TEST_CASE("global mean pool averages only the real rows") {
  Tensor nodes({2, 2}, {1, 2, 3, 4});
  CHECK(global_mean_pool(nodes, {true, true}).values() == std::vector<double>{2, 3});
  CHECK(global_mean_pool(nodes, {false, true}).values() == std::vector<double>{3, 4});

  Tensor padded({3, 2}, {1, 2, 3, 4, 1e9, -1e9});
  CHECK(global_mean_pool(padded, {true, true, false}).values() ==
        std::vector<double>{2, 3});
  CHECK_THROWS_AS(global_mean_pool(nodes, {false, false}), std::invalid_argument);
}

TEST_CASE("pooled edgeconv stack is permutation invariant") {
  Rng rng = Rng::from_seed(17);
  ParameterStore ps;
  EdgeConvBlock b0(ps, "b0", 2, 4, rng);
  EdgeConvBlock b1(ps, "b1", 4, 4, rng);
  Tensor nodes = random_tensor(rng, {5, 2});
  std::vector<std::vector<std::size_t>> nbrs{{1, 4}, {0, 2}, {1, 3}, {2, 4}, {3, 0}};

  auto run = [&](const Tensor& n, const std::vector<std::vector<std::size_t>>& nb) {
    Tensor h = b0.forward(n, nb, Mode::kEval, rng);
    h = b1.forward(h, nb, Mode::kEval, rng);
    return global_mean_pool(h, std::vector<bool>(5, true));
  };
  Tensor base = run(nodes, nbrs);

  const std::vector<std::size_t> pos{4, 2, 0, 1, 3};
  Tensor pnodes({5, 2});
  std::vector<std::vector<std::size_t>> pnbrs(5);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t f = 0; f < 2; ++f)
      pnodes.values()[pos[i] * 2 + f] = nodes.values()[i * 2 + f];
    for (std::size_t j : nbrs[i]) pnbrs[pos[i]].push_back(pos[j]);
  }
  Tensor out = run(pnodes, pnbrs);
  for (std::size_t f = 0; f < 4; ++f)
    CHECK(out.values()[f] == doctest::Approx(base.values()[f]).epsilon(1e-9));
}
