#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fedac/errors.hpp"
#include "fedac/nn.hpp"
#include "fedac/rng.hpp"
#include "support/oracles.hpp"

using namespace fedac;

namespace {

MlpSpec make_spec(std::vector<int> sizes, Activation act = Activation::kRelu) {
  MlpSpec spec;
  spec.layer_sizes = std::move(sizes);
  spec.activation = act;
  return spec;
}

Batch random_batch(const MlpSpec& spec, int rows, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> label(0, spec.class_count() - 1);
  Batch batch;
  batch.features = RealMatrix(rows, spec.input_dim());
  batch.labels.resize(rows);
  for (double& v : batch.features.values) v = u(rng);
  for (int& y : batch.labels) y = label(rng);
  return batch;
}

}  // namespace

TEST_CASE("nn: parameter layout, totals and split offset") {
  const MlpSpec spec = make_spec({16, 32, 16, 4});
  CHECK(spec.total_params() == 1140);
  CHECK(spec.split_index() == 1072);
  CHECK(spec.total_params() - spec.split_index() == 68);  // final layer 16*4+4
  CHECK(spec.layer_offset(0) == 0);
  CHECK(spec.layer_param_count(0) == 16 * 32 + 32);
}

TEST_CASE("nn: spec validation rejects degenerate shapes") {
  CHECK_THROWS_AS(make_spec({4, 2}).validate(), config_error);
  CHECK_THROWS_AS(make_spec({4, 0, 2}).validate(), config_error);
  CHECK_NOTHROW(make_spec({4, 3, 2}).validate());
}

TEST_CASE("nn: zero parameters give uniform probabilities and log-C loss") {
  const MlpSpec spec = make_spec({3, 5, 4});
  ParamVector zeros(std::vector<double>(spec.total_params(), 0.0), spec.split_index());

  Rng rng(7);
  Batch batch = random_batch(spec, 6, rng);
  RealMatrix probs = forward(spec, zeros, batch.features);
  for (double p : probs.values) CHECK(std::abs(p - 0.25) < 1e-15);

  LossAndGrad lg = loss_and_grad(spec, zeros, batch);
  CHECK(std::abs(lg.loss - std::log(4.0)) < 1e-12);
}

TEST_CASE("nn: forward agrees with an independent per-sample pass") {
  for (int instance = 0; instance < 10; ++instance) {
    const Activation act = instance % 2 ? Activation::kTanh : Activation::kRelu;
    const MlpSpec spec = make_spec({4, 6, 5, 3}, act);
    Rng rng = derive_stream(11, "forward", instance);
    ParamVector params = init_params(spec, rng);
    Batch batch = random_batch(spec, 7, rng);

    RealMatrix mine = forward(spec, params, batch.features);
    RealMatrix ref = oracle::naive_forward(spec, params, batch.features);
    REQUIRE(mine.rows == ref.rows);
    for (std::size_t i = 0; i < mine.values.size(); ++i)
      CHECK(std::abs(mine.values[i] - ref.values[i]) < 1e-12);

    for (int r = 0; r < mine.rows; ++r) {
      double total = 0.0;
      for (int c = 0; c < mine.cols; ++c) total += mine.at(r, c);
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("nn: loss and gradient agree with per-sample backpropagation") {
  for (int instance = 0; instance < 10; ++instance) {
    const Activation act = instance % 2 ? Activation::kTanh : Activation::kRelu;
    const MlpSpec spec = make_spec({5, 8, 3}, act);
    Rng rng = derive_stream(12, "grad", instance);
    ParamVector params = init_params(spec, rng);
    Batch batch = random_batch(spec, 9, rng);

    LossAndGrad lg = loss_and_grad(spec, params, batch);
    CHECK(std::abs(lg.loss - oracle::naive_loss(spec, params, batch)) < 1e-12);
    std::vector<double> ref = oracle::naive_grad(spec, params, batch);
    CHECK(oracle::relative_error(lg.grad.values, ref) < 1e-10);
  }
}

TEST_CASE("nn: analytic gradient matches central differences") {
  for (int instance = 0; instance < 20; ++instance) {
    const MlpSpec spec = make_spec({3, 6, 4, 3}, Activation::kTanh);
    Rng rng = derive_stream(13, "fd", instance);
    ParamVector params = init_params(spec, rng);
    Batch batch = random_batch(spec, 5, rng);

    LossAndGrad lg = loss_and_grad(spec, params, batch);
    auto objective = [&](const std::vector<double>& w) {
      return oracle::naive_loss(spec, ParamVector(w, spec.split_index()), batch);
    };
    std::vector<double> fd = oracle::fd_gradient(objective, params.values, 1e-5);
    CHECK(oracle::relative_error(lg.grad.values, fd) < 1e-4);
  }
}

TEST_CASE("nn: duplicating batch rows changes neither loss nor gradient") {
  const MlpSpec spec = make_spec({4, 5, 3}, Activation::kTanh);
  Rng rng = derive_stream(14, "dup");
  ParamVector params = init_params(spec, rng);
  Batch batch = random_batch(spec, 4, rng);

  Batch doubled;
  doubled.features = RealMatrix(8, 4);
  doubled.labels.resize(8);
  for (int copy = 0; copy < 2; ++copy)
    for (int r = 0; r < 4; ++r) {
      auto src = batch.features.row(r);
      std::copy(src.begin(), src.end(), doubled.features.row(copy * 4 + r).begin());
      doubled.labels[copy * 4 + r] = batch.labels[r];
    }

  LossAndGrad one = loss_and_grad(spec, params, batch);
  LossAndGrad two = loss_and_grad(spec, params, doubled);
  CHECK(std::abs(one.loss - two.loss) < 1e-12);
  CHECK(oracle::relative_error(one.grad.values, two.grad.values) < 1e-12);
}

TEST_CASE("nn: proximal step pulls toward the center") {
  ParamVector params({1.0, 1.0}, 1);
  ParamVector zero_grad({0.0, 0.0}, 1);
  ParamVector center({0.0, 0.0}, 1);

  ParamVector pulled = regularized_step(params, zero_grad, center, {}, 0.1, 1.0, 0.0);
  CHECK(pulled.values[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(pulled.values[1] == doctest::Approx(0.9).epsilon(1e-15));

  ParamVector grad({2.0, 2.0}, 1);
  ParamVector stepped = regularized_step(params, grad, center, {}, 0.1, 0.0, 0.0);
  CHECK(stepped.values[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(stepped.values[1] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("nn: embedding penalty touches only the embedding slice") {
  ParamVector params({1.0, 5.0}, 1);
  ParamVector zero_grad({0.0, 0.0}, 1);
  ParamVector center({0.0, 0.0}, 1);
  std::vector<double> phi{0.0};

  ParamVector out = regularized_step(params, zero_grad, center, phi, 0.1, 0.0, 1.0);
  CHECK(out.values[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(out.values[1] == 5.0);
}

TEST_CASE("nn: zero strengths reduce the step to plain gradient descent") {
  const MlpSpec spec = make_spec({3, 4, 2});
  Rng rng = derive_stream(15, "plain");
  ParamVector params = init_params(spec, rng);
  ParamVector grad = init_params(spec, rng);
  ParamVector center = init_params(spec, rng);

  ParamVector out = regularized_step(params, grad, center, {}, 0.05, 0.0, 0.0);
  for (std::size_t i = 0; i < params.size(); ++i)
    CHECK(out.values[i] == params.values[i] - 0.05 * grad.values[i]);
}

TEST_CASE("nn: step with eta zero is the identity") {
  ParamVector params({1.0, 2.0, 3.0}, 2);
  ParamVector grad({4.0, 5.0, 6.0}, 2);
  ParamVector center({0.0, 0.0, 0.0}, 2);
  std::vector<double> phi{0.0, 0.0};
  ParamVector out = regularized_step(params, grad, center, phi, 0.0, 1.0, 1.0);
  CHECK(out.values == params.values);
}

TEST_CASE("nn: one step at small eta decreases the local objective") {
  for (int instance = 0; instance < 20; ++instance) {
    const MlpSpec spec = make_spec({4, 6, 3}, Activation::kTanh);
    Rng rng = derive_stream(16, "descent", instance);
    ParamVector params = init_params(spec, rng);
    ParamVector center = init_params(spec, rng);
    Batch batch = random_batch(spec, 8, rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double mu = u(rng);
    const double lambda = u(rng);
    std::vector<double> phi(spec.split_index());
    std::uniform_real_distribution<double> v(-0.5, 0.5);
    for (double& x : phi) x = v(rng);

    const double before =
        oracle::local_objective(spec, params, batch, center, phi, mu, lambda);
    LossAndGrad lg = loss_and_grad(spec, params, batch);
    ParamVector stepped = regularized_step(params, lg.grad, center, phi, 1e-3, mu, lambda);
    const double after =
        oracle::local_objective(spec, stepped, batch, center, phi, mu, lambda);
    CHECK(after < before);
  }
}

TEST_CASE("nn: initialization respects fan-in bounds and is reproducible") {
  const MlpSpec spec = make_spec({9, 4, 3});
  Rng rng_a = derive_stream(17, "init");
  Rng rng_b = derive_stream(17, "init");
  ParamVector a = init_params(spec, rng_a);
  ParamVector b = init_params(spec, rng_b);
  CHECK(a.values == b.values);
  CHECK(a.split_index == spec.split_index());

  for (int l = 0; l < spec.weight_layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.layer_sizes[l]));
    const std::size_t off = spec.layer_offset(l);
    const std::size_t weights =
        static_cast<std::size_t>(spec.layer_sizes[l]) * spec.layer_sizes[l + 1];
    for (std::size_t i = 0; i < weights; ++i) {
      CHECK(a.values[off + i] >= -bound);
      CHECK(a.values[off + i] <= bound);
    }
    for (int o = 0; o < spec.layer_sizes[l + 1]; ++o)
      CHECK(a.values[off + weights + o] == 0.0);
  }

  Rng rng_c = derive_stream(18, "init");
  ParamVector c = init_params(spec, rng_c);
  CHECK(a.values != c.values);
}

TEST_CASE("nn: split and concatenation round-trip") {
  ParamVector params({1.0, 2.0, 3.0}, 2);
  auto [embedding, decision] = split_params(params);
  CHECK(embedding == std::vector<double>{1.0, 2.0});
  CHECK(decision == std::vector<double>{3.0});

  std::vector<double> recovered = embedding;
  recovered.insert(recovered.end(), decision.begin(), decision.end());
  CHECK(recovered == params.values);
}

TEST_CASE("nn: shape and range errors are rejected") {
  const MlpSpec spec = make_spec({3, 4, 2});
  Rng rng = derive_stream(19, "errors");
  ParamVector params = init_params(spec, rng);

  RealMatrix wrong_width(2, 5);
  CHECK_THROWS_AS(forward(spec, params, wrong_width), shape_error);

  ParamVector short_params({1.0, 2.0, 3.0}, 2);
  RealMatrix features(2, 3);
  CHECK_THROWS_AS(forward(spec, short_params, features), shape_error);

  Batch empty;
  empty.features = RealMatrix(0, 3);
  CHECK_THROWS_AS(loss_and_grad(spec, params, empty), shape_error);

  Batch bad_label = random_batch(spec, 2, rng);
  bad_label.labels[0] = 2;
  CHECK_THROWS_AS(loss_and_grad(spec, params, bad_label), shape_error);

  ParamVector grad = params;
  CHECK_THROWS_AS(regularized_step(params, grad, short_params, {}, 0.1, 0.0, 0.0), shape_error);
  CHECK_THROWS_AS(regularized_step(params, grad, params, {}, 0.1, 0.0, 0.5), shape_error);
  CHECK_THROWS_AS(regularized_step(params, grad, params, {}, -0.1, 0.0, 0.0), config_error);
}

TEST_CASE("nn: non-finite intermediates raise a numeric error naming the layer") {
  const MlpSpec spec = make_spec({2, 3, 2});
  ParamVector params(std::vector<double>(spec.total_params(), 0.0), spec.split_index());
  params.values[0] = std::numeric_limits<double>::infinity();
  RealMatrix features(1, 2);
  features.at(0, 0) = 1.0;
  try {
    forward(spec, params, features);
    FAIL("expected numeric_error");
  } catch (const numeric_error& e) {
    CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
  }

  ParamVector nan_params = params;
  nan_params.values[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(nan_params.validate(), numeric_error);
}
