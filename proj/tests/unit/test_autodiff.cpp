#include <doctest.h>

#include <functional>
#include <random>

#include "child/autodiff.hpp"
#include "child/nn.hpp"
#include "support.hpp"

using namespace child;
using child::testing::random_matrix;
using child::testing::rel_err;

namespace {

using Builder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

/// Largest relative deviation between reverse-mode and central-difference
/// gradients of sum(weights .* f(inputs)).
double gradient_error(const Builder& f, std::vector<Mat> inputs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Mat weights;
  auto loss = [&](const std::vector<Mat>& xs, std::vector<Mat>* grads) {
    ad::Tape tape(grads != nullptr);
    std::vector<ad::Var> vars;
    for (const Mat& x : xs) vars.push_back(tape.input(x));
    const ad::Var out = f(tape, vars);
    if (weights.size() == 0) weights = random_matrix(out.rows(), out.cols(), rng);
    const ad::Var l = ad::sum(ad::mul(out, tape.constant(weights)));
    if (grads != nullptr) {
      tape.backward(l);
      for (const ad::Var& v : vars) grads->push_back(tape.grad(v));
    }
    return l.value()(0, 0);
  };
  std::vector<Mat> analytic;
  loss(inputs, &analytic);
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double saved = inputs[k].data()[i];
      inputs[k].data()[i] = saved + h;
      const double up = loss(inputs, nullptr);
      inputs[k].data()[i] = saved - h;
      const double down = loss(inputs, nullptr);
      inputs[k].data()[i] = saved;
      worst = std::max(worst, rel_err(analytic[k].data()[i], (up - down) / (2 * h), 1e-4));
    }
  }
  return worst;
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("elementwise and reduction ops match central differences") {
    std::mt19937_64 rng(1);
    const Mat a = random_matrix(4, 3, rng);
    const Mat b = random_matrix(4, 3, rng);
    const Mat pos = random_matrix(4, 3, rng).cwiseAbs().array() + 0.5;
    const std::vector<std::pair<const char*, Builder>> unary{
        {"neg", [](ad::Tape&, const auto& v) { return ad::neg(v[0]); }},
        {"scale", [](ad::Tape&, const auto& v) { return ad::scale(v[0], -1.7); }},
        {"add_scalar", [](ad::Tape&, const auto& v) { return ad::add_scalar(v[0], 0.3); }},
        {"tanh", [](ad::Tape&, const auto& v) { return ad::tanh(v[0]); }},
        {"exp", [](ad::Tape&, const auto& v) { return ad::exp(v[0]); }},
        {"square", [](ad::Tape&, const auto& v) { return ad::square(v[0]); }},
        {"leaky_relu", [](ad::Tape&, const auto& v) { return ad::leaky_relu(v[0], 0.2); }},
        {"row_sum", [](ad::Tape&, const auto& v) { return ad::row_sum(v[0]); }},
        {"sum", [](ad::Tape&, const auto& v) { return ad::sum(v[0]); }},
        {"mean", [](ad::Tape&, const auto& v) { return ad::mean(v[0]); }},
        {"slice_cols", [](ad::Tape&, const auto& v) { return ad::slice_cols(v[0], 1, 2); }},
    };
    for (const auto& [name, f] : unary) {
      CAPTURE(name);
      CHECK(gradient_error(f, {a}, 2) < 1e-6);
    }
    CHECK(gradient_error([](ad::Tape&, const auto& v) { return ad::log(v[0]); }, {pos}, 3) < 1e-6);
    const std::vector<std::pair<const char*, Builder>> binary{
        {"add", [](ad::Tape&, const auto& v) { return ad::add(v[0], v[1]); }},
        {"sub", [](ad::Tape&, const auto& v) { return ad::sub(v[0], v[1]); }},
        {"mul", [](ad::Tape&, const auto& v) { return ad::mul(v[0], v[1]); }},
        {"hcat", [](ad::Tape&, const auto& v) { return ad::hcat(std::vector<ad::Var>{v[0], v[1]}); }},
    };
    for (const auto& [name, f] : binary) {
      CAPTURE(name);
      CHECK(gradient_error(f, {a, b}, 4) < 1e-6);
    }
  }

  TEST_CASE("broadcasting ops and matmul") {
    std::mt19937_64 rng(5);
    const Mat a = random_matrix(5, 3, rng);
    const Mat w = random_matrix(3, 2, rng);
    const Mat bias = random_matrix(1, 3, rng);
    const Mat col = random_matrix(5, 1, rng);
    CHECK(gradient_error([](ad::Tape&, const auto& v) { return ad::matmul(v[0], v[1]); }, {a, w}, 6) < 1e-6);
    CHECK(gradient_error([](ad::Tape&, const auto& v) { return ad::add_bias(v[0], v[1]); }, {a, bias}, 7) < 1e-6);
    CHECK(gradient_error([](ad::Tape&, const auto& v) { return ad::mul_col(v[0], v[1]); }, {a, col}, 8) < 1e-6);
    CHECK(gradient_error([](ad::Tape&, const auto& v) { return ad::add_col(v[0], v[1]); }, {a, col}, 9) < 1e-6);
    CHECK(gradient_error([](ad::Tape&, const auto& v) { return ad::broadcast_rows(v[0], 4); }, {bias}, 10) < 1e-6);
  }

  TEST_CASE("gather_rows sums repeated indices and zero-fills -1") {
    std::mt19937_64 rng(11);
    const Mat a = random_matrix(4, 2, rng);
    auto idx = std::make_shared<const std::vector<int>>(std::vector<int>{2, -1, 0, 2, 3});
    CHECK(gradient_error([idx](ad::Tape&, const auto& v) { return ad::gather_rows(v[0], idx); }, {a}, 12) < 1e-6);
    ad::Tape tape;
    const ad::Var g = ad::gather_rows(tape.constant(a), idx);
    CHECK(g.value().row(1).isZero(0.0));
    CHECK(g.value().row(0) == a.row(2));
  }

  TEST_CASE("gradients reach parameters and inference tapes record nothing") {
    nn::ParameterStore store;
    std::mt19937_64 rng(13);
    nn::Mlp mlp(store, "m", {3, 4, 2}, 0.2, rng);
    const Mat x = random_matrix(6, 3, rng);
    {
      ad::Tape tape;
      tape.backward(ad::sum(ad::square(mlp(tape, tape.constant(x)))));
      CHECK(store.grad_norm() > 0.0);
    }
    store.zero_grad();
    CHECK(store.grad_norm() == 0.0);
    ad::Tape inference(false);
    const ad::Var y = mlp(inference, inference.constant(x));
    CHECK(y.rows() == 6);
    CHECK_FALSE(inference.recording());
  }

  TEST_CASE("Adam moves parameters against the gradient") {
    nn::ParameterStore store;
    ad::Parameter& p = store.add("p", Mat::Constant(1, 1, 2.0));
    nn::Adam adam(store, nn::AdamOptions{});
    for (int i = 0; i < 200; ++i) {
      store.zero_grad();
      ad::Tape tape;
      tape.backward(ad::sum(ad::square(tape.param(p))));
      adam.step(store, 0.05);
    }
    CHECK(std::abs(p.value(0, 0)) < 0.1);
    CHECK(adam.steps() == 200);
  }
}
